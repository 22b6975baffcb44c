"""CSV output: every file starts with one `# schema: ...` line, then a pandas table."""

import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd

from onebitcov.errors import ValidationError
from onebitcov.process import Ensemble
from onebitcov.recover import EntryResult, RecoveryReport
from onebitcov.sampling import OneBitDataset, ThresholdSpec

log = logging.getLogger(__name__)

SCHEMA_PREFIX = "# schema: "
# %.17g keeps every float64 exact through a write/read cycle
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def write_table(path: PathLike, frame: pd.DataFrame, schema: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"{SCHEMA_PREFIX}{schema} columns={','.join(map(str, frame.columns))}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    log.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_table(path: PathLike) -> Tuple[str, pd.DataFrame]:
    """Returns (schema name, table)."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError("no such file", str(path))
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
    if not header.startswith(SCHEMA_PREFIX):
        raise ValidationError("no schema header", str(path))
    schema = header[len(SCHEMA_PREFIX):].split(" columns=")[0]
    return schema, pd.read_csv(path, skiprows=1)


def write_matrix(path: PathLike, matrix: np.ndarray, schema: str) -> Path:
    n = matrix.shape[1]
    frame = pd.DataFrame(np.asarray(matrix, dtype=float), columns=[f"c{j + 1}" for j in range(n)])
    return write_table(path, frame, schema)


def read_matrix(path: PathLike) -> np.ndarray:
    _, frame = read_table(path)
    return frame.to_numpy(dtype=float)


def write_error(out_dir: PathLike, record: Dict[str, Any]) -> Path:
    """error.csv with kind, message and whatever context the error carries."""
    frame = pd.DataFrame([{key: str(value) for key, value in record.items()}])
    return write_table(Path(out_dir) / "error.csv", frame, "onebitcov.error/1")


def schema_fields(schema: str) -> Dict[str, str]:
    """key=value tokens following the schema name, e.g. `onebitcov.ensemble/1 n=4 seed=7`."""
    return dict(token.split("=", 1) for token in schema.split()[1:] if "=" in token)


def write_ensemble(out_dir: PathLike, ensemble: Ensemble) -> Path:
    """samples.csv (n rows, n_x columns) and truth.csv."""
    out_dir = Path(out_dir)
    fields = f"n={ensemble.n} n_x={ensemble.n_x} seed={ensemble.seed}"
    write_matrix(out_dir / "samples.csv", ensemble.samples, f"onebitcov.ensemble/1 {fields}")
    write_matrix(out_dir / "truth.csv", ensemble.truth, f"onebitcov.truth/1 {fields}")
    return out_dir


def read_ensemble(out_dir: PathLike) -> Ensemble:
    out_dir = Path(out_dir)
    schema, frame = read_table(out_dir / "samples.csv")
    return Ensemble(
        samples=frame.to_numpy(dtype=float),
        truth=read_matrix(out_dir / "truth.csv"),
        seed=int(schema_fields(schema)["seed"]),
    )


def write_dataset(out_dir: PathLike, data: OneBitDataset) -> Path:
    """signs.csv, thresholds.csv and a one-row dataset.csv header record.

    A threshold covariance that is not a multiple of the identity goes to sigma.csv.
    """
    out_dir = Path(out_dir)
    sigma_tau2 = data.spec.sigma_tau2
    signs = pd.DataFrame(data.signs.astype(int), columns=[f"c{k + 1}" for k in range(data.n_x)])
    write_table(out_dir / "signs.csv", signs, "onebitcov.signs/1")
    write_matrix(out_dir / "thresholds.csv", data.thresholds, "onebitcov.thresholds/1")
    header = pd.DataFrame(
        [
            {
                "d": data.spec.d,
                "sigma_tau2": float("nan") if sigma_tau2 is None else sigma_tau2,
                "n": data.n,
                "n_x": data.n_x,
                "seed": data.seed,
            }
        ]
    )
    write_table(out_dir / "dataset.csv", header, "onebitcov.dataset/1")
    if sigma_tau2 is None:
        write_matrix(out_dir / "sigma.csv", data.spec.sigma, "onebitcov.sigma/1")
    return out_dir


def read_dataset(out_dir: PathLike) -> OneBitDataset:
    out_dir = Path(out_dir)
    _, header = read_table(out_dir / "dataset.csv")
    row = header.iloc[0]
    n = int(row["n"])
    if np.isnan(row["sigma_tau2"]):
        spec = ThresholdSpec(float(row["d"]), read_matrix(out_dir / "sigma.csv"))
    else:
        spec = ThresholdSpec.scalar(float(row["d"]), float(row["sigma_tau2"]), n)
    _, signs = read_table(out_dir / "signs.csv")
    return OneBitDataset(
        signs=signs.to_numpy(dtype=np.int8),
        thresholds=read_matrix(out_dir / "thresholds.csv"),
        spec=spec,
        seed=int(row["seed"]),
    )


def write_report(path: PathLike, report: RecoveryReport) -> Path:
    """One row per entry (1-based i <= j, the diagonal included); backend, NMSE and wall time go to the schema line."""
    n = report.r_hat.shape[0]
    rows = [
        {
            "i": i + 1,
            "j": i + 1,
            "p_hat": report.p_hat[i, i],
            "r_hat": report.r_hat[i, i],
            "iterations": 0,
            "criterion_value": float("nan"),
            "status": "variance",
            "error": "",
        }
        for i in range(n)
    ]
    for entry in report.entries:
        rows.append(
            {
                "i": entry.i + 1,
                "j": entry.j + 1,
                "p_hat": entry.p_hat,
                "r_hat": entry.r_hat,
                "iterations": entry.iterations,
                "criterion_value": entry.criterion,
                "status": entry.status,
                "error": entry.error,
            }
        )
    nmse = "none" if report.nmse is None else repr(float(report.nmse))
    schema = f"onebitcov.report/1 backend={report.backend} n={n} nmse={nmse} wall_time={report.wall_time!r}"
    return write_table(path, pd.DataFrame(rows), schema)


def read_report(path: PathLike) -> RecoveryReport:
    schema, frame = read_table(path)
    fields = schema_fields(schema)
    n = int(fields["n"])
    frame["error"] = frame["error"].fillna("").astype(str)
    r_hat = np.full((n, n), np.nan)
    p_hat = np.full((n, n), np.nan)
    entries = []
    for row in frame.itertuples(index=False):
        i, j = int(row.i) - 1, int(row.j) - 1
        r_hat[i, j] = r_hat[j, i] = float(row.r_hat)
        p_hat[i, j] = p_hat[j, i] = float(row.p_hat)
        if i != j:
            entries.append(
                EntryResult(i, j, float(row.p_hat), float(row.r_hat), int(row.iterations), float(row.criterion_value), row.status, row.error)
            )
    return RecoveryReport(
        r_hat=r_hat,
        p_hat=p_hat,
        entries=entries,
        backend=fields["backend"],
        nmse=None if fields["nmse"] == "none" else float(fields["nmse"]),
        wall_time=float(fields["wall_time"]),
    )

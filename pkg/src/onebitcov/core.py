import logging
import time
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeRemainingColumn,
)

from onebitcov import io
from onebitcov.arcsine import PairParams, expected_autocorrelation, output_autocorrelation_oracle
from onebitcov.bussgang import expected_cross_correlation, recover_cross_matrix
from onebitcov.config import ExperimentConfig
from onebitcov.errors import ValidationError
from onebitcov.process import ProcessKind, sample_ensemble, truth_covariance
from onebitcov.recover import (
    BackendKind,
    assemble_covariance,
    assemble_from_statistics,
    expected_sign_mean,
    fitness_report,
    gl_integral,
    landscape,
    mc_integral,
    pade_integral,
)
from onebitcov.recover.variance import recover_variances_masked
from onebitcov.sampling import OneBitDataset, quantize, sample_autocorrelation, sample_mean
from onebitcov.storage import Storage
from onebitcov.threshold import estimate_threshold

log = logging.getLogger(__name__)

COVARIANCE_COLUMNS = ["backend", "nx", "experiment", "nmse", "unrecovered", "fallbacks", "iterations", "wall_time"]
BUSSGANG_COLUMNS = ["backend", "experiment", "i", "j", "truth", "estimate", "direct", "band"]
THRESHOLD_COLUMNS = ["nx", "experiment", "d_hat", "sigma_tau2_hat", "nmse_d", "nmse_sigma_tau2", "evaluations", "clamped"]


@dataclass
class MetricsRecord:
    """Result of one experiment: per-experiment rows, an aggregated summary and stage timings."""

    command: str
    table: pd.DataFrame
    summary: pd.DataFrame
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    def same_results(self, other: "MetricsRecord") -> bool:
        """Equality of everything except wall-clock timings."""
        timing = [c for c in ("wall_time",) if c in self.table.columns]
        return (
            self.command == other.command
            and self.table.drop(columns=timing).equals(other.table.drop(columns=timing, errors="ignore"))
            and self.summary.equals(other.summary)
        )

    def save(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        io.write_table(out_dir / "metrics.csv", self.table, f"onebitcov.{self.command}/1")
        io.write_table(out_dir / "summary.csv", self.summary, "onebitcov.summary/1")
        stages = pd.DataFrame({"stage": list(self.stage_seconds), "seconds": list(self.stage_seconds.values())})
        io.write_table(out_dir / "stages.csv", stages, "onebitcov.stages/1")

    @classmethod
    def load(cls, out_dir: Path) -> "MetricsRecord":
        out_dir = Path(out_dir)
        schema, table = io.read_table(out_dir / "metrics.csv")
        _, summary = io.read_table(out_dir / "summary.csv")
        _, stages = io.read_table(out_dir / "stages.csv")
        command = schema[len("onebitcov."):].rsplit("/", 1)[0]
        return cls(command, table, summary, dict(zip(stages["stage"], stages["seconds"].astype(float))))


def experiment_seeds(seed: int, sweeps: int, experiments: int) -> List[List[Tuple[int, int]]]:
    """(ensemble seed, threshold seed) per sweep point and experiment, all from one SeedSequence."""
    result = []
    for sweep in np.random.SeedSequence(seed).spawn(sweeps):
        result.append([tuple(int(v) for v in child.generate_state(2)) for child in sweep.spawn(experiments)])
    return result


class ExperimentEngine:
    """Runs generate -> quantize -> recover -> evaluate sweeps described by an ExperimentConfig."""

    def __init__(
        self,
        config: ExperimentConfig,
        storage: Optional[Storage] = None,
        out_dir: Optional[Path] = None,
        progress: Optional[Progress] = None,
        show_progress: bool = False,
    ):
        self.config = config
        self.storage = storage
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._progress = progress
        self._show_progress = show_progress
        self._stage_seconds: Dict[str, float] = {}
        stages = config.get("stages") or []
        self.recover_on = "recover" in stages
        self.evaluate_on = "evaluate" in stages
        self.save_data = bool(config.get("save_data"))

    # -- plumbing ----------------------------------------------------------

    def _progress_ctx(self):
        if self._progress is None:
            return Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                MofNCompleteColumn(),
                TimeRemainingColumn(),
                disable=not self._show_progress,
            )
        return nullcontext(self._progress)

    @contextmanager
    def _stage(self, name: str):
        started = time.perf_counter()
        try:
            yield
        finally:
            self._stage_seconds[name] = self._stage_seconds.get(name, 0.0) + time.perf_counter() - started

    def _generate(self, model, n_x: int, seeds: Tuple[int, int], spec, keep: Optional[str] = None):
        """Draws one ensemble and its signs; `keep` names the data/ subdirectory they are saved to."""
        with self._stage("generate"):
            ensemble = sample_ensemble(model, n_x, seeds[0])
        with self._stage("quantize"):
            data = quantize(ensemble, spec, seeds[1])
        if keep and self.save_data and self.out_dir is not None:
            io.write_ensemble(self.out_dir / "data" / keep, ensemble)
            io.write_dataset(self.out_dir / "data" / keep, data)
        return ensemble, data

    def _finish(self, command: str, table: pd.DataFrame, summary: pd.DataFrame, backend: Optional[str] = None) -> MetricsRecord:
        record = MetricsRecord(command, table, summary, dict(self._stage_seconds))
        if self.out_dir is not None:
            record.save(self.out_dir)
            log.info(f"Results written to {self.out_dir}")
        if self.storage is not None:
            self.storage.add_run(
                command=command,
                seed=int(self.config.get("seed")),
                config_yaml=self.config.to_yaml(),
                backend=backend,
                output_dir=str(self.out_dir) if self.out_dir is not None else None,
                wall_time=float(sum(self._stage_seconds.values())),
                metrics={"summary": summary.to_dict(orient="records")},
            )
        self._stage_seconds = {}
        return record

    def _write(self, name: str, frame: pd.DataFrame, schema: str) -> None:
        if self.out_dir is not None:
            io.write_table(self.out_dir / name, frame, schema)

    def _sweep(self):
        nx = self.config.get("nx")
        experiments = self.config.get("experiments")
        return nx, experiments, experiment_seeds(self.config.get("seed"), len(nx), experiments)

    # -- experiments -------------------------------------------------------

    def run_variance_experiment(self) -> MetricsRecord:
        """Per-index MSE of the recovered variances over the N_x sweep."""
        model = self.config.process_model()
        spec = self.config.threshold_spec(model.n)
        indices = [i for i in self.config.get("variance.indices") if i <= model.n]
        nx_list, experiments, seeds = self._sweep()
        rows, summary = [], []
        with self._progress_ctx() as p:
            task = p.add_task("Variance recovery", total=len(nx_list) * experiments)
            for sweep, n_x in enumerate(nx_list):
                errors = np.full((experiments, model.n), np.nan)
                failed = 0
                for e in range(experiments):
                    ensemble, data = self._generate(model, n_x, seeds[sweep][e], spec, keep=f"nx{n_x}" if e == 0 else None)
                    if self.recover_on:
                        with self._stage("recover"):
                            r_0, failures = recover_variances_masked(sample_mean(data), spec)
                        failed += len(failures)
                        if self.evaluate_on:
                            with self._stage("evaluate"):
                                errors[e] = (r_0 - np.diag(ensemble.truth)) ** 2
                    p.advance(task)
                mse_all = float(np.nanmean(errors)) if np.any(np.isfinite(errors)) else float("nan")
                for i in indices:
                    column = errors[:, i - 1]
                    ok = np.isfinite(column)
                    rows.append(
                        {
                            "nx": n_x,
                            "index": i,
                            "mse": float(np.mean(column[ok])) if ok.any() else float("nan"),
                            "recovered": int(ok.sum()),
                            "failed": int((~ok).sum()),
                        }
                    )
                summary.append({"nx": n_x, "mse_all": mse_all, "failed_entries": failed})
                log.info(f"N_x={n_x}: average variance MSE {mse_all:.3e}, {failed} failed entries")
        return self._finish("simulate", pd.DataFrame(rows), pd.DataFrame(summary))

    def run_garch_experiment(self) -> MetricsRecord:
        """Recovered variances against one GARCH(1,1) variance path."""
        model = self.config.process_model()
        if model.kind != ProcessKind.GARCH:
            raise ValidationError("the GARCH experiment needs process.kind: garch", "process.kind")
        spec = self.config.threshold_spec(model.n)
        n_x = self.config.get("nx")[-1]
        experiments = self.config.get("experiments")
        seeds = experiment_seeds(self.config.get("seed"), 1, experiments)[0]
        estimates = np.full((experiments, model.n), np.nan)
        truth = None
        rows = []
        with self._progress_ctx() as p:
            task = p.add_task("GARCH variance tracking", total=experiments)
            for e in range(experiments):
                ensemble, data = self._generate(model, n_x, seeds[e], spec, keep="garch" if e == 0 else None)
                truth = np.diag(ensemble.truth)
                with self._stage("recover"):
                    estimates[e], _ = recover_variances_masked(sample_mean(data), spec)
                for t in range(model.n):
                    rows.append({"experiment": e, "t": t + 1, "truth": float(truth[t]), "estimate": float(estimates[e, t])})
                p.advance(task)
        summary = pd.DataFrame(
            {
                "t": np.arange(1, model.n + 1),
                "truth": truth,
                "estimate_mean": np.nanmean(estimates, axis=0),
                "mse": np.nanmean((estimates - truth) ** 2, axis=0),
            }
        )
        return self._finish("simulate", pd.DataFrame(rows), summary)

    def run_covariance_experiment(self) -> MetricsRecord:
        """Full-matrix recovery per backend with NMSE against the truth."""
        model = self.config.process_model()
        nx_list, experiments, seeds = self._sweep()
        backends = self.config.backends()
        noiseless = bool(self.config.get("recover.noiseless"))
        workers = int(self.config.get("recover.workers"))
        row_index = self.config.get("bussgang.row") - 1
        window = min(self.config.get("bussgang.window"), model.n)
        n_pairs = model.n * (model.n - 1) // 2
        rows = []
        with self._progress_ctx() as p:
            task = p.add_task("Covariance recovery", total=len(backends) * len(nx_list) * experiments * n_pairs)
            for name in backends:
                kind = BackendKind.from_settings(name, self.config)
                spec = self.config.threshold_spec(model.n, name)
                for sweep, n_x in enumerate(nx_list):
                    for e in range(experiments):
                        if noiseless:
                            with self._stage("generate"):
                                truth = truth_covariance(model)
                                p_matrix = truth + spec.sigma
                                mu = np.asarray(expected_sign_mean(np.diag(p_matrix), spec.d))
                                r_y = expected_autocorrelation(p_matrix, spec.d)
                        else:
                            keep = f"{kind.label}-nx{n_x}" if e == 0 else None
                            ensemble, data = self._generate(model, n_x, seeds[sweep][e], spec, keep=keep)
                            truth = ensemble.truth
                            mu, r_y = sample_mean(data), sample_autocorrelation(data)
                        if not self.recover_on:
                            p.advance(task, n_pairs)
                            continue
                        with self._stage("recover"):
                            report = assemble_from_statistics(
                                mu,
                                r_y,
                                spec,
                                kind,
                                truth=truth if self.evaluate_on else None,
                                workers=workers,
                                progress=lambda: p.advance(task),
                            )
                        rows.append(
                            {
                                "backend": kind.label,
                                "nx": n_x,
                                "experiment": e,
                                "nmse": float("nan") if report.nmse is None else report.nmse,
                                "unrecovered": len(report.unrecovered),
                                "fallbacks": int(report.diagnostics.get("fallbacks", 0)),
                                "iterations": int(sum(entry.iterations for entry in report.entries)),
                                "wall_time": report.wall_time,
                            }
                        )
                        if e == 0 and sweep == len(nx_list) - 1:
                            self._write_sequence(kind.label, report.r_hat, truth, row_index, window)
                            if self.out_dir is not None:
                                io.write_report(self.out_dir / f"report_{kind.label}.csv", report)
        table = pd.DataFrame(rows, columns=COVARIANCE_COLUMNS)
        if table.empty:
            summary = pd.DataFrame(columns=["backend", "nx", "nmse_mean", "nmse_std"])
        else:
            grouped = table.groupby(["backend", "nx"], sort=False)["nmse"]
            summary = pd.DataFrame(
                {"nmse_mean": grouped.mean(), "nmse_std": grouped.std(ddof=0)}
            ).reset_index()
            for item in summary.itertuples():
                log.info(f"{item.backend} N_x={item.nx}: NMSE {item.nmse_mean:.3e}")
        return self._finish("recover", table, summary, backend=",".join(backends))

    def _write_sequence(self, label: str, r_hat: np.ndarray, truth: np.ndarray, row: int, window: int) -> None:
        if self.out_dir is None:
            return
        io.write_matrix(self.out_dir / f"r_hat_{label}.csv", r_hat, f"onebitcov.r_hat/1 backend={label}")
        frame = pd.DataFrame(
            {"j": np.arange(1, window + 1), "truth": truth[row, :window], "estimate": r_hat[row, :window]}
        )
        io.write_table(self.out_dir / f"sequence_{label}.csv", frame, f"onebitcov.sequence/1 backend={label} i={row + 1}")

    def run_bussgang_experiment(self) -> MetricsRecord:
        """Recovered sign/input cross-correlation for one row against the model and the direct sample."""
        model = self.config.process_model()
        nx_list, experiments, seeds = self._sweep()
        n_x = nx_list[-1]
        a = self.config.get("bussgang.row") - 1
        window = min(self.config.get("bussgang.window"), model.n)
        workers = int(self.config.get("recover.workers"))
        rows = []
        with self._progress_ctx() as p:
            backends = self.config.backends()
            task = p.add_task("Cross-correlation recovery", total=len(backends) * experiments)
            for name in backends:
                kind = BackendKind.from_settings(name, self.config)
                spec = self.config.threshold_spec(model.n, name)
                for e in range(experiments):
                    keep = f"{kind.label}-nx{n_x}" if e == 0 else None
                    ensemble, data = self._generate(model, n_x, seeds[-1][e], spec, keep=keep)
                    if not self.recover_on:
                        p.advance(task)
                        continue
                    with self._stage("recover"):
                        report = assemble_from_statistics(sample_mean(data), sample_autocorrelation(data), spec, kind, workers=workers)
                        r_yx = recover_cross_matrix(data, report.p_hat)
                    direct = band = np.full(window, np.nan)
                    truth = np.full((model.n, model.n), np.nan)
                    if self.evaluate_on:
                        with self._stage("evaluate"):
                            products = data.signs[a].astype(float)[None, :] * ensemble.samples[:window]
                            direct = products.mean(axis=1)
                            band = products.std(axis=1) / np.sqrt(n_x)
                            truth = expected_cross_correlation(ensemble.truth, spec.sigma, spec.d)
                    for b in range(window):
                        rows.append(
                            {
                                "backend": kind.label,
                                "experiment": e,
                                "i": a + 1,
                                "j": b + 1,
                                "truth": float(truth[a, b]),
                                "estimate": float(r_yx[a, b]),
                                "direct": float(direct[b]),
                                "band": float(band[b]),
                            }
                        )
                    p.advance(task)
        table = pd.DataFrame(rows, columns=BUSSGANG_COLUMNS)
        if table.empty:
            summary = pd.DataFrame(columns=["backend", "j", "truth", "estimate", "direct"])
        else:
            summary = table.groupby(["backend", "j"], sort=False)[["truth", "estimate", "direct"]].mean().reset_index()
        return self._finish("bussgang", table, summary, backend=",".join(self.config.backends()))

    def run_threshold_experiment(self) -> MetricsRecord:
        """NMSE of the threshold MLE over the N_x sweep."""
        model = self.config.process_model()
        spec = self.config.threshold_spec(model.n)
        d_true, sigma_true = spec.d, spec.sigma_tau2
        nx_list, experiments, seeds = self._sweep()
        rows = []
        with self._progress_ctx() as p:
            task = p.add_task("Threshold MLE", total=len(nx_list) * experiments)
            for sweep, n_x in enumerate(nx_list):
                for e in range(experiments):
                    _, data = self._generate(model, n_x, seeds[sweep][e], spec, keep=f"nx{n_x}" if e == 0 else None)
                    if not self.recover_on:
                        p.advance(task)
                        continue
                    rows.append(self._threshold_row(data, d_true, sigma_true, n_x, e))
                    p.advance(task)
        table = pd.DataFrame(rows, columns=THRESHOLD_COLUMNS)
        if table.empty:
            summary = pd.DataFrame(columns=["nx", "nmse_d", "nmse_sigma_tau2"])
        else:
            summary = table.groupby("nx", sort=False)[["nmse_d", "nmse_sigma_tau2"]].mean().reset_index()
        return self._finish("threshold-mle", table, summary)

    def _threshold_row(self, data: OneBitDataset, d_true: float, sigma_true: Optional[float], n_x: int, e: int) -> dict:
        with self._stage("recover"):
            estimate = estimate_threshold(
                data,
                d_range=tuple(self.config.get("mle.grid_d")),
                sigma_range=tuple(self.config.get("mle.grid_sigma_tau2")),
                grid=int(self.config.get("mle.grid_size")),
                with_thresholds=bool(self.config.get("mle.threshold_density")),
            )
        nmse_d, nmse_sigma = float("nan"), None
        if self.evaluate_on:
            nmse_d, nmse_sigma = estimate.nmse(d_true, sigma_true if sigma_true else None)
        return {
            "nx": n_x,
            "experiment": e,
            "d_hat": estimate.d,
            "sigma_tau2_hat": estimate.sigma_tau2,
            "nmse_d": nmse_d,
            "nmse_sigma_tau2": float("nan") if nmse_sigma is None else nmse_sigma,
            "evaluations": estimate.evaluations,
            "clamped": estimate.clamped,
        }

    def estimate_threshold_from_dataset(self, data: OneBitDataset) -> MetricsRecord:
        """Threshold MLE on a saved dataset; NMSE is scored against the spec stored with it."""
        spec = data.spec
        row = self._threshold_row(data, spec.d, spec.sigma_tau2, data.n_x, 0)
        table = pd.DataFrame([row], columns=THRESHOLD_COLUMNS)
        summary = table[["nx", "nmse_d", "nmse_sigma_tau2"]].copy()
        log.info(f"Dataset threshold MLE d={row['d_hat']:.4f} sigma_tau2={row['sigma_tau2_hat']:.4f}")
        return self._finish("threshold-mle", table, summary)

    def recover_from_dataset(self, data: OneBitDataset, truth: Optional[np.ndarray] = None) -> MetricsRecord:
        """Full-matrix recovery of a saved dataset with its own threshold spec, one run per backend."""
        workers = int(self.config.get("recover.workers"))
        rows = []
        for name in self.config.backends():
            kind = BackendKind.from_settings(name, self.config)
            with self._stage("recover"):
                report = assemble_covariance(data, kind, truth=truth if self.evaluate_on else None, workers=workers)
            rows.append(
                {
                    "backend": kind.label,
                    "nx": data.n_x,
                    "experiment": 0,
                    "nmse": float("nan") if report.nmse is None else report.nmse,
                    "unrecovered": len(report.unrecovered),
                    "fallbacks": int(report.diagnostics.get("fallbacks", 0)),
                    "iterations": int(sum(entry.iterations for entry in report.entries)),
                    "wall_time": report.wall_time,
                }
            )
            if self.out_dir is not None:
                io.write_matrix(self.out_dir / f"r_hat_{kind.label}.csv", report.r_hat, f"onebitcov.r_hat/1 backend={kind.label}")
                io.write_report(self.out_dir / f"report_{kind.label}.csv", report)
        table = pd.DataFrame(rows, columns=COVARIANCE_COLUMNS)
        summary = table[["backend", "nx", "nmse"]].rename(columns={"nmse": "nmse_mean"})
        return self._finish("recover", table, summary, backend=",".join(self.config.backends()))

    def run_bench(self, with_landscape: bool = True, with_fitness: bool = True) -> MetricsRecord:
        """Backend integrals against the oracle at one pair, plus criterion landscapes and the Pade fitness grid."""
        p_0i, p_0j, p_ij, d = (float(v) for v in self.config.get("bench.pair"))
        pair = PairParams(p_0i, p_0j, p_ij, d)
        kinds = {name: BackendKind.from_settings(name, self.config) for name in ("pade", "gl", "mc")}
        with self._stage("evaluate"):
            oracle = output_autocorrelation_oracle(pair)
            values = {
                "pade": pade_integral(pair, kinds["pade"].q_kernel),
                "gl": gl_integral(pair, kinds["gl"].n_q),
                "mc": mc_integral(pair, kinds["mc"].n_m, kinds["mc"].seed),
            }
        rows = []
        for name, value in values.items():
            row = {"backend": kinds[name].label, "integral": value, "oracle": oracle, "abs_error": abs(value - oracle)}
            if with_landscape:
                with self._stage("recover"):
                    scape = landscape(kinds[name], oracle, p_0i, p_0j, d, int(self.config.get("bench.grid")))
                self._write(
                    f"landscape_{kinds[name].label}.csv",
                    pd.DataFrame({"p_ij": scape.p_ij, "criterion": scape.criterion}),
                    f"onebitcov.landscape/1 backend={kinds[name].label}",
                )
                row["local_minima"] = scape.local_minima
            rows.append(row)
        summary = {"p_0i": p_0i, "p_0j": p_0j, "p_ij": p_ij, "d": d}
        if with_fitness:
            with self._stage("evaluate"):
                fitness = fitness_report(pair, int(self.config.get("bench.theta_grid")), float(self.config.get("bench.gamma1")))
            self._write(
                "fitness.csv",
                pd.DataFrame({"theta": fitness.theta, "exact": fitness.exact, "approx": fitness.approx}),
                "onebitcov.fitness/1",
            )
            summary.update(
                {
                    "fitness_mse": fitness.mse,
                    "gamma1": fitness.bound.gamma1,
                    "bound_holds": int(fitness.bound.holds),
                    "max_exponent": fitness.bound.max_exponent,
                }
            )
        return self._finish("bench", pd.DataFrame(rows), pd.DataFrame([summary]))


def run_variance_experiment(config: ExperimentConfig, **kwargs) -> MetricsRecord:
    return ExperimentEngine(config, **kwargs).run_variance_experiment()


def run_garch_experiment(config: ExperimentConfig, **kwargs) -> MetricsRecord:
    return ExperimentEngine(config, **kwargs).run_garch_experiment()


def run_covariance_experiment(config: ExperimentConfig, **kwargs) -> MetricsRecord:
    return ExperimentEngine(config, **kwargs).run_covariance_experiment()


def run_bussgang_experiment(config: ExperimentConfig, **kwargs) -> MetricsRecord:
    return ExperimentEngine(config, **kwargs).run_bussgang_experiment()


def run_threshold_experiment(config: ExperimentConfig, **kwargs) -> MetricsRecord:
    return ExperimentEngine(config, **kwargs).run_threshold_experiment()

import numpy as np
import pandas as pd
import pytest

from onebitcov import io
from onebitcov.errors import ValidationError
from onebitcov.process import ProcessModel, sample_ensemble
from onebitcov.recover import EntryResult, RecoveryReport
from onebitcov.sampling import ThresholdSpec, quantize


def test_table_round_trip(tmp_path):
    """Таблица читается обратно без потерь, включая NaN и неточные float."""
    frame = pd.DataFrame(
        {
            "backend": ["GL", "MC", "PA"],
            "nx": [1000, 3000, 10000],
            "nmse": [0.1 + 0.2, np.nan, 1.0 / 3.0],
        }
    )
    path = io.write_table(tmp_path / "out" / "metrics.csv", frame, "onebitcov.recover/1")
    schema, loaded = io.read_table(path)
    assert schema == "onebitcov.recover/1"
    assert loaded.equals(frame)


def test_schema_header_is_first_line(tmp_path):
    frame = pd.DataFrame({"a": [1.5]})
    path = io.write_table(tmp_path / "t.csv", frame, "onebitcov.x/1")
    first, second = path.read_text(encoding="utf-8").splitlines()[:2]
    assert first == "# schema: onebitcov.x/1 columns=a"
    assert second == "a"


def test_read_table_requires_header(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ValidationError) as excinfo:
        io.read_table(path)
    assert excinfo.value.path == str(path)
    with pytest.raises(ValidationError):
        io.read_table(tmp_path / "missing.csv")


def test_matrix_round_trip(tmp_path):
    matrix = np.random.default_rng(3).standard_normal((4, 4))
    io.write_matrix(tmp_path / "m.csv", matrix, "onebitcov.r_hat/1")
    np.testing.assert_array_equal(io.read_matrix(tmp_path / "m.csv"), matrix)


def test_write_error_record(tmp_path):
    record = ValidationError("must be >= 0", "threshold.sigma_tau2").to_record()
    io.write_error(tmp_path, record)
    schema, frame = io.read_table(tmp_path / "error.csv")
    assert schema == "onebitcov.error/1"
    assert frame.loc[0, "kind"] == "ValidationError"
    assert frame.loc[0, "path"] == "threshold.sigma_tau2"


def test_schema_fields():
    assert io.schema_fields("onebitcov.ensemble/1 n=4 n_x=10 seed=7") == {"n": "4", "n_x": "10", "seed": "7"}
    assert io.schema_fields("onebitcov.error/1") == {}


def test_ensemble_and_dataset_round_trip(tmp_path):
    """Выборки, знаки и пороги читаются обратно вместе с параметрами порога."""
    ensemble = sample_ensemble(ProcessModel.wiener(3), 50, seed=7)
    data = quantize(ensemble, ThresholdSpec.scalar(0.4, 0.1, 3), seed=8)
    io.write_ensemble(tmp_path, ensemble)
    io.write_dataset(tmp_path, data)
    loaded = io.read_ensemble(tmp_path)
    np.testing.assert_array_equal(loaded.samples, ensemble.samples)
    np.testing.assert_array_equal(loaded.truth, ensemble.truth)
    assert loaded.seed == 7
    restored = io.read_dataset(tmp_path)
    np.testing.assert_array_equal(restored.signs, data.signs)
    np.testing.assert_array_equal(restored.thresholds, data.thresholds)
    assert restored.spec.d == 0.4
    assert restored.spec.sigma_tau2 == 0.1
    assert restored.seed == 8
    assert not (tmp_path / "sigma.csv").exists()


def test_dataset_with_general_threshold_covariance(tmp_path):
    ensemble = sample_ensemble(ProcessModel.wiener(2), 20, seed=1)
    spec = ThresholdSpec(0.3, np.diag([0.1, 0.2]))
    io.write_dataset(tmp_path, quantize(ensemble, spec, seed=2))
    restored = io.read_dataset(tmp_path)
    np.testing.assert_array_equal(restored.spec.sigma, spec.sigma)


def test_recovery_report_round_trip(tmp_path):
    """Строки по элементам и итоговая запись (бэкенд, NMSE, время) читаются обратно."""
    report = RecoveryReport(
        r_hat=np.array([[0.3, 0.1, np.nan], [0.1, 0.4, 0.2], [np.nan, 0.2, 0.5]]),
        p_hat=np.array([[0.5, 0.1, np.nan], [0.1, 0.6, 0.2], [np.nan, 0.2, 0.7]]),
        entries=[
            EntryResult(0, 1, 0.1, 0.1, 12, -3.25, "ok"),
            EntryResult(0, 2, np.nan, np.nan, 0, np.nan, "unrecovered:SolverError", "no finite criterion"),
            EntryResult(1, 2, 0.2, 0.2, 7, 1.0 / 3.0, "fallback"),
        ],
        backend="GL",
        nmse=float("nan"),
        wall_time=0.125,
    )
    path = io.write_report(tmp_path / "report_GL.csv", report)
    schema, frame = io.read_table(path)
    assert schema.startswith("onebitcov.report/1 backend=GL")
    assert list(frame.columns) == ["i", "j", "p_hat", "r_hat", "iterations", "criterion_value", "status", "error"]
    assert len(frame) == 6
    loaded = io.read_report(path)
    np.testing.assert_array_equal(loaded.r_hat, report.r_hat)
    np.testing.assert_array_equal(loaded.p_hat, report.p_hat)
    assert loaded.backend == "GL"
    assert np.isnan(loaded.nmse)
    assert loaded.wall_time == 0.125
    assert loaded.unrecovered == [(0, 2)]
    assert [(e.i, e.j, e.status, e.iterations) for e in loaded.entries] == [
        (0, 1, "ok", 12),
        (0, 2, "unrecovered:SolverError", 0),
        (1, 2, "fallback", 7),
    ]
    assert loaded.entries[1].error == "no finite criterion"
    assert loaded.entries[2].criterion == 1.0 / 3.0


def test_report_without_truth_has_no_nmse(tmp_path):
    report = RecoveryReport(np.eye(2), np.eye(2), [EntryResult(0, 1, 0.0, 0.0, 3, 0.5, "ok")], "MC")
    loaded = io.read_report(io.write_report(tmp_path / "r.csv", report))
    assert loaded.nmse is None
    assert loaded.entries[0].error == ""

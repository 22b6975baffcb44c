import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from appdirs import AppDirs

from onebitcov.errors import ValidationError
from onebitcov.process import BENCHMARK_COVARIANCE, ProcessKind, ProcessModel
from onebitcov.sampling import ThresholdSpec

log = logging.getLogger(__name__)

# Define app-specific details
APP_NAME = "onebitcov"
APP_AUTHOR = "onebitcov"
_dirs = AppDirs(APP_NAME, APP_AUTHOR)

BACKENDS = ("pade", "gl", "mc", "oracle")
STAGES = ("generate", "quantize", "recover", "evaluate")

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "experiments": 5,
    "nx": [1000, 3000, 6000, 10000],
    "process": {
        "kind": "wiener",
        "n": 100,
        "v_min": 0.2,
        "v_max": 0.8,
        "garch": {"zeta0": 0.1, "zeta1": 0.2, "zeta2": 0.3},
        "matrix": None,
    },
    "threshold": {"d": 0.5, "sigma_tau2": 0.2, "per_backend": {}},
    "recover": {
        "backend": "gl",
        "backends": None,
        "gl": {"n_q": 30},
        "mc": {"n_m": 10000},
        "pade": {"n_starts": 8, "q_kernel": "exact"},
        "workers": 1,
        "noiseless": False,
    },
    "variance": {"indices": [2, 8]},
    "bussgang": {"row": 2, "window": 13},
    "mle": {"grid_d": [0.05, 1.0], "grid_sigma_tau2": [0.01, 0.5], "grid_size": 20, "threshold_density": True},
    "bench": {"pair": [0.8, 0.7, 0.05, 0.7], "grid": 200, "theta_grid": 1000, "gamma1": 2.0},
    "stages": list(STAGES),
    "output": None,
    "save_data": False,
    "logging": {"level": "WARNING"},
    "storage": {"enabled": True, "database_path": None},
}

PRESETS: Dict[str, Dict[str, Any]] = {
    "variance": {
        "experiments": 15,
        "nx": [1000, 3000, 6000, 10000],
        "process": {"kind": "wiener", "n": 100, "v_min": 0.2, "v_max": 0.8},
        "threshold": {"d": 0.5, "sigma_tau2": 0.2},
    },
    "benchmark": {
        "experiments": 5,
        "nx": [10000],
        "process": {"kind": "explicit", "n": 5, "matrix": "benchmark"},
        "threshold": {
            "d": 0.3,
            "sigma_tau2": 0.1,
            "per_backend": {"pade": {"d": 0.5, "sigma_tau2": 0.2}},
        },
        "recover": {"backends": ["gl", "mc", "pade"]},
    },
    "threshold": {
        "experiments": 5,
        "nx": [1000, 3000, 6000, 10000],
        "process": {"kind": "wiener", "n": 100, "v_min": 0.2, "v_max": 0.8},
        "threshold": {"d": 0.3, "sigma_tau2": 0.1},
    },
    "bussgang": {
        "experiments": 5,
        "nx": [10000],
        "process": {"kind": "wiener", "n": 13, "v_min": 0.2, "v_max": 0.8},
        "threshold": {
            "d": 0.3,
            "sigma_tau2": 0.1,
            "per_backend": {"pade": {"d": 0.5, "sigma_tau2": 0.2}},
        },
        "recover": {"backends": ["gl", "mc", "pade"]},
        "bussgang": {"row": 2, "window": 13},
    },
    "garch": {
        "experiments": 15,
        "nx": [10000],
        "process": {"kind": "garch", "n": 20},
        "threshold": {"d": 0.5, "sigma_tau2": 0.2},
    },
}


def user_config_path() -> Path:
    return Path(_dirs.user_config_dir) / "user_config.yml"


def default_output_root() -> Path:
    return Path(_dirs.user_data_dir) / "runs"


def _deep_merge(source: dict, destination: dict) -> dict:
    """
    Deeply merges two dictionaries. `destination` values overwrite `source` values.
    """
    for key, value in destination.items():
        if isinstance(value, dict) and key in source and isinstance(source[key], dict):
            source[key] = _deep_merge(source[key], value)
        else:
            source[key] = value
    return source


def _read_yaml(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must hold a mapping at the top level", "config")
    return data


class ExperimentConfig:
    """
    Merged experiment settings with dotted-key access.

    Layers, later wins: DEFAULTS, user_config.yml, preset, --config file, CLI overrides.
    """

    def __init__(self, data: Optional[dict] = None):
        self._data = _deep_merge(copy.deepcopy(DEFAULTS), copy.deepcopy(data or {}))

    @classmethod
    def load(
        cls,
        path: Optional[Path] = None,
        preset: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        use_user_config: bool = True,
    ) -> "ExperimentConfig":
        data: dict = {}
        user_path = user_config_path()
        if use_user_config and user_path.is_file():
            log.info(f"Loading user settings from {user_path}...")
            _deep_merge(data, _read_yaml(user_path))
        if preset is not None:
            if preset not in PRESETS:
                raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "preset")
            _deep_merge(data, copy.deepcopy(PRESETS[preset]))
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ValidationError(f"config file {path} not found", "config")
            _deep_merge(data, _read_yaml(path))
        config = cls(data)
        for key, value in (overrides or {}).items():
            if value is not None:
                config.set(key, value)
        config.validate()
        return config

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        """
        Retrieves a setting value using a dot-separated key.

        Args:
            key: The dot-separated key (e.g., 'recover.gl.n_q').
            default: The value to return if the key is not found.
        """
        current_level = self._data
        for part in key.split("."):
            if isinstance(current_level, dict) and part in current_level:
                current_level = current_level[part]
            else:
                return default
        return current_level

    def set(self, key: str, value: Any) -> None:
        keys = key.split(".")
        current_level = self._data
        for part in keys[:-1]:
            current_level = current_level.setdefault(part, {})
        current_level[keys[-1]] = value

    @property
    def data(self) -> dict:
        return self._data

    def to_yaml(self) -> str:
        return yaml.safe_dump(self._data, sort_keys=True, allow_unicode=True)

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        def require(condition: bool, path: str, message: str):
            if not condition:
                raise ValidationError(message, path)

        require(isinstance(self.get("seed"), int), "seed", "must be an integer")
        require(isinstance(self.get("save_data"), bool), "save_data", "must be true or false")
        require(isinstance(self.get("experiments"), int) and self.get("experiments") >= 1, "experiments", "must be >= 1")
        nx = self.get("nx")
        require(isinstance(nx, list) and len(nx) > 0, "nx", "must be a non-empty list")
        for k, value in enumerate(nx):
            require(isinstance(value, int) and value >= 1, f"nx.{k}", "must be a positive integer")
        require(self.get("process.kind") in {kind.value for kind in ProcessKind}, "process.kind", "unknown process kind")
        require(isinstance(self.get("process.n"), int) and self.get("process.n") >= 1, "process.n", "must be >= 1")
        require(self.get("threshold.sigma_tau2", 0.0) >= 0.0, "threshold.sigma_tau2", "must be >= 0")
        for name, entry in (self.get("threshold.per_backend") or {}).items():
            require(name in BACKENDS, f"threshold.per_backend.{name}", "unknown backend")
            require(entry.get("sigma_tau2", 0.0) >= 0.0, f"threshold.per_backend.{name}.sigma_tau2", "must be >= 0")
        require(self.get("recover.backend") in BACKENDS, "recover.backend", f"must be one of {BACKENDS}")
        for k, name in enumerate(self.get("recover.backends") or []):
            require(name in BACKENDS, f"recover.backends.{k}", f"must be one of {BACKENDS}")
        require(self.get("recover.gl.n_q", 0) >= 2, "recover.gl.n_q", "must be >= 2")
        require(self.get("recover.mc.n_m", 0) >= 1, "recover.mc.n_m", "must be >= 1")
        require(self.get("recover.pade.n_starts", 0) >= 1, "recover.pade.n_starts", "must be >= 1")
        require(self.get("recover.pade.q_kernel") in ("exact", "qbar"), "recover.pade.q_kernel", "must be exact or qbar")
        require(self.get("recover.workers", 0) >= 1, "recover.workers", "must be >= 1")
        stages = self.get("stages") or []
        require(all(s in STAGES for s in stages), "stages", f"stages must come from {STAGES}")
        require(list(stages) == list(STAGES[: len(stages)]), "stages", "stages must be a prefix of generate, quantize, recover, evaluate")
        for k, index in enumerate(self.get("variance.indices") or []):
            require(isinstance(index, int) and index >= 1, f"variance.indices.{k}", "must be a 1-based index")
        require(self.get("bussgang.window", 0) >= 1, "bussgang.window", "must be >= 1")
        require(1 <= self.get("bussgang.row", 0) <= self.get("process.n"), "bussgang.row", "row outside 1..n")
        lo, hi = self.get("mle.grid_d")
        require(0.0 < lo < hi, "mle.grid_d", "need 0 < low < high")
        lo, hi = self.get("mle.grid_sigma_tau2")
        require(0.0 <= lo < hi, "mle.grid_sigma_tau2", "need 0 <= low < high")
        require(self.get("mle.grid_size", 0) >= 2, "mle.grid_size", "must be >= 2")
        require(isinstance(self.get("mle.threshold_density"), bool), "mle.threshold_density", "must be true or false")
        self.process_model().validate()

    # -- typed views -------------------------------------------------------

    def process_model(self) -> ProcessModel:
        kind = self.get("process.kind")
        n = self.get("process.n")
        if kind == ProcessKind.WIENER.value:
            return ProcessModel.wiener(n, self.get("process.v_min"), self.get("process.v_max"))
        if kind == ProcessKind.GARCH.value:
            zeta = self.get("process.garch")
            return ProcessModel.garch(n, zeta["zeta0"], zeta["zeta1"], zeta["zeta2"], seed=self.get("seed"))
        matrix = self.get("process.matrix")
        if isinstance(matrix, str):
            if matrix != "benchmark":
                raise ValidationError(f"unknown named matrix {matrix!r}", "process.matrix")
            matrix = BENCHMARK_COVARIANCE
        if matrix is None:
            raise ValidationError("explicit process needs a matrix", "process.matrix")
        model = ProcessModel.explicit(np.asarray(matrix, dtype=float))
        if model.n != n:
            log.warning(f"process.n={n} ignored, explicit matrix has n={model.n}")
        return model

    def backends(self) -> List[str]:
        return list(self.get("recover.backends") or [self.get("recover.backend")])

    def threshold_spec(self, n: int, backend: Optional[str] = None) -> ThresholdSpec:
        params = {"d": self.get("threshold.d"), "sigma_tau2": self.get("threshold.sigma_tau2")}
        if backend is not None:
            params.update((self.get("threshold.per_backend") or {}).get(backend, {}))
        return ThresholdSpec.scalar(float(params["d"]), float(params["sigma_tau2"]), n)


def get_db_path(config: Optional[ExperimentConfig] = None) -> Path:
    """
    Determines the path to the run ledger database.

    `storage.database_path` wins when set; otherwise the user's data directory.
    """
    default_db_path = Path(_dirs.user_data_dir) / "onebitcov.db"
    configured = config.get("storage.database_path") if config is not None else None
    if configured:
        return Path(configured).expanduser()
    return default_db_path


def get_db_url(config: Optional[ExperimentConfig] = None) -> str:
    """
    Constructs the SQLAlchemy database URL from the DB path.
    """
    path = get_db_path(config)
    # Ensure the parent directory exists
    path.parent.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{path}"

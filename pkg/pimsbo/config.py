"""
Configuration management for pimsbo

Experiment documents are flat JSON objects checked against a fixed schema.
A per-user default document lives in the platform config directory.
"""

import copy
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import appdirs

from pimsbo.errors import ConfigError

logger = logging.getLogger(__name__)

APP_NAME = "pimsbo"
POLICY_NAMES = ("TS", "PIMS", "GPUCB_theoretical", "GPUCB_heuristic",
                "IRGPUCB_theoretical", "IRGPUCB_heuristic", "EI", "PI")
CHECK_NAMES = ("gauss_tail", "second_moment", "equivalence", "variance_sum", "mig_sandwich")
REQUIRED_KEYS = ("kernel", "dim", "divisions")
MAX_GRID_POINTS = 10 ** 6

DEFAULT_CONFIG = {
    "kernel": "rbf",
    "lengthscale": 0.2,
    "nu": None,
    "dim": 2,
    "divisions": 15,
    "box_r": 1.0,
    "noise_var": 1e-6,
    "policies": ["TS", "PIMS"],
    "T": 50,
    "trials": 20,
    "seed": 0,
    "rff_features": 2000,
    "init_count": 5,
    "refit_every": 0,
    "candidate_lengthscales": [0.05, 0.1, 0.2, 0.5, 1.0],
    "common_random_numbers": False,
    "paired_objectives": True,
    "confidence_tracking": True,
    "output_dir": None,
    "jobs": 1,
    "a": 1.0,
    "b": 1.0,
    "policy_options": {},
    "objective_table": None,
    "checks": None,
    "mc_draws": 100000,
    "verify_cardinalities": [2, 16, 64],
    "equivalence_instances": 1000,
    "verify_trials": 2,
    "mig_max_size": 12,
    "mig_max_T": 4,
}


def _int(key, value, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(key, f"must be at most {maximum}, got {value}")
    return value


def _float(key, value, minimum=None, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {value}")
    if positive and not value > 0:
        raise ConfigError(key, f"must be positive, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {value}")
    return value


def _bool(key, value):
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected true or false, got {value!r}")
    return value


def _optional_str(key, value):
    if value is not None and not isinstance(value, str):
        raise ConfigError(key, f"expected a string or null, got {value!r}")
    return value


def _kernel(key, value):
    if value not in ("rbf", "matern", "linear"):
        raise ConfigError(key, f"must be one of rbf, matern, linear; got {value!r}")
    return value


def _nu(key, value):
    if value is None:
        return None
    value = _float(key, value, positive=True)
    if value not in (1.5, 2.5):
        raise ConfigError(key, f"only 1.5 and 2.5 are supported, got {value}")
    return value


def _policies(key, value):
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list of policy names")
    for name in value:
        if name not in POLICY_NAMES:
            raise ConfigError(key, f"unknown policy {name!r}")
    if len(set(value)) != len(value):
        raise ConfigError(key, "policies must not repeat")
    return tuple(value)


def _positive_floats(key, value):
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return tuple(_float(key, v, positive=True) for v in value)


def _cardinalities(key, value):
    if not isinstance(value, list):
        raise ConfigError(key, "expected a list of integers")
    return tuple(_int(key, v, minimum=1) for v in value)


def _policy_options(key, value):
    if not isinstance(value, dict):
        raise ConfigError(key, "expected a map of policy name to options")
    options = {}
    for name in sorted(value):
        if name not in POLICY_NAMES:
            raise ConfigError(key, f"unknown policy {name!r}")
        entry = value[name]
        if not isinstance(entry, dict) or set(entry) - {"beta_scale"}:
            raise ConfigError(key, f"options for {name} accept only beta_scale")
        options[name] = {k: _float(key, v, positive=True) for k, v in entry.items()}
    return options


def _checks(key, value):
    if value is None:
        return None
    if not isinstance(value, list):
        raise ConfigError(key, "expected a list of check names or null")
    for name in value:
        if name not in CHECK_NAMES:
            raise ConfigError(key, f"unknown check {name!r}; known: {', '.join(CHECK_NAMES)}")
    return tuple(value)


_SCHEMA = {
    "kernel": _kernel,
    "lengthscale": lambda k, v: _float(k, v, positive=True),
    "nu": _nu,
    "dim": lambda k, v: _int(k, v, minimum=1),
    "divisions": lambda k, v: _int(k, v, minimum=1),
    "box_r": lambda k, v: _float(k, v, positive=True),
    "noise_var": lambda k, v: _float(k, v, positive=True),
    "policies": _policies,
    "T": lambda k, v: _int(k, v, minimum=1),
    "trials": lambda k, v: _int(k, v, minimum=1),
    "seed": lambda k, v: _int(k, v, minimum=0, maximum=2 ** 64 - 1),
    "rff_features": lambda k, v: _int(k, v, minimum=1),
    "init_count": lambda k, v: _int(k, v, minimum=0),
    "refit_every": lambda k, v: _int(k, v, minimum=0),
    "candidate_lengthscales": _positive_floats,
    "common_random_numbers": _bool,
    "paired_objectives": _bool,
    "confidence_tracking": _bool,
    "output_dir": _optional_str,
    "jobs": lambda k, v: _int(k, v, minimum=1),
    "a": lambda k, v: _float(k, v, minimum=1.0),
    "b": lambda k, v: _float(k, v, positive=True),
    "policy_options": _policy_options,
    "objective_table": _optional_str,
    "checks": _checks,
    "mc_draws": lambda k, v: _int(k, v, minimum=10_000),
    "verify_cardinalities": _cardinalities,
    "equivalence_instances": lambda k, v: _int(k, v, minimum=0),
    "verify_trials": lambda k, v: _int(k, v, minimum=1),
    "mig_max_size": lambda k, v: _int(k, v, minimum=1),
    "mig_max_T": lambda k, v: _int(k, v, minimum=1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str
    lengthscale: float
    nu: Optional[float]
    dim: int
    divisions: int
    box_r: float
    noise_var: float
    policies: Tuple[str, ...]
    T: int
    trials: int
    seed: int
    rff_features: int
    init_count: int
    refit_every: int
    candidate_lengthscales: Tuple[float, ...]
    common_random_numbers: bool
    paired_objectives: bool
    confidence_tracking: bool
    output_dir: Optional[str]
    jobs: int
    a: float
    b: float
    policy_options: dict
    objective_table: Optional[str]
    checks: Optional[Tuple[str, ...]]
    mc_draws: int
    verify_cardinalities: Tuple[int, ...]
    equivalence_instances: int
    verify_trials: int
    mig_max_size: int
    mig_max_T: int

    def to_dict(self):
        document = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            document[f.name] = list(value) if isinstance(value, tuple) else copy.deepcopy(value)
        return document

    def beta_scale(self, policy):
        return self.policy_options.get(policy, {}).get("beta_scale", 1.0)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        document = self.to_dict()
        document.update({k: v for k, v in overrides.items() if v is not None})
        return config_from_dict(document)


def config_from_dict(document) -> ExperimentConfig:
    if not isinstance(document, dict):
        raise ConfigError("<document>", "configuration must be a JSON object")
    unknown = sorted(set(document) - set(_SCHEMA))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    for key in REQUIRED_KEYS:
        if key not in document:
            raise ConfigError(key, "missing required field")

    values = {key: validate(key, document.get(key, DEFAULT_CONFIG[key]))
              for key, validate in _SCHEMA.items()}
    if values["kernel"] == "matern" and values["nu"] is None:
        raise ConfigError("nu", "the matern kernel needs nu (1.5 or 2.5)")
    if values["kernel"] != "matern" and values["nu"] is not None:
        raise ConfigError("nu", f"nu does not apply to the {values['kernel']} kernel")
    if values["divisions"] ** values["dim"] > MAX_GRID_POINTS:
        raise ConfigError("divisions", f"grid of {values['divisions']}^{values['dim']} points "
                                       f"exceeds {MAX_GRID_POINTS}")
    return ExperimentConfig(**values)


def parse_config(text) -> ExperimentConfig:
    """Parse and validate a JSON experiment document, filling defaults"""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<document>", f"not valid JSON ({e})") from e
    return config_from_dict(document)


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2)


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()


def load_config_file(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e}") from e
    return parse_config(text)


def default_output_dir() -> Path:
    return Path(appdirs.user_data_dir(APP_NAME, APP_NAME)) / "runs"


class Config:
    """Manages the per-user default experiment document"""

    def __init__(self, config_dir=None):
        """Initialize with default values and the platform config path"""
        if config_dir is None:
            config_dir = appdirs.user_config_dir(APP_NAME, APP_NAME)
        self.config_dir = Path(config_dir)
        self.config_file = self.config_dir / 'config.json'
        self.config = copy.deepcopy(DEFAULT_CONFIG)

        if self.config_file.exists():
            self.load_config()

    def ensure_config_exists(self):
        """Create the config directory and default document; True if created"""
        if not self.config_dir.exists():
            self.config_dir.mkdir(parents=True, exist_ok=True)

        if not self.config_file.exists():
            self.save_config()
            logger.info("created default configuration at %s", self.config_file)
            return True
        return False

    def load_config(self):
        """Load the document, keeping defaults for missing keys"""
        try:
            with open(self.config_file, 'r', encoding="utf-8") as f:
                loaded_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("<file>", f"error loading {self.config_file}: {e}") from e
        self._update_nested_dict(self.config, loaded_config)

    def save_config(self):
        try:
            with open(self.config_file, 'w', encoding="utf-8") as f:
                json.dump(self.config, f, indent=2, sort_keys=True)
        except OSError as e:
            raise ConfigError("<file>", f"error saving {self.config_file}: {e}") from e

    def experiment_config(self) -> ExperimentConfig:
        return config_from_dict(self.config)

    def _update_nested_dict(self, d, u):
        """Recursively update nested dictionary"""
        for k, v in u.items():
            if isinstance(v, dict) and k in d and isinstance(d[k], dict):
                self._update_nested_dict(d[k], v)
            else:
                d[k] = v

"""Run configuration.

Values come from, lowest precedence first: the dataclass defaults, a flat
``KEY=value`` config file, ``CHECKLIST_<KEY>`` environment variables and
finally command-line flags.  Sections are key prefixes (FOLD_, SOLVER_,
BASELINE_, MLP_, LR_).
"""
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from errors import ConfigurationError

load_dotenv()

ENV_PREFIX = "CHECKLIST_"
METHODS = ("mip", "ilp-mean", "lr", "mlp", "dummy", "unit", "sets")
# Methods whose training objective depends on lambda.
OBJECTIVE_METHODS = ("mip", "ilp-mean", "unit", "sets")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in str(text).replace(";", ",").split(",") if part.strip())


def _words(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


def _optional_float(text) -> Optional[float]:
    if text is None or str(text).strip() in ("", "auto", "none"):
        return None
    return float(text)


def _bool(text) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class RunConfig:
    data_dir: str = "data"
    output_dir: str = "output"
    seed: int = 7
    n_workers: int = 1

    # ingest / folds
    fold_n_folds: int = 5
    fold_size: int = 2200
    fold_pos_fraction: float = 0.37
    fold_test_fraction: float = 0.2
    include_timing_features: bool = False

    k_features: int = 10

    # solver
    solver_lambda_grid: Tuple[float, ...] = (1.0,)
    solver_eps_n: Optional[float] = None
    solver_eps_m: Optional[float] = None
    solver_time_budget: float = 900.0
    solver_max_rules: Optional[int] = None
    solver_allow_negated_features: bool = False

    # baselines
    methods: Tuple[str, ...] = METHODS
    baseline_unit_beta: float = 0.1
    baseline_sets_tau: float = 0.1
    baseline_sets_epochs: int = 2000
    baseline_sets_learning_rate: float = 0.5
    mlp_hidden: int = 32
    mlp_epochs: int = 200
    mlp_batch_size: int = 64
    mlp_learning_rate: float = 0.05
    lr_l2: float = 1e-3
    lr_learning_rate: float = 1.0
    lr_max_epochs: int = 2000
    lr_tolerance: float = 1e-6

    @staticmethod
    def converter(name: str):
        special = {
            "solver_lambda_grid": _floats,
            "methods": _words,
            "solver_eps_n": _optional_float,
            "solver_eps_m": _optional_float,
            "solver_max_rules": lambda v: None if str(v).strip() in ("", "auto", "none") else int(v),
            "include_timing_features": _bool,
            "solver_allow_negated_features": _bool,
        }
        if name in special:
            return special[name]
        kind = {f.name: f.type for f in fields(RunConfig)}[name]
        return {int: int, float: float, str: str, "int": int, "float": float, "str": str}.get(kind, str)

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if not f.name.startswith("_"))

    def update(self, values: Mapping[str, object], source: str):
        known = set(self.keys())
        for raw_key, raw_value in values.items():
            if raw_value is None:
                continue
            key = raw_key.strip().lower()
            if key not in known:
                raise ConfigurationError(f"unknown config key '{raw_key}' in {source}")
            try:
                value = raw_value if not isinstance(raw_value, str) else self.converter(key)(raw_value)
            except ValueError as e:
                raise ConfigurationError(f"bad value for {raw_key} in {source}: {e}") from None
            setattr(self, key, value)
        return self

    def validate(self, need_data_dir: bool = False):
        if need_data_dir and not Path(self.data_dir).is_dir():
            raise ConfigurationError(f"data_dir '{self.data_dir}' does not exist")
        if not self.solver_lambda_grid:
            raise ConfigurationError("solver_lambda_grid must hold at least one value")
        if any(lam < 0 for lam in self.solver_lambda_grid):
            raise ConfigurationError("lambda values must be >= 0")
        if not 0 < self.fold_pos_fraction < 1:
            raise ConfigurationError("fold_pos_fraction must lie strictly between 0 and 1")
        if not 0 < self.fold_test_fraction < 1:
            raise ConfigurationError("fold_test_fraction must lie strictly between 0 and 1")
        if self.fold_n_folds < 1 or self.fold_size < 2:
            raise ConfigurationError("need at least one fold of at least two patients")
        if self.k_features < 1:
            raise ConfigurationError("k_features must be >= 1")
        if self.solver_time_budget <= 0:
            raise ConfigurationError("solver_time_budget must be > 0")
        if self.n_workers < 1:
            raise ConfigurationError("n_workers must be >= 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if self.baseline_unit_beta < 0 or self.baseline_sets_tau <= 0:
            raise ConfigurationError("need unit beta >= 0 and sets tau > 0")
        return self

    def method_labels(self, method: str) -> Tuple[Tuple[str, float], ...]:
        """(label, lambda) pairs a method is trained under."""
        if method not in OBJECTIVE_METHODS:
            return ((method, self.solver_lambda_grid[0]),)
        if len(self.solver_lambda_grid) == 1:
            return ((method, self.solver_lambda_grid[0]),)
        return tuple((f"{method}-lambda{lam:g}", lam) for lam in self.solver_lambda_grid)

    def as_dict(self) -> Dict[str, object]:
        return {key: getattr(self, key) for key in self.keys()}

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if isinstance(value, tuple):
                value = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
            elif value is None:
                value = "auto"
            lines.append(f"{key.upper()}={value}")
        return "\n".join(lines) + "\n"


def load_run_config(path=None, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    config = RunConfig()
    if path:
        if not Path(path).is_file():
            raise ConfigurationError(f"config file '{path}' not found")
        config.update(dotenv_values(path), source=str(path))
    env = {
        key[len(ENV_PREFIX):]: value
        for key, value in os.environ.items()
        if key.startswith(ENV_PREFIX)
    }
    config.update(env, source="environment")
    if overrides:
        config.update(overrides, source="command line")
    return config

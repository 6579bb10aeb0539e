"""Experiment configuration: a flat YAML mapping of scalar and list values.

Required keys::

    experiment Q P M mean_layout a b n_total train_fraction mc_runs
    grid estimators seed out_dir

Dotted keys refine the flat namespace:

    ffnn.epochs: 60              # hyperparameter for every estimator of that kind
    snr_a_sweep.grid: [0, 5]     # override applied only when that experiment runs

Optional keys: ``train_snr_db`` (sets ``a`` by inverting the SNR formula at
the configured ``b``), ``h_variance``, ``mean_seed``, ``n_jobs``,
``fresh_system_per_point``, ``averaging``, ``audit_slack_db``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import yaml

from ..errors import InvalidConfigurationError
from ..estimators import KINDS, EstimatorSpec

EXPERIMENTS = ("train_size_sweep", "snr_a_sweep", "dimension_p_sweep", "mismatch_b_sweep")
REQUIRED = (
    "experiment", "Q", "P", "M", "mean_layout", "a", "b", "n_total",
    "train_fraction", "mc_runs", "grid", "estimators", "seed", "out_dir",
)
SWEEP_NAMES = {
    "train_size_sweep": "n_total",
    "snr_a_sweep": "a",
    "dimension_p_sweep": "P",
    "mismatch_b_sweep": "b_test",
}
_SPEC_FIELDS = {f.name: f.type for f in dataclasses.fields(EstimatorSpec)}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    Q: int
    P: int
    M: int
    mean_layout: str
    a: float
    b: float
    n_total: int
    train_fraction: float
    mc_runs: int
    grid: tuple
    estimators: tuple
    seed: int
    out_dir: str
    train_snr_db: Optional[float] = None
    h_variance: Optional[float] = None
    mean_seed: int = 0
    n_jobs: int = 1
    fresh_system_per_point: bool = True
    averaging: str = "db"
    audit_slack_db: float = 0.2

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        grid = tuple(float(v) for v in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise InvalidConfigurationError("grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidConfigurationError(f"grid must be strictly increasing, got {list(grid)}")
        if self.mc_runs < 1:
            raise InvalidConfigurationError(f"mc_runs must be >= 1, got {self.mc_runs}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfigurationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        for name in ("Q", "P", "M", "n_total"):
            if getattr(self, name) < 1:
                raise InvalidConfigurationError(f"{name} must be >= 1")
        if self.b <= 0:
            raise InvalidConfigurationError(f"b must be positive, got {self.b}")
        if self.a < 0:
            raise InvalidConfigurationError(f"a must be nonnegative, got {self.a}")
        if not self.estimators:
            raise InvalidConfigurationError("at least one estimator is required")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names) or any(n.startswith("mmse_") for n in names):
            raise InvalidConfigurationError(f"estimator names must be unique and not start with 'mmse_': {names}")
        if self.averaging not in ("db", "linear"):
            raise InvalidConfigurationError(f"averaging must be 'db' or 'linear', got {self.averaging!r}")
        if self.experiment == "dimension_p_sweep" and any(v != int(v) or v < 1 for v in grid):
            raise InvalidConfigurationError("dimension grid must hold positive integers")
        if self.experiment == "train_size_sweep" and any(v != int(v) or v < 2 for v in grid):
            raise InvalidConfigurationError("training-size grid must hold integers >= 2")
        if self.experiment == "mismatch_b_sweep" and any(v <= 0 for v in grid):
            raise InvalidConfigurationError("test noise powers must be positive")
        if self.experiment == "snr_a_sweep" and any(v < 0 for v in grid):
            raise InvalidConfigurationError("a values must be nonnegative")

    @property
    def sweep_name(self) -> str:
        return SWEEP_NAMES[self.experiment]

    def snapshot(self) -> dict:
        """Plain-data view of the full configuration."""
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        d["estimators"] = [dataclasses.asdict(e) for e in self.estimators]
        for e in d["estimators"]:
            e["hidden"] = list(e["hidden"])
        return d


def _coerce_spec_value(key, value):
    if key == "hidden":
        return tuple(value) if isinstance(value, (list, tuple)) else (value,)
    return value


def build_estimators(names, overrides: dict) -> tuple:
    specs = []
    for entry in names:
        kind = entry
        if kind not in KINDS:
            raise InvalidConfigurationError(f"unknown estimator {entry!r}; expected one of {KINDS}")
        opts = {k: _coerce_spec_value(k, v) for k, v in overrides.get(kind, {}).items()}
        unknown = set(opts) - set(_SPEC_FIELDS)
        if unknown:
            raise InvalidConfigurationError(f"unknown {kind} settings: {sorted(unknown)}")
        try:
            specs.append(EstimatorSpec(kind=kind, **opts))
        except (TypeError, ValueError) as exc:
            raise InvalidConfigurationError(f"bad {kind} settings: {exc}") from None
    return tuple(specs)


def parse_config(raw: dict, experiment: Optional[str] = None) -> ExperimentConfig:
    """Build a config from a flat mapping; ``experiment`` overrides the file's choice."""
    if not isinstance(raw, dict):
        raise InvalidConfigurationError("config must be a key-value mapping")
    flat, est_over, exp_over = {}, {}, {}
    for key, value in raw.items():
        key = str(key)
        if "." in key:
            head, tail = key.split(".", 1)
            if head in KINDS:
                est_over.setdefault(head, {})[tail] = value
            elif head in EXPERIMENTS:
                exp_over.setdefault(head, {})[tail] = value
            else:
                raise InvalidConfigurationError(f"unknown key prefix in {key!r}")
        else:
            flat[key] = value

    exp = experiment or flat.get("experiment")
    flat["experiment"] = exp
    flat.update(exp_over.get(exp, {}))
    missing = [k for k in REQUIRED if k not in flat]
    if missing:
        raise InvalidConfigurationError(f"missing required keys: {missing}")

    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(flat) - fields
    if unknown:
        raise InvalidConfigurationError(f"unknown keys: {sorted(unknown)}")

    estimators = flat.pop("estimators")
    if isinstance(estimators, str):
        estimators = [s.strip() for s in estimators.split(",") if s.strip()]
    grid = flat.pop("grid")
    if not isinstance(grid, (list, tuple)):
        grid = [grid]
    try:
        cfg = ExperimentConfig(
            experiment=str(flat.pop("experiment")),
            Q=int(flat.pop("Q")), P=int(flat.pop("P")), M=int(flat.pop("M")),
            mean_layout=str(flat.pop("mean_layout")),
            a=float(flat.pop("a")), b=float(flat.pop("b")),
            n_total=int(flat.pop("n_total")),
            train_fraction=float(flat.pop("train_fraction")),
            mc_runs=int(flat.pop("mc_runs")),
            grid=tuple(grid),
            estimators=build_estimators(estimators, est_over),
            seed=int(flat.pop("seed")),
            out_dir=str(flat.pop("out_dir")),
            **flat,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfigurationError):
            raise
        raise InvalidConfigurationError(str(exc)) from None
    return cfg


def load_raw(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise InvalidConfigurationError(f"cannot parse {path}: {exc}") from None
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot read {path}: {exc}") from None
    return raw or {}


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    return parse_config(load_raw(path), experiment)

"""NMSE in dB and Monte-Carlo aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

NMSE_FLOOR_DB = -100.0


@dataclass(frozen=True)
class NmseRecord:
    estimator: str
    sweep_name: str
    sweep_value: float
    mc_run: int
    nmse_db: float
    n_test: int
    signal_power: float = field(compare=False)
    snr_db: float = float("nan")
    n_train: int = 0
    experiment: str = ""

    def __post_init__(self):
        if self.n_test < 1:
            raise ValueError(f"n_test must be >= 1, got {self.n_test}")
        if not np.isfinite(self.nmse_db):
            raise ValueError(f"nmse_db must be finite, got {self.nmse_db}")


def nmse_db(predictions, targets, signal_power: float, floor_db: float = NMSE_FLOOR_DB) -> float:
    """10 log10(mean ||t - t_hat||^2 / signal_power), floored at ``floor_db``."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: predictions {predictions.shape}, targets {targets.shape}")
    if targets.shape[0] < 1:
        raise ValueError("need at least one sample")
    if not signal_power > 0:
        raise ValueError(f"signal power must be positive, got {signal_power}")
    err = np.mean(np.sum((targets - predictions) ** 2, axis=1))
    if err <= 0:
        return floor_db
    return max(10.0 * np.log10(err / signal_power), floor_db)


@dataclass(frozen=True)
class GroupStats:
    estimator: str
    sweep_value: float
    mean: float
    std: float
    count: int
    minimum: float
    maximum: float


def aggregate(records: Iterable[NmseRecord], domain: str = "db") -> list[GroupStats]:
    """Mean and sample standard deviation of nmse_db per (estimator, sweep value).

    ``domain="db"`` averages the dB values directly. ``domain="linear"``
    averages 10**(dB/10) and reports the mean back in dB; the standard
    deviation is then that of the dB values.
    """
    if domain not in ("db", "linear"):
        raise ValueError(f"domain must be 'db' or 'linear', got {domain!r}")
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        groups[(r.estimator, r.sweep_value)].append(r.nmse_db)
    if not groups:
        raise ValueError("no records to aggregate")
    out = []
    for (name, value), vals in groups.items():
        v = np.asarray(vals)
        if domain == "db":
            mean = float(np.mean(v))
        else:
            mean = float(10.0 * np.log10(np.mean(10.0 ** (v / 10.0))))
        std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        out.append(GroupStats(name, value, mean, std, int(v.size), float(v.min()), float(v.max())))
    return out


def curve(stats: Iterable[GroupStats], estimator: str, values: Optional[Iterable[float]] = None):
    """Means of one estimator ordered by sweep value."""
    rows = sorted((s for s in stats if s.estimator == estimator), key=lambda s: s.sweep_value)
    if values is not None:
        wanted = list(values)
        rows = [s for s in rows if s.sweep_value in wanted]
    return np.array([s.sweep_value for s in rows]), np.array([s.mean for s in rows])

"""Linear observation model x = H t + n and dataset generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfigurationError
from .gmm_model import GmmPrior, NoiseModel, _digest, _frozen, sample_noise, sample_prior


@dataclass(frozen=True, eq=False)
class ObservationSystem:
    """One realization of the P x Q system matrix."""

    H: np.ndarray
    seed: Optional[int] = None
    entry_variance: Optional[float] = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.ndim != 2 or min(H.shape) < 1:
            raise InvalidConfigurationError(f"H must be a nonempty 2-D matrix, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise InvalidConfigurationError("H has non-finite entries")
        object.__setattr__(self, "H", _frozen(H))

    @property
    def P(self) -> int:
        return self.H.shape[0]

    @property
    def Q(self) -> int:
        return self.H.shape[1]

    def fingerprint(self) -> str:
        return _digest("system", self.H)


def draw_system(P: int, Q: int, seed: int, entry_variance: Optional[float] = None) -> ObservationSystem:
    """Draw H with i.i.d. N(0, entry_variance) entries; variance defaults to 1/P.

    With variance 1/P, E||H t||^2 = ||t||^2 for any P.
    """
    if P < 1 or Q < 1:
        raise InvalidConfigurationError(f"P and Q must be >= 1, got P={P}, Q={Q}")
    var = 1.0 / P if entry_variance is None else float(entry_variance)
    if var <= 0:
        raise InvalidConfigurationError(f"entry variance must be positive, got {var}")
    rng = np.random.default_rng(seed)
    H = np.sqrt(var) * rng.standard_normal((P, Q))
    return ObservationSystem(H, seed=seed, entry_variance=var)


def observe(system: ObservationSystem, t, n) -> np.ndarray:
    """x = H t + n for a single pair or row-stacked batches."""
    t = np.asarray(t, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if t.shape[-1] != system.Q:
        raise ValueError(f"target has dimension {t.shape[-1]}, system expects Q={system.Q}")
    if n.shape[-1] != system.P:
        raise ValueError(f"noise has dimension {n.shape[-1]}, system expects P={system.P}")
    if t.shape[:-1] != n.shape[:-1]:
        raise ValueError(f"batch shapes differ: {t.shape[:-1]} vs {n.shape[:-1]}")
    return t @ system.H.T + n


def model_fingerprint(prior: GmmPrior, noise: NoiseModel, system: ObservationSystem) -> str:
    return _digest(prior.fingerprint(), noise.fingerprint(), system.fingerprint())


@dataclass(frozen=True)
class GenerationRecord:
    """Everything needed to regenerate a dataset bit for bit."""

    prior: GmmPrior
    noise: NoiseModel
    system_seed: Optional[int]
    system_entry_variance: Optional[float]
    sample_seed: int
    n: int
    fingerprint: str
    indices: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired observations (n, P) and targets (n, Q)."""

    observations: np.ndarray
    targets: np.ndarray
    record: Optional[GenerationRecord] = None

    def __post_init__(self):
        x = np.asarray(self.observations, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if x.ndim != 2 or t.ndim != 2:
            raise ValueError("observations and targets must be 2-D (n, dim)")
        if x.shape[0] != t.shape[0]:
            raise ValueError(f"{x.shape[0]} observations but {t.shape[0]} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "observations", _frozen(x))
        object.__setattr__(self, "targets", _frozen(t))

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def P(self) -> int:
        return self.observations.shape[1]

    @property
    def Q(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        rec = self.record
        if rec is not None:
            base = np.arange(rec.n) if rec.indices is None else rec.indices
            rec = GenerationRecord(
                rec.prior, rec.noise, rec.system_seed, rec.system_entry_variance,
                rec.sample_seed, rec.n, rec.fingerprint, _frozen(base[idx], np.intp),
            )
        return Dataset(self.observations[idx], self.targets[idx], rec)


def generate_dataset(prior: GmmPrior, noise: NoiseModel, system: ObservationSystem, n: int, seed: int) -> Dataset:
    """Sample ``n`` (x, t) pairs: t from the prior, noise from ``noise``, x = H t + n.

    Target and noise streams are independent children of ``seed``.
    """
    if prior.Q != system.Q or noise.P != system.P:
        raise InvalidConfigurationError(
            f"dimension mismatch: prior Q={prior.Q}, noise P={noise.P}, system {system.P}x{system.Q}"
        )
    if n < 0:
        raise InvalidConfigurationError(f"sample count must be >= 0, got {n}")
    t_seq, n_seq = np.random.SeedSequence(seed).spawn(2)
    t, _ = sample_prior(prior, n, t_seq)
    noise_draw = sample_noise(noise, n, n_seq)
    x = observe(system, t, noise_draw)
    record = GenerationRecord(
        prior, noise, system.seed, system.entry_variance, seed, n, model_fingerprint(prior, noise, system)
    )
    return Dataset(x, t, record)


def regenerate(record: GenerationRecord) -> Dataset:
    """Rebuild a dataset (or a split of one) from its generation record."""
    if record.system_seed is None:
        raise ValueError("record has no system seed; the system matrix was not drawn by draw_system")
    system = draw_system(record.noise.P, record.prior.Q, record.system_seed, record.system_entry_variance)
    full = generate_dataset(record.prior, record.noise, system, record.n, record.sample_seed)
    if record.indices is None:
        return full
    return full.subset(record.indices)


def split(dataset: Dataset, train_fraction: float, seed: int):
    """Shuffle and cut into (train, test); train size is round(n * train_fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfigurationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    n_train = int(round(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise InvalidConfigurationError(
            f"split of {n} samples at fraction {train_fraction} leaves an empty partition"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def dataset_csv(dataset: Dataset, run_id: int = 0) -> str:
    """Flat text dump: ``run_id,sample_id,x_1..x_P,t_1..t_Q``, floats via repr."""
    header = ["run_id", "sample_id"]
    header += [f"x_{i + 1}" for i in range(dataset.P)] + [f"t_{i + 1}" for i in range(dataset.Q)]
    lines = [",".join(header)]
    for k, (x, t) in enumerate(zip(dataset.observations, dataset.targets)):
        values = ",".join(repr(float(v)) for v in np.concatenate([x, t]))
        lines.append(f"{run_id},{k},{values}")
    return "\n".join(lines) + "\n"


def read_dataset_csv(text: str) -> tuple[np.ndarray, Dataset]:
    """Inverse of :func:`dataset_csv`; returns (run ids, dataset without a generation record)."""
    rows = text.strip().splitlines()
    header = rows[0].split(",")
    P = sum(h.startswith("x_") for h in header)
    Q = sum(h.startswith("t_") for h in header)
    if header[:2] != ["run_id", "sample_id"] or len(header) != 2 + P + Q:
        raise ValueError(f"unexpected dataset header {header[:4]}...")
    body = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, 2 + P + Q)
    return body[:, 0].astype(np.int64), Dataset(body[:, 2:2 + P], body[:, 2 + P:])

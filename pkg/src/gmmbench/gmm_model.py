"""Gaussian-mixture prior, Gaussian noise, and their analytic powers.

The target signal is drawn from

    p(t) = sum_m alpha_m N(t; a * mu_m, C_m)

with unit-norm ``mu_m`` so that ``a`` is the radius of the sphere carrying
the component means. Observation noise is N(mu_n, (b / P) I_P), whose total
power is exactly ``b``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import IllConditionedModelError, InvalidConfigurationError

LAYOUTS = ("ring", "random_sphere")

_TOL = 1e-12


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(str(p.shape).encode())
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        else:
            h.update(repr(p).encode())
        h.update(b"|")
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class GmmPrior:
    """Mixture prior over the target signal ``t`` in R^Q.

    Parameters
    ----------
    alphas : array_like, shape (M,)
        Mixing proportions; nonnegative, summing to one.
    unit_means : array_like, shape (M, Q)
        Component directions, each of unit Euclidean norm.
    scale_a : float
        Radius of the sphere carrying the component means.
    covariances : array_like, shape (M, Q, Q), optional
        Component covariances. Identity when omitted.
    """

    alphas: np.ndarray
    unit_means: np.ndarray
    scale_a: float
    covariances: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        means = np.atleast_2d(np.asarray(self.unit_means, dtype=np.float64))
        if alphas.ndim != 1 or alphas.size != means.shape[0]:
            raise InvalidConfigurationError(
                f"need one weight per component: got {alphas.size} weights for {means.shape[0]} means"
            )
        if np.any(alphas < 0) or abs(alphas.sum() - 1.0) > _TOL:
            raise InvalidConfigurationError(f"mixing weights must be nonnegative and sum to 1, got {alphas}")
        norms = np.einsum("mq,mq->m", means, means)
        if np.any(np.abs(norms - 1.0) > _TOL):
            raise InvalidConfigurationError(f"component means must have unit norm, squared norms {norms}")
        a = float(self.scale_a)
        if not np.isfinite(a) or a < 0:
            raise InvalidConfigurationError(f"scale_a must be finite and nonnegative, got {a}")

        M, Q = means.shape
        if self.covariances is None:
            covs = np.broadcast_to(np.eye(Q), (M, Q, Q))
        else:
            covs = np.asarray(self.covariances, dtype=np.float64)
            if covs.shape != (M, Q, Q):
                raise InvalidConfigurationError(f"covariances must have shape {(M, Q, Q)}, got {covs.shape}")
        for m in range(M):
            if np.max(np.abs(covs[m] - covs[m].T)) > _TOL:
                raise InvalidConfigurationError(f"covariance of component {m} is not symmetric")
            try:
                np.linalg.cholesky(covs[m])
            except np.linalg.LinAlgError:
                raise IllConditionedModelError(f"covariance of component {m} is not positive definite") from None

        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "unit_means", _frozen(means))
        object.__setattr__(self, "scale_a", a)
        object.__setattr__(self, "covariances", _frozen(covs))

    @property
    def M(self) -> int:
        return self.unit_means.shape[0]

    @property
    def Q(self) -> int:
        return self.unit_means.shape[1]

    @property
    def means(self) -> np.ndarray:
        """Scaled component means ``a * mu_m``, shape (M, Q)."""
        return self.scale_a * self.unit_means

    @cached_property
    def cov_cholesky(self) -> np.ndarray:
        return _frozen(np.linalg.cholesky(self.covariances))

    def with_scale(self, scale_a: float) -> "GmmPrior":
        return GmmPrior(self.alphas, self.unit_means, scale_a, self.covariances)

    def fingerprint(self) -> str:
        return _digest("prior", self.alphas, self.unit_means, self.scale_a, self.covariances)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Gaussian observation noise N(mean, (b / P) I_P)."""

    b: float
    P: int
    mean: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        b = float(self.b)
        if not np.isfinite(b) or b <= 0:
            raise InvalidConfigurationError(f"noise power b must be positive, got {self.b}")
        P = int(self.P)
        if P < 1:
            raise InvalidConfigurationError(f"observation dimension P must be >= 1, got {self.P}")
        mean = np.zeros(P) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        if mean.shape != (P,):
            raise InvalidConfigurationError(f"noise mean must have shape ({P},), got {mean.shape}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mean", _frozen(mean))

    @property
    def variance(self) -> float:
        """Per-coordinate variance b / P."""
        return self.b / self.P

    @property
    def covariance(self) -> np.ndarray:
        return self.variance * np.eye(self.P)

    def with_power(self, b: float) -> "NoiseModel":
        return NoiseModel(b, self.P, self.mean)

    def fingerprint(self) -> str:
        return _digest("noise", self.b, self.P, self.mean)


def build_means(Q: int, M: int, layout: str = "ring", seed: int = 0) -> np.ndarray:
    """Unit-norm component directions, shape (M, Q).

    ``ring`` places the directions at angles 2*pi*m/M on the unit circle of
    the first two coordinates. ``random_sphere`` normalizes i.i.d. standard
    normal draws.
    """
    if M < 1:
        raise InvalidConfigurationError(f"need at least one component, got M={M}")
    if Q < 1:
        raise InvalidConfigurationError(f"need Q >= 1, got Q={Q}")
    if layout == "ring":
        if Q < 2:
            raise InvalidConfigurationError("ring layout needs Q >= 2")
        angles = 2.0 * np.pi * np.arange(M) / M
        means = np.zeros((M, Q))
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
    elif layout == "random_sphere":
        rng = np.random.default_rng(seed)
        means = rng.standard_normal((M, Q))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
    else:
        raise InvalidConfigurationError(f"unknown mean layout {layout!r}; expected one of {LAYOUTS}")
    # cos/sin round-off can leave |mu|^2 off by a few ulps
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    return means


def make_prior(
    Q: int,
    M: int,
    a: float,
    layout: str = "ring",
    seed: int = 0,
    alphas: Optional[Sequence[float]] = None,
    covariances: Optional[np.ndarray] = None,
) -> GmmPrior:
    """Equal-weight, identity-covariance prior unless told otherwise."""
    means = build_means(Q, M, layout, seed)
    if alphas is None:
        alphas = np.full(M, 1.0 / M)
    return GmmPrior(alphas, means, a, covariances)


def sample_prior(prior: GmmPrior, n: int, seed: int):
    """Draw ``n`` targets and their component labels.

    Components are selected by inverse CDF on the cumulative weights, so a
    uniform draw landing exactly on a boundary goes to the lower index.

    Returns
    -------
    t : ndarray, shape (n, Q)
    labels : ndarray of int, shape (n,)
    """
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    z = rng.standard_normal((n, prior.Q))
    cdf = np.cumsum(prior.alphas)
    labels = np.searchsorted(cdf, u, side="right")
    np.minimum(labels, prior.M - 1, out=labels)
    t = prior.means[labels] + np.einsum("nij,nj->ni", prior.cov_cholesky[labels], z)
    return t, labels


def sample_noise(noise: NoiseModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` noise vectors, shape (n, P)."""
    rng = np.random.default_rng(seed)
    return noise.mean + np.sqrt(noise.variance) * rng.standard_normal((n, noise.P))


def prior_mean(prior: GmmPrior) -> np.ndarray:
    """E[t] = a * sum_m alpha_m mu_m."""
    return prior.scale_a * (prior.alphas @ prior.unit_means)


def signal_power(prior: GmmPrior) -> float:
    """E||t - E t||^2 computed from the mixture parameters.

    Within-component spread is sum_m alpha_m Tr C_m (equal to Q for identity
    covariances); between-component spread is a^2 times the weighted scatter
    of the unit means, which for equal weights is 1 - ||sum_m mu_m||^2 / M^2.
    """
    within = float(prior.alphas @ np.trace(prior.covariances, axis1=1, axis2=2))
    return within + prior.scale_a**2 * _mean_scatter(prior.alphas, prior.unit_means)


def _mean_scatter(alphas, unit_means) -> float:
    centroid = alphas @ unit_means
    second = float(alphas @ np.einsum("mq,mq->m", unit_means, unit_means))
    return max(second - float(centroid @ centroid), 0.0)


def snr_db(prior: GmmPrior, noise: NoiseModel) -> float:
    """10 log10(signal_power / b)."""
    if not noise.b > 0:
        raise InvalidConfigurationError(f"noise power b must be positive, got {noise.b}")
    return 10.0 * np.log10(signal_power(prior) / noise.b)


def scale_for_snr(prior: GmmPrior, b: float, target_snr_db: float) -> float:
    """Mean radius ``a`` that makes ``prior`` reach ``target_snr_db`` at noise power ``b``.

    The prior's own ``scale_a`` is ignored; its weights, directions and
    covariances fix everything else.
    """
    if b <= 0:
        raise InvalidConfigurationError(f"noise power b must be positive, got {b}")
    within = signal_power(prior.with_scale(0.0))
    scatter = _mean_scatter(prior.alphas, prior.unit_means)
    needed = b * 10.0 ** (target_snr_db / 10.0) - within
    if scatter <= 0:
        raise InvalidConfigurationError("means have no spread; SNR does not depend on a")
    if needed < 0:
        raise InvalidConfigurationError(
            f"target SNR {target_snr_db} dB is below the a=0 SNR {10 * np.log10(within / b):.3f} dB"
        )
    return float(np.sqrt(needed / scatter))

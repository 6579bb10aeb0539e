"""Closed-form conditional mean E[t | x] for a mixture prior seen through x = H t + n.

Conditioned on component m, x is Gaussian with mean H a mu_m + mu_n and
covariance S_m = H C_m H^T + C_n, so

    E[t | x] = sum_m beta_m(x) (a mu_m + C_m H^T S_m^{-1} (x - H a mu_m - mu_n))

where beta_m(x) is the posterior probability of component m. All solves
go through Cholesky factors of S_m; beta is normalized in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_softmax

from .errors import FingerprintMismatchError, IllConditionedModelError
from .gmm_model import GmmPrior, NoiseModel, signal_power
from .metrics import nmse_db
from .observation import Dataset, ObservationSystem, model_fingerprint

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class OracleCache:
    """Per-component precomputations for one (prior, noise, system) triple.

    Attributes
    ----------
    S : (M, P, P) predicted observation covariances
    chol : (M, P, P) lower Cholesky factors of S
    logdet : (M,) log-determinants of S
    gain : (M, Q, P) C_m H^T S_m^{-1}
    obs_mean : (M, P) H a mu_m + mu_n
    log_alpha : (M,)
    """

    S: np.ndarray
    chol: np.ndarray
    logdet: np.ndarray
    gain: np.ndarray
    obs_mean: np.ndarray
    comp_mean: np.ndarray
    log_alpha: np.ndarray
    fingerprint: str

    @property
    def M(self) -> int:
        return self.log_alpha.shape[0]

    @property
    def P(self) -> int:
        return self.obs_mean.shape[1]

    @property
    def Q(self) -> int:
        return self.comp_mean.shape[1]


def build_cache(prior: GmmPrior, noise: NoiseModel, system: ObservationSystem) -> OracleCache:
    if prior.Q != system.Q or noise.P != system.P:
        raise ValueError(
            f"dimension mismatch: prior Q={prior.Q}, noise P={noise.P}, system {system.P}x{system.Q}"
        )
    H = system.H
    M, P, Q = prior.M, system.P, system.Q
    S = np.empty((M, P, P))
    chol = np.empty((M, P, P))
    logdet = np.empty(M)
    gain = np.empty((M, Q, P))
    for m in range(M):
        HC = H @ prior.covariances[m]
        S_m = HC @ H.T + noise.covariance
        S_m = 0.5 * (S_m + S_m.T)
        try:
            L = np.linalg.cholesky(S_m)
        except np.linalg.LinAlgError:
            raise IllConditionedModelError(
                f"observation covariance of component {m} is not positive definite"
            ) from None
        S[m], chol[m] = S_m, L
        logdet[m] = 2.0 * np.sum(np.log(np.diag(L)))
        # S^{-1} H C_m is the transpose of C_m H^T S^{-1}
        gain[m] = cho_solve((L, True), HC).T
    comp_mean = prior.means
    obs_mean = comp_mean @ H.T + noise.mean
    with np.errstate(divide="ignore"):
        log_alpha = np.log(prior.alphas)
    return OracleCache(
        S=S, chol=chol, logdet=logdet, gain=gain, obs_mean=obs_mean,
        comp_mean=comp_mean, log_alpha=log_alpha,
        fingerprint=model_fingerprint(prior, noise, system),
    )


def _as_batch(cache: OracleCache, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != cache.P:
        raise ValueError(f"observation has dimension {x.shape[1]}, expected P={cache.P}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation contains non-finite values")
    return x, single


def _log_scores(cache: OracleCache, x):
    """Unnormalized log posterior of each component, plus the residuals x - obs_mean."""
    resid = x[None, :, :] - cache.obs_mean[:, None, :]  # (M, n, P)
    scores = np.empty((x.shape[0], cache.M))
    for m in range(cache.M):
        w = solve_triangular(cache.chol[m], resid[m].T, lower=True)
        quad = np.einsum("pn,pn->n", w, w)
        scores[:, m] = cache.log_alpha[m] - 0.5 * (cache.P * _LOG_2PI + cache.logdet[m] + quad)
    return scores, resid


def responsibilities(cache: OracleCache, x) -> np.ndarray:
    """Posterior component probabilities beta_m(x); shape (M,) or (n, M)."""
    x, single = _as_batch(cache, x)
    scores, _ = _log_scores(cache, x)
    beta = np.exp(log_softmax(scores, axis=1))
    return beta[0] if single else beta


def mmse_estimate(cache: OracleCache, x) -> np.ndarray:
    """E[t | x]; shape (Q,) or (n, Q)."""
    x, single = _as_batch(cache, x)
    scores, resid = _log_scores(cache, x)
    beta = np.exp(log_softmax(scores, axis=1))
    est = np.zeros((x.shape[0], cache.Q))
    for m in range(cache.M):
        cond = cache.comp_mean[m] + resid[m] @ cache.gain[m].T
        est += beta[:, m:m + 1] * cond
    return est[0] if single else est


def oracle_nmse_db(prior: GmmPrior, noise: NoiseModel, system: ObservationSystem, test: Dataset,
                   cache: OracleCache | None = None) -> float:
    """NMSE (dB) of the conditional-mean estimator on ``test``.

    The error power is empirical; the normalizer is the analytic signal power.
    ``test`` must have been generated from exactly this (prior, noise, system).
    """
    if len(test) == 0:
        raise ValueError("test dataset is empty")
    if cache is None:
        cache = build_cache(prior, noise, system)
    elif cache.fingerprint != model_fingerprint(prior, noise, system):
        raise FingerprintMismatchError("cache was built from a different model")
    if test.record is None or test.record.fingerprint != cache.fingerprint:
        raise FingerprintMismatchError("test data were not generated from this (prior, noise, system)")
    est = mmse_estimate(cache, test.observations)
    return nmse_db(est, test.targets, signal_power(prior))

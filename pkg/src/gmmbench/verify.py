"""Fast self-checks of the oracle, the estimators' gradients and the seed tree.

Each check returns ``(name, passed, detail)``; ``run_checks`` runs them all.
They are small versions of the test suite meant for a quick sanity pass on
a new machine.
"""

from __future__ import annotations

import numpy as np

from .estimators.network import ffnn_arch, init_params, loss_and_grads, residual_arch
from .gmm_model import GmmPrior, NoiseModel, make_prior
from .harness.seeds import fnv1a_64
from .mmse_oracle import build_cache, mmse_estimate, responsibilities
from .observation import ObservationSystem, draw_system, generate_dataset


def check_scalar_quadrature():
    """Two-component scalar mixture against a dense Riemann sum of the posterior."""
    prior = GmmPrior([0.5, 0.5], [[1.0], [-1.0]], 2.0)
    noise = NoiseModel(0.25, 1)
    cache = build_cache(prior, noise, ObservationSystem(np.eye(1)))
    t = np.linspace(-12, 12, 200_001)
    log_prior = np.logaddexp(-0.5 * (t - 2) ** 2, -0.5 * (t + 2) ** 2)
    worst = 0.0
    for x in np.linspace(-4, 4, 17):
        logw = log_prior - 0.5 * (x - t) ** 2 / 0.25
        w = np.exp(logw - logw.max())
        worst = max(worst, abs(float(w @ t / w.sum()) - float(mmse_estimate(cache, np.array([x]))[0])))
    return "oracle vs quadrature", worst < 1e-5, f"max abs error {worst:.2e}"


def check_gaussian_reduction():
    """Single component: closed form against the information-form posterior mean."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        Q, P = 4, 6
        A = rng.standard_normal((Q, Q))
        C = A @ A.T + 0.5 * np.eye(Q)
        mu = rng.standard_normal(Q)
        mu /= np.linalg.norm(mu)
        prior = GmmPrior([1.0], mu[None], 1.5, C[None])
        noise = NoiseModel(0.7, P)
        system = draw_system(P, Q, int(rng.integers(2**31)))
        x = rng.standard_normal(P)
        H, Cn_inv = system.H, np.eye(P) / noise.variance
        C_inv = np.linalg.inv(C)
        want = np.linalg.solve(C_inv + H.T @ Cn_inv @ H, C_inv @ (1.5 * mu) + H.T @ Cn_inv @ x)
        got = mmse_estimate(build_cache(prior, noise, system), x)
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-12))))
    return "gaussian reduction", worst < 1e-10, f"max rel error {worst:.2e}"


def check_responsibilities():
    prior = make_prior(10, 10, 9.0)
    noise = NoiseModel(0.01, 10)
    system = draw_system(10, 10, 1)
    x = generate_dataset(prior, noise, system, 2000, seed=2).observations
    beta = responsibilities(build_cache(prior, noise, system), x)
    dev = float(np.max(np.abs(beta.sum(axis=1) - 1)))
    ok = bool(np.all(np.isfinite(beta)) and np.all(beta >= 0)) and dev < 1e-12
    return "responsibilities (a=9, b=0.01)", ok, f"max |sum - 1| {dev:.1e}"


def _gradient_error(ops, widths, n_in, n_out, seed):
    rng = np.random.default_rng(seed)
    params = init_params(ops, n_in, widths, "tanh", rng)
    for k in params:
        params[k] += 0.1 * rng.standard_normal(params[k].shape)
    x, t = rng.standard_normal((5, n_in)), rng.standard_normal((5, n_out))
    _, grads = loss_and_grads(ops, params, x, t, "tanh")
    worst = 0.0
    for k, arr in params.items():
        num = np.zeros_like(arr)
        flat, g = arr.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + 1e-6
            up = loss_and_grads(ops, params, x, t, "tanh")[0]
            flat[i] = orig - 1e-6
            down = loss_and_grads(ops, params, x, t, "tanh")[0]
            flat[i] = orig
            g[i] = (up - down) / 2e-6
        denom = max(np.linalg.norm(num), np.linalg.norm(grads[k]), 1e-12)
        worst = max(worst, float(np.linalg.norm(num - grads[k]) / denom))
    return worst


def check_gradients():
    ffnn = _gradient_error(ffnn_arch(3), {"fc0": 5, "fc1": 4, "fc2": 3, "out": 2}, 3, 2, 0)
    widths = {"stem": 4, "out": 2, "block0.fc1": 4, "block0.fc2": 4, "block1.fc1": 4, "block1.fc2": 4}
    res = _gradient_error(residual_arch(2), widths, 3, 2, 1)
    worst = max(ffnn, res)
    return "backprop vs finite differences", worst < 1e-5, f"ffnn {ffnn:.1e}, residual {res:.1e}"


def check_seed_hash():
    ok = fnv1a_64(b"a") == 0xAF63DC4C8601EC8C and fnv1a_64(b"foobar") == 0x85944171F73967E8
    return "fnv-1a 64 test vectors", ok, "a, foobar"


CHECKS = (check_scalar_quadrature, check_gaussian_reduction, check_responsibilities,
          check_gradients, check_seed_hash)


def run_checks():
    return [check() for check in CHECKS]

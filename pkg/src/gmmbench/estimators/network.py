"""Fully connected networks trained by backpropagation with Adam.

A network is a list of ops applied in order:

    ["dense", name]        x @ W + b with arrays ``name.W`` (in, out), ``name.b``
    ["act"]                elementwise activation
    ["res", [ops...]]      x + branch(x), branch given by the nested ops

Weights live in a flat ``{name: array}`` dict so forward, backward and
serialization can all share it.
"""

from __future__ import annotations

import numpy as np

from ..errors import DivergenceError
from .base import (
    ACTIVATIONS,
    EstimatorSpec,
    FittedEstimator,
    fit_scaling,
    relative_mse_db,
    scale_inputs,
    scale_targets,
    unscale_targets,
    validation_cut,
)


def ffnn_arch(n_hidden: int):
    ops = []
    for i in range(n_hidden):
        ops += [["dense", f"fc{i}"], ["act"]]
    ops.append(["dense", "out"])
    return ops


def residual_arch(n_blocks: int):
    ops = [["dense", "stem"]]
    for i in range(n_blocks):
        ops.append(["res", [["dense", f"block{i}.fc1"], ["act"], ["dense", f"block{i}.fc2"]]])
    ops.append(["dense", "out"])
    return ops


def forward(ops, arrays, x, activation: str, caches=None):
    """Run the network; when ``caches`` is a list, append what backward needs."""
    f = ACTIVATIONS[activation][0]
    for op in ops:
        kind = op[0]
        if kind == "dense":
            if caches is not None:
                caches.append(x)
            x = x @ arrays[op[1] + ".W"] + arrays[op[1] + ".b"]
        elif kind == "act":
            z = x
            x = f(z)
            if caches is not None:
                caches.append((z, x))
        elif kind == "res":
            sub = [] if caches is not None else None
            x = x + forward(op[1], arrays, x, activation, sub)
            if caches is not None:
                caches.append(sub)
        else:
            raise ValueError(f"unknown op {kind!r}")
    return x


def backward(ops, arrays, caches, grad_out, activation: str, grads=None):
    """Gradients of a scalar loss w.r.t. every array, given dloss/doutput.

    Returns (grads, dloss/dinput).
    """
    df = ACTIVATIONS[activation][1]
    if grads is None:
        grads = {}
    g = grad_out
    for op, cache in zip(reversed(ops), reversed(caches)):
        kind = op[0]
        if kind == "dense":
            W = arrays[op[1] + ".W"]
            grads[op[1] + ".W"] = cache.T @ g
            grads[op[1] + ".b"] = g.sum(axis=0)
            g = g @ W.T
        elif kind == "act":
            z, a = cache
            g = g * df(z, a)
        elif kind == "res":
            _, g_branch = backward(op[1], arrays, cache, g, activation, grads)
            g = g + g_branch
    return grads, g


def mse_loss(pred, target):
    """Mean over samples of the squared error norm, and its gradient."""
    n = pred.shape[0]
    diff = pred - target
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


def loss_and_grads(ops, arrays, x, t, activation: str):
    caches = []
    pred = forward(ops, arrays, x, activation, caches)
    loss, g = mse_loss(pred, t)
    grads, _ = backward(ops, arrays, caches, g, activation)
    return loss, grads


def init_params(ops, n_in: int, widths: dict, activation: str, rng, zero_branch_out: bool = False):
    """He-normal init for layers feeding the activation, 1/fan_in otherwise; zero biases.

    ``widths`` maps every dense name to its output width.
    """
    arrays = {}
    gain = 2.0 if activation == "relu" else 1.0

    def walk(ops, n):
        for i, op in enumerate(ops):
            if op[0] == "dense":
                out = widths[op[1]]
                feeds_act = i + 1 < len(ops) and ops[i + 1][0] == "act"
                scale = np.sqrt((gain if feeds_act else 1.0) / n)
                W = scale * rng.standard_normal((n, out))
                if zero_branch_out and op[1].endswith(".fc2"):
                    W[:] = 0.0
                arrays[op[1] + ".W"] = W
                arrays[op[1] + ".b"] = np.zeros(out)
                n = out
            elif op[0] == "res":
                walk(op[1], n)
        return n

    walk(ops, n_in)
    return arrays


class Adam:
    """Adam update on a dict of arrays, in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _all_finite(arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays.values())


def train_network(ops, params, x, t, spec: EstimatorSpec, rng):
    """Mini-batch Adam on the MSE loss with early stopping on a validation slice.

    Returns the best parameters seen (by validation loss, or the last ones
    when there is no validation slice) and a training log.
    """
    fit_idx, val_idx = validation_cut(len(x), spec.val_fraction, rng)
    x_fit, t_fit = x[fit_idx], t[fit_idx]
    x_val, t_val = x[val_idx], t[val_idx]
    opt = Adam(params, lr=spec.learning_rate)

    best = {k: v.copy() for k, v in params.items()}
    best_val, best_epoch, wait = np.inf, 0, 0
    epoch_losses, val_losses = [], []
    n = len(x_fit)
    for epoch in range(1, spec.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grads(ops, params, x_fit[idx], t_fit[idx], spec.activation)
                if not (np.isfinite(loss) and _all_finite(grads)):
                    raise DivergenceError(epoch, spec.learning_rate, loss)
                opt.step(params, grads)
            if not _all_finite(params):
                raise DivergenceError(epoch, spec.learning_rate, loss)
            total += loss * len(idx)
        epoch_losses.append(total / n)

        if val_idx.size == 0:
            best_epoch = epoch
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            val_loss, _ = mse_loss(forward(ops, params, x_val, spec.activation), t_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, spec.learning_rate, val_loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val, best_epoch, wait = val_loss, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait >= spec.patience:
                break

    if val_idx.size == 0:
        best = params
    log = {
        "epoch_losses": epoch_losses,
        "val_losses": val_losses,
        "best_epoch": best_epoch,
        "epochs_run": len(epoch_losses),
    }
    return best, log


def _fit(train, spec: EstimatorSpec, kind: str, ops, widths):
    if len(train) == 0:
        raise ValueError("training set is empty")
    x = np.asarray(train.observations)
    t = np.asarray(train.targets)
    scaling = fit_scaling(x, t, spec.standardize)
    xs, ts = scale_inputs(scaling, x), scale_targets(scaling, t)

    rng = np.random.default_rng(spec.seed)
    params = init_params(ops, x.shape[1], widths, spec.activation, rng,
                         zero_branch_out=kind == "residual_mlp" and spec.zero_init_residual)
    params, log = train_network(ops, params, xs, ts, spec, rng)

    est = FittedEstimator(kind, x.shape[1], t.shape[1], {**params, **scaling},
                          {"activation": spec.activation, "ops": ops})
    est.metadata.update(log)
    est.metadata.update(
        name=spec.name,
        learning_rate=spec.learning_rate,
        batch_size=spec.batch_size,
        standardize=spec.standardize,
        train_relative_mse_db=relative_mse_db(est.predict(x), t),
    )
    return est


def fit_ffnn(train, spec: EstimatorSpec) -> FittedEstimator:
    """Plain MLP with hidden widths ``spec.hidden``."""
    ops = ffnn_arch(len(spec.hidden))
    widths = {f"fc{i}": w for i, w in enumerate(spec.hidden)}
    widths["out"] = train.targets.shape[1]
    return _fit(train, spec, "ffnn", ops, widths)


def fit_residual_mlp(train, spec: EstimatorSpec) -> FittedEstimator:
    """Linear stem, ``spec.n_layers`` width-preserving two-layer residual blocks, linear head."""
    width = spec.hidden[0]
    ops = residual_arch(spec.n_layers)
    widths = {"stem": width, "out": train.targets.shape[1]}
    for i in range(spec.n_layers):
        widths[f"block{i}.fc1"] = width
        widths[f"block{i}.fc2"] = width
    return _fit(train, spec, "residual_mlp", ops, widths)


def predict_network(est: FittedEstimator, x):
    a = est.arrays
    y = forward(est.config["ops"], a, scale_inputs(a, x), est.config["activation"])
    return unscale_targets(a, y)

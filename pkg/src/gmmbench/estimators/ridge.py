"""Random-feature estimators with ridge-regressed linear readouts.

Both models keep their hidden weights at the random values they were drawn
with; only the readouts are solved for.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import SingularSystemError
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


def ridge_readout(features, targets, lam: float):
    """Solve min_{W, c} ||F W + 1 c^T - T||^2 + lam ||W||^2.

    The intercept ``c`` is not penalized, which is handled by centering.
    Normal equations are solved by Cholesky.
    """
    f_mean = features.mean(axis=0)
    t_mean = targets.mean(axis=0)
    Fc = features - f_mean
    gram = Fc.T @ Fc
    gram[np.diag_indices_from(gram)] += lam
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        hint = " (use ridge > 0)" if lam == 0 else ""
        raise SingularSystemError(f"normal equations are singular{hint}") from None
    W = cho_solve(factor, Fc.T @ (targets - t_mean))
    if not np.all(np.isfinite(W)):
        raise SingularSystemError("ridge solution is not finite; increase ridge")
    c = t_mean - f_mean @ W
    return W, c


def ridge_objective(features, targets, W, c, lam: float) -> float:
    resid = features @ W + c - targets
    return float(np.sum(resid**2) + lam * np.sum(W**2))


def _random_layer(rng, n_in: int, width: int):
    W = rng.standard_normal((n_in, width)) / np.sqrt(n_in)
    b = rng.standard_normal(width)
    return W, b


def _check_train(train):
    if len(train) == 0:
        raise ValueError("training set is empty")
    return np.asarray(train.observations), np.asarray(train.targets)


def fit_elm(train, spec: EstimatorSpec) -> FittedEstimator:
    """Single random hidden layer, ridge readout on its activations."""
    x, t = _check_train(train)
    act = ACTIVATIONS[spec.activation][0]
    scaling = fit_scaling(x, t, spec.standardize)
    xs, ts = scale_inputs(scaling, x), scale_targets(scaling, t)

    rng = np.random.default_rng(spec.seed)
    W_h, b_h = _random_layer(rng, x.shape[1], spec.hidden[0])
    feats = act(xs @ W_h + b_h)
    lam, scores = _select_ridge(feats, ts, t, scaling, spec)
    W_o, b_o = ridge_readout(feats, ts, lam)

    arrays = {"hidden.W": W_h, "hidden.b": b_h, "out.W": W_o, "out.b": b_o, **scaling}
    est = FittedEstimator("elm", x.shape[1], t.shape[1], arrays, {"activation": spec.activation})
    est.metadata.update(
        name=spec.name,
        ridge=lam,
        ridge_val_relative_mse_db=scores,
        train_relative_mse_db=relative_mse_db(est.predict(x), t),
    )
    return est


def _select_ridge(feats, ts, t, scaling, spec: EstimatorSpec):
    """Ridge strength with the lowest validation error over ``spec.ridge_grid``."""
    if not spec.ridge_grid:
        return spec.ridge, []
    fit_idx, val_idx = validation_cut(len(feats), spec.val_fraction, np.random.default_rng([spec.seed, 2]))
    if val_idx.size == 0:
        return spec.ridge, []
    scores = []
    for lam in spec.ridge_grid:
        W, c = ridge_readout(feats[fit_idx], ts[fit_idx], lam)
        scores.append(relative_mse_db(unscale_targets(scaling, feats[val_idx] @ W + c), t[val_idx]))
    return spec.ridge_grid[int(np.argmin(scores))], scores


def predict_elm(est: FittedEstimator, x):
    a = est.arrays
    act = ACTIVATIONS[est.config["activation"]][0]
    h = act(scale_inputs(a, x) @ a["hidden.W"] + a["hidden.b"])
    return unscale_targets(a, h @ a["out.W"] + a["out.b"])


def _rfn_features(arrays, act, x, layer: int):
    """Features of layer ``layer`` (1-based) given inputs already scaled."""
    h = act(x @ arrays["layer1.W"] + arrays["layer1.b"])
    for l in range(2, layer + 1):
        h = _rfn_step(arrays, act, h, l)
    return h


def _rfn_step(arrays, act, h, l):
    carry = h @ arrays[f"readout{l - 1}.W"] + arrays[f"readout{l - 1}.b"]
    fresh = act(h @ arrays[f"layer{l}.W"] + arrays[f"layer{l}.b"])
    return np.hstack([act(carry), act(-carry), fresh])


def fit_layered_rfn(train, spec: EstimatorSpec) -> FittedEstimator:
    """Greedy stack of random layers, each with its own ridge readout.

    Layer 1 is an ELM layer. Every later layer sees the previous layer's
    features and emits ``[act(y), act(-y), act(R h + b)]`` where ``y`` is the
    previous readout's estimate, so with ReLU the previous estimate passes
    through unchanged (relu(y) - relu(-y) = y) next to ``spec.hidden[0]``
    fresh random units. Layers are added until ``spec.n_layers`` or until
    the validation error fails to improve by ``spec.layer_tol_db``. The
    readout of the best layer is refit on the whole training set.
    """
    x, t = _check_train(train)
    act = ACTIVATIONS[spec.activation][0]
    scaling = fit_scaling(x, t, spec.standardize)
    xs, ts = scale_inputs(scaling, x), scale_targets(scaling, t)
    width = spec.hidden[0]

    weight_rng = np.random.default_rng(spec.seed)
    split_rng = np.random.default_rng([spec.seed, 1])
    fit_idx, val_idx = validation_cut(len(x), spec.val_fraction, split_rng)
    if spec.n_layers == 1:
        val_idx = val_idx[:0]
        fit_idx = np.arange(len(x))

    arrays = dict(scaling)
    W, b = _random_layer(weight_rng, xs.shape[1], width)
    arrays["layer1.W"], arrays["layer1.b"] = W, b
    h = act(xs @ W + b)

    val_scores = []
    best = 1
    for l in range(1, spec.n_layers + 1):
        if l > 1:
            W, b = _random_layer(weight_rng, h.shape[1], width)
            arrays[f"layer{l}.W"], arrays[f"layer{l}.b"] = W, b
            h = _rfn_step(arrays, act, h, l)
        W_r, c_r = ridge_readout(h[fit_idx], ts[fit_idx], spec.ridge)
        arrays[f"readout{l}.W"], arrays[f"readout{l}.b"] = W_r, c_r
        if val_idx.size == 0:
            best = l
            continue
        score = relative_mse_db(unscale_targets(scaling, h[val_idx] @ W_r + c_r), t[val_idx])
        improved = not val_scores or score < min(val_scores) - spec.layer_tol_db
        val_scores.append(score)
        best = int(np.argmin(val_scores)) + 1
        if not improved:
            break

    # keep only what the selected depth needs
    keep = {k: v for k, v in arrays.items() if k.startswith("scale.")}
    for l in range(1, best + 1):
        keep[f"layer{l}.W"], keep[f"layer{l}.b"] = arrays[f"layer{l}.W"], arrays[f"layer{l}.b"]
        if l < best:
            keep[f"readout{l}.W"], keep[f"readout{l}.b"] = arrays[f"readout{l}.W"], arrays[f"readout{l}.b"]
    feats = _rfn_features(keep, act, xs, best)
    keep["out.W"], keep["out.b"] = ridge_readout(feats, ts, spec.ridge)

    est = FittedEstimator(
        "layered_rfn", x.shape[1], t.shape[1], keep,
        {"activation": spec.activation, "n_layers": best},
    )
    est.metadata.update(
        name=spec.name,
        layer_val_relative_mse_db=val_scores,
        selected_layer=best,
        train_relative_mse_db=relative_mse_db(est.predict(x), t),
    )
    return est


def predict_layered_rfn(est: FittedEstimator, x):
    a = est.arrays
    act = ACTIVATIONS[est.config["activation"]][0]
    h = _rfn_features(a, act, scale_inputs(a, x), est.config["n_layers"])
    return unscale_targets(a, h @ a["out.W"] + a["out.b"])


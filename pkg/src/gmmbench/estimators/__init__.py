"""Learned estimators sharing one fit/predict contract."""

from __future__ import annotations

from .base import KINDS, EstimatorSpec, FittedEstimator, as_batch
from .network import fit_ffnn, fit_residual_mlp, predict_network
from .ridge import fit_elm, fit_layered_rfn, predict_elm, predict_layered_rfn

_FIT = {
    "elm": fit_elm,
    "layered_rfn": fit_layered_rfn,
    "ffnn": fit_ffnn,
    "residual_mlp": fit_residual_mlp,
}
_PREDICT = {
    "elm": predict_elm,
    "layered_rfn": predict_layered_rfn,
    "ffnn": predict_network,
    "residual_mlp": predict_network,
}


def fit(train, spec: EstimatorSpec) -> FittedEstimator:
    return _FIT[spec.kind](train, spec)


def predict(est: FittedEstimator, x):
    """Estimate targets for one observation (P,) or a batch (n, P)."""
    x, single = as_batch(x, est.P)
    y = _PREDICT[est.kind](est, x)
    return y[0] if single else y


__all__ = [
    "KINDS", "EstimatorSpec", "FittedEstimator", "fit", "predict",
    "fit_elm", "fit_layered_rfn", "fit_ffnn", "fit_residual_mlp",
]

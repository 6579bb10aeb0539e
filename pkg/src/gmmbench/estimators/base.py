from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

KINDS = ("elm", "layered_rfn", "ffnn", "residual_mlp")

_DEFAULT_HIDDEN = {
    "elm": (30,),
    "layered_rfn": (30,),
    "ffnn": (64, 128, 256, 256, 128, 64),
    "residual_mlp": (64,),
}
_DEFAULT_LAYERS = {"elm": 1, "layered_rfn": 20, "ffnn": 6, "residual_mlp": 8}


@dataclass(frozen=True)
class EstimatorSpec:
    """Architecture and training settings for one learned estimator.

    ``hidden`` is the list of hidden widths for ``ffnn``; for the other
    kinds only its first entry is used (hidden units of the ELM, random
    units per layer of the layered network, block width of the residual
    MLP). ``n_layers`` is the maximum depth of the layered network and the
    number of residual blocks of the residual MLP. A nonempty ``ridge_grid``
    makes the ELM pick its ridge strength on a validation slice.
    """

    kind: str
    hidden: tuple = ()
    n_layers: Optional[int] = None
    ridge: float = 1e-2
    ridge_grid: tuple = ()
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    patience: int = 10
    val_fraction: float = 0.1
    layer_tol_db: float = 0.01
    activation: str = "relu"
    standardize: bool = False
    zero_init_residual: bool = True
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        hidden = tuple(int(h) for h in (self.hidden or _DEFAULT_HIDDEN[self.kind]))
        object.__setattr__(self, "hidden", hidden)
        if self.n_layers is None:
            object.__setattr__(self, "n_layers", _DEFAULT_LAYERS[self.kind])
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if any(h < 1 for h in hidden):
            raise ValueError(f"hidden sizes must be positive, got {hidden}")
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be >= 0, got {self.n_layers}")
        object.__setattr__(self, "ridge_grid", tuple(float(v) for v in self.ridge_grid))
        if self.ridge < 0 or any(v < 0 for v in self.ridge_grid):
            raise ValueError(f"ridge must be >= 0, got {self.ridge}, {self.ridge_grid}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def with_(self, **changes) -> "EstimatorSpec":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FittedEstimator:
    """Learned weights plus what is needed to apply them.

    ``arrays`` maps parameter names to float64 arrays; their meaning is
    fixed by ``kind`` and ``config``.
    """

    kind: str
    P: int
    Q: int
    arrays: dict
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        # C order keeps matmul results bit-identical across serialization
        for k, a in self.arrays.items():
            a = np.ascontiguousarray(a, dtype=np.float64)
            a.setflags(write=False)
            self.arrays[k] = a

    @property
    def n_parameters(self) -> int:
        return int(sum(a.size for k, a in self.arrays.items() if not k.startswith("scale.")))

    def predict(self, x) -> np.ndarray:
        from . import predict

        return predict(self, x)


def relu(z):
    return np.maximum(z, 0.0)


def relu_grad(z, a):
    return (z > 0).astype(z.dtype)


def tanh_grad(z, a):
    return 1.0 - a * a


ACTIVATIONS: dict[str, Any] = {
    "relu": (relu, relu_grad),
    "tanh": (np.tanh, tanh_grad),
}


def as_batch(x, dim: int):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"input has dimension {x.shape[1]}, estimator expects {dim}")
    return x, single


def fit_scaling(x, t, enabled: bool) -> dict:
    """Z-scoring statistics for inputs and targets (identity when disabled)."""
    if not enabled:
        return {}
    x_sd = x.std(axis=0)
    t_sd = t.std(axis=0)
    return {
        "scale.x_mean": x.mean(axis=0),
        "scale.x_std": np.where(x_sd > 0, x_sd, 1.0),
        "scale.t_mean": t.mean(axis=0),
        "scale.t_std": np.where(t_sd > 0, t_sd, 1.0),
    }


def scale_inputs(arrays, x):
    if "scale.x_mean" in arrays:
        return (x - arrays["scale.x_mean"]) / arrays["scale.x_std"]
    return x


def scale_targets(arrays, t):
    if "scale.t_mean" in arrays:
        return (t - arrays["scale.t_mean"]) / arrays["scale.t_std"]
    return t


def unscale_targets(arrays, t):
    if "scale.t_mean" in arrays:
        return t * arrays["scale.t_std"] + arrays["scale.t_mean"]
    return t


def validation_cut(n: int, fraction: float, rng):
    """Shuffled (fit_idx, val_idx); empty validation when the slice rounds to zero."""
    perm = rng.permutation(n)
    n_val = int(round(n * fraction))
    if n_val == 0 or n_val >= n:
        return perm, perm[:0]
    return perm[n_val:], perm[:n_val]


def relative_mse_db(pred, target) -> float:
    """Error power over the empirical target spread, in dB; used for model selection."""
    err = np.mean(np.sum((target - pred) ** 2, axis=1))
    spread = np.mean(np.sum((target - target.mean(axis=0)) ** 2, axis=1))
    if spread <= 0:
        spread = 1.0
    return 10.0 * np.log10(max(err, 1e-300) / spread)

"""Edge-to-node convolutional classifier for connectivity matrices.

The model, for an ``R x R`` input ``X``::

    Y1 = X @ W1.T + b1                 # column-feature conv, R x c1
    Y2 = W2 @ tanh(Y1) + b2[:, None]   # row-feature conv,    c2 x c1
    latent = tanh(Y2).ravel()          # length c2 * c1
    logits = tanh(latent @ M1 + m1) @ M2 + m2

Both convolutions use a kernel spanning the whole row (column), so each has a
single valid position and every output channel has its own kernel row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import ParamTensor, Rng, cross_entropy, cross_entropy_grad, glorot_init, softmax  # noqa: F401

PARAM_NAMES = ("W1", "b1", "W2", "b2", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")


@dataclass
class ConvClassifierParams:
    W1: ParamTensor
    b1: ParamTensor
    W2: ParamTensor
    b2: ParamTensor
    mlp_w1: ParamTensor
    mlp_b1: ParamTensor
    mlp_w2: ParamTensor
    mlp_b2: ParamTensor

    @classmethod
    def init(cls, rng: Rng, n_regions: int, c1: int = 16, c2: int = 16, hidden: int = 64) -> "ConvClassifierParams":
        r = n_regions
        return cls(
            W1=ParamTensor("W1", glorot_init(rng, r, c1, shape=(c1, r))),
            b1=ParamTensor("b1", np.zeros(c1)),
            W2=ParamTensor("W2", glorot_init(rng, r, c2, shape=(c2, r))),
            b2=ParamTensor("b2", np.zeros(c2)),
            mlp_w1=ParamTensor("mlp_w1", glorot_init(rng, c1 * c2, hidden)),
            mlp_b1=ParamTensor("mlp_b1", np.zeros(hidden)),
            mlp_w2=ParamTensor("mlp_w2", glorot_init(rng, hidden, 2)),
            mlp_b2=ParamTensor("mlp_b2", np.zeros(2)),
        )

    @classmethod
    def zeros(cls, n_regions: int, c1: int = 16, c2: int = 16, hidden: int = 64) -> "ConvClassifierParams":
        shapes = param_shapes(n_regions, c1, c2, hidden)
        return cls(**{k: ParamTensor(k, np.zeros(s)) for k, s in shapes.items()})

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ConvClassifierParams":
        return cls(**{k: ParamTensor(k, np.asarray(arrays[k], dtype=np.float64)) for k in PARAM_NAMES})

    def tensors(self) -> list[ParamTensor]:
        return [getattr(self, k) for k in PARAM_NAMES]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).value for k in PARAM_NAMES}

    def copy(self) -> "ConvClassifierParams":
        return ConvClassifierParams(**{k: getattr(self, k).copy() for k in PARAM_NAMES})

    @property
    def n_regions(self) -> int:
        return self.W1.shape[1]

    @property
    def dims(self) -> dict[str, int]:
        return {
            "R": self.W1.shape[1],
            "c1": self.W1.shape[0],
            "c2": self.W2.shape[0],
            "H": self.mlp_w1.shape[1],
        }


def param_shapes(n_regions: int, c1: int, c2: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "W1": (c1, n_regions),
        "b1": (c1,),
        "W2": (c2, n_regions),
        "b2": (c2,),
        "mlp_w1": (c1 * c2, hidden),
        "mlp_b1": (hidden,),
        "mlp_w2": (hidden, 2),
        "mlp_b2": (2,),
    }


@dataclass
class ClassifierOutput:
    logits: np.ndarray
    latent: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits)


def column_feature_conv(X: np.ndarray, W1: np.ndarray, b1: np.ndarray) -> np.ndarray:
    """``out[i, m] = sum_n X[i, n] * W1[m, n] + b1[m]``; works on ``(..., R, R)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != X.shape[-2] or X.shape[-1] != W1.shape[1]:
        raise ValueError(f"input of shape {X.shape} does not match kernel {W1.shape}")
    return X @ W1.T + b1


def row_feature_conv(Y1: np.ndarray, W2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """``out[m, j] = sum_n tanh(Y1[n, j]) * W2[m, n] + b2[m]``; works on ``(..., R, c1)``."""
    Y1 = np.asarray(Y1, dtype=np.float64)
    if Y1.shape[-2] != W2.shape[1]:
        raise ValueError(f"input of shape {Y1.shape} does not match kernel {W2.shape}")
    return W2 @ np.tanh(Y1) + b2[:, None]


def _forward(X: np.ndarray, p: ConvClassifierParams) -> dict:
    A1 = np.tanh(column_feature_conv(X, p.W1.value, p.b1.value))
    A2 = np.tanh(p.W2.value @ A1 + p.b2.value[:, None])
    latent = A2.reshape(A2.shape[0], -1)
    hidden = np.tanh(latent @ p.mlp_w1.value + p.mlp_b1.value)
    logits = hidden @ p.mlp_w2.value + p.mlp_b2.value
    return {"X": X, "A1": A1, "A2": A2, "latent": latent, "hidden": hidden, "logits": logits}


def forward_batch(X: np.ndarray, params: ConvClassifierParams) -> np.ndarray:
    """Logits for a ``(B, R, R)`` batch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a (B, R, R) batch, got shape {X.shape}")
    return _forward(X, params)["logits"]


def classifier_forward(X: np.ndarray, params: ConvClassifierParams) -> ClassifierOutput:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected an R x R matrix, got shape {X.shape}")
    cache = _forward(X[None], params)
    return ClassifierOutput(cache["logits"][0], cache["latent"][0])


def loss_and_grad(
    X: np.ndarray,
    labels: np.ndarray,
    params: ConvClassifierParams,
    input_grad: bool = False,
):
    """Mean cross-entropy over a ``(B, R, R)`` batch.

    Gradients are accumulated into each ``ParamTensor.grad``. With
    ``input_grad`` the gradient w.r.t. ``X`` is returned as well.
    """
    X = np.asarray(X, dtype=np.float64)
    c = _forward(X, params)
    loss, d_logits = cross_entropy_grad(c["logits"], labels)
    B = X.shape[0]
    hidden, latent, A1, A2 = c["hidden"], c["latent"], c["A1"], c["A2"]
    c2, c1 = A2.shape[1], A2.shape[2]
    R = X.shape[1]

    params.mlp_w2.grad += hidden.T @ d_logits
    params.mlp_b2.grad += d_logits.sum(axis=0)
    d_hpre = (d_logits @ params.mlp_w2.value.T) * (1.0 - hidden**2)
    params.mlp_w1.grad += latent.T @ d_hpre
    params.mlp_b1.grad += d_hpre.sum(axis=0)
    d_y2 = (d_hpre @ params.mlp_w1.value.T).reshape(B, c2, c1) * (1.0 - A2**2)
    params.W2.grad += np.einsum("bmj,bnj->mn", d_y2, A1)
    params.b2.grad += d_y2.sum(axis=(0, 2))
    d_y1 = (params.W2.value.T @ d_y2) * (1.0 - A1**2)
    params.W1.grad += d_y1.reshape(B * R, c1).T @ X.reshape(B * R, R)
    params.b1.grad += d_y1.sum(axis=(0, 1))
    if input_grad:
        return loss, d_y1 @ params.W1.value
    return loss


def predict_proba(X: np.ndarray, params: ConvClassifierParams) -> np.ndarray:
    """Probability of class 1 for each matrix in a ``(B, R, R)`` batch."""
    return softmax(forward_batch(X, params))[:, 1]

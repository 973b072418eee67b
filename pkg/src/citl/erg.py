"""Enhanced representation generator.

Per subject: pick the larger pseudo-label set and average it (the conversion
engine), flatten the strict upper triangle, push it through an encoder whose
output has the same length and rebuild a symmetric unit-diagonal matrix from
that code. The encoder is trained jointly with a downstream classifier.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import classifier as clf
from .classifier import ConvClassifierParams
from .errors import NumericError
from .nncore import ParamTensor, Rng, adam_step, glorot_init
from .transfer import PseudoLabeledDFCSet

log = logging.getLogger(__name__)

AE_PARAM_NAMES = ("enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2")


@dataclass
class ReconstructionFC:
    subject_id: str
    true_label: int
    matrix: np.ndarray
    chosen_set: str  # "disease" or "normal"
    set_sizes: tuple[int, int]  # (n_disease, n_normal)


@dataclass
class OptimizationFC:
    subject_id: str
    matrix: np.ndarray


def conversion_engine(pl: PseudoLabeledDFCSet) -> ReconstructionFC:
    """Average the larger pseudo-label set; ties keep the disease set."""
    n_disease, n_normal = pl.sizes
    if n_disease + n_normal == 0:
        raise ValueError(f"{pl.subject_id}: no windows to convert")
    if n_disease >= n_normal:
        chosen, mats = "disease", pl.disease_set
    else:
        chosen, mats = "normal", pl.normal_set
    m = np.mean(mats, axis=0)
    np.fill_diagonal(m, 1.0)
    return ReconstructionFC(pl.subject_id, pl.true_label, m, chosen, (n_disease, n_normal))


def upper_dim(n_regions: int) -> int:
    return n_regions * (n_regions - 1) // 2


def regions_for_dim(d: int) -> int:
    r = int(round((1 + np.sqrt(1 + 8 * d)) / 2))
    if upper_dim(r) != d:
        raise ValueError(f"length {d} is not R(R-1)/2 for any integer R")
    return r


def vectorize_upper(fc: np.ndarray) -> np.ndarray:
    """Strict upper triangle in row-major ``(i, j > i)`` order; also takes ``(B, R, R)``."""
    fc = np.asarray(fc, dtype=np.float64)
    if fc.shape[-1] != fc.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {fc.shape}")
    if not np.allclose(fc, np.swapaxes(fc, -1, -2), rtol=0.0, atol=1e-9):
        raise ValueError("matrix is not symmetric")
    iu = np.triu_indices(fc.shape[-1], 1)
    return fc[..., iu[0], iu[1]]


def devectorize(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize_upper`: mirror the triangle and put 1 on the diagonal."""
    z = np.asarray(z, dtype=np.float64)
    r = regions_for_dim(z.shape[-1])
    iu = np.triu_indices(r, 1)
    out = np.zeros(z.shape[:-1] + (r, r))
    out[..., iu[0], iu[1]] = z
    out[..., iu[1], iu[0]] = z
    out[..., np.arange(r), np.arange(r)] = 1.0
    return out


def devectorize_grad(d_matrix: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the rebuilt matrix back onto the code vector."""
    iu = np.triu_indices(d_matrix.shape[-1], 1)
    return d_matrix[..., iu[0], iu[1]] + d_matrix[..., iu[1], iu[0]]


@dataclass
class AEParams:
    enc_w1: ParamTensor
    enc_b1: ParamTensor
    enc_w2: ParamTensor
    enc_b2: ParamTensor
    dec_w1: ParamTensor
    dec_b1: ParamTensor
    dec_w2: ParamTensor
    dec_b2: ParamTensor

    @classmethod
    def init(cls, rng: Rng, dim: int, hidden: int = 1024) -> "AEParams":
        return cls(
            enc_w1=ParamTensor("enc_w1", glorot_init(rng, dim, hidden)),
            enc_b1=ParamTensor("enc_b1", np.zeros(hidden)),
            enc_w2=ParamTensor("enc_w2", glorot_init(rng, hidden, dim)),
            enc_b2=ParamTensor("enc_b2", np.zeros(dim)),
            dec_w1=ParamTensor("dec_w1", glorot_init(rng, dim, hidden)),
            dec_b1=ParamTensor("dec_b1", np.zeros(hidden)),
            dec_w2=ParamTensor("dec_w2", glorot_init(rng, hidden, dim)),
            dec_b2=ParamTensor("dec_b2", np.zeros(dim)),
        )

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "AEParams":
        shapes = {"enc_w1": (dim, hidden), "enc_b1": (hidden,), "enc_w2": (hidden, dim), "enc_b2": (dim,),
                  "dec_w1": (dim, hidden), "dec_b1": (hidden,), "dec_w2": (hidden, dim), "dec_b2": (dim,)}
        return cls(**{k: ParamTensor(k, np.zeros(s)) for k, s in shapes.items()})

    def tensors(self) -> list[ParamTensor]:
        return [getattr(self, k) for k in AE_PARAM_NAMES]

    def copy(self) -> "AEParams":
        return AEParams(**{k: getattr(self, k).copy() for k in AE_PARAM_NAMES})

    @property
    def dim(self) -> int:
        return self.enc_w1.shape[0]


def _check_len(v: np.ndarray, ae: AEParams) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != ae.dim:
        raise ValueError(f"vector length {v.shape[-1]} does not match autoencoder dimension {ae.dim}")
    return v


def encode(v: np.ndarray, ae: AEParams) -> np.ndarray:
    """``tanh(tanh(v @ enc_w1 + enc_b1) @ enc_w2 + enc_b2)``; the code has the input's length."""
    v = _check_len(v, ae)
    h = np.tanh(v @ ae.enc_w1.value + ae.enc_b1.value)
    return np.tanh(h @ ae.enc_w2.value + ae.enc_b2.value)


def decode(z: np.ndarray, ae: AEParams) -> np.ndarray:
    """``tanh(z @ dec_w1 + dec_b1) @ dec_w2 + dec_b2``; affine output layer."""
    z = _check_len(z, ae)
    h = np.tanh(z @ ae.dec_w1.value + ae.dec_b1.value)
    return h @ ae.dec_w2.value + ae.dec_b2.value


def optimization_fc(subject_id: str, v: np.ndarray, ae: AEParams) -> OptimizationFC:
    return OptimizationFC(subject_id, devectorize(encode(v, ae)))


def _cosine(x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n1 = np.linalg.norm(x1, axis=-1)
    n2 = np.linalg.norm(x2, axis=-1)
    dot = np.sum(x1 * x2, axis=-1)
    zero = (n1 == 0) | (n2 == 0)
    if np.any(zero):
        warnings.warn("cosine similarity of a zero vector taken as 0", RuntimeWarning, stacklevel=3)
    cos = np.where(zero, 0.0, dot / np.where(zero, 1.0, n1 * n2))
    return cos, n1, n2


def cosine_embedding_loss(x1: np.ndarray, x2: np.ndarray, y: int = 1) -> float:
    """``1 - cos`` for ``y = +1``; ``max(0, cos + 1)`` for ``y = -1``.

    Batched inputs ``(B, D)`` give the batch mean.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch {x1.shape} vs {x2.shape}")
    cos, _, _ = _cosine(x1, x2)
    if y == 1:
        loss = 1.0 - cos
    elif y == -1:
        loss = np.maximum(0.0, cos + 1.0)
    else:
        raise ValueError("y must be +1 or -1")
    return float(np.mean(loss))


def cosine_loss_grad_x2(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Gradient of the batch-mean ``1 - cos(x1, x2)`` w.r.t. ``x2``."""
    cos, n1, n2 = _cosine(x1, x2)
    ok = (n1 > 0) & (n2 > 0)
    n1s = np.where(ok, n1, 1.0)[:, None]
    n2s = np.where(ok, n2, 1.0)[:, None]
    d_cos = x1 / (n1s * n2s) - cos[:, None] * x2 / n2s**2
    return np.where(ok[:, None], -d_cos, 0.0) / len(x1)


@dataclass
class JointConfig:
    lr_ae: float = 8e-5
    lr_clf: float = 4e-5
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 100
    lambda_cos: float = 1.0
    lambda_rec: float = 0.1


def joint_loss_and_grad(V: np.ndarray, labels: np.ndarray, ae: AEParams, cl: ConvClassifierParams,
                        lambda_cos: float, lambda_rec: float) -> tuple[float, dict]:
    """Total loss on a batch of upper-triangle vectors; accumulates grads into both models.

    ``CE(classifier(devectorize(z))) + lambda_cos * (1 - cos(V, z)) + lambda_rec * mse(decode(z), V)``
    with ``z = encode(V)``.
    """
    V = _check_len(V, ae)
    B, D = V.shape
    h_enc = np.tanh(V @ ae.enc_w1.value + ae.enc_b1.value)
    z = np.tanh(h_enc @ ae.enc_w2.value + ae.enc_b2.value)
    h_dec = np.tanh(z @ ae.dec_w1.value + ae.dec_b1.value)
    recon = h_dec @ ae.dec_w2.value + ae.dec_b2.value

    ce, d_mat = clf.loss_and_grad(devectorize(z), labels, cl, input_grad=True)
    d_z = devectorize_grad(d_mat)

    cos_term = cosine_embedding_loss(V, z, 1) if lambda_cos else 0.0
    if lambda_cos:
        d_z += lambda_cos * cosine_loss_grad_x2(V, z)

    resid = recon - V
    rec_term = float(np.mean(resid**2))
    d_recon = lambda_rec * 2.0 * resid / resid.size
    ae.dec_w2.grad += h_dec.T @ d_recon
    ae.dec_b2.grad += d_recon.sum(axis=0)
    d_hdec = (d_recon @ ae.dec_w2.value.T) * (1.0 - h_dec**2)
    ae.dec_w1.grad += z.T @ d_hdec
    ae.dec_b1.grad += d_hdec.sum(axis=0)
    d_z += d_hdec @ ae.dec_w1.value.T

    d_zpre = d_z * (1.0 - z**2)
    ae.enc_w2.grad += h_enc.T @ d_zpre
    ae.enc_b2.grad += d_zpre.sum(axis=0)
    d_henc = (d_zpre @ ae.enc_w2.value.T) * (1.0 - h_enc**2)
    ae.enc_w1.grad += V.T @ d_henc
    ae.enc_b1.grad += d_henc.sum(axis=0)

    total = ce + lambda_cos * cos_term + lambda_rec * rec_term
    return total, {"ce": ce, "cos": cos_term, "rec": rec_term}


def joint_train(recon_fcs: list[ReconstructionFC], ae: AEParams, cl: ConvClassifierParams,
                cfg: JointConfig, rng: Rng) -> tuple[AEParams, ConvClassifierParams, list[float]]:
    """Train encoder/decoder (lr ``lr_ae``) and classifier (lr ``lr_clf``) together.

    Parameters are updated in place and returned, with the per-epoch mean loss.
    """
    labels = np.array([r.true_label for r in recon_fcs], dtype=np.int64)
    for cls in (0, 1):
        if np.sum(labels == cls) < 2:
            raise ValueError(f"need at least 2 training subjects of class {cls}")
    V = vectorize_upper(np.stack([r.matrix for r in recon_fcs]))
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(V))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, _ = joint_loss_and_grad(V[b], labels[b], ae, cl, cfg.lambda_cos, cfg.lambda_rec)
            if not np.isfinite(loss):
                raise NumericError(f"joint loss became non-finite at epoch {epoch}")
            for t in ae.tensors():
                adam_step(t, cfg.lr_ae, cfg.weight_decay)
            for t in cl.tensors():
                adam_step(t, cfg.lr_clf, cfg.weight_decay)
            total += loss * len(b)
        history.append(total / len(V))
        log.debug("joint epoch %d loss %.5f", epoch, history[-1])
    return ae, cl, history


def predict_proba(V: np.ndarray, ae: AEParams, cl: ConvClassifierParams) -> np.ndarray:
    """Class-1 probability for each upper-triangle vector after encoding."""
    return clf.predict_proba(devectorize(encode(V, ae)), cl)

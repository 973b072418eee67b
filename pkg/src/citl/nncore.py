"""Small dense-network kernel: seeded RNG, parameter tensors, Glorot init,
AdamW step and a central finite-difference gradient checker.

All arrays are float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Rng:
    """Seeded random source. Every random draw in the package goes through one.

    Backed by numpy's PCG64 bit generator. Child streams are derived from
    ``(seed, *keys)`` so independent stages (folds, initialisation, shuffling)
    do not depend on the order in which they consume randomness.
    """

    def __init__(self, seed: int, keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=self.keys)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.keys + tuple(keys))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def poisson(self, lam: float, size=None):
        return self._gen.poisson(lam, size)


@dataclass
class ParamTensor:
    """A trainable array with its gradient and Adam moment buffers."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def copy(self) -> "ParamTensor":
        p = ParamTensor(self.name, self.value.copy())
        p.grad[...] = self.grad
        p.adam_m[...] = self.adam_m
        p.adam_v[...] = self.adam_v
        p.step_count = self.step_count
        return p


def glorot_init(rng: Rng, fan_in: int, fan_out: int, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Uniform Glorot matrix on ``[-sqrt(6/(fan_in+fan_out)), +sqrt(...)]``.

    ``shape`` defaults to ``(fan_in, fan_out)``; pass it when a layer stores its
    kernel transposed.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan dimensions must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, shape)


def adam_step(
    param: ParamTensor,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> ParamTensor:
    """One AdamW update in place; the gradient is zeroed afterwards.

    Decay is decoupled: ``value *= 1 - lr * weight_decay`` before the Adam
    move, as in PyTorch's AdamW.
    """
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient in parameter '{param.name}'")
    param.step_count += 1
    t = param.step_count
    param.adam_m *= beta1
    param.adam_m += (1.0 - beta1) * g
    param.adam_v *= beta2
    param.adam_v += (1.0 - beta2) * (g * g)
    m_hat = param.adam_m / (1.0 - beta1**t)
    v_hat = param.adam_v / (1.0 - beta2**t)
    if weight_decay != 0.0:
        param.value *= 1.0 - lr * weight_decay
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    param.zero_grad()
    return param


def grad_check(
    loss_fn: Callable[[], float],
    params: Sequence[ParamTensor],
    epsilon: float = 1e-5,
    n_coords: int | None = None,
    rng: Rng | None = None,
) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn`` takes no arguments, reads the current ``params`` values, returns
    the scalar loss and writes analytic gradients into each ``param.grad``.
    If ``n_coords`` is given, that many coordinates are sampled (uniformly over
    all parameters); otherwise every coordinate is checked.

    Returns the worst ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]

    coords = [(pi, idx) for pi, p in enumerate(params) for idx in np.ndindex(p.shape)]
    if n_coords is not None and n_coords < len(coords):
        rng = rng or Rng(0)
        pick = rng.permutation(len(coords))[:n_coords]
        coords = [coords[i] for i in sorted(pick)]

    worst = 0.0
    for pi, idx in coords:
        p = params[pi]
        orig = p.value[idx]
        p.value[idx] = orig + epsilon
        up = loss_fn()
        p.value[idx] = orig - epsilon
        down = loss_fn()
        p.value[idx] = orig
        numeric = (up - down) / (2.0 * epsilon)
        a = analytic[pi][idx]
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    for p, g in zip(params, analytic):
        p.grad[...] = g
    return worst


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label) -> float:
    """Mean negative log-likelihood of ``label`` under ``softmax(logits)``.

    Accepts one logit vector with an int label, or a ``(B, C)`` batch with a
    length-B label array.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    if single:
        logits = logits[None, :]
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    nll = log_norm - shifted[np.arange(len(labels)), labels]
    return float(nll.mean())


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean cross-entropy and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = softmax(logits)
    loss = cross_entropy(logits, labels)
    d = probs.copy()
    d[np.arange(len(labels)), labels] -= 1.0
    d /= len(labels)
    return loss, d


def check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value in {name}")

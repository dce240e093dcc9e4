"""Exact reverse-mode gradients of softmax cross-entropy through the unrolled
surrogate-forward dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidModeError
from .network import ForwardTrace, NetworkParams, forward


@dataclass
class LossValue:
    value: float
    per_sample: np.ndarray


@dataclass
class Gradient:
    """Gradient w.r.t. the learnable tensors. Thresholds are fixed, so there is
    no threshold gradient."""

    dA: list[np.ndarray]
    db: list[np.ndarray]
    dw_out: np.ndarray
    db_out: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        out = []
        for a, b in zip(self.dA, self.db):
            out += [a, b]
        return out + [self.dw_out, self.db_out]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_vector()))

    @classmethod
    def from_vector(cls, vec, like: NetworkParams) -> "Gradient":
        p = like.with_vector(vec)
        return cls([l.A for l in p.layers], [l.b for l in p.layers], p.w_out, p.b_out)

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "Gradient":
        return cls.from_vector(np.zeros_like(params.to_vector()), params)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, label) -> float:
    """-log softmax(logits)[label] for a single logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= int(label) < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(-log_softmax(logits)[int(label)])


def cross_entropy_grad(logits, label) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    g = np.exp(log_softmax(logits))
    g[int(label)] -= 1.0
    return g


def _check_labels(labels, n_classes):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def backward(trace: ForwardTrace, params: NetworkParams, labels) -> tuple[LossValue, Gradient]:
    """Loss and gradient of the batch-mean cross-entropy for a surrogate trace."""
    if trace.mode != "surrogate":
        raise InvalidModeError("backward needs a surrogate-mode trace; hard spikes have no gradient")
    if params.surrogate.kind != "arctan":
        raise InvalidModeError(f"surrogate {params.surrogate.kind!r} has no usable gradient")
    labels = _check_labels(labels, params.num_classes)
    if labels.shape[0] != trace.batch:
        raise ValueError(f"{labels.shape[0]} labels for a batch of {trace.batch}")
    n = trace.batch
    rows = np.arange(n)

    logp = log_softmax(trace.logits)
    per_sample = -logp[rows, labels]
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n

    dw_out = dlogits.T @ trace.rate
    db_out = dlogits.sum(axis=0)
    drate = dlogits @ params.w_out
    grad_s = np.broadcast_to(drate / trace.n_steps, trace.s[-1].shape).copy()

    dA = [None] * len(params.layers)
    db = [None] * len(params.layers)
    k = params.surrogate.slope
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        g_in = kernels.lif_backward(grad_s, trace.u[i], params.alpha, layer.theta, k)
        flat_g = g_in.reshape(-1, layer.out_dim)
        dA[i] = flat_g.T @ trace.inputs[i].reshape(-1, layer.in_dim)
        db[i] = flat_g.sum(axis=0)
        if i > 0:
            grad_s = np.ascontiguousarray(g_in @ layer.A)

    loss = LossValue(float(per_sample.mean()), per_sample)
    return loss, Gradient(dA, db, dw_out, db_out)


def batch_gradient(params: NetworkParams, frames, labels) -> tuple[LossValue, Gradient]:
    """Mean loss and gradient over a minibatch ``frames`` of shape (B, T, D)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.shape[0] == 0:
        raise ValueError("empty batch")
    trace = forward(params, frames, "surrogate")
    return backward(trace, params, labels)


def loss_only(params: NetworkParams, frames, labels) -> float:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    labels = _check_labels(labels, params.num_classes)
    logits = forward(params, frames, "surrogate").logits
    return float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())

"""Multi-layer LIF network: parameters, surrogate nonlinearity, unrolled
forward pass in surrogate or hard-spike mode, and checkpoint I/O.

Membrane update (delayed reset, same order in both modes)::

    u_t = alpha * u_{t-1} + A x_t + b - theta * s_{t-1}
    s_t = f(u_t - theta)          f = sigma (surrogate) or H (hard)

Layer l at step t consumes layer l-1's spikes from the same step, and there is
no feedback across layers, so the forward pass scans each layer over all T
steps before moving to the next one. This is equivalent to stepping all layers
in lockstep.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidModeError, ShapeError

MODES = ("surrogate", "hard")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SurrogateConfig:
    """``kind='arctan'``: sigma(z) = 1/2 + atan(k z)/pi.

    ``kind='step'`` makes the surrogate equal to the Heaviside step; it exists
    so mode-equivalence can be checked exactly and has no usable gradient.
    """

    kind: str = "arctan"
    slope: float = 25.0

    def __post_init__(self):
        if self.kind not in ("arctan", "step"):
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if not self.slope > 0:
            raise ValueError("surrogate slope must be positive")

    @property
    def max_slope(self) -> float:
        return self.slope / math.pi


def surrogate(z, cfg: SurrogateConfig = SurrogateConfig()):
    z = np.asarray(z, dtype=np.float64)
    if cfg.kind == "step":
        return heaviside(z)
    return 0.5 + np.arctan(cfg.slope * z) / math.pi


def surrogate_deriv(z, cfg: SurrogateConfig = SurrogateConfig()):
    z = np.asarray(z, dtype=np.float64)
    if cfg.kind == "step":
        return np.zeros_like(z)
    kz = cfg.slope * z
    return (cfg.slope / math.pi) / (1.0 + kz * kz)


def surrogate_second_deriv(z, cfg: SurrogateConfig = SurrogateConfig()):
    z = np.asarray(z, dtype=np.float64)
    kz = cfg.slope * z
    return -2.0 * cfg.slope ** 3 * z / (math.pi * (1.0 + kz * kz) ** 2)


def heaviside(z):
    """H(z) = 1 iff z >= 0 (fires at exact equality)."""
    return (np.asarray(z) >= 0).astype(np.float64)


@dataclass
class LIFLayerParams:
    A: np.ndarray
    b: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],) or self.theta.shape != self.b.shape:
            raise ShapeError(
                f"layer shapes inconsistent: A{self.A.shape}, b{self.b.shape}, theta{self.theta.shape}")
        if np.any(self.theta <= 0):
            raise ValueError("thresholds must be positive")

    @property
    def in_dim(self):
        return self.A.shape[1]

    @property
    def out_dim(self):
        return self.A.shape[0]


@dataclass
class NetworkParams:
    layers: list[LIFLayerParams]
    w_out: np.ndarray
    b_out: np.ndarray
    alpha: float = 0.5
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)

    def __post_init__(self):
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("leak alpha must lie in (0, 1)")
        if not self.layers:
            raise ShapeError("need at least one hidden layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_dim != prev.out_dim:
                raise ShapeError(f"layer chain broken: {prev.out_dim} -> {nxt.in_dim}")
        if self.w_out.shape[1] != self.layers[-1].out_dim or self.b_out.shape != (self.w_out.shape[0],):
            raise ShapeError(f"readout shape {self.w_out.shape} does not match last layer")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers] + [self.w_out.shape[0]]

    @property
    def num_classes(self):
        return self.w_out.shape[0]

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    def learnable(self) -> list[np.ndarray]:
        """Learnable tensors in the fixed flattening order: (A, b) per layer,
        then readout weights and bias."""
        out = []
        for layer in self.layers:
            out += [layer.A, layer.b]
        return out + [self.w_out, self.b_out]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.learnable()])

    def with_vector(self, vec) -> "NetworkParams":
        vec = np.asarray(vec, dtype=np.float64)
        tensors = []
        pos = 0
        for a in self.learnable():
            tensors.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ShapeError(f"vector of length {vec.size}, expected {pos}")
        layers = [LIFLayerParams(tensors[2 * i], tensors[2 * i + 1], l.theta.copy())
                  for i, l in enumerate(self.layers)]
        return replace(self, layers=layers, w_out=tensors[-2], b_out=tensors[-1])

    def copy(self) -> "NetworkParams":
        return self.with_vector(self.to_vector())

    def parameter_counts(self) -> tuple[int, int]:
        return count_parameters(self.dims)


def count_parameters(dims) -> tuple[int, int]:
    """(learnable weights+biases incl. readout, fixed thresholds) for an FC chain."""
    learnable = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    thresholds = sum(dims[1:-1])
    return learnable, thresholds


def init_params(dims, alpha=0.5, theta=1.0, surrogate=SurrogateConfig(), rng=None) -> NetworkParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, constant thresholds."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    dims = [int(d) for d in dims]
    if len(dims) < 3:
        raise ShapeError("dims must be [input, hidden..., classes] with at least one hidden layer")
    layers = []
    for fan_in, fan_out in zip(dims[:-2], dims[1:-1]):
        bound = 1.0 / math.sqrt(fan_in)
        layers.append(LIFLayerParams(rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                                     np.zeros(fan_out), np.full(fan_out, float(theta))))
    bound = 1.0 / math.sqrt(dims[-2])
    w_out = rng.uniform(-bound, bound, size=(dims[-1], dims[-2]))
    return NetworkParams(layers, w_out, np.zeros(dims[-1]), alpha, surrogate)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Everything BPTT needs. Per layer arrays are ``(T, B, N)``."""

    mode: str
    inputs: list[np.ndarray]
    u: list[np.ndarray]
    s: list[np.ndarray]
    rate: np.ndarray
    logits: np.ndarray

    @property
    def n_steps(self):
        return self.u[0].shape[0]

    @property
    def batch(self):
        return self.u[0].shape[1]


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidModeError(f"mode must be one of {MODES}, got {mode!r}")


def step_layer(u_prev, s_prev, inp, layer: LIFLayerParams, alpha, mode="surrogate",
               cfg: SurrogateConfig = SurrogateConfig()):
    """Single step of one layer: returns (u_new, s_new)."""
    _check_mode(mode)
    inp = np.asarray(inp, dtype=np.float64)
    if inp.shape[-1] != layer.in_dim or np.shape(u_prev)[-1] != layer.out_dim \
            or np.shape(s_prev)[-1] != layer.out_dim:
        raise ShapeError("state/input dimensions do not match the layer")
    u_new = alpha * np.asarray(u_prev) + inp @ layer.A.T + layer.b - layer.theta * np.asarray(s_prev)
    if mode == "hard":
        s_new = heaviside(u_new - layer.theta)
    else:
        s_new = surrogate(u_new - layer.theta, cfg)
    return u_new, s_new


def as_batch(frames) -> np.ndarray:
    """Accept ``(T, D)`` or ``(B, T, D)``; return time-major ``(T, B, D)``."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"frames must be (T, D) or (B, T, D), got shape {x.shape}")
    return np.ascontiguousarray(x.transpose(1, 0, 2))


def forward(params: NetworkParams, frames, mode="surrogate") -> ForwardTrace:
    _check_mode(mode)
    x = as_batch(frames)
    if x.shape[2] != params.input_dim:
        raise ShapeError(f"frame dim {x.shape[2]} != network input dim {params.input_dim}")
    hard = mode == "hard" or params.surrogate.kind == "step"
    inputs, us, ss = [], [], []
    for layer in params.layers:
        current = np.ascontiguousarray(x @ layer.A.T + layer.b)
        u, s = kernels.lif_forward(current, params.alpha, layer.theta, params.surrogate.slope, hard)
        inputs.append(x)
        us.append(u)
        ss.append(s)
        x = s
    rate = ss[-1].mean(axis=0)
    logits = rate @ params.w_out.T + params.b_out
    return ForwardTrace(mode, inputs, us, ss, rate, logits)


def predict(params: NetworkParams, frames, mode="surrogate", chunk=256) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest index."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    out = [np.argmax(forward(params, x[i:i + chunk], mode).logits, axis=1)
           for i in range(0, x.shape[0], chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def membrane_margins(trace: ForwardTrace, params: NetworkParams) -> np.ndarray:
    """All u_t - theta values, flattened layer by layer."""
    return np.concatenate([(u - layer.theta).ravel() for u, layer in zip(trace.u, params.layers)])


# ---------------------------------------------------------------------------
# checkpoints (.npz, bit-exact)
# ---------------------------------------------------------------------------

def save_checkpoint(params: NetworkParams, path, extra: dict | None = None):
    meta = {
        "format": "sast-snn-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dims": params.dims,
        "alpha": params.alpha,
        "surrogate": {"kind": params.surrogate.kind, "slope": params.surrogate.slope},
        "extra": extra or {},
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
              "w_out": params.w_out, "b_out": params.b_out}
    for i, layer in enumerate(params.layers):
        arrays[f"A{i}"] = layer.A
        arrays[f"b{i}"] = layer.b
        arrays[f"theta{i}"] = layer.theta
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> NetworkParams:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != "sast-snn-checkpoint":
            raise ValueError(f"{path} is not a network checkpoint")
        if meta["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {meta['version']} is newer than supported")
        n_layers = len(meta["dims"]) - 2
        layers = [LIFLayerParams(data[f"A{i}"], data[f"b{i}"], data[f"theta{i}"])
                  for i in range(n_layers)]
        # float(repr(x)) round-trips exactly for the scalar alpha
        return NetworkParams(layers, data["w_out"], data["b_out"], float(meta["alpha"]),
                             SurrogateConfig(**meta["surrogate"]))

"""Hardware-aware hard-spike inference: symmetric per-tensor weight
quantization, saturating Qm.n membranes, discrete leak, reset-by-subtraction
and SynOps counting.

Synaptic input for a step is accumulated exactly in integers (integer weights
times integer activations), multiplied once by the weight scale and rounded
once (half-to-even) into the membrane format. The result does not depend on
summation order.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ShapeError
from .events import LabeledDataset
from .network import NetworkParams, as_batch

QUANT_VERSION = 1
RESET_MODES = ("subtract", "delayed")


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed Qm.n: ``int_bits`` includes the sign bit, step is 2**-frac_bits."""

    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 1 or self.frac_bits < 0:
            raise ValueError("need int_bits >= 1 and frac_bits >= 0")

    @property
    def qmin(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits - 1))

    @property
    def qmax(self) -> int:
        return (1 << (self.int_bits + self.frac_bits - 1)) - 1

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def range(self) -> tuple[float, float]:
        return self.qmin * self.step, self.qmax * self.step

    def to_fixed(self, x) -> np.ndarray:
        q = np.rint(np.asarray(x, dtype=np.float64) * (1 << self.frac_bits))
        return np.clip(q, self.qmin, self.qmax).astype(np.int64)

    def to_real(self, q) -> np.ndarray:
        return np.asarray(q, dtype=np.float64) * self.step

    def saturate(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=np.int64), self.qmin, self.qmax)

    def __str__(self):
        return f"Q{self.int_bits}.{self.frac_bits}"


@dataclass(frozen=True)
class QuantProfile:
    name: str
    weight_bits: int
    membrane: FixedPointFormat
    reset: str = "subtract"

    def __post_init__(self):
        if self.weight_bits < 2:
            raise ValueError("weight_bits must be >= 2")
        if self.reset not in RESET_MODES:
            raise ValueError(f"reset must be one of {RESET_MODES}")

    def leak_repr(self, alpha: float) -> int:
        return int(np.rint(alpha * (1 << self.membrane.frac_bits)))


PROFILES = {
    "loihi_like": QuantProfile("loihi_like", 8, FixedPointFormat(8, 8)),
    "aggressive": QuantProfile("aggressive", 4, FixedPointFormat(4, 4)),
    # consistency profile: training-side delayed reset, so predictions converge
    # to float hard-mode inference as precision grows
    "high_precision": QuantProfile("high_precision", 16, FixedPointFormat(16, 16), "delayed"),
}


def load_profile(name_or_path) -> QuantProfile:
    """A registered profile name, or an INI file with a ``[profile]`` section
    (keys: name, weight_bits, int_bits, frac_bits, reset)."""
    if str(name_or_path) in PROFILES:
        return PROFILES[str(name_or_path)]
    path = Path(name_or_path)
    if not path.is_file():
        raise KeyError(f"unknown profile {name_or_path!r}; known: {sorted(PROFILES)}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(path)
    sec = cp["profile"]
    return QuantProfile(sec.get("name", "custom"), sec.getint("weight_bits"),
                        FixedPointFormat(sec.getint("int_bits"), sec.getint("frac_bits")),
                        sec.get("reset", "subtract"))


def quantize_tensor(w, bits: int) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor quantization with round-half-to-even.

    scale = max|w| / (2**(bits-1) - 1); an all-zero tensor gets scale 1.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("cannot quantize non-finite weights")
    qmax = (1 << (bits - 1)) - 1
    peak = float(np.abs(w).max()) if w.size else 0.0
    scale = peak / qmax if peak > 0 else 1.0
    q = np.clip(np.rint(w / scale), -qmax, qmax).astype(np.int64)
    return q, scale


@dataclass
class QuantizedNetwork:
    weights: list[np.ndarray]
    scales: list[float]
    bias: list[np.ndarray]
    theta: list[np.ndarray]
    leak: int
    w_out: np.ndarray
    w_out_scale: float
    b_out: np.ndarray
    profile: QuantProfile
    alpha: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def fmt(self) -> FixedPointFormat:
        return self.profile.membrane

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    def fanout(self) -> list[np.ndarray]:
        """Per hidden layer, number of downstream accumulations per spike."""
        nxt = [w.shape[0] for w in self.weights[1:]] + [self.w_out.shape[0]]
        return [np.full(w.shape[0], n, dtype=np.int64) for w, n in zip(self.weights, nxt)]


def quantize_network(params: NetworkParams, profile: QuantProfile) -> QuantizedNetwork:
    fmt = profile.membrane
    weights, scales, bias, theta = [], [], [], []
    for layer in params.layers:
        q, s = quantize_tensor(layer.A, profile.weight_bits)
        weights.append(q)
        scales.append(s)
        bias.append(fmt.to_fixed(layer.b))
        theta.append(fmt.to_fixed(layer.theta))
    w_out, s_out = quantize_tensor(params.w_out, profile.weight_bits)
    return QuantizedNetwork(weights, scales, bias, theta, profile.leak_repr(params.alpha),
                            w_out, s_out, params.b_out.copy(), profile, params.alpha)


@dataclass
class HwOutput:
    pred: np.ndarray
    synops: np.ndarray
    logits: np.ndarray
    spikes: list[np.ndarray]
    margins: list[np.ndarray]


def _to_current(acc, scale, fmt, input_is_fixed):
    # acc is an exact integer sum; one multiply, one rounding
    factor = scale if input_is_fixed else scale * (1 << fmt.frac_bits)
    return np.rint(acc * factor).astype(np.int64)


def hw_forward(qnet: QuantizedNetwork, frames) -> HwOutput:
    """Run a batch ``(B, T, D)`` (or one ``(T, D)`` sample) through the
    fixed-point network. Input frames are quantized to the membrane format and
    injected as graded currents; they do not count as spikes."""
    x = as_batch(frames)
    if x.shape[2] != qnet.input_dim:
        raise ShapeError(f"frame dim {x.shape[2]} != quantized network input dim {qnet.input_dim}")
    fmt = qnet.fmt
    n_steps, batch = x.shape[0], x.shape[1]
    act = fmt.to_fixed(x)
    input_is_fixed = True
    synops = np.zeros(batch, dtype=np.int64)
    spikes_all, margins = [], []
    delayed = qnet.profile.reset == "delayed"
    for w, scale, bias, theta, fan in zip(qnet.weights, qnet.scales, qnet.bias, qnet.theta, qnet.fanout()):
        acc = act @ w.T
        current = np.ascontiguousarray(_to_current(acc, scale, fmt, input_is_fixed))
        spikes, u_pre = kernels.fixed_point_lif(current, bias, theta, qnet.leak, fmt.frac_bits,
                                                fmt.qmin, fmt.qmax, delayed)
        synops += (spikes.astype(np.int64) * fan).sum(axis=(0, 2))
        spikes_all.append(spikes)
        margins.append(fmt.to_real(u_pre - theta))
        act = spikes.astype(np.int64)
        input_is_fixed = False
    counts = act.sum(axis=0).astype(np.float64)
    w_out = qnet.w_out.astype(np.float64) * qnet.w_out_scale
    logits = (counts / n_steps) @ w_out.T + qnet.b_out
    return HwOutput(np.argmax(logits, axis=1), synops, logits, spikes_all, margins)


def hw_evaluate(qnet: QuantizedNetwork, ds: LabeledDataset, reference_ksynops=None, chunk=256) -> dict:
    """Accuracy and kSynOps (1e-3 x mean SynOps per sample-sequence)."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds, ops = [], []
    for i in range(0, len(ds), chunk):
        out = hw_forward(qnet, ds.frames[i:i + chunk])
        preds.append(out.pred)
        ops.append(out.synops)
    pred = np.concatenate(preds)
    synops = np.concatenate(ops)
    report = {
        "profile": qnet.profile.name,
        "weight_bits": qnet.profile.weight_bits,
        "membrane_format": str(qnet.fmt),
        "reset": qnet.profile.reset,
        "accuracy": float(np.mean(pred == ds.labels)),
        "ksynops": 1e-3 * float(synops.mean()),
        "n_samples": len(ds),
    }
    if reference_ksynops is not None:
        report["reference_ksynops"] = float(reference_ksynops)
        report["r_ops"] = report["ksynops"] / reference_ksynops if reference_ksynops else float("inf")
    return report


def save_quantized(qnet: QuantizedNetwork, path):
    p = qnet.profile
    meta = {"format": "sast-snn-quantized", "version": QUANT_VERSION,
            "profile": {"name": p.name, "weight_bits": p.weight_bits,
                        "int_bits": p.membrane.int_bits, "frac_bits": p.membrane.frac_bits,
                        "reset": p.reset},
            "scales": [float(s).hex() for s in qnet.scales],
            "w_out_scale": float(qnet.w_out_scale).hex(),
            "alpha": float(qnet.alpha).hex(), "leak": qnet.leak,
            "n_layers": len(qnet.weights)}
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
              "w_out": qnet.w_out, "b_out": qnet.b_out}
    for i in range(len(qnet.weights)):
        arrays[f"W{i}"] = qnet.weights[i]
        arrays[f"bias{i}"] = qnet.bias[i]
        arrays[f"theta{i}"] = qnet.theta[i]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_quantized(path) -> QuantizedNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != "sast-snn-quantized":
            raise ValueError(f"{path} is not a quantized network export")
        pr = meta["profile"]
        profile = QuantProfile(pr["name"], pr["weight_bits"],
                               FixedPointFormat(pr["int_bits"], pr["frac_bits"]), pr["reset"])
        n = meta["n_layers"]
        return QuantizedNetwork([data[f"W{i}"] for i in range(n)],
                                [float.fromhex(s) for s in meta["scales"]],
                                [data[f"bias{i}"] for i in range(n)],
                                [data[f"theta{i}"] for i in range(n)],
                                int(meta["leak"]), data["w_out"], float.fromhex(meta["w_out_scale"]),
                                data["b_out"], profile, float.fromhex(meta["alpha"]))

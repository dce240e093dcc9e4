"""Event-camera input: N-MNIST binary codec, temporal binning, event drop,
and a synthetic moving-blob generator.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import MalformedFileError, OutOfRangeError

RECORD_BYTES = 5
MAX_TIMESTAMP = (1 << 23) - 1
DESCRIPTOR_NAME = "dataset.ini"


class Event(NamedTuple):
    timestamp: int
    x: int
    y: int
    polarity: int


@dataclass
class EventStream:
    """Columnar event storage, sorted by timestamp."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    duration: int

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)

    def __len__(self):
        return self.t.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __getitem__(self, i) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    @classmethod
    def from_events(cls, events, width, height, duration=None):
        events = list(events)
        if events:
            t, x, y, p = (np.array(c, dtype=np.int64) for c in zip(*events))
        else:
            t = x = y = p = np.zeros(0, dtype=np.int64)
        order = np.argsort(t, kind="stable")
        if duration is None:
            duration = int(t.max()) if len(t) else 0
        return cls(t[order], x[order], y[order], p[order], width, height, int(duration))

    def take(self, mask) -> "EventStream":
        return EventStream(self.t[mask], self.x[mask], self.y[mask], self.p[mask],
                           self.width, self.height, self.duration)

    def same_as(self, other: "EventStream") -> bool:
        return (self.width == other.width and self.height == other.height
                and self.duration == other.duration
                and all(np.array_equal(a, b) for a, b in
                        ((self.t, other.t), (self.x, other.x), (self.y, other.y), (self.p, other.p))))


@dataclass
class LabeledDataset:
    """Binned frames ``(N, T, D)`` with integer labels.

    ``streams`` keeps the raw events when they are available so corruption can
    be applied at the event level and re-binned.
    """

    frames: np.ndarray
    labels: np.ndarray
    num_classes: int
    width: int
    height: int
    streams: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 3 or self.frames.shape[0] != self.labels.shape[0]:
            raise ValueError("frames must be (N, T, D) with one label per sample")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_steps(self):
        return self.frames.shape[1]

    @property
    def input_dim(self):
        return self.frames.shape[2]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        streams = [self.streams[i] for i in idx] if self.streams is not None else None
        return LabeledDataset(self.frames[idx], self.labels[idx], self.num_classes,
                              self.width, self.height, streams)

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        streams = None
        if self.streams is not None and other.streams is not None:
            streams = self.streams + other.streams
        return LabeledDataset(np.concatenate([self.frames, other.frames]),
                              np.concatenate([self.labels, other.labels]),
                              self.num_classes, self.width, self.height, streams)


# ---------------------------------------------------------------------------
# N-MNIST binary format
# ---------------------------------------------------------------------------

def parse_nmnist_file(data: bytes, width: int = 34, height: int = 34, duration=None) -> EventStream:
    """Decode 5-byte N-MNIST records.

    Layout per record: x, y, then polarity in bit 7 of byte 2 and a 23-bit
    big-endian timestamp spread over the low 7 bits of byte 2 and bytes 3-4.
    """
    if len(data) % RECORD_BYTES:
        raise MalformedFileError(f"byte length {len(data)} is not a multiple of {RECORD_BYTES}")
    raw = np.frombuffer(bytes(data), dtype=np.uint8).reshape(-1, RECORD_BYTES).astype(np.int64)
    x = raw[:, 0]
    y = raw[:, 1]
    p = raw[:, 2] >> 7
    t = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        i = int(bad[0])
        raise OutOfRangeError(
            f"record {i}: (x={x[i]}, y={y[i]}) outside {width}x{height} sensor")
    order = np.argsort(t, kind="stable")
    if duration is None:
        duration = int(t.max()) if t.size else 0
    return EventStream(t[order], x[order], y[order], p[order], width, height, int(duration))


def serialize_nmnist(stream: EventStream) -> bytes:
    if len(stream) and (stream.t.min() < 0 or stream.t.max() > MAX_TIMESTAMP):
        raise OutOfRangeError("timestamps must fit in 23 bits")
    if len(stream) and (stream.x.max() > 255 or stream.y.max() > 255):
        raise OutOfRangeError("coordinates must fit in one byte")
    out = np.empty((len(stream), RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = stream.x
    out[:, 1] = stream.y
    out[:, 2] = (stream.p << 7) | (stream.t >> 16)
    out[:, 3] = (stream.t >> 8) & 0xFF
    out[:, 4] = stream.t & 0xFF
    return out.tobytes()


# ---------------------------------------------------------------------------
# binning and corruption
# ---------------------------------------------------------------------------

def bin_events(stream: EventStream, n_steps: int) -> np.ndarray:
    """Bin into ``n_steps`` equal-width frames of ``2*H*W`` cells, max-normalized.

    Bin index is ``min(floor(t*T/duration), T-1)``; with zero duration every
    event lands in bin 0. Layout is polarity-major, then row-major (y, x).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    counts = raw_counts(stream, n_steps)
    peak = counts.max() if counts.size else 0.0
    if peak > 0:
        counts /= peak
    return counts


def raw_counts(stream: EventStream, n_steps: int) -> np.ndarray:
    if len(stream) and stream.t.max() > stream.duration:
        i = int(np.argmax(stream.t > stream.duration))
        raise OutOfRangeError(f"event {i} at t={stream.t[i]} exceeds duration {stream.duration}")
    if stream.duration > 0:
        t_bin = np.minimum((stream.t * n_steps) // stream.duration, n_steps - 1)
    else:
        t_bin = np.zeros_like(stream.t)
    return kernels.bin_counts(t_bin, stream.p, stream.y, stream.x,
                              n_steps, stream.height, stream.width)


def drop_events(stream: EventStream, p: float, seed: int) -> EventStream:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    keep = rng.random(len(stream)) >= p
    return stream.take(keep)


# ---------------------------------------------------------------------------
# synthetic moving-blob data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 2
    samples_per_class: int = 10
    width: int = 16
    height: int = 16
    event_rate: float = 400.0
    duration_us: int = 100_000
    blob_sigma: float = 1.5
    noise_fraction: float = 0.2
    polarity_cue: float = 1.0
    n_steps: int = 10
    seed: int = 0


def _blob_stream(rng, label, spec: SyntheticSpec) -> EventStream:
    w, h = spec.width, spec.height
    angle = 2.0 * np.pi * label / spec.classes
    direction = np.array([np.cos(angle), np.sin(angle)])
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    travel = 0.3 * min(w, h) * rng.uniform(0.8, 1.2)
    start = center - travel * direction + rng.normal(0.0, 1.0, size=2)

    n = rng.poisson(spec.event_rate)
    n_noise = rng.binomial(n, spec.noise_fraction)
    n_blob = n - n_noise

    t_blob = rng.integers(0, spec.duration_us, size=n_blob)
    frac = t_blob / spec.duration_us
    pos = start + (2.0 * travel * frac)[:, None] * direction
    offset = rng.normal(0.0, spec.blob_sigma, size=(n_blob, 2))
    xy_blob = pos + offset
    # leading edge brightens (ON), trailing edge darkens (OFF); the rest of
    # the blob events get random polarity
    p_edge = (offset @ direction > 0).astype(np.int64)
    p_rand = rng.integers(0, 2, size=n_blob)
    p_blob = np.where(rng.random(n_blob) < spec.polarity_cue, p_edge, p_rand)

    t_noise = rng.integers(0, spec.duration_us, size=n_noise)
    xy_noise = rng.uniform(0, [w, h], size=(n_noise, 2))
    p_noise = rng.integers(0, 2, size=n_noise)

    t = np.concatenate([t_blob, t_noise])
    xy = np.floor(np.concatenate([xy_blob, xy_noise])).astype(np.int64)
    p = np.concatenate([p_blob, p_noise])
    inside = (xy[:, 0] >= 0) & (xy[:, 0] < w) & (xy[:, 1] >= 0) & (xy[:, 1] < h)
    t, xy, p = t[inside], xy[inside], p[inside]
    order = np.argsort(t, kind="stable")
    return EventStream(t[order], xy[order, 0], xy[order, 1], p[order], w, h, spec.duration_us)


def make_synthetic_dataset(spec: SyntheticSpec) -> LabeledDataset:
    """Class ``c`` is a Gaussian blob sweeping across the sensor along heading
    ``2*pi*c/classes``, with per-sample jitter and uniform background noise.
    Samples are ordered class-major.
    """
    if spec.classes < 2:
        raise ValueError("need at least 2 classes")
    if spec.samples_per_class < 1:
        raise ValueError("need at least 1 sample per class")
    rng = np.random.default_rng(spec.seed)
    streams, labels = [], []
    for c in range(spec.classes):
        for _ in range(spec.samples_per_class):
            streams.append(_blob_stream(rng, c, spec))
            labels.append(c)
    frames = np.stack([bin_events(s, spec.n_steps) for s in streams])
    return LabeledDataset(frames, np.array(labels), spec.classes, spec.width, spec.height, streams)


def class_stratified_split(ds: LabeledDataset, counts) -> list[LabeledDataset]:
    """Split per class in order: first ``counts[0]`` of every class, then the next
    ``counts[1]``, and so on."""
    parts = [[] for _ in counts]
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        start = 0
        for k, n in enumerate(counts):
            parts[k].extend(idx[start:start + n])
            start += n
        if start > len(idx):
            raise ValueError(f"class {c} has {len(idx)} samples, need {start}")
    return [ds.subset(np.array(sorted(p), dtype=np.int64)) for p in parts]


def random_split(ds: LabeledDataset, fractions, seed: int) -> list[LabeledDataset]:
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("split fractions must be non-negative and sum to 1")
    perm = np.random.default_rng(seed).permutation(len(ds))
    bounds = np.round(np.cumsum(fractions) * len(ds)).astype(int)
    bounds[-1] = len(ds)
    pieces = np.split(perm, bounds[:-1])
    return [ds.subset(np.sort(p)) for p in pieces]


# ---------------------------------------------------------------------------
# on-disk dataset layout: <root>/<class_id>/<sample>.bin + dataset.ini
# ---------------------------------------------------------------------------

def write_dataset_dir(root, streams, labels, num_classes, width, height, duration_us=None):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    desc = configparser.ConfigParser()
    desc["sensor"] = {"width": str(width), "height": str(height)}
    desc["dataset"] = {"classes": str(num_classes), "format": "nmnist"}
    if duration_us is not None:
        desc["dataset"]["duration_us"] = str(int(duration_us))
    with open(root / DESCRIPTOR_NAME, "w") as fh:
        desc.write(fh)
    counters = {}
    for stream, label in zip(streams, labels):
        label = int(label)
        k = counters.get(label, 0)
        counters[label] = k + 1
        d = root / str(label)
        d.mkdir(exist_ok=True)
        (d / f"{k:05d}.bin").write_bytes(serialize_nmnist(stream))


def load_dataset_dir(root, n_steps: int = 10, limit_per_class=None) -> LabeledDataset:
    root = Path(root)
    desc_path = root / DESCRIPTOR_NAME
    if not desc_path.is_file():
        raise FileNotFoundError(f"missing dataset descriptor {desc_path}")
    desc = configparser.ConfigParser()
    desc.read(desc_path)
    width = desc.getint("sensor", "width")
    height = desc.getint("sensor", "height")
    classes = desc.getint("dataset", "classes")
    duration = desc.getint("dataset", "duration_us", fallback=None)
    streams, labels = [], []
    for c in range(classes):
        files = sorted((root / str(c)).glob("*.bin"))
        if limit_per_class is not None:
            files = files[:limit_per_class]
        for f in files:
            streams.append(parse_nmnist_file(f.read_bytes(), width, height, duration))
            labels.append(c)
    if streams:
        frames = np.stack([bin_events(s, n_steps) for s in streams])
    else:
        frames = np.zeros((0, n_steps, 2 * width * height))
    return LabeledDataset(frames, np.array(labels, dtype=np.int64), classes, width, height, streams)


def rebin(ds: LabeledDataset, streams, n_steps=None) -> LabeledDataset:
    n_steps = ds.n_steps if n_steps is None else n_steps
    frames = np.stack([bin_events(s, n_steps) for s in streams]) if streams else ds.frames[:0]
    return LabeledDataset(frames, ds.labels, ds.num_classes, ds.width, ds.height, list(streams))

"""Run configuration: one INI file holds data, model, training and output
settings. Everything is validated before any compute starts."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .events import DESCRIPTOR_NAME, SyntheticSpec
from .optim import METHODS, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: Path | None = None
    synthetic: SyntheticSpec = SyntheticSpec()
    split: tuple = (0.6, 0.2, 0.2)
    split_seed: int = 0
    n_steps: int = 10

    @property
    def split_is_counts(self) -> bool:
        return all(float(v).is_integer() and v >= 1 for v in self.split)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    train: TrainConfig
    method: str = "sast"
    rho_grid: tuple = (0.1, 0.3)
    seeds: tuple = (0,)
    out: Path = Path("runs/default")
    dims: tuple | None = None
    source_path: Path | None = None

    def with_out(self, out) -> "RunConfig":
        return replace(self, out=Path(out))


def _ints(text, name):
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", name) from None


def _floats(text, name):
    try:
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}", name) from None


class _Section:
    def __init__(self, parser, name):
        self.name = name
        self.sec = parser[name] if parser.has_section(name) else {}

    def get(self, key, conv, default):
        if key not in self.sec:
            return default
        raw = self.sec[key]
        full = f"{self.name}.{key}"
        try:
            return conv(raw.strip())
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"cannot parse {raw!r}", full) from None


def _check(cond, msg, name):
    if not cond:
        raise ConfigError(msg, name)


def _read_descriptor(path: Path):
    desc = path / DESCRIPTOR_NAME
    if not desc.is_file():
        raise ConfigError(f"dataset directory {path} has no {DESCRIPTOR_NAME}", "data.path")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(desc)
    try:
        return (cp.getint("sensor", "width"), cp.getint("sensor", "height"), cp.getint("dataset", "classes"))
    except (configparser.Error, ValueError) as exc:
        raise ConfigError(f"bad dataset descriptor {desc}: {exc}", "data.path") from None


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}", "<file>") from None
    known = {"data", "model", "train", "output"}
    for s in cp.sections():
        _check(s in known, f"unknown section [{s}]", s)

    d = _Section(cp, "data")
    source = d.get("source", str, "synthetic").strip()
    _check(source in ("synthetic", "path"), "must be 'synthetic' or 'path'", "data.source")
    n_steps = d.get("n_steps", int, 10)
    _check(n_steps >= 1, "must be >= 1", "data.n_steps")
    split = d.get("split", lambda s: _floats(s, "data.split"), (0.6, 0.2, 0.2))
    _check(len(split) == 3, "needs three entries: train, val, test", "data.split")
    _check(all(v >= 0 for v in split), "entries must be non-negative", "data.split")
    as_counts = all(float(v).is_integer() and v >= 1 for v in split)
    _check(as_counts or abs(sum(split) - 1.0) <= 1e-9,
           "fractions must sum to 1 (or give per-class integer counts)", "data.split")
    _check(as_counts or all(v > 0 for v in split), "fractions must be positive", "data.split")

    path = None
    if source == "synthetic":
        synth = SyntheticSpec(
            classes=d.get("classes", int, 2),
            samples_per_class=d.get("samples_per_class", int, 100),
            width=d.get("width", int, 16),
            height=d.get("height", int, 16),
            event_rate=d.get("event_rate", float, 400.0),
            duration_us=d.get("duration_us", int, 100_000),
            blob_sigma=d.get("blob_sigma", float, 1.5),
            noise_fraction=d.get("noise_fraction", float, 0.2),
            polarity_cue=d.get("polarity_cue", float, 1.0),
            n_steps=n_steps,
            seed=d.get("data_seed", int, 0),
        )
        _check(synth.classes >= 2, "must be >= 2", "data.classes")
        _check(synth.samples_per_class >= 1, "must be >= 1", "data.samples_per_class")
        _check(synth.width >= 1 and synth.height >= 1, "sensor must be at least 1x1", "data.width")
        _check(0.0 <= synth.noise_fraction <= 1.0, "must lie in [0, 1]", "data.noise_fraction")
        _check(0.0 <= synth.polarity_cue <= 1.0, "must lie in [0, 1]", "data.polarity_cue")
        if as_counts:
            _check(sum(split) <= synth.samples_per_class,
                   f"split counts {sum(split):g} exceed samples_per_class {synth.samples_per_class}",
                   "data.split")
        width, height, classes = synth.width, synth.height, synth.classes
    else:
        raw = d.get("path", str, None)
        _check(raw is not None, "required when source = path", "data.path")
        path = Path(raw.strip())
        if not path.is_absolute():
            path = (base_dir / path).resolve()
        _check(path.is_dir(), f"dataset directory {path} does not exist", "data.path")
        width, height, classes = _read_descriptor(path)
        synth = SyntheticSpec(classes=classes, width=width, height=height, n_steps=n_steps)
    data = DataConfig(source, path, synth, tuple(split), d.get("split_seed", int, 0), n_steps)

    m = _Section(cp, "model")
    input_dim = 2 * width * height
    dims = m.get("dims", lambda s: _ints(s, "model.dims"), None)
    if dims is not None:
        _check(len(dims) >= 3, "needs input, at least one hidden layer, and classes", "model.dims")
        _check(dims[0] == input_dim, f"input dim {dims[0]} != 2*width*height = {input_dim}", "model.dims")
        _check(dims[-1] == classes, f"output dim {dims[-1]} != classes = {classes}", "model.dims")
        hidden = tuple(dims[1:-1])
    else:
        hidden = m.get("hidden", lambda s: _ints(s, "model.hidden"), (32, 16))
    _check(len(hidden) >= 1 and all(h >= 1 for h in hidden), "hidden sizes must be >= 1", "model.hidden")
    alpha = m.get("alpha", float, 0.5)
    _check(0.0 <= alpha < 1.0, "must lie in [0, 1)", "model.alpha")
    theta = m.get("theta", float, 1.0)
    _check(theta > 0, "must be > 0", "model.theta")
    slope = m.get("slope", float, 25.0)
    _check(slope > 0, "must be > 0", "model.slope")

    t = _Section(cp, "train")
    method = t.get("method", str, "sast").strip()
    _check(method in METHODS, f"must be one of {METHODS}", "train.method")
    rho = t.get("rho", float, 0.3)
    _check(rho >= 0, "must be >= 0", "train.rho")
    rho_grid = t.get("rho_grid", lambda s: _floats(s, "train.rho_grid"), (0.1, 0.3))
    _check(len(rho_grid) >= 1 and all(r >= 0 for r in rho_grid), "needs non-negative values", "train.rho_grid")
    delta = t.get("delta", float, 1e-12)
    _check(delta > 0, "must be > 0", "train.delta")
    lr = t.get("lr", float, 1e-3)
    _check(lr > 0, "must be > 0", "train.lr")
    beta1 = t.get("beta1", float, 0.9)
    beta2 = t.get("beta2", float, 0.999)
    _check(0 <= beta1 < 1, "must lie in [0, 1)", "train.beta1")
    _check(0 <= beta2 < 1, "must lie in [0, 1)", "train.beta2")
    adam_eps = t.get("adam_eps", float, 1e-8)
    _check(adam_eps > 0, "must be > 0", "train.adam_eps")
    epochs = t.get("epochs", int, 30)
    _check(epochs >= 0, "must be >= 0", "train.epochs")
    batch = t.get("batch_size", int, 32)
    _check(batch >= 1, "must be >= 1", "train.batch_size")
    seeds = t.get("seeds", lambda s: _ints(s, "train.seeds"), (0,))
    _check(len(seeds) >= 1 and all(s >= 0 for s in seeds), "needs non-negative integers", "train.seeds")

    train_cfg = TrainConfig(hidden=hidden, n_steps=n_steps, alpha=alpha, theta=theta, slope=slope, lr=lr,
                            epochs=epochs, batch_size=batch, betas=(beta1, beta2), adam_eps=adam_eps,
                            rho=rho, delta=delta)

    o = _Section(cp, "output")
    out = Path(o.get("out", str, "runs/default").strip())
    if not out.is_absolute():
        out = base_dir / out
    return RunConfig(data, train_cfg, method, tuple(rho_grid), tuple(seeds), out,
                     (input_dim, *hidden, classes))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "<file>")
    cfg = parse_config(path.read_text(), path.parent)
    return replace(cfg, source_path=path)


def config_to_dict(cfg: RunConfig) -> dict:
    d = cfg.data
    return {
        "data": {"source": d.source, "path": str(d.path) if d.path else None, "split": list(d.split),
                 "split_seed": d.split_seed, "n_steps": d.n_steps,
                 "synthetic": {k: getattr(d.synthetic, k) for k in d.synthetic.__dataclass_fields__}},
        "model": {"dims": list(cfg.dims), "alpha": cfg.train.alpha, "theta": cfg.train.theta,
                  "slope": cfg.train.slope},
        "train": {"method": cfg.method, "rho": cfg.train.rho, "rho_grid": list(cfg.rho_grid),
                  "delta": cfg.train.delta, "lr": cfg.train.lr, "betas": list(cfg.train.betas),
                  "adam_eps": cfg.train.adam_eps, "epochs": cfg.train.epochs,
                  "batch_size": cfg.train.batch_size, "seeds": list(cfg.seeds)},
    }


def load_splits(cfg: RunConfig):
    """(train, val, test) for the configured data source and split."""
    from .events import class_stratified_split, load_dataset_dir, make_synthetic_dataset, random_split

    d = cfg.data
    if d.source == "synthetic":
        ds = make_synthetic_dataset(d.synthetic)
    else:
        ds = load_dataset_dir(d.path, d.n_steps)
    if len(ds) == 0:
        raise ConfigError(f"dataset at {d.path} contains no samples", "data.path")
    if d.split_is_counts:
        return class_stratified_split(ds, [int(v) for v in d.split])
    return random_split(ds, d.split, d.split_seed)

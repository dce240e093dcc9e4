"""Adam with per-epoch cosine annealing, the baseline surrogate trainer, and
the two-pass sharpness-aware step (SAST).

A SAST step on minibatches (B, B'):

1. loss and gradient ``g`` at ``w`` on ``B``;
2. ascent perturbation ``eps = rho * g / (||g|| + delta)``;
3. fresh zero state, gradient ``g'`` at ``w + eps`` on ``B'``;
4. Adam update of ``w`` (never ``w + eps``) with ``g'``.

Network state never survives a forward call, so step 3's reset is structural.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bptt import Gradient, batch_gradient
from .evaluation import SeedAggregate, evaluate
from .events import LabeledDataset
from .network import NetworkParams, SurrogateConfig, init_params

METHODS = ("baseline", "sast")


@dataclass(frozen=True)
class SAMConfig:
    rho: float = 0.3
    delta: float = 1e-12

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (32, 16)
    n_steps: int = 10
    alpha: float = 0.5
    theta: float = 1.0
    slope: float = 25.0
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    rho: float = 0.3
    delta: float = 1e-12

    @property
    def sam(self) -> SAMConfig:
        return SAMConfig(self.rho, self.delta)


# ---------------------------------------------------------------------------
# Adam + cosine schedule
# ---------------------------------------------------------------------------

def cosine_lr(epoch, total_epochs, base_lr):
    """base_lr * (1 + cos(pi * epoch / total)) / 2; reaches 0 at ``epoch == total``."""
    if total_epochs <= 0:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    base_lr: float = 1e-3
    total_epochs: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    lr: float = field(init=False)

    def __post_init__(self):
        self.lr = self.base_lr

    @classmethod
    def for_params(cls, params: NetworkParams, base_lr=1e-3, total_epochs=1,
                   betas=(0.9, 0.999), eps=1e-8) -> "OptimizerState":
        n = params.to_vector().size
        return cls(np.zeros(n), np.zeros(n), base_lr, total_epochs, betas[0], betas[1], eps)

    def set_epoch(self, epoch):
        self.lr = cosine_lr(epoch, self.total_epochs, self.base_lr)

    def copy(self) -> "OptimizerState":
        new = replace(self, m=self.m.copy(), v=self.v.copy())
        new.lr = self.lr
        return new


def adam_update(w: np.ndarray, g: np.ndarray, opt: OptimizerState) -> np.ndarray:
    """One bias-corrected Adam step; mutates the moments, returns new weights."""
    opt.step += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g * g
    m_hat = opt.m / (1.0 - opt.beta1 ** opt.step)
    v_hat = opt.v / (1.0 - opt.beta2 ** opt.step)
    return w - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def ascent_perturbation(g: Gradient | np.ndarray, cfg: SAMConfig) -> np.ndarray:
    """eps = rho * g / (||g||_2 + delta) over the flattened gradient."""
    vec = g.to_vector() if isinstance(g, Gradient) else np.asarray(g, dtype=np.float64)
    return cfg.rho * vec / (np.linalg.norm(vec) + cfg.delta)


def baseline_step(params: NetworkParams, opt: OptimizerState, batch):
    frames, labels = batch
    loss, grad = batch_gradient(params, frames, labels)
    g = grad.to_vector()
    new = params.with_vector(adam_update(params.to_vector(), g, opt))
    row = {"loss": loss.value, "grad_norm": float(np.linalg.norm(g)), "grad_evals": 1}
    return new, opt, row


def sast_step(params: NetworkParams, opt: OptimizerState, cfg: SAMConfig, batch, batch_prime):
    frames, labels = batch
    loss, grad = batch_gradient(params, frames, labels)
    g = grad.to_vector()
    eps = ascent_perturbation(g, cfg)
    w = params.to_vector()
    frames_p, labels_p = batch_prime
    loss_p, grad_p = batch_gradient(params.with_vector(w + eps), frames_p, labels_p)
    new = params.with_vector(adam_update(w, grad_p.to_vector(), opt))
    row = {"loss": loss.value, "grad_norm": float(np.linalg.norm(g)),
           "perturbed_loss": loss_p.value, "eps_norm": float(np.linalg.norm(eps)), "grad_evals": 2}
    return new, opt, row


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainRecord:
    method: str
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_hard: float = float("nan")
    best_val_surrogate: float = float("nan")

    @property
    def grad_evals(self) -> int:
        return sum(r["grad_evals"] for r in self.steps)

    @property
    def epochs_run(self) -> int:
        return len(self.epochs)

    def epoch_rows(self, with_time=True):
        if with_time:
            return list(self.epochs)
        return [{k: v for k, v in r.items() if k != "elapsed_s"} for r in self.epochs]


def seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Root seed -> independent {init, shuffle, corruption} streams."""
    init, shuffle, corruption = np.random.SeedSequence(seed).spawn(3)
    return {"init": init, "shuffle": shuffle, "corruption": corruption}


def epoch_batches(n, batch_size, rng) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def train(train_ds: LabeledDataset, val_ds: LabeledDataset, method="sast",
          cfg: TrainConfig = TrainConfig(), seed=0, init: NetworkParams | None = None,
          epochs: int | None = None):
    """Train and keep the epoch with the best validation hard-spike accuracy.

    Baseline steps run over the epoch's shuffled minibatches in order. SAST
    step ``i`` uses batch ``i`` as B and batch ``i+1`` (cyclically) as B', so an
    epoch has the same step count as the baseline and twice the gradient
    evaluations. Ties in validation accuracy keep the earlier epoch. Returns
    ``(best_params, record)``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("train and validation splits must be non-empty")
    epochs = cfg.epochs if epochs is None else epochs
    streams = seed_streams(seed)
    if init is None:
        dims = [train_ds.input_dim, *cfg.hidden, train_ds.num_classes]
        params = init_params(dims, cfg.alpha, cfg.theta, SurrogateConfig("arctan", cfg.slope),
                             np.random.default_rng(streams["init"]))
    else:
        params = init.copy()
    shuffle_rng = np.random.default_rng(streams["shuffle"])
    opt = OptimizerState.for_params(params, cfg.lr, epochs, cfg.betas, cfg.adam_eps)
    sam = cfg.sam
    record = TrainRecord(method)
    best = params.copy()
    t0 = time.perf_counter()

    for epoch in range(epochs):
        opt.set_epoch(epoch)
        batches = epoch_batches(len(train_ds), cfg.batch_size, shuffle_rng)
        losses = []
        for i, idx in enumerate(batches):
            b = (train_ds.frames[idx], train_ds.labels[idx])
            if method == "baseline":
                params, opt, row = baseline_step(params, opt, b)
            else:
                idx_p = batches[(i + 1) % len(batches)]
                b_p = (train_ds.frames[idx_p], train_ds.labels[idx_p])
                params, opt, row = sast_step(params, opt, sam, b, b_p)
            row.update(epoch=epoch, step=i)
            record.steps.append(row)
            losses.append(row["loss"])
        val_sur = evaluate(params, val_ds, "surrogate")
        val_hard = evaluate(params, val_ds, "hard")
        record.epochs.append({"epoch": epoch, "lr": opt.lr, "train_loss": float(np.mean(losses)),
                              "val_acc_surrogate": val_sur, "val_acc_hard": val_hard,
                              "grad_evals": record.grad_evals,
                              "elapsed_s": time.perf_counter() - t0})
        if epoch == 0 or val_hard > record.best_val_hard:
            record.best_epoch = epoch
            record.best_val_hard = val_hard
            record.best_val_surrogate = val_sur
            best = params.copy()
    return best, record


def compute_matched_epochs(sast_epochs: int) -> int:
    """Baseline epochs with at least SAST's gradient-evaluation budget."""
    return 2 * sast_epochs


def sweep_rho(train_ds: LabeledDataset, val_ds: LabeledDataset, grid, cfg: TrainConfig = TrainConfig(),
              seeds=(0,)) -> dict:
    """One SAST run per (rho, seed); best rho by mean validation hard accuracy
    (first in grid order on ties)."""
    if len(grid) == 0:
        raise ValueError("empty rho grid")
    rows, runs = [], {}
    for rho in grid:
        run_cfg = replace(cfg, rho=float(rho))
        hard, sur = [], []
        for seed in seeds:
            params, rec = train(train_ds, val_ds, "sast", run_cfg, seed)
            runs[(float(rho), seed)] = (params, rec)
            hard.append(rec.best_val_hard)
            sur.append(rec.best_val_surrogate)
        h, s = SeedAggregate(hard), SeedAggregate(sur)
        rows.append({"rho": float(rho), "val_acc_surrogate_mean": s.mean, "val_acc_surrogate_std": s.std,
                     "val_acc_hard_mean": h.mean, "val_acc_hard_std": h.std,
                     "delta_transfer": s.mean - h.mean, "n_seeds": len(seeds)})
    best = max(rows, key=lambda r: r["val_acc_hard_mean"])
    return {"rows": rows, "best_rho": best["rho"], "runs": runs}


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d["betas"] = list(cfg.betas)
    return d

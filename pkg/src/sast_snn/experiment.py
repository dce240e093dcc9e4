"""Desk-scale baseline vs SAST comparison on synthetic event data."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from fractions import Fraction

from .diagnostics import contraction_proxy, margin_statistic
from .evaluation import SeedAggregate, corrupt_dataset, evaluate, transfer_gap
from .events import SyntheticSpec, class_stratified_split, make_synthetic_dataset
from .optim import TrainConfig, sweep_rho, train

DESK_DATA = SyntheticSpec(classes=2, samples_per_class=500, width=16, height=16, event_rate=150.0,
                          blob_sigma=2.5, noise_fraction=0.6, n_steps=10, seed=11)
DESK_SPLIT = (300, 100, 100)
DESK_TRAIN = TrainConfig(hidden=(168, 64), n_steps=10, epochs=30, batch_size=32, lr=1e-3)
DESK_RHO_GRID = (0.1, 0.3)
DESK_SEEDS = (0, 1, 2)
DESK_DROP = 0.4
DESK_WINDOW = 0.2


@dataclass
class MethodSummary:
    method: str
    rho: float
    per_seed: list[dict]

    def mean(self, key) -> float:
        return SeedAggregate([r[key] for r in self.per_seed]).mean

    def exact_mean(self, num, den) -> Fraction:
        """Seed mean of ``num / den`` from the stored integer counts."""
        return sum(Fraction(r[num], r[den]) for r in self.per_seed) / len(self.per_seed)

    def exact(self):
        sur = self.exact_mean("correct_surrogate", "n_test")
        hard = self.exact_mean("correct_hard", "n_test")
        corrupt = self.exact_mean("correct_hard_corrupt", "n_test")
        return {"gap": sur - hard, "hard": hard, "drop": hard - corrupt,
                "margin": self.exact_mean("margin_near", "margin_count")}

    def as_dict(self):
        keys = [k for k in self.per_seed[0] if k != "seed"]
        return {"method": self.method, "rho": self.rho, "per_seed": self.per_seed,
                "mean": {k: self.mean(k) for k in keys}}


def desk_splits(spec: SyntheticSpec = DESK_DATA, split=DESK_SPLIT):
    ds = make_synthetic_dataset(spec)
    return class_stratified_split(ds, list(split))


def _test_metrics(params, test, seed, drop=DESK_DROP, window=DESK_WINDOW) -> dict:
    n = len(test)
    res = transfer_gap(params, test)
    corrupted = evaluate(params, corrupt_dataset(test, drop, seed), "hard")
    margins = margin_statistic(params, test, window)
    return {"seed": seed, **res.as_dict(), "acc_hard_corrupt": corrupted,
            "corruption_drop": res.acc_hard - corrupted,
            "margin_fraction": margins["fraction"],
            "gamma_hat": contraction_proxy(params, test).gamma_hat,
            # integer counts behind the ratios, for exact comparisons
            "n_test": n, "correct_surrogate": round(res.acc_surrogate * n),
            "correct_hard": round(res.acc_hard * n), "correct_hard_corrupt": round(corrupted * n),
            "margin_near": round(margins["fraction"] * margins["count"]), "margin_count": margins["count"]}


def run_desk_experiment(spec: SyntheticSpec = DESK_DATA, split=DESK_SPLIT, cfg: TrainConfig = DESK_TRAIN,
                        rho_grid=DESK_RHO_GRID, seeds=DESK_SEEDS) -> dict:
    """Train baseline and SAST (rho chosen on validation hard accuracy) on
    every seed and score the validation-selected checkpoints on test."""
    t0 = time.perf_counter()
    train_ds, val_ds, test_ds = desk_splits(spec, split)
    base_rows = []
    for seed in seeds:
        params, _ = train(train_ds, val_ds, "baseline", replace(cfg, rho=0.0), seed)
        base_rows.append(_test_metrics(params, test_ds, seed))
    sweep = sweep_rho(train_ds, val_ds, rho_grid, cfg, seeds)
    best = sweep["best_rho"]
    sast_rows = [_test_metrics(sweep["runs"][(best, s)][0], test_ds, s) for s in seeds]
    base = MethodSummary("baseline", 0.0, base_rows)
    sast = MethodSummary("sast", best, sast_rows)
    return {"baseline": base, "sast": sast, "rho_sweep": sweep["rows"],
            "elapsed_s": time.perf_counter() - t0}


def relative_gap_reduction(base_gap, sast_gap):
    """(base - sast) / base, or None when the baseline has no positive gap."""
    if base_gap <= 0:
        return None
    return (base_gap - sast_gap) / base_gap


def desk_verdicts(result: dict, min_reduction=Fraction(3, 10)) -> dict[str, tuple[bool, str]]:
    """Direction checks on seed means. Accuracies are ratios of integer
    counts, so the comparisons run in exact rational arithmetic."""
    b, s = result["baseline"].exact(), result["sast"].exact()
    red = relative_gap_reduction(b["gap"], s["gap"])
    gap_ok = s["gap"] < b["gap"] and s["hard"] > b["hard"] and red is not None and red >= min_reduction
    red_txt = "n/a" if red is None else f"{float(red):.4f}"
    return {
        "transfer_gap": (bool(gap_ok), f"gap base {float(b['gap']):+.4f} sast {float(s['gap']):+.4f} "
                                       f"(reduction {red_txt}); hard base {float(b['hard']):.4f} "
                                       f"sast {float(s['hard']):.4f}; rho {result['sast'].rho}"),
        "corruption": (bool(s["drop"] <= b["drop"]),
                       f"drop@{DESK_DROP} base {float(b['drop']):+.4f} sast {float(s['drop']):+.4f}"),
        "margins": (bool(s["margin"] < b["margin"]),
                    f"margin frac base {float(b['margin']):.4f} sast {float(s['margin']):.4f}"),
    }

"""Accuracy, transfer gap, event-drop corruption sweeps, seed aggregation and
the compute-matched comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import LabeledDataset, drop_events, rebin
from .network import NetworkParams, predict

DEFAULT_DROP_GRID = (0.0, 0.1, 0.2, 0.3, 0.4)


def evaluate(params: NetworkParams, ds: LabeledDataset, mode="surrogate") -> float:
    """Fraction of samples whose argmax logit (lowest index on ties) is the label.

    ``mode='hard'`` is swap-only inference: sigma -> H and nothing else.
    """
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.input_dim != params.input_dim:
        raise ValueError(f"dataset dim {ds.input_dim} != network input dim {params.input_dim}")
    pred = predict(params, ds.frames, mode)
    return float(np.mean(pred == ds.labels))


@dataclass
class EvalResult:
    acc_surrogate: float
    acc_hard: float
    delta_transfer: float

    @classmethod
    def from_accuracies(cls, acc_surrogate, acc_hard) -> "EvalResult":
        return cls(acc_surrogate, acc_hard, acc_surrogate - acc_hard)

    def as_dict(self):
        return {"acc_surrogate": self.acc_surrogate, "acc_hard": self.acc_hard,
                "delta_transfer": self.delta_transfer}


def transfer_gap(params: NetworkParams, ds: LabeledDataset) -> EvalResult:
    return EvalResult.from_accuracies(evaluate(params, ds, "surrogate"), evaluate(params, ds, "hard"))


@dataclass
class SeedAggregate:
    """Mean and population std (divide by n) over per-seed values."""

    values: list[float]
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        self.mean = float(arr.mean())
        self.std = float(arr.std(ddof=0))

    def as_dict(self):
        return {"mean": self.mean, "std": self.std, "std_kind": "population", "per_seed": list(self.values)}


def aggregate_results(results: list[EvalResult]) -> dict[str, SeedAggregate]:
    return {
        "acc_surrogate": SeedAggregate([r.acc_surrogate for r in results]),
        "acc_hard": SeedAggregate([r.acc_hard for r in results]),
        "delta_transfer": SeedAggregate([r.delta_transfer for r in results]),
    }


def corrupt_dataset(ds: LabeledDataset, p: float, seed: int) -> LabeledDataset:
    """Drop events independently with probability ``p`` (per-sample seed
    ``seed ^ index``) and re-bin."""
    if ds.streams is None:
        raise ValueError("corruption needs the raw event streams")
    if p == 0.0:
        return ds
    streams = [drop_events(s, p, seed ^ i) for i, s in enumerate(ds.streams)]
    return rebin(ds, streams)


def corruption_sweep(params: NetworkParams, ds: LabeledDataset, grid=DEFAULT_DROP_GRID,
                     seed=0, mode="hard") -> list[tuple[float, float]]:
    if len(grid) == 0:
        raise ValueError("empty corruption grid")
    return [(float(p), evaluate(params, corrupt_dataset(ds, p, seed), mode)) for p in grid]


def compute_matched_report(baseline: dict, sast: dict, test: LabeledDataset,
                           budget_tolerance: float = 0.0) -> dict:
    """Compare two validation-selected runs on the test set.

    Each run is ``{"params", "record"}`` where ``record`` is a TrainRecord.
    The baseline is expected to have spent at least as many gradient
    evaluations as SAST; a shortfall beyond ``budget_tolerance`` (fraction of
    the SAST budget) is flagged, not raised.
    """
    rows = []
    for name, run in (("baseline", baseline), ("sast", sast)):
        res = transfer_gap(run["params"], test)
        rec = run["record"]
        rows.append({"method": name, "epochs": rec.epochs_run, "best_epoch": rec.best_epoch,
                     "grad_evals": rec.grad_evals, **res.as_dict()})
    b_evals, s_evals = rows[0]["grad_evals"], rows[1]["grad_evals"]
    matched = b_evals >= s_evals * (1.0 - budget_tolerance)
    return {"rows": rows, "budget_matched": bool(matched),
            "budget_ratio": (b_evals / s_evals) if s_evals else float("inf"),
            "budget_unit": "gradient evaluations"}

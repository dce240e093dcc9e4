"""Versioned JSON/CSV artifact writers.

Every file carries ``schema_version``. Output is byte-stable for equal inputs:
keys are sorted, floats use ``repr`` and nothing time-dependent is written
except by :func:`write_run_info`, whose file is excluded from artifact hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
RUN_INFO_NAME = "run_info.json"

SCHEMAS = {
    "train.csv": ["schema_version", "epoch", "lr", "train_loss", "val_acc_surrogate", "val_acc_hard",
                  "grad_evals"],
    "eval.csv": ["schema_version", "split", "mode", "accuracy"],
    "transfer.csv": ["schema_version", "split", "acc_surrogate", "acc_hard", "delta_transfer"],
    "corruption.csv": ["schema_version", "split", "mode", "p", "accuracy"],
    "rho_sweep.csv": ["schema_version", "method", "rho", "val_acc_surrogate_mean", "val_acc_surrogate_std",
                      "val_acc_hard_mean", "val_acc_hard_std", "delta_transfer", "n_seeds", "std_kind"],
    "rho_runs.csv": ["schema_version", "rho", "seed", "best_epoch", "val_acc_surrogate", "val_acc_hard",
                     "grad_evals"],
    "hwsim.csv": ["schema_version", "profile", "weight_bits", "membrane_format", "reset", "accuracy",
                  "ksynops", "r_ops", "n_samples"],
    "margin_histogram.csv": ["schema_version", "bin_center", "mass"],
    "desk.csv": ["schema_version", "method", "rho", "seed", "acc_surrogate", "acc_hard", "delta_transfer",
                 "acc_hard_corrupt", "corruption_drop", "margin_fraction", "gamma_hat"],
}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, payload: dict, kind: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, "kind": kind, **_plain(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def write_csv(path, rows: list[dict], schema: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = SCHEMAS[schema or path.name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            full = {"schema_version": SCHEMA_VERSION, **row}
            missing = set(columns) - set(full)
            if missing:
                raise KeyError(f"{path.name}: row lacks columns {sorted(missing)}")
            w.writerow([_cell(full[c]) for c in columns])
    return path


def _cell(v):
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_run_info(out_dir, command: str, elapsed_s: float, backend: str) -> Path:
    """Wall-clock and host details; the only non-deterministic artifact."""
    return write_json(Path(out_dir) / RUN_INFO_NAME,
                      {"command": command, "elapsed_s": elapsed_s, "finished_unix": time.time(),
                       "python": platform.python_version(), "kernel_backend": backend}, "run_info")


def artifact_digest(out_dir) -> dict[str, str]:
    """sha256 of every artifact under ``out_dir`` except the run-info file."""
    root = Path(out_dir)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != RUN_INFO_NAME}

"""``sast-snn`` command line.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2
DIAGNOSTICS = ("gamma", "lipschitz", "margins", "samband")
SPLITS = ("train", "val", "test")


class InputError(Exception):
    """Bad user input detected by a command; maps to exit code 2."""


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise InputError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def _out_dir(args, cfg):
    out = Path(args.out) if args.out else cfg.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cfg(args):
    from .config import load_config

    return load_config(args.config)


def _splits(cfg) -> dict:
    from .config import load_splits

    return dict(zip(SPLITS, load_splits(cfg)))


def _pick_split(cfg, name):
    return _splits(cfg)[name]


def _load_ckpt(path):
    from .network import load_checkpoint

    path = Path(path)
    if not path.is_file():
        raise InputError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from None


def _check_dims(params, ds):
    if ds.input_dim != params.input_dim or ds.num_classes != params.dims[-1]:
        raise InputError(f"checkpoint expects input {params.input_dim} and {params.dims[-1]} classes; "
                         f"dataset has input {ds.input_dim} ({ds.n_steps}x{ds.input_dim} frames) "
                         f"and {ds.num_classes} classes")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> dict:
    from dataclasses import replace

    from .config import config_to_dict
    from .network import save_checkpoint
    from .optim import train
    from .reports import write_csv, write_json

    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    splits = _splits(cfg)
    train_ds, val_ds = splits["train"], splits["val"]
    run_cfg = replace(cfg.train, rho=0.0) if cfg.method == "baseline" else cfg.train
    params, rec = train(train_ds, val_ds, cfg.method, run_cfg, seed, epochs=args.epochs)
    save_checkpoint(params, out / "checkpoint.npz",
                    extra={"method": cfg.method, "seed": seed, "best_epoch": rec.best_epoch})
    write_csv(out / "train.csv", rec.epoch_rows(with_time=False))
    summary = {"method": cfg.method, "seed": seed, "rho": run_cfg.rho, "epochs_run": rec.epochs_run,
               "best_epoch": rec.best_epoch, "best_val_acc_hard": rec.best_val_hard,
               "best_val_acc_surrogate": rec.best_val_surrogate,
               "best_val_delta_transfer": rec.best_val_surrogate - rec.best_val_hard,
               "grad_evals": rec.grad_evals, "steps": len(rec.steps),
               "grad_evals_per_step": 2 if cfg.method == "sast" else 1,
               "n_train": len(train_ds), "n_val": len(val_ds), "config": config_to_dict(cfg)}
    write_json(out / "summary.json", summary, "train_summary")
    return summary


def cmd_eval(args) -> dict:
    from .evaluation import corruption_sweep, evaluate
    from .reports import write_csv, write_json

    cfg = _load_cfg(args)
    params = _load_ckpt(args.checkpoint)
    ds = _pick_split(cfg, args.split)
    _check_dims(params, ds)
    out = _out_dir(args, cfg)
    modes = ("surrogate", "hard") if args.mode == "both" else (args.mode,)
    acc = {m: evaluate(params, ds, m) for m in modes}
    write_csv(out / "tables" / "eval.csv",
              [{"split": args.split, "mode": m, "accuracy": a} for m, a in acc.items()])
    payload = {"split": args.split, "n_samples": len(ds), "accuracy": acc}
    if len(modes) == 2:
        gap = acc["surrogate"] - acc["hard"]
        payload.update(acc_surrogate=acc["surrogate"], acc_hard=acc["hard"], delta_transfer=gap)
        write_csv(out / "tables" / "transfer.csv",
                  [{"split": args.split, "acc_surrogate": acc["surrogate"], "acc_hard": acc["hard"],
                    "delta_transfer": gap}])
    if args.corrupt:
        seed = cfg.seeds[0] if args.seed is None else args.seed
        rows = []
        for m in modes:
            for p, a in corruption_sweep(params, ds, args.corrupt, seed, m):
                rows.append({"split": args.split, "mode": m, "p": p, "accuracy": a})
        write_csv(out / "tables" / "corruption.csv", rows)
        payload["corruption"] = {"seed": seed, "rows": rows}
    write_json(out / "eval.json", payload, "eval")
    return payload


def cmd_hwsim(args) -> dict:
    from .hwsim import hw_evaluate, load_profile, quantize_network
    from .reports import write_csv, write_json

    cfg = _load_cfg(args)
    try:
        profile = load_profile(args.profile)
    except (KeyError, ValueError) as exc:
        raise InputError(str(exc).strip("'\"")) from None
    params = _load_ckpt(args.checkpoint)
    ds = _pick_split(cfg, args.split)
    _check_dims(params, ds)
    ref = None
    if args.reference:
        ref_params = _load_ckpt(args.reference)
        _check_dims(ref_params, ds)
        ref = hw_evaluate(quantize_network(ref_params, profile), ds)["ksynops"]
    report = hw_evaluate(quantize_network(params, profile), ds, ref)
    out = _out_dir(args, cfg)
    write_csv(out / "tables" / "hwsim.csv", [{**report, "r_ops": report.get("r_ops")}])
    write_json(out / "hwsim.json", {"split": args.split, **report}, "hwsim")
    return report


def cmd_sweep(args) -> dict:
    from dataclasses import replace

    from .optim import sweep_rho
    from .reports import write_csv, write_json

    cfg = _load_cfg(args)
    splits = _splits(cfg)
    train_ds, val_ds = splits["train"], splits["val"]
    cfg_train = replace(cfg.train, epochs=args.epochs) if args.epochs is not None else cfg.train
    res = sweep_rho(train_ds, val_ds, cfg.rho_grid, cfg_train, cfg.seeds)
    out = _out_dir(args, cfg)
    rows = [{"method": "sast", "std_kind": "population", **r} for r in res["rows"]]
    write_csv(out / "tables" / "rho_sweep.csv", rows)
    runs = [{"rho": rho, "seed": seed, "best_epoch": rec.best_epoch, "val_acc_surrogate": rec.best_val_surrogate,
             "val_acc_hard": rec.best_val_hard, "grad_evals": rec.grad_evals}
            for (rho, seed), (_, rec) in res["runs"].items()]
    write_csv(out / "tables" / "rho_runs.csv", runs)
    payload = {"best_rho": res["best_rho"], "selection": "mean validation hard accuracy, first in grid on ties",
               "rows": rows, "n_runs": len(runs)}
    write_json(out / "sweep.json", payload, "rho_sweep")
    return payload


def cmd_diagnose(args) -> dict:
    import numpy as np

    from .diagnostics import (
        contraction_proxy,
        lipschitz_probe,
        margin_statistic,
        measure_constants,
        sam_bound_check_network,
    )
    from .reports import write_csv, write_json

    if args.what not in DIAGNOSTICS:
        raise InputError(f"unknown diagnostic {args.what!r}; choose from {DIAGNOSTICS}")
    cfg = _load_cfg(args)
    params = _load_ckpt(args.checkpoint)
    ds = _pick_split(cfg, args.split)
    _check_dims(params, ds)
    out = _out_dir(args, cfg)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    if args.what == "gamma":
        payload = contraction_proxy(params, ds).as_dict()
    elif args.what == "lipschitz":
        consts = measure_constants(params, ds)
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(ds), args.probes)
        x = ds.frames[idx]
        probe = lipschitz_probe(params, x, x + args.scale * rng.standard_normal(x.shape))
        payload = {"constants": consts.as_dict(), "probe_bound": probe["bound"], "probe_b1": probe["b1"],
                   "probe_gamma": probe["gamma"], "max_ratio": probe["max_ratio"],
                   "violations": probe["violations"], "probes": args.probes,
                   "contractive": consts.contractive,
                   "flag": None if consts.contractive else "non-contractive: gamma >= 1"}
    elif args.what == "margins":
        stat = margin_statistic(params, ds, args.window)
        write_csv(out / "tables" / "margin_histogram.csv",
                  [{"bin_center": c, "mass": m} for c, m in zip(stat["bin_centers"], stat["mass"])])
        payload = {k: stat[k] for k in ("fraction", "window", "mode", "count")}
        payload["mass_total"] = float(np.sum(stat["mass"]))
    else:
        n = min(len(ds), 64)
        rep = sam_bound_check_network(params, ds.frames[:n], ds.labels[:n], cfg.train.rho, args.probes, seed)
        payload = {k: v for k, v in rep.items() if k != "violating_direction"}
        if "violating_direction" in rep:
            payload["violating_direction_norm"] = float(np.linalg.norm(rep["violating_direction"]))
    write_json(out / "diagnostics" / f"{args.what}.json", {"split": args.split, **payload}, f"diagnose_{args.what}")
    return payload


def cmd_synth(args) -> dict:
    from .events import write_dataset_dir

    cfg = _load_cfg(args)
    if cfg.data.source != "synthetic":
        raise InputError("synth needs a config with data.source = synthetic")
    from .events import make_synthetic_dataset

    spec = cfg.data.synthetic
    ds = make_synthetic_dataset(spec)
    write_dataset_dir(args.dest, ds.streams, ds.labels, ds.num_classes, ds.width, ds.height, spec.duration_us)
    return {"samples": len(ds), "dest": str(args.dest)}


def cmd_desk(args) -> dict:
    from .experiment import desk_verdicts, run_desk_experiment
    from .reports import write_csv, write_json

    res = run_desk_experiment()
    out = Path(args.out or "runs/desk")
    rows = [{"method": m.method, "rho": m.rho, **r} for m in (res["baseline"], res["sast"]) for r in m.per_seed]
    write_csv(out / "tables" / "desk.csv", rows)
    verdicts = {k: {"pass": ok, "detail": msg} for k, (ok, msg) in desk_verdicts(res).items()}
    payload = {"baseline": res["baseline"].as_dict(), "sast": res["sast"].as_dict(),
               "rho_sweep": res["rho_sweep"], "verdicts": verdicts}
    write_json(out / "desk.json", payload, "desk")
    for k, v in verdicts.items():
        print(f"{k}: {'PASS' if v['pass'] else 'FAIL'} {v['detail']}")
    return payload


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _prob(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"drop probability {text} outside [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sast-snn", description="Train and evaluate LIF spiking nets "
                                 "with sharpness-aware surrogate training.")
    ap.add_argument("--threads", type=int, default=None, help="cap worker threads (default: all cores)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=True, split=True):
        p.add_argument("--config", required=True, help="run config (INI)")
        p.add_argument("--out", default=None, help="output directory (overrides [output] out)")
        p.add_argument("--seed", type=int, default=None)
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        if split:
            p.add_argument("--split", choices=SPLITS, default="test")

    p = sub.add_parser("train", help="train one model, selecting on validation hard accuracy")
    common(p, checkpoint=False, split=False)
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="surrogate / hard-spike accuracy and transfer gap")
    common(p)
    p.add_argument("--mode", choices=("surrogate", "hard", "both"), default="both")
    p.add_argument("--corrupt", type=_prob, nargs="*", default=None, metavar="P",
                   help="event-drop probabilities to sweep")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("corrupt-eval", help="alias of eval --corrupt over the standard grid")
    common(p)
    p.add_argument("--mode", choices=("surrogate", "hard", "both"), default="hard")
    p.add_argument("--corrupt", type=_prob, nargs="*", default=None, metavar="P")
    p.set_defaults(func=cmd_eval, corrupt_default=True)

    p = sub.add_parser("hw-sim", help="fixed-point inference, accuracy and kSynOps")
    common(p)
    p.add_argument("--profile", default="loihi_like", help="profile name or INI file")
    p.add_argument("--reference", default=None, help="baseline checkpoint for the r_ops ratio")
    p.set_defaults(func=cmd_hwsim)

    p = sub.add_parser("sweep-rho", help="SAST over the configured rho grid and seeds")
    common(p, checkpoint=False, split=False)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="contraction, Lipschitz, margin and SAM-bound diagnostics")
    common(p)
    p.add_argument("--what", required=True, help="|".join(DIAGNOSTICS))
    p.add_argument("--window", type=float, default=0.2)
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--scale", type=float, default=0.05, help="input perturbation std for lipschitz")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("synth", help="write the configured synthetic dataset in N-MNIST layout")
    p.add_argument("--config", required=True)
    p.add_argument("--dest", required=True, type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("desk", help="desk-scale baseline vs SAST comparison")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_desk)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    from .errors import ConfigError

    t0 = time.perf_counter()
    try:
        _set_threads(args.threads)
        if getattr(args, "corrupt_default", False) and not args.corrupt:
            from .evaluation import DEFAULT_DROP_GRID

            args.corrupt = list(DEFAULT_DROP_GRID)
        args.func(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if exc.field else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = getattr(args, "out", None)
    if args.command not in ("synth",):
        from .kernels import BACKEND
        from .reports import write_run_info

        if out is None and hasattr(args, "config"):
            from .config import load_config

            out = load_config(args.config).out
        if out is not None or args.command == "desk":
            write_run_info(out or "runs/desk", args.command, time.perf_counter() - t0, BACKEND)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from sast_snn.cli import main
from sast_snn.config import load_config, parse_config
from sast_snn.errors import ConfigError
from sast_snn.network import init_params, save_checkpoint
from sast_snn.reports import SCHEMA_VERSION, artifact_digest, read_csv

QUICK = """
[data]
source = synthetic
classes = 2
samples_per_class = 40
width = 8
height = 8
event_rate = 200
split = 20, 10, 10

[model]
hidden = 8

[train]
method = {method}
rho = 0.1
rho_grid = {grid}
epochs = 2
batch_size = 8
seeds = {seeds}

[output]
out = {out}
"""


def write_cfg(tmp_path, method="sast", grid="0.1, 0.3", seeds="0", out="run", name="cfg.ini"):
    path = tmp_path / name
    path.write_text(QUICK.format(method=method, grid=grid, seeds=seeds, out=out))
    return path


@pytest.fixture
def trained(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    return cfg, tmp_path / "run"


def test_missing_config_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.ini"
    assert main(["train", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_field_exit_2_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nalpha = 1.5\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "model.alpha" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        parse_config("[model]\ndims = 10, 4, 2\n")
    assert exc.value.field == "model.dims"
    with pytest.raises(ConfigError) as exc:
        parse_config("[data]\nsplit = 0.5, 0.2\n")
    assert exc.value.field == "data.split"
    with pytest.raises(ConfigError) as exc:
        parse_config("[train]\nmethod = adamw\n")
    assert exc.value.field == "train.method"
    with pytest.raises(ConfigError):
        parse_config("[data]\nsource = path\npath = /definitely/not/here\n")
    cfg = parse_config("[data]\nwidth = 4\nheight = 4\n[model]\ndims = 32, 5, 3, 2\n")
    assert cfg.dims == (32, 5, 3, 2) and cfg.train.hidden == (5, 3)


def test_unknown_command_or_flag_exit_2():
    assert main(["frobnicate"]) == 2
    assert main(["train"]) == 2


def test_train_artifacts(trained):
    cfg, out = trained
    assert (out / "checkpoint.npz").is_file()
    rows = read_csv(out / "train.csv")
    assert len(rows) == 2 and all(r["schema_version"] == str(SCHEMA_VERSION) for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == SCHEMA_VERSION
    assert summary["grad_evals_per_step"] == 2
    assert summary["grad_evals"] == 2 * summary["steps"]
    assert (out / "run_info.json").is_file()


def test_train_is_deterministic(tmp_path):
    a = write_cfg(tmp_path, out="a", name="a.ini")
    b = write_cfg(tmp_path, out="b", name="b.ini")
    assert main(["train", "--config", str(a)]) == 0
    assert main(["train", "--config", str(b)]) == 0
    for cmd in (["eval", "--corrupt", "0", "0.3"], ["diagnose", "--what", "margins"],
                ["hw-sim", "--profile", "loihi_like"]):
        for name in ("a", "b"):
            ck = tmp_path / name / "checkpoint.npz"
            assert main([cmd[0], "--config", str(tmp_path / f"{name}.ini"), "--checkpoint", str(ck), *cmd[1:]]) == 0
    da, db = artifact_digest(tmp_path / "a"), artifact_digest(tmp_path / "b")
    assert "checkpoint.npz" in da and "run_info.json" not in da
    assert da == db


def test_eval_outputs(trained):
    cfg, out = trained
    ck = str(out / "checkpoint.npz")
    assert main(["eval", "--config", str(cfg), "--checkpoint", ck, "--corrupt", "0.0", "0.4"]) == 0
    res = json.loads((out / "eval.json").read_text())
    assert res["delta_transfer"] == res["acc_surrogate"] - res["acc_hard"]
    rows = read_csv(out / "tables" / "corruption.csv")
    clean = [r for r in rows if r["mode"] == "hard" and float(r["p"]) == 0.0][0]
    assert float(clean["accuracy"]) == res["acc_hard"]
    assert main(["corrupt-eval", "--config", str(cfg), "--checkpoint", ck]) == 0
    rows = read_csv(out / "tables" / "corruption.csv")
    assert [float(r["p"]) for r in rows] == [0.0, 0.1, 0.2, 0.3, 0.4]


def test_eval_dims_mismatch_exit_2(trained, tmp_path, capsys):
    cfg, _ = trained
    ck = tmp_path / "other.npz"
    save_checkpoint(init_params([10, 4, 2], rng=0), ck)
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(ck)]) == 2
    err = capsys.readouterr().err
    assert "10" in err and "128" in err


def test_eval_step_surrogate_modes_agree(trained, tmp_path):
    cfg, out = trained
    from sast_snn.network import SurrogateConfig, load_checkpoint

    p = load_checkpoint(out / "checkpoint.npz")
    p.surrogate = SurrogateConfig("step")
    ck = tmp_path / "step.npz"
    save_checkpoint(p, ck)
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(ck), "--out", str(tmp_path / "e")]) == 0
    res = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert res["acc_surrogate"] == res["acc_hard"]


def test_hwsim_profiles(trained, tmp_path):
    cfg, out = trained
    ck = str(out / "checkpoint.npz")
    assert main(["hw-sim", "--config", str(cfg), "--checkpoint", ck, "--profile", "bogus"]) == 2
    assert main(["hw-sim", "--config", str(cfg), "--checkpoint", ck, "--reference", ck]) == 0
    rep = json.loads((out / "hwsim.json").read_text())
    assert rep["weight_bits"] == 8 and rep["membrane_format"] == "Q8.8"
    silent = tmp_path / "silent.npz"
    save_checkpoint(init_params([128, 8, 2], rng=0), silent)
    assert main(["hw-sim", "--config", str(cfg), "--checkpoint", str(silent), "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "s" / "hwsim.json").read_text())["ksynops"] == 0.0
    prof = tmp_path / "wide.ini"
    prof.write_text("[profile]\nname = wide\nweight_bits = 16\nint_bits = 16\nfrac_bits = 16\nreset = delayed\n")
    assert main(["hw-sim", "--config", str(cfg), "--checkpoint", ck, "--profile", str(prof)]) == 0


def test_diagnose(trained, tmp_path):
    cfg, out = trained
    ck = str(out / "checkpoint.npz")
    assert main(["diagnose", "--config", str(cfg), "--checkpoint", ck, "--what", "nonsense"]) == 2
    for what in ("gamma", "lipschitz", "margins", "samband"):
        assert main(["diagnose", "--config", str(cfg), "--checkpoint", ck, "--what", what, "--probes", "8"]) == 0
        assert (out / "diagnostics" / f"{what}.json").is_file()
    hist = read_csv(out / "tables" / "margin_histogram.csv")
    assert abs(sum(float(r["mass"]) for r in hist) - 1.0) <= 1e-12
    zero = init_params([128, 8, 2], rng=0)
    zero.layers[0].A[:] = 0.0
    zck = tmp_path / "zero.npz"
    save_checkpoint(zero, zck)
    assert main(["diagnose", "--config", str(cfg), "--checkpoint", str(zck), "--what", "gamma",
                 "--out", str(tmp_path / "z")]) == 0
    g = json.loads((tmp_path / "z" / "diagnostics" / "gamma.json").read_text())
    assert abs(g["gamma_hat"] - 0.5127) <= 1e-4


def test_sweep_logs_runs(tmp_path):
    cfg = write_cfg(tmp_path, grid="0.0, 0.1", seeds="0, 1")
    assert main(["sweep-rho", "--config", str(cfg), "--epochs", "1"]) == 0
    runs = read_csv(tmp_path / "run" / "tables" / "rho_runs.csv")
    assert len(runs) == 4
    table = read_csv(tmp_path / "run" / "tables" / "rho_sweep.csv")
    assert [float(r["rho"]) for r in table] == [0.0, 0.1]
    assert {"val_acc_surrogate_mean", "val_acc_hard_mean", "delta_transfer"} <= set(table[0])


def test_synth_round_trip(tmp_path):
    cfg = write_cfg(tmp_path)
    dest = tmp_path / "data"
    assert main(["synth", "--config", str(cfg), "--dest", str(dest)]) == 0
    path_cfg = tmp_path / "p.ini"
    path_cfg.write_text(f"[data]\nsource = path\npath = {dest}\nsplit = 20, 10, 10\n[model]\nhidden = 4\n"
                        f"[train]\nepochs = 1\n[output]\nout = pr\n")
    loaded = load_config(path_cfg)
    assert loaded.dims == (128, 4, 2)
    assert main(["train", "--config", str(path_cfg)]) == 0


def test_threads_flag(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["--threads", "1", "train", "--config", str(cfg), "--epochs", "1"]) == 0
    assert main(["--threads", "0", "train", "--config", str(cfg)]) == 2


def test_inline_comments_allowed():
    cfg = parse_config("[data]\nsource = synthetic   ; or path\nwidth = 4 ; small\nheight = 4\n")
    assert cfg.data.synthetic.width == 4

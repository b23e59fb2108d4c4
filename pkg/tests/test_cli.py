import json
import subprocess
import sys
from pathlib import Path

import pytest

from stochscl.cli import ConfigError, list_models, load_config, main, parse_config, report_document, run_experiment

SMALL = """
[run]
experiment = contraction
name = small

[model]
flux = burgers
noise = bounded_sine
noise.amp = 0.2
u0 = bump
u0.amplitude = 0.5
v0 = bump
v0.center = 0.1
v0.amplitude = 0.6

[numerics]
n_cells = 64
T = 0.1
dt = 0.0025
eps_visc = 0.04
u_bound = 1.25
stride = 4

[monte_carlo]
n_paths = 12
base_seed = 3

[verification]
times = 0.05 0.1
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_dir(out):
    dirs = sorted(Path(out).iterdir())
    assert len(dirs) == 1
    return dirs[0]


def test_list_models_stable(capsys):
    assert main(["list-models"]) == 0
    first = capsys.readouterr().out
    main(["list-models"])
    assert capsys.readouterr().out == first == list_models()
    assert "burgers(" in first and "linear(" in first


def test_unknown_flux_names_key(tmp_path, capsys):
    path = write(tmp_path, SMALL.replace("flux = burgers", "flux = nosuch"))
    assert main(["run", path, "--outdir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "model.flux" in err and "nosuch" in err
    assert not (tmp_path / "o").exists()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(SMALL + "bogus = 1\n")
    assert info.value.key == "verification.bogus"


def test_bad_number_names_key():
    with pytest.raises(ConfigError) as info:
        parse_config(SMALL.replace("n_paths = 12", "n_paths = many"))
    assert info.value.key == "monte_carlo.n_paths"


def test_cfl_violation(tmp_path, capsys):
    path = write(tmp_path, SMALL.replace("dt = 0.0025", "dt = 0.02"))
    assert main(["validate", path]) == 2
    assert "stability" in capsys.readouterr().err


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", write(tmp_path, SMALL)]) == 0
    assert "ok (contraction)" in capsys.readouterr().out


def test_shipped_configs_validate():
    for p in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.ini")):
        load_config(p)


def test_run_success(tmp_path):
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, SMALL), "--outdir", str(out), "--threads", "1"]) == 0
    d = run_dir(out)
    doc = json.loads((d / "report.json").read_text())
    assert doc["passed"] is True and doc["experiment"] == "contraction"
    rows = (d / "summary.csv").read_text().splitlines()
    assert rows[0] == "experiment,property,estimate,std_error,threshold,passed"
    assert (d / "config.ini").exists() and (d / "run_meta.json").exists()


def test_forced_failure_exit_1(tmp_path):
    # a negative slack makes the contraction bound unattainable
    text = SMALL.replace("times = 0.05 0.1", "times = 0.05 0.1\nslack = -1.0")
    assert main(["run", write(tmp_path, text), "--outdir", str(tmp_path / "o")]) == 1


def test_blowup_exit_3(tmp_path, capsys):
    text = SMALL.replace("stride = 4", "stride = 4\nblowup_guard = 0.1")
    assert main(["run", write(tmp_path, text), "--outdir", str(tmp_path / "o")]) == 3
    assert "blow-up" in capsys.readouterr().err


def test_thread_count_does_not_change_reports(tmp_path):
    path = write(tmp_path, SMALL)
    docs = []
    for i, threads in enumerate(("1", "4", "1")):
        out = tmp_path / f"o{i}"
        assert main(["run", path, "--outdir", str(out), "--threads", threads]) == 0
        docs.append((run_dir(out) / "report.json").read_bytes())
    assert docs[0] == docs[1] == docs[2]


def test_seed_override(tmp_path):
    cfg = load_config(write(tmp_path, SMALL))
    a = report_document(cfg, run_experiment(cfg)[0])
    cfg.values["monte_carlo"]["base_seed"] = 4
    b = report_document(cfg, run_experiment(cfg)[0])
    assert a != b
    out = tmp_path / "o"
    main(["run", write(tmp_path, SMALL), "--outdir", str(out), "--seed-override", "4"])
    assert (run_dir(out) / "report.json").read_text() == b


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stochscl", "list-models"], capture_output=True, text=True)
    assert res.returncode == 0 and "burgers" in res.stdout

import re
import shutil
import subprocess
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from dset_infer import svg
from dset_infer.cli import main
from dset_infer.config import OUTPUT_ENV, dumps_config, load_config, loads_config
from dset_infer.exceptions import ConfigError
from dset_infer.experiments import load_counts
from dset_infer.hmc import read_chains_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
experiment = "custom"
output_dir = "out"

[penalty]
flavor = "squared"
{penalty}

[model]
kind = "gaussian_linear"
X = [[1.0, 0.0], [0.0, 1.0]]
y = [1.5, 0.0]

[set]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0

[hmc]
num_warmup = 100
num_samples = 200
num_chains = 2
seed = 3
"""


def write_cfg(tmp_path, penalty="rho = 100.0", name="cfg.toml"):
    path = tmp_path / name
    path.write_text(SMALL.format(penalty=penalty))
    return path


# config


def test_bundled_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.hmc_config().num_samples > 0


def test_round_trip(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    again = loads_config(dumps_config(cfg), base_dir=tmp_path)
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("penalty", ["", "rho = 1.0\nbudget = 0.1", "budget = -1.0"])
def test_exactly_one_of_rho_or_budget(tmp_path, penalty):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, penalty))


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        loads_config('experiment = "astrology"\n[penalty]\nrho = 1.0')
    with pytest.raises(ConfigError):
        loads_config('experiment = "custom"\n[penalty]\nrho = 1.0')
    with pytest.raises(ConfigError):
        loads_config('experiment = "ridge_ball"\nbogus = 1\n[penalty]\nrho = 1.0')
    with pytest.raises(ConfigError):
        loads_config('experiment = "ridge_ball"\n[penalty]\nrho = 1.0\n[hmc]\nstep_size = -1.0')
    with pytest.raises(ConfigError):
        loads_config('experiment = "contingency_table"\n[penalty]\nrho = 1.0\n[options]\ncounts_file = "nope.csv"')
    with pytest.raises(ConfigError):
        loads_config("experiment = = ")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    cfg = load_config(write_cfg(tmp_path))
    assert cfg.output_path() == tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "elsewhere"))
    assert cfg.output_path() == tmp_path / "elsewhere"


def test_bundled_counts():
    counts, rows, cols = load_counts()
    assert counts.shape == (4, 5)
    assert cols[0].lower().startswith("death") and cols[-1].lower().startswith("good")
    assert np.all(counts > 0)


# svg


def test_svg_uses_primitives_only(rng):
    figs = [
        svg.trace_plot([rng.standard_normal(50), rng.standard_normal(50)], "trace"),
        svg.acf_plot(np.linspace(1, 0, 10), "acf"),
        svg.scatter_plot(rng.standard_normal((30, 2)), "scatter", circle=((0, 0), 1.0), marks=[((0.1, 0.2), "#d62728")]),
        svg.interval_ladder(["a", "b"], [0, 1], [0.5, 1.5], [1, 2], "ladder"),
    ]
    allowed = {"svg", "g", "line", "polyline", "circle", "rect", "text", "title"}
    for fig in figs:
        text = fig.render()
        root = ET.fromstring(text)
        tags = {el.tag.split("}")[-1] for el in root.iter()}
        assert tags <= allowed, tags - allowed
        assert text == fig.render()


# cli


def test_run_writes_outputs_and_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    csv = out / "chains_squared_rho100.csv"
    first = csv.read_bytes()
    chains = read_chains_csv(csv)
    assert len(chains) == 2 and chains[0].draws.shape == (200, 2)
    assert any(p.suffix == ".svg" for p in out.iterdir())
    assert (out / "metadata.json").exists()
    printed = capsys.readouterr().out
    assert "Mean" in printed and "ESS" in printed
    assert main(["run", str(cfg)]) == 0
    assert csv.read_bytes() == first


def test_map_command(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["map", str(cfg)]) == 0
    trace = (tmp_path / "out" / "map_trace.csv").read_text().splitlines()
    assert trace[0].startswith("rho,iteration,objective,step_norm")
    # rho=100 relaxed MAP of N((1.5, 0), I) over the unit ball
    last = [float(v) for v in trace[-1].split(",")]
    assert last[4] == pytest.approx(1 + 0.5 / 101, abs=1e-8)


def test_calibrate_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "budget = 0.01")
    assert main(["calibrate", str(cfg)]) == 0
    assert "lambda (= rho)" in (tmp_path / "out" / "calibration.txt").read_text()
    assert re.search(r"rho = [0-9.e+]+", capsys.readouterr().out)


def test_calibrate_needs_budget(tmp_path, capsys):
    assert main(["calibrate", str(write_cfg(tmp_path))]) == 3
    assert "[config]" in capsys.readouterr().err


def test_calibration_refused_is_stage_tagged(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "budget = 50.0")
    assert main(["calibrate", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("dset-infer: [calibrate]") and "CalibrationRefused" in err


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('experiment = "ridge_ball"\n')
    assert main(["run", str(bad)]) == 3
    assert "dset-infer: [config] ConfigError" in capsys.readouterr().err


def test_sampling_error_is_stage_tagged(tmp_path, capsys):
    # an empty-interior box never admits the table's initial point
    cfg = tmp_path / "t.toml"
    cfg.write_text(
        'experiment = "custom"\noutput_dir = "o"\n[penalty]\nflavor = "sharp"\nrho = 1.0\n'
        '[model]\nkind = "multinomial_dirichlet_table"\ncounts = [[1, 1]]\n'
        '[set]\nkind = "box"\nlower = [2.0]\nupper = [3.0]\n[hmc]\nnum_warmup = 10\nnum_samples = 100\n'
    )
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert re.match(r"dset-infer: \[sample sharp_rho1\] InitializationError", err)


def test_check_command(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 5 and all(line.startswith("PASS") for line in lines)


@pytest.mark.skipif(shutil.which("dset-infer") is None, reason="console script not installed")
def test_console_script_help():
    res = subprocess.run(["dset-infer", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("run", "map", "calibrate", "check"):
        assert cmd in res.stdout

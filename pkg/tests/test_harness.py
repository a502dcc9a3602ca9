import math
import sys
from pathlib import Path

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from fluxsampling import ConfigError
from fluxsampling.harness import ExperimentConfig, build_model, default_config, run_one, timing_campaign
from fluxsampling.harness.campaign import interior_maximum, strictly_monotone
from fluxsampling.harness.cli import main
from fluxsampling.harness.records import header_line

WALK = """
[model]
name = "walk"
[sampler]
basin_chunk = 20000
T = 20000
n_trials = 200
n_interfaces = 4
lambda_0 = 4.0
[campaign]
repeats = 2
seed = 17
samplers = ["soffs", "ffs", "iffs"]
"""


def walk_cfg(**campaign):
    cfg = ExperimentConfig.loads(WALK)
    return cfg.with_overrides([f"campaign.{k}={v!r}".replace("'", '"') for k, v in campaign.items()])


def _same(a, b):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, float) and math.isnan(a):
        return isinstance(b, float) and math.isnan(b)
    return a == b


def test_round_trip_is_identity():
    for cfg in (walk_cfg(), default_config("maier_stein"), default_config("ising_pore", L=40, w=8)):
        again = ExperimentConfig.loads(cfg.dumps())
        assert _same(again.to_dict(), cfg.to_dict())
        assert again.dumps() == cfg.dumps()
        assert again.digest() == cfg.digest()


def test_defaults_are_explicit():
    text = default_config("maier_stein").dumps()
    for key in ("T1 = 100", "threshold = 0.92", "beta = 2.0", "D = 0.01", "extended_factor = 20"):
        assert key in text


def test_missing_model_section():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.loads("[sampler]\nname = 'ffs'\n")
    assert e.value.key == "model"


@pytest.mark.parametrize("text, key", [
    ("[model]\nname='walk'\nbogus=1\n", "model.bogus"),
    ("[model]\nname='walk'\n[sampler]\nT1='long'\n", "sampler.T1"),
    ("[model]\nname='walk'\n[sampler]\nthreshold=1.5\n", "sampler.threshold"),
    ("[model]\nname='ising_pore'\n", "model.lambda_B"),
    ("[model]\nname='ising_pore'\nlambda_B=900.0\nw=100\n", "model.w"),
    ("[model]\nname='nope'\n", "model.name"),
    ("[model]\nname='walk'\n[extra]\n", "extra"),
    ("[model\n", "config"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.loads(text)
    assert e.value.key == key


def test_overrides():
    cfg = walk_cfg().with_overrides(["sampler.T1=40", "model.p_up=0.45", 'sampler.name="ffs"'])
    assert cfg.sampler["T1"] == 40 and cfg.model["p_up"] == 0.45 and cfg.sampler["name"] == "ffs"
    assert cfg.digest() != walk_cfg().digest()
    with pytest.raises(ConfigError):
        walk_cfg().with_overrides(["sampler.nothing=1"])
    with pytest.raises(ConfigError):
        walk_cfg().with_overrides(["T1=3"])


def test_campaign_is_deterministic():
    cfg = walk_cfg()
    a = timing_campaign(cfg, repeats=2)
    b = timing_campaign(cfg, repeats=2)
    for s in ("soffs", "ffs", "iffs"):
        assert [r.k_AB for r in a.results[s]] == [r.k_AB for r in b.results[s]]
        assert all(r.wall_time > 0 for r in a.results[s])
    assert len(a.interfaces) == 4


def test_worker_count_does_not_change_results():
    cfg = walk_cfg()
    wide = cfg.with_overrides(["sampler.workers=3"])
    for s in ("soffs", "ffs", "iffs"):
        assert run_one(cfg, s, 5).k_AB == run_one(wide, s, 5).k_AB


def _write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


def _check_headers(out: Path, cfg_digest: str, seed: int):
    files = sorted(out.iterdir())
    assert files
    for f in files:
        if f.suffix in (".png", ".bin"):
            assert any(g.name == f.name + ".txt" for g in files) or f.suffix == ".png"
            continue
        first = f.read_text().splitlines()[0]
        assert f"config_hash={cfg_digest}" in first and f"master_seed={seed}" in first, f.name


def test_cli_compare_writes_headed_files(tmp_path, capsys):
    cfg_path = _write(tmp_path, WALK)
    out = tmp_path / "out"
    assert main(["compare", "--config", str(cfg_path), "--out", str(out), "--repeats", "2",
                 "--seed", "5"]) == 0
    text = capsys.readouterr().out
    assert "soffs/ffs" in text and "agree within 3 sigma" in text
    cfg = ExperimentConfig.load(cfg_path).with_overrides(
        ["campaign.seed=5", "campaign.repeats=2", f'campaign.out="{out}"'])
    _check_headers(out, cfg.digest(), 5)
    assert (out / "compare.png").stat().st_size > 0
    rec = tomllib.loads((out / "run_record.toml").read_text().split("\n", 1)[1])
    assert rec["config_hash"] == cfg.digest() and rec["master_seed"] == 5
    assert len(rec["runs"]) == 6
    # the record alone reproduces a run exactly
    again = ExperimentConfig.from_dict(rec["config"])
    run = rec["runs"][0]
    assert run_one(again, run["sampler"], run["seed"]).k_AB == run["k_AB"]


def test_cli_run_soffs_writes_histograms(tmp_path):
    out = tmp_path / "o"
    assert main(["run-soffs", "--config", str(_write(tmp_path, WALK)), "--out", str(out),
                 "--repeats", "1", "--no-figures"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"run_record.toml", "rates.csv", "summary.csv", "config.toml"} <= names
    hist = [n for n in names if n.startswith("hist_")]
    assert hist
    body = (out / hist[0]).read_text().splitlines()
    assert body[0].startswith("# fluxsampling")
    assert "bin_left\tcount\tdensity\tcumulant" in body
    assert any(n.startswith("interfaces_soffs") for n in names)
    assert any(n.startswith("census_") for n in names)


@pytest.mark.parametrize("cmd", ["run-ffs", "run-iffs"])
def test_cli_single_samplers(tmp_path, cmd):
    out = tmp_path / cmd
    assert main([cmd, "--config", str(_write(tmp_path, WALK)), "--out", str(out), "--no-figures",
                 "--override", "campaign.repeats=1"]) == 0
    assert (out / "rates.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = _write(tmp_path, "[sampler]\nname='ffs'\n")
    assert main(["run-ffs", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "model" in capsys.readouterr().err
    assert main(["run-ffs", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_sampler_error_exit_code(tmp_path, capsys):
    text = WALK.replace('name = "walk"', 'name = "walk"\np_up = 0.01\np_down = 0.99\nlambda_A = 6.0')
    text = text.replace("basin_chunk = 20000", "basin_chunk = 500\nbasin_max_chunks = 2")
    p = _write(tmp_path, text)
    assert main(["run-soffs", "--config", str(p), "--out", str(tmp_path / "x"), "--no-figures"]) == 1
    assert "NoForwardProgress" in capsys.readouterr().err


def test_cli_validate_oracle(tmp_path, capsys):
    assert main(["validate-oracle", "--repeats", "20", "--out", str(tmp_path / "v")]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 4 and all(ln.startswith("PASS") for ln in lines)


def test_cli_ims_scan_on_three_well(tmp_path, capsys):
    text = """
[model]
name = "walk"
kind = "potential"
potential = [%s]
start = 4
lambda_A = 5.0
lambda_B = 35.0
[sampler]
basin_chunk = 20000
n_trials = 300
[campaign]
seed = 1
""" % ", ".join(f"{v:.6g}" for v in np.interp(np.arange(41), [0, 4, 12, 20, 28, 40], [3, 0, 6, -6, 8, -10]))
    out = tmp_path / "ims"
    assert main(["ims-scan", "--config", str(_write(tmp_path, text)), "--out", str(out)]) == 0
    assert "lambda_IMS=20" in capsys.readouterr().out
    assert (out / "ims_fraction.csv").exists() and (out / "ims_density.txt").exists()
    assert (out / "ims_scan.png").exists()


def test_header_line_format():
    cfg = walk_cfg()
    h = header_line(cfg, "rates")
    assert h.startswith("# fluxsampling ") and f"config_hash={cfg.digest()}" in h
    assert h.endswith("master_seed=17")


def test_sweep_shape_helpers():
    assert strictly_monotone([3, 2, 1], increasing=False)
    assert not strictly_monotone([3, 3, 1], increasing=False)
    assert strictly_monotone([1, 2, 5], increasing=True)
    assert interior_maximum([1, 3, 2, 0.5])
    assert not interior_maximum([1, 2, 3, 4])
    assert not interior_maximum([1, float("nan"), 2])


@pytest.mark.parametrize("name", ["walk", "maier_stein", "ising_pore"])
def test_shipped_configs_load(name):
    path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.toml"
    cfg = ExperimentConfig.load(path)
    assert cfg.model["name"] == name
    _, regions = build_model(cfg)
    assert regions.lambda_A < regions.lambda_B

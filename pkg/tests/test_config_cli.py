import csv
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import tomli

from moa2c.cli import main, run
from moa2c.config import PRESETS, dump_toml, parse_config, resolve
from moa2c.exceptions import ConfigurationError

TINY_ENV = {"num_files": 4, "cache_capacity": 1, "horizon": 6}
TINY_TRAIN = {"episodes": 4, "actor_hidden": 6, "critic_hidden": 6}


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _tiny_doc(mode="mo_a2c", seeds=(0, 1), **train):
    doc = {"mode": mode, "seeds": list(seeds), "env": dict(TINY_ENV), "train": {**TINY_TRAIN, **train}}
    return doc


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- config


def test_minimal_config_fills_defaults():
    cfg = resolve({"mode": "mo_a2c", "seeds": [0]})
    assert cfg.env["num_files"] == 20 and cfg.env["horizon"] == 64
    assert cfg.train["episodes"] == 3000 and cfg.train["actor_hidden"] == 128
    assert cfg.train["reward_rescale"] == [1.0, 1.0, 1.0]
    assert cfg.output_dir is None


def test_so_mode_defaults_to_smaller_actor():
    cfg = resolve({"mode": "so_a2c", "seeds": [0], "train": {"scales": [1, 1, 1]}})
    assert cfg.train["actor_hidden"] == 64


def test_discount_out_of_range_names_key_and_range():
    with pytest.raises(ConfigurationError) as exc:
        resolve({"mode": "mo_a2c", "seeds": [0], "env": {"discount": 1.5}})
    msg = str(exc.value)
    assert "env.discount" in msg and "(0.0, 1.0]" in msg


def test_all_errors_reported_together():
    with pytest.raises(ConfigurationError) as exc:
        resolve({"mode": "mo_a2c", "seeds": [], "bogus": 1, "train": {"lr_actor": -1.0, "nope": 2}})
    msg = str(exc.value)
    for key in ("seeds", "bogus", "train.lr_actor", "train.nope"):
        assert key in msg


@pytest.mark.parametrize(
    "doc, key",
    [
        ({"seeds": [0]}, "mode"),
        ({"mode": "mo_a2c"}, "seeds"),
        ({"mode": "fast", "seeds": [0]}, "mode"),
        ({"mode": "so_a2c", "seeds": [0]}, "train.scales"),
        ({"mode": "mo_a2c", "seeds": [0], "train": {"scales": [1, 1, 1]}}, "train.scales"),
        ({"mode": "mo_a2c", "seeds": [0, 0]}, "seeds"),
        ({"mode": "mo_a2c", "seeds": [0], "env": {"cache_capacity": 30}}, "env.cache_capacity"),
        ({"mode": "mo_a2c", "seeds": [0], "train": {"reward_rescale": [1, 1]}}, "train.reward_rescale"),
        ({"mode": "harness", "seeds": [0]}, "env.kind"),
        ({"mode": "mo_a2c", "seeds": [0], "preset": "nope"}, "preset"),
    ],
)
def test_validation_errors(doc, key):
    with pytest.raises(ConfigurationError) as exc:
        resolve(doc)
    assert f"{key}:" in str(exc.value)


def test_paper_preset():
    mo = resolve({"mode": "mo_a2c", "seeds": [0]}, preset="paper_5_2")
    e, t = mo.env, mo.train
    assert (e["num_files"], e["cache_capacity"], e["bs_intensity"], e["user_intensity"]) == (100, 10, 10.0, 1e5)
    assert (e["horizon"], e["discount"]) == (256, 0.96)
    assert (t["lr_actor"], t["lr_critic"], t["critic_hidden"], t["actor_hidden"]) == (1e-3, 1e-3, 64, 128)
    so = resolve({"mode": "so_a2c", "seeds": [0], "train": {"scales": [1, 1, 1]}}, preset="paper_5_2")
    assert so.train["actor_hidden"] == 64
    assert "so_actor_hidden" in PRESETS["paper_5_2"]["train"]


def test_file_overrides_preset_and_cli_overrides_file(tmp_path):
    path = _write(tmp_path, 'mode = "mo_a2c"\nseeds = [3]\npreset = "paper_5_2"\n[env]\nhorizon = 32\n')
    cfg = parse_config(path, seeds=[7, 8], output_dir=tmp_path / "o")
    assert cfg.env["horizon"] == 32 and cfg.env["num_files"] == 100
    assert cfg.seeds == [7, 8] and cfg.output_dir == tmp_path / "o"


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigurationError):
        parse_config(_write(tmp_path, "mode = \n"))


def test_echo_round_trips():
    cfg = resolve({"mode": "mo_a2c", "seeds": [0, 2], "train": {"lr_actor": 0.1 + 0.2}})
    doc = cfg.resolved()
    back = tomli.loads(dump_toml(doc))
    assert back == doc
    assert back["train"]["lr_actor"] == 0.1 + 0.2


def test_a2c_config_rescaling():
    cfg = resolve({"mode": "mo_a2c", "seeds": [0], "train": {"reward_rescale": [0.1, 1, 1]}})
    env = cfg.make_env()
    a = cfg.a2c_config(env)
    np.testing.assert_allclose(a.reward_scale, np.array([0.1, 1, 1]) * env.reward_normalizer())
    np.testing.assert_allclose(a.reward_center, env.reward_center())
    raw = resolve({"mode": "mo_a2c", "seeds": [0],
                   "train": {"normalize_rewards": False, "clip_norm": 0.0}}).a2c_config()
    assert raw.reward_center is None and raw.clip_norm is None


# ---------------------------------------------------------------- runner


@pytest.mark.parametrize("mode", ["mo_a2c", "so_a2c"])
def test_run_training_artifacts(tmp_path, mode):
    extra = {"scales": [0.1, 1.0, 1.0]} if mode == "so_a2c" else {}
    cfg = resolve(_tiny_doc(mode, **extra), output_dir=tmp_path)
    assert run(cfg) == 0
    rows = _rows(tmp_path / "episodes.csv")
    assert len(rows) == 2 * 4
    cols = list(rows[0])
    assert cols[:5] == ["episode", "seed", "qos_return", "bw_return", "bh_return"]
    if mode == "mo_a2c":
        assert "alpha_actor_bw" in cols and "alpha_critic_bh" in cols
        for r in rows:
            assert sum(float(r[f"alpha_actor_{o}"]) for o in ("qos", "bw", "bh")) == pytest.approx(1.0)
    else:
        assert "scalarized_return_learner" in cols
    summary = _rows(tmp_path / "summary.csv")
    assert [r["seed"] for r in summary] == ["0", "1"]
    assert "threshold_crossing_episode" in summary[0]
    svgs = sorted(p.name for p in tmp_path.glob("*.svg"))
    assert "qos_return.svg" in svgs
    for p in tmp_path.glob("*.svg"):
        assert ET.parse(p).getroot().tag.endswith("svg")
    echo = tomli.loads((tmp_path / "config.resolved.toml").read_text())
    assert echo["mode"] == mode and echo["seeds"] == [0, 1]


def test_rerun_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert run(resolve(_tiny_doc(), output_dir=tmp_path / sub)) == 0
    for name in ("episodes.csv", "summary.csv", "config.resolved.toml"):
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text()
        if name == "config.resolved.toml":
            a, b = a.replace(str(tmp_path / "a"), ""), b.replace(str(tmp_path / "b"), "")
        assert a == b
    assert (tmp_path / "a" / "qos_return.svg").read_bytes() == (tmp_path / "b" / "qos_return.svg").read_bytes()


def test_parallel_jobs_match_serial(tmp_path):
    run(resolve(_tiny_doc(), output_dir=tmp_path / "s"))
    doc = _tiny_doc()
    doc["jobs"] = 2
    run(resolve(doc, output_dir=tmp_path / "p"))
    assert (tmp_path / "s" / "episodes.csv").read_text() == (tmp_path / "p" / "episodes.csv").read_text()


def test_svg_only_plots_csv_data(tmp_path):
    run(resolve(_tiny_doc(seeds=(0,)), output_dir=tmp_path))
    rows = _rows(tmp_path / "episodes.csv")
    root = ET.parse(tmp_path / "qos_return.svg").getroot()
    assert root.tag.endswith("svg")
    # one data point per episode; matplotlib emits them as a single path
    text = (tmp_path / "qos_return.svg").read_text()
    assert text.count("<path") >= 1 and len(rows) == 4


def test_harness_mode_artifacts(tmp_path):
    doc = {"mode": "harness", "seeds": [0, 1, 2], "env": {"kind": "synthetic"},
           "harness": {"iterations": 50, "decay_iterations": 80}}
    assert run(resolve(doc, output_dir=tmp_path)) == 0
    bounds = _rows(tmp_path / "bounds.csv")
    assert len(bounds) == 50 and "recursion_ok" in bounds[0]
    assert len(_rows(tmp_path / "decay.csv")) == 81
    assert "theorem1" in (tmp_path / "report.txt").read_text()
    for name in ("mean_distance.svg", "decay_mean_distance.svg"):
        ET.parse(tmp_path / name)


# ---------------------------------------------------------------- entry point


def test_main_exit_codes(tmp_path, capsys):
    ok = _write(tmp_path, dump_toml({"mode": "harness", "seeds": [0], "env": {"kind": "synthetic"},
                                     "harness": {"iterations": 5, "decay_iterations": 5}}), "ok.toml")
    assert main(["run", str(ok), "--output-dir", str(tmp_path / "ok")]) == 0

    bad = _write(tmp_path, 'mode = "mo_a2c"\nseeds = [0]\n[env]\ndiscount = 1.5\n', "bad.toml")
    assert main(["run", str(bad), "--output-dir", str(tmp_path / "bad")]) == 1
    assert "env.discount" in capsys.readouterr().err
    assert not (tmp_path / "bad").exists()

    assert main(["run", str(ok), "--seeds", "", "--output-dir", str(tmp_path / "empty")]) == 1
    assert not (tmp_path / "empty").exists()

    boom = _write(tmp_path, dump_toml({"mode": "harness", "seeds": [0], "env": {"kind": "synthetic"},
                                       "harness": {"iterations": 5, "decay_iterations": 200,
                                                   "mu0": 100.0}}), "boom.toml")
    assert main(["run", str(boom), "--output-dir", str(tmp_path / "boom")]) == 2
    assert "diverged" in capsys.readouterr().err
    assert not (tmp_path / "boom").exists()


def test_console_script_runs(tmp_path):
    cfg = _write(tmp_path, dump_toml(_tiny_doc(seeds=(0,))))
    proc = subprocess.run([sys.executable, "-m", "moa2c.cli", "run", str(cfg), "--output-dir",
                           str(tmp_path / "out")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "out" / "episodes.csv").exists()

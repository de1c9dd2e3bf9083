import os

import pytest

from acksched.cli import PRESETS, load_config, main
from acksched.errors import InvalidArgument


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_config(tmp_path):
    cfg, opts = load_config(write(tmp_path, "P0 = 3e4  # watts\nK=2\neps=0.1\nack_model = exact\ntrials=7\n"))
    assert cfg.total_power == 3e4 and cfg.users == 2 and cfg.target_per == 0.1
    assert cfg.ack_model == "exact" and opts == {"trials": 7}
    with pytest.raises(InvalidArgument):
        load_config(write(tmp_path, "colour = red\n"))
    with pytest.raises(InvalidArgument):
        load_config(write(tmp_path, "K = many\n"))
    with pytest.raises(InvalidArgument):
        load_config(str(tmp_path / "missing.cfg"))


def test_run_writes_csv_and_is_idempotent(tmp_path, capsys):
    c = write(tmp_path, "P0 = 30000\ntraces = yes\n")
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    for o in outs:
        assert main(["run", "--config", c, "--out", o, "--trials", "200", "--seed", "4"]) == 0
    a = open(os.path.join(outs[0], "metrics.csv")).read()
    assert a == open(os.path.join(outs[1], "metrics.csv")).read()
    lines = a.splitlines()
    assert lines[0].startswith("# ") and "config_hash=" in lines[0] and "seed=4" in lines[0]
    assert "phi_method=log-domain-convolution" in lines[0]
    sched = [l.split(",")[2] for l in lines[2:]]
    assert sched == ["proposed", "perfect_csit", "round_robin", "oracle_replay"]
    assert "skipped" in lines[-1]
    assert os.path.exists(os.path.join(outs[0], "slot_means.csv"))


def test_run_single_trial(tmp_path):
    assert main(["run", "--trials", "1", "--seed", "2", "--out", str(tmp_path), "--scheduler", "proposed"]) == 0


def test_bad_config_exit_2(tmp_path):
    assert main(["run", "--config", write(tmp_path, "eps = 0\n"), "--out", str(tmp_path)]) == 2
    assert main(["run", "--scheduler", "genie", "--out", str(tmp_path)]) == 2


def test_sweep_presets(tmp_path):
    assert set(PRESETS) == {"numch", "snr", "users", "outage", "doppler"}
    assert main(["sweep", "--fig", "nope"]) == 2
    assert main(["sweep", "--fig", "numch", "--trials", "20", "--out", str(tmp_path)]) == 0
    rows = open(tmp_path / "numch.csv").read().splitlines()[2:]
    assert [r.split(",")[1] for r in rows[::3]] == ["1", "2", "3", "4", "5"]
    assert main(["sweep", "--fig", "doppler", "--trials", "20", "--out", str(tmp_path)]) == 0
    assert main(["sweep", "--param", "K", "--values", "1,2", "--trials", "20", "--out", str(tmp_path)]) == 0
    assert main(["sweep", "--param", "K", "--out", str(tmp_path)]) == 2


def test_oracle_compare(tmp_path, capsys):
    assert main(["oracle-compare", "--horizon", "1", "--out", str(tmp_path)]) == 0
    assert "ratio 1.000000" in capsys.readouterr().out
    assert main(["oracle-compare", "--horizon", "13", "--out", str(tmp_path)]) == 3
    assert main(["run", "--scheduler", "oracle_replay", "--trials", "5", "--out", str(tmp_path)]) == 3
    c = write(tmp_path, "M = 3\neps = 0.05\ntheta_grid = 8\nratio_threshold = 1.5\n")
    assert main(["oracle-compare", "--config", c, "--out", str(tmp_path)]) == 1


def test_phi_table(tmp_path):
    assert main(["phi-table", "--D", "2", "--resolution", "128", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "phi_D2_n128_log-domain-convolution.csv").read_text().splitlines()
    assert text[0].startswith("# ") and text[1] == "x,q" and len(text) == 2 + 129
    assert main(["phi-table", "--D", "0", "--out", str(tmp_path)]) == 2

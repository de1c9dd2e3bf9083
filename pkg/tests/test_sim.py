import math

import numpy as np
import pytest

import acksched.sim as sim
from acksched.channel import SystemConfig
from acksched.errors import InvalidArgument
from acksched.phi import inv_cdf
from acksched.sim import ExperimentSpec, run_experiment, sweep, write_metrics_csv, write_slot_means_csv

HI = 3e4  # 30 dB transmit SNR over unit noise for M = 30


def test_single_slot_closed_form(phi_for):
    cfg = SystemConfig(subbands=1, users=1, packets_per_slot=1, total_power=1e4)
    m = run_experiment(ExperimentSpec(cfg, "proposed", 20_000), phi_for(1))
    theta = inv_cdf(phi_for(1), cfg.eps)
    r = cfg.bits_scale * math.log2(cfg.total_power / cfg.N * theta)
    assert abs(m.mean_goodput - 0.95 * r) < 3 * m.goodput_se


def test_zero_power_perfect_csit(phi_for):
    m = run_experiment(ExperimentSpec(SystemConfig(total_power=0.0), "perfect_csit", 100), phi_for(3))
    assert m.mean_goodput == 0.0 and m.per == 0.0


def test_deterministic_and_batch_independent(phi_for, monkeypatch):
    spec = ExperimentSpec(SystemConfig(total_power=HI, doppler_max=20.0), "proposed", 3000)
    a = run_experiment(spec, phi_for(3))
    b = run_experiment(spec, phi_for(3))
    monkeypatch.setattr(sim, "_CHUNK", 257)
    c = run_experiment(spec, phi_for(3))
    for x in (b, c):
        assert x.mean_goodput == a.mean_goodput and x.per == a.per
        assert np.array_equal(x.mean_power, a.mean_power)


def test_seed_changes_results(phi_for):
    cfg = SystemConfig(total_power=HI)
    a = run_experiment(ExperimentSpec(cfg, "proposed", 500), phi_for(3))
    b = run_experiment(ExperimentSpec(cfg.replace(seed=1), "proposed", 500), phi_for(3))
    assert a.mean_goodput != b.mean_goodput


def test_standard_error_scaling(phi_for):
    cfg = SystemConfig(total_power=HI)
    a = run_experiment(ExperimentSpec(cfg, "proposed", 2000), phi_for(3))
    b = run_experiment(ExperimentSpec(cfg, "proposed", 8000), phi_for(3))
    assert a.goodput_se / b.goodput_se == pytest.approx(2.0, rel=0.2)


def test_validation(phi_for):
    with pytest.raises(InvalidArgument):
        ExperimentSpec(SystemConfig(), "genie")
    with pytest.raises(InvalidArgument):
        ExperimentSpec(SystemConfig(), trials=0)
    with pytest.raises(InvalidArgument):
        ExperimentSpec(SystemConfig(), sweep_param="N", sweep_values=[1])
    with pytest.raises(InvalidArgument):
        ExperimentSpec(SystemConfig(), sweep_param="eps", sweep_values=[0.0])
    with pytest.raises(InvalidArgument):
        run_experiment(ExperimentSpec(SystemConfig()), phi_for(2))
    with pytest.raises(InvalidArgument):
        run_experiment(ExperimentSpec(SystemConfig(), "oracle_replay"), phi_for(3))


def test_oracle_replay_matches_dp_value(phi_for):
    from acksched.oracle import OracleConfig, dp_optimal
    cfg = SystemConfig(subbands=1, users=1, packets_per_slot=4, total_power=4 * 64e3, ack_model="ideal")
    m = run_experiment(ExperimentSpec(cfg, "oracle_replay", 20_000, oracle_theta_grid=8), phi_for(1))
    v, _ = dp_optimal(OracleConfig(horizon=4, theta_grid=8, total_power=cfg.total_power), phi_for(1))
    assert abs(m.mean_goodput - v) < 3 * m.goodput_se


def test_sweep_subbands_perfect_csit(phi_for):
    spec = ExperimentSpec(SystemConfig(total_power=HI), "perfect_csit", 4000, "D", [1, 2, 3, 4, 5])
    rows = sweep(spec, phi_for)
    g = [r.metrics.mean_goodput for r in rows]
    assert all(a >= b for a, b in zip(g, g[1:]))
    assert [r.config.subbands for r in rows] == [1, 2, 3, 4, 5]


def test_sweep_users_proposed(phi_for):
    spec = ExperimentSpec(SystemConfig(total_power=HI), "proposed", 4000, "K", list(range(1, 10)))
    rows = sweep(spec, phi_for)
    g = np.array([r.metrics.mean_goodput for r in rows])
    se = np.array([r.metrics.goodput_se for r in rows])
    # non-decreasing up to Monte Carlo noise
    assert np.all(np.diff(g) > -3 * np.hypot(se[1:], se[:-1]))
    assert g[-1] > g[0]


def test_power_trace_flattens_for_small_eps(phi_for):
    cfg = SystemConfig(total_power=HI, target_per=1e-6)
    m = run_experiment(ExperimentSpec(cfg, "proposed", 200), phi_for(3))
    assert np.allclose(m.mean_power, cfg.total_power / cfg.M, rtol=1e-4)
    big = run_experiment(ExperimentSpec(cfg.replace(target_per=0.2), "proposed", 200), phi_for(3))
    assert big.mean_power[0] > 2 * cfg.total_power / cfg.M


def test_eps_endpoints(phi_for):
    cfg = SystemConfig(total_power=HI)
    tiny = run_experiment(ExperimentSpec(cfg.replace(target_per=1e-9), "proposed", 500), phi_for(3))
    mid = run_experiment(ExperimentSpec(cfg.replace(target_per=0.07), "proposed", 500), phi_for(3))
    big = run_experiment(ExperimentSpec(cfg.replace(target_per=0.9), "proposed", 500), phi_for(3))
    assert tiny.mean_goodput < 0.05 * mid.mean_goodput
    assert big.mean_goodput < mid.mean_goodput


def test_trace_violations_clean(phi_for):
    cfg = SystemConfig(total_power=HI)
    h = sim.trial_gains(cfg, 0, 500)
    bt = sim.run_scheduler("proposed", cfg, phi_for(3), h, record_bounds=True)
    assert sim.trace_violations(cfg, h, bt) == []
    bt.power[0, 0] += 1.0
    assert sim.trace_violations(cfg, h, bt)


def test_csv_output(tmp_path, phi_for):
    spec = ExperimentSpec(SystemConfig(total_power=HI), "round_robin", 100, "eps", [0.05, 0.1])
    rows = sweep(spec, phi_for)
    path = tmp_path / "m.csv"
    write_metrics_csv(path, rows, {"seed": 0, "config_hash": "abc"})
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=0 config_hash=abc"
    assert lines[1].startswith("sweep_param,sweep_value,scheduler")
    assert len(lines) == 4
    write_slot_means_csv(tmp_path / "s.csv", rows, {"seed": 0})
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 2 + 2 * 30

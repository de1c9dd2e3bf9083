import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acksched.channel import (ChannelRealization, SystemConfig, ack_outcome, capacity_exact,
                              capacity_highsnr, channel_trajectory, doppler_correlation,
                              draw_channel, evolve_doppler, rate_threshold)
from acksched.errors import InvalidArgument


def unit(N, D, M=1, T=1.0, **kw):
    return SystemConfig(subcarriers=N, subbands=D, packets_per_slot=M, slot_duration=T, **kw)


@pytest.mark.parametrize("bad", [dict(target_per=0.0), dict(target_per=1.0), dict(subbands=0),
                                 dict(subbands=65), dict(slot_duration=0), dict(total_power=-1),
                                 dict(ack_model="soft"), dict(doppler_max=-5), dict(users=2.5)])
def test_config_validation(bad):
    with pytest.raises(InvalidArgument):
        SystemConfig(**bad)


def test_config_helpers():
    cfg = SystemConfig()
    assert cfg.bits_scale == pytest.approx(64 * 0.1 / (3 * 30))
    assert cfg.transmit_snr_db == pytest.approx(10 * math.log10(24 / 30))
    assert cfg.replace(users=5).K == 5


def test_draw_channel_statistics():
    rng = np.random.default_rng(0)
    cfg = SystemConfig(users=1, subbands=1)
    h = np.array([draw_channel(cfg, rng).power_gains[0, 0] for _ in range(100_000)])
    assert h.mean() == pytest.approx(1.0, abs=0.01)


def test_realization_consistency():
    r = draw_channel(SystemConfig(users=2, subbands=3), np.random.default_rng(1))
    assert r.power_gains.shape == (2, 3)
    assert np.allclose(r.products, r.power_gains.prod(axis=1), rtol=1e-12)
    assert np.all(r.power_gains >= 0)
    with pytest.raises(ValueError):
        r.power_gains[0, 0] = 3.0


def test_draw_channel_deterministic():
    cfg = SystemConfig()
    a = draw_channel(cfg, np.random.default_rng(5))
    b = draw_channel(cfg, np.random.default_rng(5))
    assert np.array_equal(a.complex_gains, b.complex_gains)


def test_capacity_examples():
    assert capacity_exact(2.0, [1.0, 1.0], unit(2, 2)) == pytest.approx(2.0)
    assert capacity_exact(0.0, [3.0, 1.0], unit(2, 2)) == 0.0
    assert capacity_exact(5.0, [0.0, 0.0, 0.0], unit(6, 3)) == 0.0
    assert capacity_highsnr(8.0, 2.0, unit(4, 1)) == pytest.approx(8.0)
    assert capacity_highsnr(4.0, 1.0, unit(4, 1)) == 0.0
    with pytest.raises(InvalidArgument):
        capacity_exact(-1.0, [1.0], unit(1, 1))
    with pytest.raises(InvalidArgument):
        capacity_highsnr(1.0, 0.0, unit(1, 1))


def test_ack_examples():
    cfg = unit(4, 1)
    assert ack_outcome("ideal", 1.0, 1.0, [5.0], cfg, theta=4.0) == 1
    assert ack_outcome("ideal", 1.0, 1.0, [4.0], cfg, theta=4.0) == 1
    assert ack_outcome("ideal", 1.0, 1.0, [3.0], cfg, theta=4.0) == 0
    assert ack_outcome("exact", 0.0, 1.0, [0.0], cfg) == 1
    # exact model at equality
    r = capacity_exact(8.0, [2.0], cfg)
    assert ack_outcome("exact", r, 8.0, [2.0], cfg) == 1


def test_ideal_ack_is_threshold_test():
    rng = np.random.default_rng(2)
    cfg = SystemConfig(total_power=3e4)
    p = rng.uniform(1, 2000, 100_000)
    r = rng.uniform(0.01, 5, 100_000)
    h = rng.exponential(size=(100_000, cfg.D))
    theta = (cfg.N / p) ** cfg.D * 2.0 ** (r / cfg.bits_scale)
    for i in range(0, 100_000, 997):
        assert ack_outcome("ideal", r[i], p[i], h[i], cfg) == int(h[i].prod() >= theta[i])
        assert rate_threshold(p[i], r[i], cfg) == pytest.approx(theta[i], rel=1e-12)


def highsnr_draws(rng, n, D):
    """(p, h) pairs whose realised per-subcarrier SNR ``p h_d / N`` is in [10, 30] dB."""
    cfg = SystemConfig(subbands=D)
    ps, hs = [], []
    while sum(len(x) for x in ps) < n:
        p = cfg.N * 10 ** rng.uniform(1, 3, n)
        h = rng.exponential(size=(n, D))
        snr = p[:, None] * h / cfg.N
        keep = np.all((snr >= 10) & (snr <= 1000), axis=1)
        ps.append(p[keep])
        hs.append(h[keep])
    return cfg, np.concatenate(ps)[:n], np.concatenate(hs)[:n]


def test_highsnr_gap():
    cfg, p, h = highsnr_draws(np.random.default_rng(10), 10_000, 3)
    exact = capacity_exact(p, h, cfg)
    approx = capacity_highsnr(p, h.prod(axis=1), cfg)
    gap = np.abs(exact - approx) / exact
    assert np.mean(gap < 0.02) >= 0.95


def test_doppler_rho():
    cfg = SystemConfig()
    # J0(pi / 3) = 0.74407 (series: 1 - x^2/4 + x^4/64 - x^6/2304)
    x = math.pi / 3
    assert float(doppler_correlation(50.0, cfg)) == pytest.approx(1 - x**2 / 4 + x**4 / 64 - x**6 / 2304, abs=1e-4)
    assert float(doppler_correlation(0.0, cfg)) == 1.0


def test_doppler_rho_frozen(frozen):
    assert float(doppler_correlation(50.0, SystemConfig())) == pytest.approx(frozen["j0_fd50_T0.1_M30"], rel=1e-12)


def test_evolve_identity_and_marginals():
    cfg = SystemConfig(users=200, subbands=3)
    rng = np.random.default_rng(4)
    r0 = draw_channel(cfg, rng)
    assert evolve_doppler(r0, 0.0, cfg, rng) is r0
    r = r0
    for _ in range(100):
        r = evolve_doppler(r, 80.0, cfg, rng)
    assert r.power_gains.mean() == pytest.approx(1.0, rel=0.02 * 3)
    # large Doppler decorrelates: correlation of |g|^2 near zero
    fresh = evolve_doppler(r0, 1e6, cfg, rng)
    assert abs(np.corrcoef(r0.power_gains.ravel(), fresh.power_gains.ravel())[0, 1]) < 0.2


def test_doppler_marginal_mean_large_sample():
    cfg = SystemConfig(users=1, subbands=1, doppler_max=100.0, packets_per_slot=101)
    h = channel_trajectory(cfg, np.random.default_rng(9), 20_000)
    assert h.shape == (20_000, 101, 1, 1)
    assert h[:, -1].mean() == pytest.approx(1.0, rel=0.02)


def test_trajectory_static_shape():
    cfg = SystemConfig()
    h = channel_trajectory(cfg, np.random.default_rng(0), 7)
    assert h.shape == (7, 1, 3, 3)


@given(st.floats(0, 1e4), st.lists(st.floats(0, 100), min_size=3, max_size=3))
def test_capacity_nonnegative_and_monotone_in_power(p, h):
    cfg = SystemConfig()
    c1 = capacity_exact(p, h, cfg)
    c2 = capacity_exact(p * 2 + 1, h, cfg)
    assert 0 <= c1 <= c2

import numpy as np
import pytest

from laco.config import SliceSpec, Sinusoid, SystemConfig, load_mcs_table
from laco.env import (CHANNEL, TRAFFIC, SnrMap, capacity_estimate, draw_channel, draw_channel_epoch, draw_rayleigh,
                      draw_traffic, draw_traffic_epoch, slice_rng, zeta)


def test_degenerate_traffic():
    s = SliceSpec(0, 10, traffic_mean=8, traffic_std=0)
    x = draw_traffic_epoch(s, 0, 1000, slice_rng(1, 0, TRAFFIC))
    assert (x == 8000).all()
    assert draw_traffic(s, 0, 5, slice_rng(1, 0, TRAFFIC)).demand_bits == 8000


def test_counterphase_means_sum():
    a = SliceSpec(0, 20, 8, modulation=Sinusoid(8, 40, 37, 0))
    b = SliceSpec(1, 20, 8, modulation=Sinusoid(8, 40, 37, np.pi))
    n = np.arange(500)
    np.testing.assert_allclose(a.mean_rate(n) + b.mean_rate(n), 48, atol=1e-9)
    assert a.mean_rate(0) == pytest.approx(24)


def test_traffic_law_of_large_numbers():
    s = SliceSpec(0, 10, traffic_mean=8, traffic_std=10)
    x = draw_traffic_epoch(s, 0, 10**6, slice_rng(7, 0, TRAFFIC))
    # clamping at zero biases the mean upwards; the mean of the clamped draws
    # of N(8000, 10000) is ~ 8000 + 10000*phi(0.8) - 8000*Phi(-0.8)
    from scipy.stats import norm
    z = 0.8
    expected = 8000 * norm.cdf(z) + 10000 * norm.pdf(z)
    assert x.mean() == pytest.approx(expected, rel=0.01)
    assert (x >= 0).all()


def test_traffic_mean_unclamped_regime():
    s = SliceSpec(0, 10, traffic_mean=8, traffic_std=1)
    x = draw_traffic_epoch(s, 0, 10**6, slice_rng(7, 0, TRAFFIC))
    assert x.mean() == pytest.approx(8000, rel=0.01)


def test_rayleigh_variance():
    s = SliceSpec(0, 10, 1, rayleigh_scale=0.2)
    r = draw_rayleigh(s, 10**6, slice_rng(3, 0, CHANNEL))
    assert r.var() == pytest.approx((4 - np.pi) / 2 * 0.04, rel=0.02)


def test_vanishing_scale_single_level():
    cfg = SystemConfig()
    s = SliceSpec(0, 10, 1, rayleigh_scale=1e-6)
    _, _, g = draw_channel_epoch(s, 10000, slice_rng(0, 0, CHANNEL), SnrMap(cfg))
    assert len(np.unique(g)) == 1


def test_levels_in_range():
    for G in (1, 3, 8):
        cfg = SystemConfig(channel_levels=G)
        _, _, g = draw_channel_epoch(SliceSpec(0, 10, 1, rayleigh_scale=0.5), 5000, slice_rng(0, 0, CHANNEL), SnrMap(cfg))
        assert g.min() >= 0 and g.max() <= G - 1
    c = draw_channel(SliceSpec(0, 10, 1), 3, slice_rng(0, 0, CHANNEL), SnrMap(SystemConfig(channel_levels=1)))
    assert c.level == 0 and c.tti == 3


def test_snr_map_percentiles():
    cfg = SystemConfig(snr_min_db=0, snr_max_db=30, rayleigh_ref_scale=0.3)
    m = SnrMap(cfg)
    from scipy.stats import rayleigh
    assert m.to_db(rayleigh.ppf(0.01, scale=0.3)) == pytest.approx(0)
    assert m.to_db(rayleigh.ppf(0.99, scale=0.3)) == pytest.approx(30)


def test_streams_deterministic_and_independent():
    a = SliceSpec(0, 10, 8, 3)
    b = SliceSpec(1, 10, 8, 3)
    b2 = SliceSpec(1, 10, 30, 9, rayleigh_scale=0.9)
    x1 = draw_traffic_epoch(a, 0, 100, slice_rng(5, a.id, TRAFFIC))
    x2 = draw_traffic_epoch(a, 0, 100, slice_rng(5, a.id, TRAFFIC))
    assert np.array_equal(x1, x2)
    # slice 0's stream does not depend on slice 1's parameters
    from laco.engine import Network
    n1 = Network(SystemConfig(), [a, b], seed=5).draw(0)
    n2 = Network(SystemConfig(), [a, b2], seed=5).draw(0)
    assert np.array_equal(n1.arrivals[0], n2.arrivals[0])
    assert np.array_equal(n1.snr_db[0], n2.snr_db[0])
    assert not np.array_equal(n1.arrivals[1], n2.arrivals[1])


def test_zeta():
    table = load_mcs_table()
    top = table.entries[-1]
    assert zeta(0, 25, table) == 0
    assert zeta(10, top.threshold_db + 1, table) == 10 * top.bits_per_prb
    for snr in (-3, 5, 12, 33):
        assert zeta(8, snr, table) == 2 * zeta(4, snr, table)
    with pytest.raises(ValueError):
        zeta(-1, 10, table)


def test_zeta_monotone():
    table = load_mcs_table()
    snr = np.linspace(-5, 40, 200)
    for y in (0, 1, 7, 50):
        v = [zeta(y, s, table) for s in snr]
        assert all(a <= b for a, b in zip(v, v[1:]))
        assert all(zeta(y, s, table) <= zeta(y + 1, s, table) for s in snr)


def test_capacity_estimate():
    bits = [20, 50, 100]
    assert capacity_estimate([0, 1, 0], bits, 1000, 10) == 50 * 1000 * 10
    assert capacity_estimate([0.5, 0, 0.5], bits, 10, 3) == pytest.approx(60 * 10 * 3)
    assert capacity_estimate([0.2, 0.3, 0.5], bits, 1000, 0) == 0
    with pytest.raises(ValueError):
        capacity_estimate([0.5, 0.6, 0], bits, 1, 1)

"""Channel model tests: closed-form cross-checks and shape properties."""

import math

import numpy as np
import pytest

from uavedge.channel import (AgChannelParams, OffloadChannelParams,
                             avg_path_loss, los_probability, mean_offload_gain,
                             offload_capacity, optimal_altitude,
                             sample_offload_gain)


def urban():
    return AgChannelParams(carrier_freq_hz=2e9, eta_los=1.0, eta_nlos=20.0,
                           env_a=9.61, env_b=0.16)


class TestLosProbability:
    def test_elevation_equal_to_a_cancels_exponent(self):
        params = urban()
        # pick h/r with elevation angle exactly env_a degrees
        r = 100.0
        h = r * math.tan(math.radians(params.env_a))
        assert los_probability(r, h, params) == pytest.approx(
            1.0 / (1.0 + params.env_a), rel=1e-12)

    def test_ground_level(self):
        params = urban()
        expected = 1.0 / (1.0 + params.env_a
                          * math.exp(params.env_a * params.env_b))
        assert los_probability(100.0, 0.0, params) == pytest.approx(
            expected, rel=1e-12)

    def test_independent_evaluation(self):
        # direct re-evaluation of the logistic-in-elevation form
        a, b = 9.61, 0.16
        params = urban()
        theta = math.degrees(math.atan(100.0 / 100.0))
        expected = 1.0 / (1.0 + a * math.exp(-b * (theta - a)))
        assert los_probability(100.0, 100.0, params) == pytest.approx(
            expected, rel=1e-12)

    def test_undefined_elevation(self):
        with pytest.raises(ValueError):
            los_probability(0.0, 0.0, urban())

    def test_in_unit_interval_and_increasing_in_h(self):
        params = urban()
        rng = np.random.default_rng(7)
        for _ in range(200):
            r = rng.uniform(1.0, 500.0)
            h1, h2 = sorted(rng.uniform(0.0, 500.0, size=2))
            p1 = los_probability(r, h1, params)
            p2 = los_probability(r, h2, params)
            assert 0.0 < p1 < 1.0
            if h2 > h1:
                assert p2 >= p1


class TestAvgPathLoss:
    def test_equal_etas_collapse(self):
        params = AgChannelParams(eta_los=5.0, eta_nlos=5.0)
        r, h = 120.0, 90.0
        k = 4.0 * math.pi * params.carrier_freq_hz / params.light_speed
        assert avg_path_loss(r, h, params) == pytest.approx(
            k * k * (r * r + h * h) * 5.0, rel=1e-12)

    def test_vertical_link_is_los_dominated(self):
        params = urban()
        p0 = los_probability(0.0, 100.0, params)
        assert p0 > 0.99  # 90 degrees elevation: LOS almost certain

    def test_recomposition(self):
        params = urban()
        rng = np.random.default_rng(3)
        k = 4.0 * math.pi * params.carrier_freq_hz / params.light_speed
        for _ in range(100):
            r = rng.uniform(0.1, 400.0)
            h = rng.uniform(0.0, 400.0)
            p0 = 1.0 / (1.0 + params.env_a * math.exp(
                -params.env_b * (math.degrees(math.atan2(h, r))
                                 - params.env_a)))
            l0 = k * k * (r * r + h * h) * params.eta_los
            l1 = k * k * (r * r + h * h) * params.eta_nlos
            assert avg_path_loss(r, h, params) == pytest.approx(
                p0 * l0 + (1 - p0) * l1, rel=1e-12)

    def test_bounded_by_components(self):
        params = urban()
        rng = np.random.default_rng(4)
        k = 4.0 * math.pi * params.carrier_freq_hz / params.light_speed
        for _ in range(100):
            r, h = rng.uniform(0.5, 300.0, size=2)
            l0 = k * k * (r * r + h * h) * params.eta_los
            l1 = k * k * (r * r + h * h) * params.eta_nlos
            loss = avg_path_loss(r, h, params)
            assert min(l0, l1) <= loss <= max(l0, l1)


class TestOptimalAltitude:
    def test_scales_linearly_with_radius(self):
        params = urban()
        h1 = optimal_altitude(60.0, params)
        h2 = optimal_altitude(120.0, params)
        assert h2 / h1 == pytest.approx(2.0, rel=1e-6)

    def test_degenerate_channel_prefers_ground(self):
        params = AgChannelParams(eta_los=5.0, eta_nlos=5.0)
        assert optimal_altitude(60.0, params) < 1e-4 * 60.0

    def test_matches_grid_search(self):
        params = urban()
        r = 60.0
        hs = np.linspace(0.0, 20.0 * r, 200001)
        losses = [avg_path_loss(r, h, params) for h in hs]
        h_grid = hs[int(np.argmin(losses))]
        assert optimal_altitude(r, params) == pytest.approx(h_grid, rel=5e-3)


class TestOffloadGain:
    def test_reference_distance(self):
        chan = OffloadChannelParams(cloud_position=np.array([0.0, 0.0]))
        gain = mean_offload_gain(np.array([chan.d0, 0.0]), 0.0, chan)
        assert gain == pytest.approx(chan.g0, rel=1e-12)

    def test_exponent_arithmetic(self):
        chan = OffloadChannelParams(pathloss_exp=4.0,
                                    cloud_position=np.array([0.0, 0.0]))
        gain = mean_offload_gain(np.array([2.0 * chan.d0, 0.0]), 0.0, chan)
        assert gain == pytest.approx(chan.g0 / 16.0, rel=1e-12)

    def test_zero_distance_rejected(self):
        chan = OffloadChannelParams(cloud_position=np.array([5.0, 5.0]))
        with pytest.raises(ValueError):
            mean_offload_gain(np.array([5.0, 5.0]), 0.0, chan)

    def test_monte_carlo_mean(self):
        chan = OffloadChannelParams(cloud_position=np.array([0.0, 0.0]))
        pos = np.array([300.0, 400.0])  # distance 500
        rng = np.random.default_rng(11)
        fades = rng.exponential(1.0, size=1_000_000)
        empirical = fades.mean() * mean_offload_gain(pos, 0.0, chan)
        expected = chan.g0 * (chan.d0 / 500.0) ** chan.pathloss_exp
        assert empirical == pytest.approx(expected, rel=0.01)
        # and the sampler itself uses a unit-mean exponential
        draws = [sample_offload_gain(pos, 0.0, chan,
                                     np.random.default_rng(100 + i))
                 for i in range(2000)]
        assert np.mean(draws) == pytest.approx(expected, rel=0.1)


class TestOffloadCapacity:
    def test_zero_power_zero_bits(self):
        chan = OffloadChannelParams()
        assert offload_capacity(0.5, 0.0, 1e-12, chan, 0.5) == 0.0
        assert offload_capacity(0.0, 3.0, 1e-12, chan, 0.5) == 0.0

    def test_reference_constants_cross_check(self):
        # independent evaluation with the reference system constants
        w, tau, p = 2e6, 0.5, 5.0
        n0 = 10.0 ** (-16.7) / 1000.0
        gain = 1e-4 * (1.0 / 500.0) ** 4
        expected = w * tau * math.log2(1.0 + gain * p / (n0 * w))
        chan = OffloadChannelParams(bandwidth_w=w, noise_psd=n0)
        assert offload_capacity(1.0, p, gain, chan, tau) == pytest.approx(
            expected, rel=1e-12)

    def test_monotone_in_band_share(self):
        chan = OffloadChannelParams()
        rng = np.random.default_rng(5)
        for _ in range(300):
            gain = 10.0 ** rng.uniform(-16, -11)
            p = rng.uniform(0.0, 5.0)
            a1, a2 = sorted(rng.uniform(0.01, 1.0, size=2))
            c1 = offload_capacity(a1, p, gain, chan, 0.5)
            c2 = offload_capacity(a2, p, gain, chan, 0.5)
            assert c2 >= c1 - 1e-9

    def test_linearized_upper_bound(self):
        # log2(1+x) <= x/ln2 gives capacity <= tau*gain*p/(N0*ln2)
        chan = OffloadChannelParams()
        tau = 0.5
        rng = np.random.default_rng(6)
        for _ in range(1000):
            gain = 10.0 ** rng.uniform(-16, -11)
            p = rng.uniform(0.0, 5.0)
            a = rng.uniform(1e-6, 1.0)
            cap = offload_capacity(a, p, gain, chan, tau)
            assert cap <= tau * gain * p / (chan.noise_psd * math.log(2.0)) \
                + 1e-9

    def test_jointly_concave(self):
        chan = OffloadChannelParams()
        tau = 0.5
        rng = np.random.default_rng(8)
        for _ in range(10_000):
            gain = 10.0 ** rng.uniform(-16, -12)
            a1, a2 = rng.uniform(0.01, 1.0, size=2)
            p1, p2 = rng.uniform(0.0, 5.0, size=2)
            mid = offload_capacity(0.5 * (a1 + a2), 0.5 * (p1 + p2), gain,
                                   chan, tau)
            avg = 0.5 * (offload_capacity(a1, p1, gain, chan, tau)
                         + offload_capacity(a2, p2, gain, chan, tau))
            assert mid >= avg - 1e-9 * max(abs(mid), 1.0)


class TestParamValidation:
    def test_eta_order_enforced(self):
        with pytest.raises(ValueError):
            AgChannelParams(eta_los=30.0, eta_nlos=20.0)

    def test_positive_fields(self):
        with pytest.raises(ValueError):
            AgChannelParams(env_a=-1.0)
        with pytest.raises(ValueError):
            OffloadChannelParams(pathloss_exp=1.5)

    def test_negative_capacity_inputs_rejected(self):
        chan = OffloadChannelParams()
        with pytest.raises(ValueError):
            offload_capacity(-0.1, 1.0, 1e-13, chan, 0.5)
        with pytest.raises(ValueError):
            offload_capacity(0.1, -1.0, 1e-13, chan, 0.5)

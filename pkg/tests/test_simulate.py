import math

import numpy as np
import pytest
from scipy import stats

from fluxldp import (
    SimulationError,
    TiltProtocol,
    martingale_residual,
    parse_network,
    simulate,
)
from fluxldp.simulate import segment_propensities

BIRTH_DEATH = parse_network("0 -> A @ const(1.0); A -> 0 @ ma(2.0)")
PURE_BIRTH = parse_network("0 -> A @ const(1.0)")


def test_determinism_bit_identical():
    a = simulate(BIRTH_DEATH, 80, np.array([80]), 1.0, seed=123)
    b = simulate(BIRTH_DEATH, 80, np.array([80]), 1.0, seed=123)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.reactions, b.reactions)
    c = simulate(BIRTH_DEATH, 80, np.array([80]), 1.0, seed=124)
    assert not np.array_equal(a.times, c.times)


def test_pure_birth_event_count_is_poisson():
    # N(2) ~ Poisson(200); mean over 1000 replicas within 3 sqrt(200/1000)
    counts = [
        simulate(PURE_BIRTH, 100, np.array([0]), 2.0, seed=2024, stream=k).n_events
        for k in range(1000)
    ]
    assert abs(np.mean(counts) - 200.0) < 3.0 * math.sqrt(200.0 / 1000.0)


def test_absorbing_state_no_events():
    net = parse_network("A + A -> 0 @ ma(1.0)")
    path = simulate(net, 10, np.array([1]), 5.0, seed=1)
    assert path.n_events == 0


def test_constant_tilt_scales_birth_rate():
    theta = 0.4
    tilt = TiltProtocol.constant(np.array([theta]), 2.0)
    counts = [
        simulate(PURE_BIRTH, 100, np.array([0]), 2.0, seed=3, tilt=tilt, stream=k).n_events
        for k in range(600)
    ]
    target = 200.0 * math.exp(theta)
    assert abs(np.mean(counts) - target) < 3.0 * math.sqrt(target / 600.0)


def test_zero_tilt_pathwise_identical_to_untilted():
    tilt = TiltProtocol.constant(np.zeros(2), 1.5)
    plain = simulate(BIRTH_DEATH, 60, np.array([60]), 1.5, seed=42)
    tilted = simulate(BIRTH_DEATH, 60, np.array([60]), 1.5, seed=42, tilt=tilt)
    assert np.array_equal(plain.times, tilted.times)
    assert np.array_equal(plain.reactions, tilted.reactions)


def test_counts_never_negative():
    net = parse_network("A -> 0 @ ma(5.0); A + A -> A @ ma(3.0)")
    path = simulate(net, 20, np.array([40]), 3.0, seed=7)
    counts = path.counts_after_events()
    assert counts.min() >= 0


def test_event_cap_raises():
    with pytest.raises(SimulationError):
        simulate(PURE_BIRTH, 1000, np.array([0]), 10.0, seed=5, max_events=50)


def test_thinning_distribution_chi_square():
    # constant-rate net with constant tilt: counts are Poisson(V kbar T e^theta)
    theta = 0.3
    volume, horizon = 40, 1.0
    mean = volume * horizon * math.exp(theta)
    tilt = TiltProtocol.constant(np.array([theta]), horizon)
    counts = np.array(
        [
            simulate(PURE_BIRTH, volume, np.array([0]), horizon, seed=99, tilt=tilt, stream=k).n_events
            for k in range(10_000)
        ]
    )
    lo, hi = int(mean - 4 * math.sqrt(mean)), int(mean + 4 * math.sqrt(mean))
    edges = list(range(lo, hi + 1))
    observed = np.array(
        [np.sum(counts <= lo)]
        + [np.sum(counts == k) for k in edges[1:-1]]
        + [np.sum(counts >= hi)]
    )
    expected = np.array(
        [stats.poisson.cdf(lo, mean)]
        + [stats.poisson.pmf(k, mean) for k in edges[1:-1]]
        + [stats.poisson.sf(hi - 1, mean)]
    ) * len(counts)
    chi2 = np.sum((observed - expected) ** 2 / expected)
    p_value = stats.chi2.sf(chi2, df=len(observed) - 1)
    assert p_value > 0.01


def test_time_dependent_tilt_thinning_mean():
    # lambda(t) = exp(zeta(t)) with zeta linear 0 -> 1: mean = V int exp(t) dt
    tilt = TiltProtocol(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
    counts = [
        simulate(PURE_BIRTH, 100, np.array([0]), 1.0, seed=11, tilt=tilt, stream=k).n_events
        for k in range(800)
    ]
    target = 100.0 * (math.e - 1.0)
    assert abs(np.mean(counts) - target) < 3.0 * math.sqrt(target / 800.0)


def test_segment_propensities_align_with_events():
    path = simulate(BIRTH_DEATH, 30, np.array([30]), 1.0, seed=21)
    bounds, counts, props = segment_propensities(BIRTH_DEATH, path)
    assert len(bounds) == path.n_events + 2
    assert counts.shape == (path.n_events + 1, 1)
    assert props.shape == (path.n_events + 1, 2)
    # birth propensity is constant V; death propensity is 2 * counts
    assert np.allclose(props[:, 0], 30.0)
    assert np.allclose(props[:, 1], 2.0 * counts[:, 0])


def test_martingale_linear_pure_birth_identity():
    # f(w) = w: M(T) = N(T)/V - kbar*T for the constant-rate birth reaction
    mean, stderr = martingale_residual(
        PURE_BIRTH, 100, np.array([0]), 1.0, "linear", np.array([1.0]), 400, 17
    )
    assert abs(mean) <= 3.0 * stderr
    # per-path identity against the closed form
    path = simulate(PURE_BIRTH, 100, np.array([0]), 1.0, seed=17, stream=0)
    from fluxldp.simulate import _martingale_terminal

    assert _martingale_terminal(PURE_BIRTH, path, np.array([1.0]), False) == pytest.approx(
        path.n_events / 100 - 1.0
    )


def test_martingale_zero_exponential_is_identically_zero():
    for k in range(5):
        path = simulate(BIRTH_DEATH, 40, np.array([40]), 1.0, seed=3, stream=k)
        from fluxldp.simulate import _martingale_terminal

        assert _martingale_terminal(BIRTH_DEATH, path, np.zeros(2), True) == 0.0


def test_martingale_exponential_birth_death():
    mean, stderr = martingale_residual(
        BIRTH_DEATH, 50, np.array([50]), 1.0, "exponential", np.array([0.2, -0.1]), 2000, 23
    )
    assert abs(mean) <= 3.0 * stderr


def test_time_dependent_thinning_distribution_chi_square():
    # inhomogeneous counts are Poisson with mean V * int exp(zeta(t)) dt
    tilt = TiltProtocol(np.array([0.0, 1.0]), np.array([[-0.5], [1.0]]))
    volume, horizon = 60, 1.0
    mean = volume * float(tilt.integrate_exp(np.array([0.0]), np.array([1.0]))[0, 0])
    counts = np.array(
        [
            simulate(PURE_BIRTH, volume, np.array([0]), horizon, seed=55, tilt=tilt, stream=k).n_events
            for k in range(8000)
        ]
    )
    lo, hi = int(mean - 4 * math.sqrt(mean)), int(mean + 4 * math.sqrt(mean))
    observed = np.array(
        [np.sum(counts <= lo)]
        + [np.sum(counts == k) for k in range(lo + 1, hi)]
        + [np.sum(counts >= hi)]
    )
    expected = np.array(
        [stats.poisson.cdf(lo, mean)]
        + [stats.poisson.pmf(k, mean) for k in range(lo + 1, hi)]
        + [stats.poisson.sf(hi - 1, mean)]
    ) * len(counts)
    chi2 = np.sum((observed - expected) ** 2 / expected)
    assert stats.chi2.sf(chi2, df=len(observed) - 1) > 0.01

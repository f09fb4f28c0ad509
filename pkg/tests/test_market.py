import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzymarket.errors import InvalidInputError, PreconditionError
from fuzzymarket.market import (
    Behavior,
    MarketParams,
    MarketState,
    RealPrice,
    TraderSpec,
    excess_demand,
    grid_centers,
    indicator,
    initial_state,
    manipulator_consensus_target,
    market_step,
    predicted_limit_log_price,
    rng_streams,
    run_simulation,
)
from fuzzymarket.network import ConvergenceRecord, Global, Local, NetworkState


def market(n, a=0.002, d=0.6, b=1.0, scheme=None, sigma_eps=0.02, seed=0, behavior=Behavior.ORDINARY, c=None):
    traders = [TraderSpec(a, d, behavior, c)] * n
    return MarketParams(traders, sigma_eps, scheme or Local(), b, seed=seed)


def example1(seed=0, sigma_eps=0.02):
    params = market(60, sigma_eps=sigma_eps, seed=seed)
    init_rng, _ = rng_streams(seed)
    return params, initial_state(grid_centers(60), init_rng.uniform(0, 1, 60), 10.0)


def test_trader_spec_validation():
    with pytest.raises(InvalidInputError):
        TraderSpec(0.0, 0.5)
    with pytest.raises(InvalidInputError):
        TraderSpec(0.1, 0.5, Behavior.FOLLOWER)
    with pytest.raises(InvalidInputError):
        TraderSpec(0.1, 0.5, Behavior.MANIPULATOR)
    with pytest.raises(InvalidInputError):
        TraderSpec(0.1, 1.0, Behavior.ORDINARY)
    assert TraderSpec.plain(0.1, 1.0).behavior is Behavior.MANIPULATOR


def test_grid_centers():
    g = grid_centers(60)
    assert g[0] == 5.0 and g[-1] == 25.0
    assert g[1] == pytest.approx(5 + 20 / 59, rel=1e-15)


def test_excess_demand_examples():
    s = initial_state([12.0], [0.5], 10.0)
    spec = TraderSpec(0.002, 0.6)
    assert excess_demand(0, s, spec, 1) == pytest.approx(0.002 * math.log(1.2) / 0.5, rel=1e-14)
    assert excess_demand(0, s, spec, 1) == pytest.approx(7.2926e-4, rel=1e-4)
    assert excess_demand(0, s, spec, 0) == 0.0
    assert excess_demand(0, initial_state([10.0], [0.5], 10.0), spec, 1) == 0.0


def test_indicator_examples():
    s = initial_state([10.0, 10.0], [1.0, 1.0], 10.0)
    assert indicator(0, s, market(2, behavior=Behavior.FOLLOWER, c=0.01)) == 1
    assert indicator(0, s, market(2, behavior=Behavior.CONTRARIAN, c=0.01)) == 0
    # neighbourhood mean of (10, 10.4) is 10.2
    s = initial_state([10.0, 10.4], [1.0, 1.0], 10.0)
    params = market(2, behavior=Behavior.FOLLOWER, c=0.01)
    assert abs(math.log(10 / 10.2)) == pytest.approx(0.0198, abs=1e-4)
    assert indicator(0, s, params) == 0
    assert indicator(0, s, market(2, behavior=Behavior.CONTRARIAN, c=0.01)) == 1


def test_indicator_real_price_reference():
    s = initial_state([10.5, 30.0], [1.0, 1.0], 10.0)
    params = market(2, scheme=RealPrice(), behavior=Behavior.FOLLOWER, c=0.1)
    assert indicator(0, s, params) == 1
    assert indicator(1, s, params) == 0


def test_zero_strength_limit_is_random_walk():
    params = market(5, a=1e-300, seed=7)
    s = initial_state([5, 10, 15, 20, 25], [1] * 5, 10.0)
    trace = run_simulation(params, s, 50)
    _, rng = rng_streams(7)
    eps = 0.02 * rng.standard_normal(50)
    np.testing.assert_allclose(trace.log_prices, math.log(10) + np.concatenate([[0], np.cumsum(eps)]), atol=1e-12)


def test_constant_price_without_noise():
    params = market(3, sigma_eps=0.0)
    trace = run_simulation(params, initial_state([10.0] * 3, [1, 2, 3], 10.0), 20)
    assert np.all(trace.log_prices == math.log(10.0))


def test_scalar_contraction():
    # one investor with frozen opinion: error shrinks by (1 - a/sigma) each step
    params = MarketParams([TraderSpec(0.5, 0.5)], 0.0, Local(), 1e-300)
    trace = run_simulation(params, initial_state([20.0], [1.0], 10.0), 15)
    err = trace.log_prices - math.log(20.0)
    np.testing.assert_allclose(err[1:] / err[:-1], 0.5, rtol=1e-9)


def test_steps_zero_and_bounds():
    params, s = example1()
    trace = run_simulation(params, s, 0)
    assert trace.steps == 0 and trace.centers.shape == (1, 60)
    with pytest.raises(InvalidInputError):
        run_simulation(params, s, params.max_steps + 1)


def test_initial_state_validation():
    with pytest.raises(InvalidInputError):
        initial_state([0.0, 1.0], [1, 1], 10.0)
    with pytest.raises(InvalidInputError):
        initial_state([1.0], [1], -1.0)
    assert initial_state([1.0], [0.0], 1.0).network.sdvs[0] == 1e-9


def test_market_step_matches_simulation():
    params, s = example1(seed=5)
    _, rng = rng_streams(5)
    states = [s]
    for _ in range(10):
        states.append(market_step(states[-1], params, rng))
    trace = run_simulation(params, s, 10)
    assert [x.log_price for x in states] == list(trace.log_prices)


@given(st.integers(0, 1000))
def test_determinism(seed):
    params, s = example1(seed)
    a = run_simulation(params, s, 30)
    b = run_simulation(params, s, 30)
    np.testing.assert_array_equal(a.log_prices, b.log_prices)
    np.testing.assert_array_equal(a.centers, b.centers)
    np.testing.assert_array_equal(a.sdvs, b.sdvs)


def test_example1_groups_and_trend():
    params, s = example1()
    trace = run_simulation(params, s, 300)
    assert trace.convergence.converged
    assert 2 <= trace.convergence.partition.q <= 8
    limit = predicted_limit_log_price(trace.state(trace.convergence.t_N).network, params.traders, Local(), trace.convergence)
    assert 8 < math.exp(limit.value) < 20 and limit.stable


def test_example2_consensus():
    n = 60
    params = market(n, a=0.005, d=0.95, b=0.1, scheme=Global())
    init_rng, _ = rng_streams(0)
    trace = run_simulation(params, initial_state(grid_centers(n), init_rng.uniform(0, 5, n), 10.0), 300)
    assert trace.convergence.converged and trace.convergence.partition.q == 1


def test_persistent_indicators_recorded():
    # population mean 10.25: only the last investor is more than 0.05 away in logs
    params = market(4, scheme=Global(), behavior=Behavior.CONTRARIAN, c=0.05)
    trace = run_simulation(params, initial_state([10, 10, 10, 11], [0.1] * 4, 10.0), 3)
    assert trace.indicators.shape == (4, 4)
    assert list(trace.indicators[0]) == [0, 0, 0, 1]


def test_divergent_price_is_reported():
    params = MarketParams([TraderSpec.plain(0.5, 1.0)] * 3, 0.0, Local(), 1.0)
    trace = run_simulation(params, initial_state([20, 30, 40], [1e-3] * 3, 10.0), 200)
    assert trace.price_divergence_step is not None


def test_predicted_limit_examples():
    e = math.e
    ns = NetworkState(0, np.array([e, e**3]), np.array([1.0, 3.0]))
    traders = [TraderSpec(1.0, 0.5)] * 2
    rec = ConvergenceRecord(True, 0, None)
    limit = predicted_limit_log_price(ns, traders, Local(), rec)
    assert limit.value == pytest.approx(1.5, rel=1e-14)
    assert limit.stable
    assert not predicted_limit_log_price(ns, [TraderSpec(2.0, 0.5)] * 2, Local(), rec).stable
    flat = NetworkState(0, np.full(3, 12.0), np.full(3, 100.0))
    assert predicted_limit_log_price(flat, [TraderSpec(0.1, 0.5)] * 3, Global(), rec).value == pytest.approx(math.log(12))
    with pytest.raises(PreconditionError):
        predicted_limit_log_price(flat, traders, Local(), ConvergenceRecord(False, None))
    with pytest.raises(PreconditionError):
        predicted_limit_log_price(flat, traders, RealPrice(), rec)


@pytest.mark.parametrize("targets, expected", [([17.0], 17.0), ([10.0, 20.0], 15.0), ([8.0, 10.0, 12.0], 10.0)])
def test_manipulator_target(targets, expected):
    traders = [TraderSpec.plain(0.1, 1.0)] * len(targets) + [TraderSpec(0.1, 0.5)]
    assert manipulator_consensus_target(traders, targets + [3.0]) == pytest.approx(expected, rel=1e-15)


def test_manipulator_target_needs_manipulators():
    with pytest.raises(PreconditionError):
        manipulator_consensus_target([TraderSpec(0.1, 0.5)], [3.0])

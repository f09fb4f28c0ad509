"""Acceptance criteria, one test each, at full size.

Each test prints a single ``ACCEPTANCE <k> PASS|FAIL`` line (shown even
under output capture) before asserting.
"""
import math
import time

import numpy as np
import pytest

from fuzzymarket.cli import main
from fuzzymarket.estimator import (
    Estimates,
    PriceSeries,
    RlsState,
    batch_ls_oracle,
    combined_arrays,
    combined_price_step,
    estimate_series,
    rls_step,
    simulate_combined_series,
    word_of_mouth_proportion,
)
from fuzzymarket.fuzzy import GaussianOpinion, compose_conditional, compose_oracle
from fuzzymarket.market import (
    Behavior,
    MarketParams,
    MarketState,
    RealPrice,
    TraderSpec,
    grid_centers,
    initial_state,
    manipulator_consensus_target,
    market_step,
    predicted_limit_log_price,
    rng_streams,
    run_simulation,
)
from fuzzymarket.montecarlo import ExperimentGrid, GridPoint, preset_grid, run_cell
from fuzzymarket.network import Global, Local, NetworkState, uncertainty_input
from fuzzymarket.presets import build_simulation, resolve

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, started):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:.1f}s): {detail}")
        return ok

    return emit


def test_01_composition_matches_grid_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for sx, cv, sv in rng.uniform([0.05, -20, 0.05], [5, 20, 5], (200, 3)):
        v = GaussianOpinion(cv, sv)
        half = 5 * (sx + sv)
        grid, mu = compose_oracle(sx, v, (cv - half, cv + half), 10_000)
        worst = max(worst, float(np.max(np.abs(mu - compose_conditional(sx, v).membership(grid)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed <= 60
    assert report(1, ok, f"max membership error {worst:.3e} over 200 triples", t0)


def test_02_local_groups_freeze(report):
    t0 = time.perf_counter()
    converged, spread, nonzero = 0, 0.0, 0
    for seed in range(50):
        setup = build_simulation(resolve("example1", {"seed": seed, "steps": 5000}))
        trace = run_simulation(setup.params, setup.initial, 5000, until_converged=True)
        rec = trace.convergence
        if not rec.converged:
            continue
        converged += 1
        final = trace.state(trace.steps).network
        for group in rec.partition.groups:
            spread = max(spread, float(np.ptp(final.centers[sorted(group)])))
        nonzero += sum(uncertainty_input(i, final, Local(), setup.params.network) != 0.0 for i in range(final.n))
    elapsed = time.perf_counter() - t0
    ok = converged == 50 and spread <= 1e-9 and nonzero == 0 and elapsed <= 60
    assert report(2, ok, f"{converged}/50 converged; spread {spread:.1e}; nonzero inputs {nonzero}", t0)


def test_03_table1_cells(report):
    t0 = time.perf_counter()
    grid = preset_grid("table1")
    cells = {d: run_cell(grid, GridPoint(d, 60, 1.0)) for d in (0.2, 1.0, 0.6)}
    c02, c1, c06 = cells[0.2], cells[1.0], cells[0.6]
    ok = (
        c02.mean == 1.0 and c02.std == 0.0 and c02.count == 100
        and c1.mean == 60.0 and c1.std == 0.0 and c1.count == 100
        and 4.2 <= c06.mean <= 6.2
        and time.perf_counter() - t0 <= 300
    )
    detail = f"d=0.2 {c02.mean}±{c02.std}; d=1 {c1.mean}±{c1.std}; d=0.6 {c06.mean:.2f}±{c06.std:.2f}"
    assert report(3, ok, detail, t0)


def test_04_global_consensus_table2(report):
    t0 = time.perf_counter()
    grid = preset_grid("table2")
    low = run_cell(grid, GridPoint(0.85, 60, 0.05))
    high = run_cell(grid, GridPoint(0.99, 60, 0.45))
    # every converged run is a single group under this scheme; check it directly
    singles = 0
    for k in range(100):
        trace = _grid_trace(grid, GridPoint(0.85, 60, 0.05), k)
        singles += trace.convergence.converged and trace.convergence.partition.q == 1
    ok = (
        singles == 100 and low.shortfall == 0 and 38 <= low.mean <= 41.5
        and 22.5 <= high.mean <= 24.5 and time.perf_counter() - t0 <= 300
    )
    detail = f"consensus {singles}/100; (0.05,0.85) {low.mean:.2f}±{low.std:.2f}; (0.45,0.99) {high.mean:.2f}±{high.std:.2f}"
    assert report(4, ok, detail, t0)


def _grid_trace(grid: ExperimentGrid, point: GridPoint, seed: int, steps=None):
    scheme = RealPrice() if grid.scheme == "realprice" else Global()
    params = MarketParams([TraderSpec.plain(grid.a, point.d)] * point.n, grid.sigma_eps, scheme, point.b, seed=seed)
    init_rng, _ = rng_streams(seed)
    state = initial_state(grid_centers(point.n), init_rng.uniform(*grid.sdv_range, point.n), grid.p0)
    if steps is None:
        return run_simulation(params, state, grid.max_steps, until_converged=True)
    return run_simulation(params, state, steps)


def test_05_real_price_table3_and_sdv_recursion(report):
    t0 = time.perf_counter()
    grid = preset_grid("table3")
    point = GridPoint(0.85, 60, 0.05)
    cell = run_cell(grid, point)
    mismatches, checked = 0, 0
    for seed in range(10):
        t_n = _grid_trace(grid, point, seed).convergence.t_N
        trace = _grid_trace(grid, point, seed, steps=t_n + 100)
        for t in range(t_n + 1, trace.steps):
            s = trace.sdvs[t]
            expected = s[0] + 0.05 * abs(trace.centers[t, 0] - trace.prices[t])
            mismatches += int(np.any(trace.sdvs[t + 1] != expected)) + int(np.ptp(s) != 0)
            checked += 1
    ok = 30 <= cell.mean <= 42 and cell.shortfall == 0 and mismatches == 0 and time.perf_counter() - t0 <= 300
    detail = f"steps {cell.mean:.2f}±{cell.std:.2f}; sdv recursion exact on {checked - mismatches}/{checked} steps"
    assert report(5, ok, detail, t0)


def test_06_noiseless_limit_price(report):
    t0 = time.perf_counter()
    setup = build_simulation(resolve("example1", {"seed": 0, "sigma_eps": 0.0, "steps": 2000}))
    trace = run_simulation(setup.params, setup.initial, 2000)
    rec = trace.convergence
    net = trace.state(rec.t_N).network
    limit = predicted_limit_log_price(net, setup.params.traders, Local(), rec)
    gain = float(np.sum(setup.params.a / net.sdvs))
    z = trace.log_prices - limit.value
    hit = np.flatnonzero(np.abs(z) <= 1e-6)
    dev = max(
        abs(abs(z[t + 1] / z[t]) - abs(1 - gain)) for t in range(rec.t_N + 1, trace.steps) if abs(z[t]) > 1e-9
    )
    ok = limit.stable and hit.size > 0 and abs(z[-1]) <= 1e-6 and dev <= 1e-6 and time.perf_counter() - t0 <= 10
    detail = f"limit e^{limit.value:.4f}={math.exp(limit.value):.3f}; |z|<=1e-6 from step {hit[0] if hit.size else None}; ratio dev {dev:.1e}"
    assert report(6, ok, detail, t0)


def test_07_manipulators_pull_consensus(report):
    t0 = time.perf_counter()
    n, a, b = 60, 0.002, 0.1
    traders = [TraderSpec(a, 0.95)] * n
    traders[39] = traders[49] = TraderSpec(a, 1.0, Behavior.MANIPULATOR)
    centers = grid_centers(n)
    centers[39], centers[49] = 10.0, 20.0
    init_rng, _ = rng_streams(0)
    params = MarketParams(traders, 0.02, RealPrice(), b, seed=0)
    trace = run_simulation(params, initial_state(centers, init_rng.uniform(0, 5, n), 10.0), 5000)
    manip = np.array([t.behavior is Behavior.MANIPULATOR for t in traders])
    target = manipulator_consensus_target(traders, centers)
    ordinary = trace.centers[:, ~manip]
    common = np.flatnonzero(np.ptp(ordinary, axis=1) == 0)
    t_n = int(common[0])
    assert np.all(np.ptp(ordinary[t_n:], axis=1) == 0)
    # manipulator sdvs: own previous value plus distance of the fixed target to the price
    m_sd, m_c = trace.sdvs[:, manip], trace.centers[:, manip]
    eq57 = all(
        np.array_equal(m_sd[t + 1], m_sd[t] + b * np.abs(m_c[0] - trace.prices[t])) for t in range(trace.steps)
    )
    # ordinary common sdv: average over all n investors plus the price gap
    m = int(manip.sum())
    rel = 0.0
    for t in range(t_n + 2, trace.steps):
        sig = trace.sdvs[t, ~manip]
        expected = (n - m) / n * sig[0] + m_sd[t].sum() / n + b * abs(ordinary[t, 0] - trace.prices[t])
        rel = max(rel, abs(trace.sdvs[t + 1, ~manip][0] - expected) / expected, float(np.ptp(sig)))
    err = abs(float(ordinary[-1, 0]) - target)
    ok = err <= 1e-3 and eq57 and rel <= 1e-12 and time.perf_counter() - t0 <= 30
    detail = f"common from step {t_n}; |c - {target}| = {err:.1e}; own-sdv recursion exact {eq57}; common-sdv rel err {rel:.1e}"
    assert report(7, ok, detail, t0)


def test_08_combined_investor_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(1000):
        n = int(rng.integers(1, 60))
        c, s, a = rng.uniform(1, 40, n), rng.uniform(0.01, 5, n), rng.uniform(1e-4, 0.01, n)
        params = MarketParams([TraderSpec(x, 0.6) for x in a], 0.02, Local(), 1.0, seed=k)
        state = MarketState(0, math.log(rng.uniform(1, 40)), NetworkState(0, c, s))
        _, noise = rng_streams(k)
        eps = 0.02 * noise.standard_normal()
        _, noise = rng_streams(k)
        full = market_step(state, params, noise).log_price
        worst = max(worst, abs(combined_price_step(state.log_price, combined_arrays(c, s, a), eps) - full))
    ok = worst <= 1e-12 and time.perf_counter() - t0 <= 5
    assert report(8, ok, f"max |combined - full| = {worst:.1e} over 1000 states", t0)


def test_09_rls_matches_batch(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst, pd_ok = 0.0, True
    prior = np.diag([10.0, 10.0])
    for k in range(100):
        lam = (1.0, 0.999, 0.9)[k % 3]
        x = rng.uniform(1, 4, 50)
        data = [((1.0, -xi), float(r)) for xi, r in zip(x, 0.1 - 0.05 * x + rng.normal(0, 0.02, 50))]
        state = RlsState.initial(lam, (0.5, 0.1), prior)
        for s, r in data:
            state = rls_step(state, s, r)
            pd_ok &= bool(np.array_equal(state.P, state.P.T) and np.all(np.linalg.eigvalsh(state.P) > 0))
        worst = max(worst, float(np.max(np.abs(state.v_hat - batch_ls_oracle(data, lam, (0.5, 0.1), prior)))))
    ok = worst <= 1e-8 and pd_ok and time.perf_counter() - t0 <= 10
    assert report(9, ok, f"max componentwise gap {worst:.1e}; P symmetric PD throughout: {pd_ok}", t0)


def test_10_generate_and_recover(report):
    t0 = time.perf_counter()
    sig, pbar = [], []
    for seed in range(20):
        series = simulate_combined_series(20.0, 15.0, 0.02, 500, p0=10.0, seed=seed)
        est = estimate_series(series, 0.999, (0.0, 0.0), np.eye(2) * 1e6)
        last = len(series) - 2
        sig.append(est.sigma_hat[last])
        pbar.append(est.pbar_hat[last])
    ms, mp = float(np.median(sig)), float(np.median(pbar))
    ok = abs(ms - 20) <= 0.15 * 20 and abs(mp - 15) <= 0.10 * 15 and time.perf_counter() - t0 <= 30
    assert report(10, ok, f"median sigma_hat {ms:.2f} (truth 20); median pbar_hat {mp:.2f} (truth 15)", t0)


def test_11_proportion_bounds(report, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    inside = True
    for _ in range(200):
        steps = int(rng.integers(2, 80))
        series = PriceSeries.from_prices(np.exp(np.cumsum(rng.normal(0, rng.uniform(0.001, 0.2), steps)) + 2))
        est = estimate_series(series, float(rng.choice([1.0, 0.999, 0.9])))
        inside &= 0.0 <= word_of_mouth_proportion(series, est, int(rng.integers(0, 10))) <= 1.0
    series = simulate_combined_series(20.0, 15.0, 0.02, 200, seed=3)
    size = len(series)
    zero = word_of_mouth_proportion(series, Estimates.from_truth(series.prices, np.full(size, 7.0)))
    exact = simulate_combined_series(20.0, 15.0, 0.0, 200)
    one = word_of_mouth_proportion(exact, Estimates.from_truth(np.full(size, 15.0), np.full(size, 20.0)))
    src = tmp_path / "prices.csv"
    series.write_csv(src)
    pipeline = main(["estimate", "--input", str(src), "--out", str(tmp_path / "e.csv")]) == 0
    ok = inside and zero == 0.0 and abs(one - 1) <= 1e-12 and pipeline and time.perf_counter() - t0 <= 5
    assert report(11, ok, f"bounded on 200 series: {inside}; tracking case {zero}; exact-model case {one!r}; CLI ok {pipeline}", t0)


def _outputs(root, argv):
    root.mkdir()
    assert main([*argv, "--out", str(root / "out.csv")]) == 0
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_12_reruns_byte_identical(report, tmp_path):
    t0 = time.perf_counter()
    src = tmp_path / "prices.csv"
    simulate_combined_series(20.0, 15.0, 0.02, 300, seed=12).write_csv(src)
    commands = {
        "simulate": ["simulate", "--preset", "example6", "--steps", 300, "--seed", 4],
        "sweep": ["sweep", "--preset", "table2", "--set", "d_values=[0.9]", "--set", "b_values=[0.1, 0.3]", "--runs", 5],
        "estimate": ["estimate", "--input", src],
        "signal": ["signal", "--input", src],
        "verify": ["verify", "--check", "rls-vs-batch", "--check", "combined-investor"],
    }
    same = {}
    for name, argv in commands.items():
        argv = [str(a) for a in argv]
        same[name] = _outputs(tmp_path / f"{name}-1", argv) == _outputs(tmp_path / f"{name}-2", argv)
    ok = all(same.values())
    assert report(12, ok, "identical files: " + ", ".join(f"{k}={v}" for k, v in same.items()), t0)

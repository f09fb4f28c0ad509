"""Coupled stock price / opinion network simulator.

The log price moves by the summed excess demand of all investors plus
Gaussian noise::

    ln p[t+1] = ln p[t] + sum_i I[t,i] * a_i * (ln pbar[i,t] - ln p[t]) / sigma[i,t] + eps[t]

while the investors' fuzzy expectations ``(pbar, sigma)`` evolve on the
bounded-confidence network.  Both updates read the time-``t`` snapshot.

Randomness: ``numpy.random.default_rng`` (PCG64).  A run seed is expanded
with ``SeedSequence(seed).spawn(2)``: the first child draws initial
conditions, the second draws the noise ``eps[t] = sigma_eps *
standard_normal()`` (ziggurat), one draw per step even when
``sigma_eps = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, PreconditionError
from .fuzzy import SIGMA_FLOOR
from .network import (
    CONVERGENCE_TOL,
    CONVERGENCE_WINDOW,
    EXTERNAL,
    GROUP_TOL,
    ConvergenceRecord,
    Global,
    Local,
    NetworkParams,
    NetworkState,
    first_frozen_step,
    partition_arrays,
    shifted_mean,
    step_arrays,
)

DEFAULT_MAX_STEPS = 5000


class Behavior(str, enum.Enum):
    ORDINARY = "ordinary"
    FOLLOWER = "follower"
    CONTRARIAN = "contrarian"
    MANIPULATOR = "manipulator"


_KIND = {Behavior.ORDINARY: 0, Behavior.FOLLOWER: 1, Behavior.CONTRARIAN: 2, Behavior.MANIPULATOR: 3}


@dataclass(frozen=True)
class RealPrice:
    """External reference whose signal is the market price itself."""

    code = EXTERNAL


MarketScheme = Local | Global | RealPrice


@dataclass(frozen=True)
class TraderSpec:
    a: float
    d: float
    behavior: Behavior = Behavior.ORDINARY
    c: float | None = None

    def __post_init__(self):
        behavior = Behavior(self.behavior)
        object.__setattr__(self, "behavior", behavior)
        if not (math.isfinite(self.a) and self.a > 0):
            raise InvalidInputError(f"strength a must be positive, got {self.a!r}")
        if not 0 <= self.d <= 1:
            raise InvalidInputError(f"confidence bound d must lie in [0, 1], got {self.d!r}")
        if (behavior is Behavior.MANIPULATOR) != (self.d == 1):
            raise InvalidInputError("an investor is a manipulator exactly when d = 1")
        if behavior in (Behavior.FOLLOWER, Behavior.CONTRARIAN):
            if self.c is None or not (math.isfinite(self.c) and self.c > 0):
                raise InvalidInputError(f"{behavior.value} needs a positive threshold c")

    @classmethod
    def plain(cls, a: float, d: float) -> "TraderSpec":
        """Ordinary investor, or a manipulator when ``d == 1``."""
        return cls(a, d, Behavior.MANIPULATOR if d == 1 else Behavior.ORDINARY)


@dataclass(frozen=True)
class MarketParams:
    traders: tuple[TraderSpec, ...]
    sigma_eps: float
    scheme: MarketScheme
    b: float
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        traders = tuple(self.traders)
        if not traders:
            raise InvalidInputError("at least one trader is required")
        if not (math.isfinite(self.sigma_eps) and self.sigma_eps >= 0):
            raise InvalidInputError("sigma_eps must be non-negative")
        if not isinstance(self.scheme, (Local, Global, RealPrice)):
            raise InvalidInputError(f"unsupported market scheme {self.scheme!r}")
        if self.max_steps < 0:
            raise InvalidInputError("max_steps must be non-negative")
        object.__setattr__(self, "traders", traders)
        object.__setattr__(self, "network", NetworkParams([t.d for t in traders], self.b, self.sigma_floor))
        object.__setattr__(self, "a", _frozen([t.a for t in traders]))
        object.__setattr__(self, "kind", np.array([_KIND[t.behavior] for t in traders], dtype=np.int8))
        object.__setattr__(self, "threshold", _frozen([t.c or 0.0 for t in traders]))

    @property
    def n(self) -> int:
        return len(self.traders)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MarketState:
    t: int
    log_price: float
    network: NetworkState

    # log_price may become +-inf or nan when an unstable configuration
    # (sum of a_i / sigma_i far above 2) makes the price explode; the trace
    # records the first such step instead of aborting the run.

    @property
    def price(self) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.exp(self.log_price))


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(initial-condition generator, noise generator) for one run."""
    init_ss, noise_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(noise_ss)


def grid_centers(n: int, lo: float = 5.0, hi: float = 25.0) -> np.ndarray:
    """Evenly spaced expectations ``lo + (hi - lo) * (i - 1) / (n - 1)``."""
    if n == 1:
        return np.array([lo])
    return lo + (hi - lo) * np.arange(n) / (n - 1)


def initial_state(
    centers: Sequence[float],
    sdvs: Sequence[float],
    price: float,
    sigma_floor: float = SIGMA_FLOOR,
) -> MarketState:
    """Initial market state; sdvs below the floor are raised to it."""
    centers = np.asarray(centers, dtype=np.float64)
    if np.any(centers <= 0):
        raise InvalidInputError("expected prices must be positive")
    if not (math.isfinite(price) and price > 0):
        raise InvalidInputError("initial price must be positive and finite")
    sdvs = np.maximum(np.asarray(sdvs, dtype=np.float64), sigma_floor)
    return MarketState(0, math.log(price), NetworkState(0, centers, sdvs))


def excess_demand(i: int, state: MarketState, spec: TraderSpec, indicator: int) -> float:
    net = state.network
    if indicator == 0:
        return 0.0
    return spec.a * (math.log(net.centers[i]) - state.log_price) / float(net.sdvs[i])


def _reference_logs(state: MarketState, params: MarketParams, neighbour_means: np.ndarray) -> np.ndarray:
    scheme = params.scheme
    if isinstance(scheme, Local):
        return np.log(neighbour_means)
    if isinstance(scheme, Global):
        return np.full(params.n, math.log(shifted_mean(state.network.centers)))
    return np.full(params.n, state.log_price)


def _indicators(state: MarketState, params: MarketParams, neighbour_means: np.ndarray) -> np.ndarray:
    kind = params.kind
    ind = np.ones(params.n, dtype=np.int8)
    if np.any((kind == 1) | (kind == 2)):
        gap = np.abs(np.log(state.network.centers) - _reference_logs(state, params, neighbour_means))
        ind[kind == 1] = gap[kind == 1] < params.threshold[kind == 1]
        ind[kind == 2] = gap[kind == 2] > params.threshold[kind == 2]
    return ind


def _network_update(state: MarketState, params: MarketParams) -> tuple[np.ndarray, np.ndarray]:
    return step_arrays(
        state.network.centers, state.network.sdvs, params.network, params.scheme.code, state.price
    )


def indicator(i: int, state: MarketState, params: MarketParams) -> int:
    """Whether investor ``i`` trades on the step out of ``state``.

    Followers trade when their log expectation is within ``c_i`` of the
    reference, contrarians when it is further than ``c_i``; everyone else
    always trades.  The reference is the neighbourhood mean (Local), the
    population mean (Global) or the price itself (RealPrice).
    """
    neighbour_means, _ = _network_update(state, params)
    return int(_indicators(state, params, neighbour_means)[i])


@np.errstate(over="ignore", invalid="ignore")
def _advance(state: MarketState, params: MarketParams, rng: np.random.Generator):
    new_c, new_s = _network_update(state, params)
    # the new center of investor i is exactly its neighbourhood mean at time t
    ind = _indicators(state, params, new_c)
    net = state.network
    eps = params.sigma_eps * rng.standard_normal()
    demand = ind * params.a * (np.log(net.centers) - state.log_price) / net.sdvs
    log_price = state.log_price + float(np.sum(demand)) + eps
    t = state.t + 1
    return MarketState(t, log_price, NetworkState(t, new_c, new_s)), ind


def market_step(state: MarketState, params: MarketParams, rng: np.random.Generator) -> MarketState:
    return _advance(state, params, rng)[0]


@dataclass
class SimulationTrace:
    t: np.ndarray
    prices: np.ndarray
    log_prices: np.ndarray
    centers: np.ndarray
    sdvs: np.ndarray
    indicators: np.ndarray
    convergence: ConvergenceRecord
    seed: int
    scheme: MarketScheme = field(default_factory=Local)

    @property
    def steps(self) -> int:
        return int(self.t.size - 1)

    @property
    def price_divergence_step(self) -> int | None:
        """First step whose log price is not finite, if any."""
        bad = np.flatnonzero(~np.isfinite(self.log_prices))
        return int(bad[0]) if bad.size else None

    def state(self, k: int) -> MarketState:
        return MarketState(int(self.t[k]), float(self.log_prices[k]), NetworkState(int(self.t[k]), self.centers[k], self.sdvs[k]))


def trace_convergence(
    centers: np.ndarray,
    sdvs: np.ndarray,
    scheme: MarketScheme,
    tol: float = CONVERGENCE_TOL,
    window: int = CONVERGENCE_WINDOW,
    group_tol: float = GROUP_TOL,
) -> ConvergenceRecord:
    """Convergence record for a trace.

    Local/Global: centers and sdvs freeze.  RealPrice: the centers freeze
    in a single group, since the growing sdvs eventually join any groups
    that are still apart.
    """
    if isinstance(scheme, RealPrice):
        consensus = np.array([partition_arrays(c, s, group_tol).q == 1 for c, s in zip(centers, sdvs)])
        t_n = first_frozen_step(centers, None, tol, window, mask=consensus)
    else:
        t_n = first_frozen_step(centers, sdvs, tol, window)
    if t_n is None:
        return ConvergenceRecord(False, None, None)
    return ConvergenceRecord(True, t_n, partition_arrays(centers[t_n], sdvs[t_n], group_tol))


class _OnlineDetector:
    """Incremental version of :func:`trace_convergence` used to stop runs early."""

    def __init__(self, scheme, tol, window, group_tol):
        self.centers_only = isinstance(scheme, RealPrice)
        self.tol, self.window, self.group_tol = tol, window, group_tol
        self.run = 0

    def _consensus(self, centers):
        return np.max(np.diff(np.sort(centers)), initial=0.0) <= self.group_tol

    def update(self, old_c, old_s, new_c, new_s) -> bool:
        moved = np.max(np.abs(new_c - old_c))
        if not self.centers_only:
            moved = max(moved, np.max(np.abs(new_s - old_s)))
        # a frozen step only counts when its start state passes the consensus check
        ok = moved <= self.tol and (not self.centers_only or self.run > 0 or self._consensus(old_c))
        self.run = self.run + 1 if ok else 0
        return self.run >= self.window


def run_simulation(
    params: MarketParams,
    initial: MarketState,
    steps: int,
    until_converged: bool = False,
    tol: float = CONVERGENCE_TOL,
    window: int = CONVERGENCE_WINDOW,
    group_tol: float = GROUP_TOL,
) -> SimulationTrace:
    """Simulate ``steps`` steps (or stop once convergence is confirmed).

    The noise stream comes from ``rng_streams(params.seed)[1]`` so a run is a
    pure function of ``(params, initial, steps)``.
    """
    if steps < 0 or steps > params.max_steps:
        raise InvalidInputError(f"steps must lie in [0, max_steps={params.max_steps}]")
    if initial.network.n != params.n:
        raise InvalidInputError("initial state and traders disagree on n")
    _, rng = rng_streams(params.seed)
    states = [initial]
    inds = []
    detector = _OnlineDetector(params.scheme, tol, window, group_tol) if until_converged else None
    state = initial
    for _ in range(steps):
        new, ind = _advance(state, params, rng)
        states.append(new)
        inds.append(ind)
        if detector is not None and detector.update(
            state.network.centers, state.network.sdvs, new.network.centers, new.network.sdvs
        ):
            state = new
            break
        state = new
    with np.errstate(invalid="ignore"):
        neighbour_means, _ = _network_update(state, params)
        inds.append(_indicators(state, params, neighbour_means))

    centers = np.stack([s.network.centers for s in states])
    sdvs = np.stack([s.network.sdvs for s in states])
    log_prices = np.array([s.log_price for s in states])
    with np.errstate(over="ignore", invalid="ignore"):
        prices = np.exp(log_prices)
    return SimulationTrace(
        t=np.array([s.t for s in states]),
        prices=prices,
        log_prices=log_prices,
        centers=centers,
        sdvs=sdvs,
        indicators=np.stack(inds),
        convergence=trace_convergence(centers, sdvs, params.scheme, tol, window, group_tol),
        seed=params.seed,
        scheme=params.scheme,
    )


@dataclass(frozen=True)
class LimitPrice:
    value: float
    stable: bool


def predicted_limit_log_price(
    state: NetworkState,
    traders: Sequence[TraderSpec],
    scheme: MarketScheme,
    convergence: ConvergenceRecord,
) -> LimitPrice:
    """Long-run mean of ``ln p`` once the network has converged.

    Local: strength/uncertainty weighted mean of the converged log
    expectations.  Global: log of the consensus.  The limit is stable when
    ``0 < sum(a_i / sigma_i) < 2``.  No closed form exists under RealPrice.
    """
    if not convergence.converged:
        raise PreconditionError("the opinion network has not converged")
    if isinstance(scheme, RealPrice):
        raise PreconditionError("no closed-form limit price under the real-price reference")
    a = np.array([t.a for t in traders], dtype=np.float64)
    weight = a / state.sdvs
    gain = float(np.sum(weight))
    if isinstance(scheme, Global):
        value = math.log(shifted_mean(state.centers))
    else:
        value = float(np.sum(weight * np.log(state.centers)) / gain)
    return LimitPrice(value, 0 < gain < 2)


def manipulator_consensus_target(traders: Sequence[TraderSpec], initial_centers: Sequence[float]) -> float:
    """Mean of the manipulators' (fixed) expected prices."""
    idx = [i for i, t in enumerate(traders) if t.behavior is Behavior.MANIPULATOR]
    if not idx:
        raise PreconditionError("no manipulators present")
    return float(np.mean(np.asarray(initial_centers, dtype=np.float64)[idx]))

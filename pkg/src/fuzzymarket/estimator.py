"""Combined-investor price model and its online identification.

Collapsing all investors into one pseudo-investor with combined
uncertainty ``sigma = 1 / sum(a_i / sigma_i)`` and combined expectation
``pbar = exp(sigma * sum(a_i ln pbar_i / sigma_i))`` turns the price
equation into::

    r[t+1] = ln(p[t+1] / p[t]) = s[t] . v + eps[t],   s[t] = (1, -ln p[t]),
    v = (ln(pbar) / sigma, 1 / sigma)

``v`` is tracked with recursive least squares under exponential
forgetting, from which ``sigma_hat = 1 / v2`` and ``pbar_hat = exp(v1 / v2)``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, SingularSystemError
from .fuzzy import GaussianOpinion

DEFAULT_LAMBDA = 0.999
DEFAULT_V0 = (0.5, 0.1)
DEFAULT_P0 = ((10.0, 0.0), (0.0, 10.0))
#: estimates with v2 at or below this are reported as gaps
V2_MIN = 1e-9


@dataclass(frozen=True)
class CombinedState:
    sigma: float
    pbar: float
    log_pbar: float


def combined_arrays(centers, sdvs, strengths) -> CombinedState:
    c = np.asarray(centers, dtype=np.float64)
    s = np.asarray(sdvs, dtype=np.float64)
    a = np.asarray(strengths, dtype=np.float64)
    if np.any(s <= 0) or np.any(a <= 0) or np.any(c <= 0):
        raise InvalidInputError("centers, sdvs and strengths must all be positive")
    weight = a / s
    sigma = 1.0 / float(np.sum(weight))
    log_pbar = sigma * float(np.sum(weight * np.log(c)))
    return CombinedState(sigma, math.exp(log_pbar), log_pbar)


def combined_state(opinions: Sequence[GaussianOpinion], strengths: Sequence[float]) -> CombinedState:
    if len(opinions) != len(strengths) or not opinions:
        raise InvalidInputError("need one strength per opinion")
    return combined_arrays([o.center for o in opinions], [o.sdv for o in opinions], strengths)


def combined_price_step(log_price: float, combined: CombinedState, eps: float) -> float:
    """Next log price driven by the single combined investor."""
    return log_price + (combined.log_pbar - log_price) / combined.sigma + eps


@dataclass(frozen=True)
class RlsState:
    v_hat: np.ndarray
    P: np.ndarray
    lam: float

    def __post_init__(self):
        v = np.array(self.v_hat, dtype=np.float64).reshape(2)
        P = np.array(self.P, dtype=np.float64).reshape(2, 2)
        if not 0 < self.lam <= 1:
            raise InvalidInputError("forgetting factor must lie in (0, 1]")
        if abs(P[0, 1] - P[1, 0]) > 1e-12 * max(1.0, np.max(np.abs(P))):
            raise InvalidInputError("P must be symmetric")
        if P[0, 0] <= 0 or np.linalg.det(P) <= 0:
            raise InvalidInputError("P must be positive definite")
        v.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "v_hat", v)
        object.__setattr__(self, "P", P)

    @classmethod
    def initial(cls, lam=DEFAULT_LAMBDA, v0=DEFAULT_V0, P0=DEFAULT_P0) -> "RlsState":
        return cls(np.asarray(v0, dtype=float), np.asarray(P0, dtype=float), lam)


def rls_step(state: RlsState, s_t, r_next: float) -> RlsState:
    """One exponentially-forgetting RLS update with regressor ``s_t``."""
    s = np.asarray(s_t, dtype=np.float64)
    P = state.P
    Ps = P @ s
    gain = Ps / (s @ Ps + state.lam)
    v = state.v_hat + gain * (r_next - s @ state.v_hat)
    P_new = (P - np.outer(gain, s) @ P) / state.lam
    P_new = 0.5 * (P_new + P_new.T)
    return RlsState(v, P_new, state.lam)


def batch_ls_oracle(data: Sequence[tuple], lam: float, v0=None, P0=None) -> np.ndarray:
    """Direct minimiser of the exponentially weighted squared error.

    ``data`` is ``[(s_1, r_2), ..., (s_t, r_{t+1})]``; datum ``i`` carries
    weight ``lam**(t - i)``.  With a prior ``(v0, P0)`` the penalty
    ``lam**t (v - v0)' P0^{-1} (v - v0)`` is added, which makes the result the
    exact batch counterpart of RLS started from ``(v0, P0)``.
    """
    if len(data) == 0:
        raise InvalidInputError("data must be non-empty")
    S = np.array([np.asarray(s, dtype=float) for s, _ in data])
    r = np.array([float(x) for _, x in data])
    t = len(data)
    w = lam ** (t - 1 - np.arange(t, dtype=float))
    A = (S * w[:, None]).T @ S
    rhs = (S * w[:, None]).T @ r
    if P0 is not None:
        prior = np.linalg.inv(np.asarray(P0, dtype=float)) * lam**t
        A = A + prior
        rhs = rhs + prior @ np.asarray(v0, dtype=float)
    if np.linalg.cond(A) > 1e14:
        raise SingularSystemError("normal equations are singular")
    return np.linalg.solve(A, rhs)


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=np.float64)
        dates = tuple(str(d) for d in self.dates)
        if prices.ndim != 1 or prices.size != len(dates):
            raise InvalidInputError("need exactly one price per date")
        if np.any(~np.isfinite(prices)) or np.any(prices <= 0):
            raise InvalidInputError("prices must be finite and strictly positive")
        parsed = [_dt.date.fromisoformat(d) for d in dates]
        if any(b <= a for a, b in zip(parsed, parsed[1:])):
            raise InvalidInputError("dates must be strictly increasing")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return self.prices.size

    @property
    def log_prices(self) -> np.ndarray:
        return np.log(self.prices)

    @classmethod
    def from_prices(cls, prices: Iterable[float], start: str = "2000-01-01") -> "PriceSeries":
        """Label a bare price sequence with consecutive calendar days."""
        prices = list(prices)
        day0 = _dt.date.fromisoformat(start)
        return cls(tuple((day0 + _dt.timedelta(days=k)).isoformat() for k in range(len(prices))), prices)

    @classmethod
    def read_csv(cls, path) -> "PriceSeries":
        """Read a ``date,adj_close`` CSV; errors name the offending line."""
        dates, prices = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["date", "adj_close"]:
                raise InvalidInputError(f"{path}: line 1: expected header 'date,adj_close'")
            previous = None
            for row in reader:
                line = reader.line_num
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 2:
                    raise InvalidInputError(f"{path}: line {line}: expected 2 fields, got {len(row)}")
                label, value = row[0].strip(), row[1].strip()
                try:
                    day = _dt.date.fromisoformat(label)
                except ValueError:
                    raise InvalidInputError(f"{path}: line {line}: bad ISO-8601 date {label!r}") from None
                try:
                    price = float(value)
                except ValueError:
                    raise InvalidInputError(f"{path}: line {line}: bad price {value!r}") from None
                if not (math.isfinite(price) and price > 0):
                    raise InvalidInputError(f"{path}: line {line}: price must be positive, got {value!r}")
                if previous is not None and day <= previous:
                    raise InvalidInputError(f"{path}: line {line}: dates must be strictly increasing")
                previous = day
                dates.append(label)
                prices.append(price)
        return cls(tuple(dates), prices)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "adj_close"])
            for d, p in zip(self.dates, self.prices):
                w.writerow([d, repr(float(p))])


@dataclass
class Estimates:
    """Per-index estimates; index ``t`` uses prices up to ``t + 1``.

    ``gap[t]`` marks indices without a usable estimate: the last index
    (nothing observed after it) and any step with ``v2 <= V2_MIN``.
    """

    v_hat: np.ndarray
    sigma_hat: np.ndarray
    pbar_hat: np.ndarray
    gap: np.ndarray
    P: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_truth(cls, pbar, sigma) -> "Estimates":
        pbar = np.asarray(pbar, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        v = np.column_stack([np.log(pbar) / sigma, 1.0 / sigma])
        return cls(v, sigma, pbar, np.zeros(pbar.size, dtype=bool))


def estimate_series(
    series: PriceSeries, lam: float = DEFAULT_LAMBDA, v0=DEFAULT_V0, P0=DEFAULT_P0
) -> Estimates:
    if len(series) < 2:
        raise InvalidInputError("series needs at least two prices")
    logp = series.log_prices
    n = logp.size
    state = RlsState.initial(lam, v0, P0)
    v_hat = np.full((n, 2), np.nan)
    covs = np.full((n, 2, 2), np.nan)
    for t in range(n - 1):
        state = rls_step(state, (1.0, -logp[t]), logp[t + 1] - logp[t])
        v_hat[t] = state.v_hat
        covs[t] = state.P
    gap = ~(v_hat[:, 1] > V2_MIN)
    sigma_hat = np.full(n, np.nan)
    pbar_hat = np.full(n, np.nan)
    ok = ~gap
    sigma_hat[ok] = 1.0 / v_hat[ok, 1]
    with np.errstate(over="ignore"):
        pbar_hat[ok] = np.exp(v_hat[ok, 0] / v_hat[ok, 1])
    return Estimates(v_hat, sigma_hat, pbar_hat, gap, covs)


def word_of_mouth_proportion(series: PriceSeries, estimates: Estimates, burn_in: int = 0) -> float:
    """Share of absolute log-price movement explained by the opinion term.

    Gaps and the first ``burn_in`` indices are left out of both sums; the
    ratio is 0 when nothing is left or both sums vanish.
    """
    logp = series.log_prices
    n = logp.size
    idx = np.arange(n - 1)
    use = idx[(idx >= burn_in) & ~estimates.gap[: n - 1]]
    if use.size == 0:
        return 0.0
    model = (np.log(estimates.pbar_hat[use]) - logp[use]) / estimates.sigma_hat[use]
    resid = logp[use + 1] - logp[use] - model
    num = math.fsum(np.abs(model))
    den = num + math.fsum(np.abs(resid))
    return 0.0 if den == 0 else num / den


class PiecewiseLinear:
    """Membership function interpolating ``(x, mu)`` knots, flat beyond the ends."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float]):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
            raise InvalidInputError("need at least two (x, mu) knots")
        if np.any(np.diff(xs) <= 0):
            raise InvalidInputError("knot positions must be strictly increasing")
        if np.any(ys < 0) or np.any(ys > 1):
            raise InvalidInputError("membership values must lie in [0, 1]")
        self.xs, self.ys = xs, ys

    @classmethod
    def ramp(cls, zero_at: float, one_at: float) -> "PiecewiseLinear":
        if zero_at < one_at:
            return cls([zero_at, one_at], [0.0, 1.0])
        return cls([one_at, zero_at], [1.0, 0.0])

    def __call__(self, x: float) -> float:
        return float(np.interp(x, self.xs, self.ys))

    def __repr__(self):
        return f"PiecewiseLinear({self.xs.tolist()}, {self.ys.tolist()})"


class Signal(str, enum.Enum):
    SELL = "sell"
    BUY = "buy"
    NONE = "none"


@dataclass(frozen=True)
class SignalParams:
    tau: int = 5
    delta: float = 0.25
    positive_big: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.ramp(0.02, 0.06))
    negative_big: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.ramp(-0.02, -0.06))
    positive: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.ramp(0.0, 0.02))
    negative: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.ramp(0.0, -0.02))

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise InvalidInputError("tau must be a positive integer")
        if not 0 < self.delta < 1:
            raise InvalidInputError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class SignalResult:
    signal: Signal
    conflict: bool
    r_p: float
    r_sigma: float


def rule_signal(r_p: float, r_sigma: float, params: SignalParams) -> SignalResult:
    """Fire the sell / buy rules on relative changes of price and uncertainty.

    Sell: price up big with uncertainty up big, or price down with
    uncertainty down.  Buy: price down big with uncertainty up big, or price
    up with uncertainty down.  Both firing at once yields no signal and a
    conflict flag.
    """
    mu = params
    sell = (
        mu.positive_big(r_p) * mu.positive_big(r_sigma) > mu.delta
        or mu.negative(r_p) * mu.negative(r_sigma) > mu.delta
    )
    buy = (
        mu.negative_big(r_p) * mu.positive_big(r_sigma) > mu.delta
        or mu.positive(r_p) * mu.negative(r_sigma) > mu.delta
    )
    if sell and buy:
        return SignalResult(Signal.NONE, True, r_p, r_sigma)
    if sell:
        return SignalResult(Signal.SELL, False, r_p, r_sigma)
    if buy:
        return SignalResult(Signal.BUY, False, r_p, r_sigma)
    return SignalResult(Signal.NONE, False, r_p, r_sigma)


def trading_signal(series: PriceSeries, estimates: Estimates, params: SignalParams, t: int) -> SignalResult:
    if t < params.tau or t >= len(series):
        raise InvalidInputError(f"signal needs tau <= t < {len(series)}, got t={t}")
    if estimates.gap[t] or estimates.gap[t - params.tau]:
        return SignalResult(Signal.NONE, False, math.nan, math.nan)
    r_p = math.log(series.prices[t] / series.prices[t - params.tau])
    r_sigma = math.log(estimates.sigma_hat[t] / estimates.sigma_hat[t - params.tau])
    return rule_signal(r_p, r_sigma, params)


def series_signals(series: PriceSeries, estimates: Estimates, params: SignalParams) -> list[SignalResult | None]:
    """Signal at every index; ``None`` before the lookback is available."""
    return [
        trading_signal(series, estimates, params, t) if t >= params.tau else None
        for t in range(len(series))
    ]


def simulate_combined_series(
    sigma: float,
    pbar: float,
    sigma_eps: float,
    steps: int,
    p0: float = 10.0,
    seed: int = 0,
) -> PriceSeries:
    """Price path of the single combined investor with constant ``(pbar, sigma)``."""
    rng = np.random.default_rng(seed)
    combined = CombinedState(sigma, pbar, math.log(pbar))
    logp = [math.log(p0)]
    for eps in sigma_eps * rng.standard_normal(steps):
        logp.append(combined_price_step(logp[-1], combined, float(eps)))
    return PriceSeries.from_prices(np.exp(logp))

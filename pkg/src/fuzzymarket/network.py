"""Bounded-confidence fuzzy opinion network (BCFON).

Each investor holds a Gaussian opinion.  At every step investor ``i``
averages the centers and sdvs of its neighbours (investors whose opinion
is at least ``d[i]``-close to its own) and inflates the averaged sdv by an
uncertainty input measured against a reference: the neighbourhood mean
(:class:`Local`), the population mean (:class:`Global`) or an outside
signal (:class:`External`).  All investors update synchronously from the
same snapshot.

Means are evaluated as ``x_ref + sum(x_j - x_ref) / k`` with ``x_ref`` the
first neighbour.  This equals the plain mean in exact arithmetic, but it
returns ``x_ref`` to the last bit when all inputs agree, so converged
groups are exact fixed points and their uncertainty input is exactly 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import _backend
from .errors import InvalidIndexError, InvalidInputError, PreconditionError
from .fuzzy import SIGMA_FLOOR, GaussianOpinion

LOCAL, GLOBAL, EXTERNAL = 0, 1, 2

#: per-step change below which a coordinate counts as frozen
CONVERGENCE_TOL = 1e-10
#: consecutive frozen steps needed to confirm convergence
CONVERGENCE_WINDOW = 5
#: centers closer than this belong to the same group
GROUP_TOL = 1e-6


@dataclass(frozen=True)
class Local:
    code = LOCAL


@dataclass(frozen=True)
class Global:
    code = GLOBAL


@dataclass(frozen=True)
class External:
    """Uncertainty measured against ``signal``: a sequence indexed by t, or ``f(t)``."""

    signal: Union[Sequence[float], Callable[[int], float]]
    code = EXTERNAL

    def value(self, t: int) -> float:
        if callable(self.signal):
            g = self.signal(t)
        else:
            if t >= len(self.signal):
                raise PreconditionError(f"external signal undefined at t={t}")
            g = self.signal[t]
        g = float(g)
        if not math.isfinite(g):
            raise InvalidInputError(f"external signal is not finite at t={t}")
        return g


ReferenceScheme = Union[Local, Global, External]


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NetworkParams:
    d: np.ndarray
    b: float
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        d = _readonly(np.atleast_1d(self.d))
        if d.ndim != 1 or d.size == 0:
            raise InvalidInputError("d must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > 1):
            raise InvalidInputError("every confidence bound d_i must lie in [0, 1]")
        if not (math.isfinite(self.b) and self.b > 0):
            raise InvalidInputError("b must be positive")
        if not (math.isfinite(self.sigma_floor) and self.sigma_floor > 0):
            raise InvalidInputError("sigma_floor must be positive")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "sigma_floor", float(self.sigma_floor))
        object.__setattr__(self, "_radius", _readonly(_radius(d)))

    @classmethod
    def uniform(cls, n: int, d: float, b: float, sigma_floor: float = SIGMA_FLOOR):
        return cls(np.full(n, float(d)), b, sigma_floor)

    @property
    def radius(self) -> np.ndarray:
        """``-ln d_i`` per investor; ``inf`` when ``d_i = 0``, ``-1`` flags ``d_i = 1``."""
        return self._radius


def _radius(d: np.ndarray) -> np.ndarray:
    # closeness >= d  <=>  (ci - cj)**2 <= -ln(d) * (si + sj)**2
    with np.errstate(divide="ignore"):
        r = -np.log(d)
    r[d == 0] = np.inf
    r[d == 1] = -1.0
    return r


@dataclass(frozen=True)
class NetworkState:
    t: int
    centers: np.ndarray
    sdvs: np.ndarray

    def __post_init__(self):
        c = _readonly(self.centers)
        s = _readonly(self.sdvs)
        if c.ndim != 1 or c.shape != s.shape or c.size == 0:
            raise InvalidInputError("centers and sdvs must be equal-length, non-empty 1-d arrays")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
            raise InvalidInputError("centers and sdvs must be finite")
        if np.any(s < 0):
            raise InvalidInputError("sdvs must be non-negative")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "sdvs", s)

    @classmethod
    def from_opinions(cls, opinions: Sequence[GaussianOpinion], t: int = 0) -> "NetworkState":
        return cls(t, [o.center for o in opinions], [o.sdv for o in opinions])

    @property
    def n(self) -> int:
        return self.centers.size

    @property
    def opinions(self) -> list[GaussianOpinion]:
        return [GaussianOpinion(c, s) for c, s in zip(self.centers, self.sdvs)]


def shifted_mean(values) -> float:
    """Mean as ``x0 + sum(x - x0) / n``, accumulated left to right."""
    x = np.asarray(values, dtype=np.float64)
    return float(x[0] + np.cumsum(x - x[0])[-1] / x.size)


def _links(i: int, state: NetworkState, params: NetworkParams) -> np.ndarray:
    r = params.radius[i]
    n = state.n
    if r < 0:
        mask = np.zeros(n, dtype=bool)
        mask[i] = True
        return mask
    if math.isinf(r):
        return np.ones(n, dtype=bool)
    dc = state.centers[i] - state.centers
    ss = state.sdvs[i] + state.sdvs
    return dc * dc <= r * ss * ss


def neighbor_set(i: int, state: NetworkState, params: NetworkParams) -> frozenset[int]:
    """Indices ``j`` whose opinion is at least ``d[i]``-close to investor ``i``'s.

    ``d[i] = 1`` means the investor listens to nobody: the set is ``{i}``.
    """
    if not 0 <= i < state.n:
        raise InvalidIndexError(f"investor index {i} out of range for n={state.n}")
    if params.d.size != state.n:
        raise InvalidInputError("params.d does not match the number of investors")
    return frozenset(int(j) for j in np.flatnonzero(_links(i, state, params)))


def _reference(i: int, state: NetworkState, scheme: ReferenceScheme, params: NetworkParams) -> float:
    if isinstance(scheme, Local):
        return shifted_mean(state.centers[_links(i, state, params)])
    if isinstance(scheme, Global):
        return shifted_mean(state.centers)
    if isinstance(scheme, External):
        return scheme.value(state.t)
    raise InvalidInputError(f"unknown reference scheme {scheme!r}")


def uncertainty_input(
    i: int, state: NetworkState, scheme: ReferenceScheme, params: NetworkParams
) -> float:
    """The sdv increment investor ``i`` receives on the step out of ``state``."""
    if not 0 <= i < state.n:
        raise InvalidIndexError(f"investor index {i} out of range for n={state.n}")
    return params.b * abs(float(state.centers[i]) - _reference(i, state, scheme, params))


def step_arrays(
    centers: np.ndarray,
    sdvs: np.ndarray,
    params: NetworkParams,
    scheme_code: int,
    signal: float = 0.0,
    kernel=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Array-level network update; ``kernel`` defaults to the selected backend."""
    kernel = _backend.bcfon_step if kernel is None else kernel
    c = np.ascontiguousarray(centers, dtype=np.float64)
    s = np.ascontiguousarray(sdvs, dtype=np.float64)
    new_c = np.empty_like(c)
    new_s = np.empty_like(s)
    kernel(c, s, params.radius, int(scheme_code), float(signal), params.b, params.sigma_floor, new_c, new_s)
    return new_c, new_s


def network_step(state: NetworkState, scheme: ReferenceScheme, params: NetworkParams) -> NetworkState:
    if params.d.size != state.n:
        raise InvalidInputError("params.d does not match the number of investors")
    signal = scheme.value(state.t) if isinstance(scheme, External) else 0.0
    new_c, new_s = step_arrays(state.centers, state.sdvs, params, scheme.code, signal)
    return NetworkState(state.t + 1, new_c, new_s)


def run_network(
    state: NetworkState, scheme: ReferenceScheme, params: NetworkParams, steps: int
) -> list[NetworkState]:
    states = [state]
    for _ in range(steps):
        state = network_step(state, scheme, params)
        states.append(state)
    return states


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[frozenset[int], ...]
    group_centers: tuple[float, ...]
    group_sdvs: tuple[float, ...]

    @property
    def q(self) -> int:
        return len(self.groups)


def partition_arrays(centers, sdvs, tol: float = GROUP_TOL) -> GroupPartition:
    """Groups are the connected components of ``|c_i - c_j| <= tol``."""
    c = np.asarray(centers, dtype=np.float64)
    s = np.asarray(sdvs, dtype=np.float64)
    order = np.argsort(c, kind="stable")
    # in sorted order the closure splits exactly where a gap exceeds tol
    breaks = np.flatnonzero(np.diff(c[order]) > tol) + 1
    groups, gc, gs = [], [], []
    for members in np.split(order, breaks):
        members = np.sort(members)
        groups.append(frozenset(int(m) for m in members))
        gc.append(float(np.mean(c[members])))
        gs.append(float(np.mean(s[members])))
    # report groups by their smallest member
    idx = sorted(range(len(groups)), key=lambda k: min(groups[k]))
    return GroupPartition(
        tuple(groups[k] for k in idx), tuple(gc[k] for k in idx), tuple(gs[k] for k in idx)
    )


def partition_groups(state: NetworkState, tol: float = GROUP_TOL) -> GroupPartition:
    if not tol > 0:
        raise InvalidInputError("grouping tolerance must be positive")
    return partition_arrays(state.centers, state.sdvs, tol)


@dataclass(frozen=True)
class ConvergenceRecord:
    converged: bool
    t_N: int | None
    partition: GroupPartition | None = field(default=None)


def first_frozen_step(
    centers: np.ndarray,
    sdvs: np.ndarray | None,
    tol: float = CONVERGENCE_TOL,
    window: int = CONVERGENCE_WINDOW,
    mask: np.ndarray | None = None,
) -> int | None:
    """First ``t`` from which ``window`` consecutive steps each move by ``<= tol``.

    ``centers`` and ``sdvs`` are ``(T+1, n)`` arrays; pass ``sdvs=None`` to
    require only the centers to freeze.  ``mask[t]`` (optional) must also
    hold at the returned ``t``.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[0] < 2:
        return None
    moved = np.max(np.abs(np.diff(centers, axis=0)), axis=1)
    if sdvs is not None:
        moved = np.maximum(moved, np.max(np.abs(np.diff(np.asarray(sdvs), axis=0)), axis=1))
    frozen = moved <= tol
    run = 0
    for t in range(frozen.size - 1, -1, -1):
        run = run + 1 if frozen[t] else 0
        frozen[t] = run >= window
    if mask is not None:
        frozen &= np.asarray(mask, dtype=bool)[: frozen.size]
    hits = np.flatnonzero(frozen)
    return int(hits[0]) if hits.size else None


def detect_convergence(
    states: Sequence[NetworkState],
    tol: float = CONVERGENCE_TOL,
    window: int = CONVERGENCE_WINDOW,
    scheme: ReferenceScheme | None = None,
    group_tol: float = GROUP_TOL,
) -> ConvergenceRecord:
    """Detect the step ``t_N`` after which the network stops moving.

    With an :class:`External` reference only the centers have to freeze, and
    they must do so in a single group: the common sdv keeps growing, so
    groups that are still apart have not finished merging (an early stall
    of isolated investors is not convergence).
    """
    if len(states) == 0:
        raise InvalidInputError("trace must be non-empty")
    centers = np.stack([s.centers for s in states])
    sdvs = np.stack([s.sdvs for s in states])
    if isinstance(scheme, External):
        consensus = np.array([partition_arrays(c, s, group_tol).q == 1 for c, s in zip(centers, sdvs)])
        t_n = first_frozen_step(centers, None, tol, window, mask=consensus)
    else:
        t_n = first_frozen_step(centers, sdvs, tol, window)
    if t_n is None:
        return ConvergenceRecord(False, None, None)
    return ConvergenceRecord(True, states[t_n].t, partition_groups(states[t_n], group_tol))

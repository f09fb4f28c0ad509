"""Named simulation settings and the config-to-parameters translation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError
from .market import (
    DEFAULT_MAX_STEPS,
    Behavior,
    MarketParams,
    MarketState,
    RealPrice,
    TraderSpec,
    grid_centers,
    initial_state,
    rng_streams,
)
from .network import Global, Local

SCHEMES = {"local": Local, "global": Global, "realprice": RealPrice}

SIM_DEFAULTS = {
    "seed": 0,
    "steps": 500,
    "n": 60,
    "a": 0.002,
    "sigma_eps": 0.02,
    "scheme": "local",
    "b": 1.0,
    "d": 0.6,
    "p0": 10.0,
    "sigma_floor": 1e-9,
    "max_steps": DEFAULT_MAX_STEPS,
    "centers": "grid",
    "center_range": [5.0, 25.0],
    "sdv_range": [0.0, 1.0],
    "behavior": "ordinary",
    "c": None,
    "manipulators": [],
}

_LOCAL_BASE = {"scheme": "local", "a": 0.002, "d": 0.6, "b": 1.0, "sdv_range": [0.0, 1.0]}
_WIDE_BASE = {"a": 0.002, "d": 0.95, "b": 0.1, "sdv_range": [0.0, 5.0]}

SIM_PRESETS = {
    "example1": dict(_LOCAL_BASE),
    "example2": {"scheme": "global", "a": 0.005, "d": 0.95, "b": 0.1, "sdv_range": [0.0, 5.0]},
    "example3": {"scheme": "realprice", "a": 0.005, "d": 0.95, "b": 0.1, "sdv_range": [0.0, 5.0]},
    "example4": {**_LOCAL_BASE, "behavior": "follower", "c": 0.0001},
    "example4-global": {**_WIDE_BASE, "scheme": "global", "behavior": "follower", "c": 0.1},
    "example4-realprice": {**_WIDE_BASE, "scheme": "realprice", "behavior": "follower", "c": 0.1},
    "example5": {**_LOCAL_BASE, "behavior": "contrarian", "c": 0.01},
    "example5-global": {**_WIDE_BASE, "scheme": "global", "behavior": "contrarian", "c": 0.2},
    "example5-realprice": {**_WIDE_BASE, "scheme": "realprice", "behavior": "contrarian", "c": 0.2},
    "example6": {**_WIDE_BASE, "scheme": "realprice", "manipulators": [{"index": 40}, {"index": 50}]},
    "example6-local": {**_LOCAL_BASE, "manipulators": [{"index": 50}]},
    "example6-global": {**_WIDE_BASE, "scheme": "global", "manipulators": [{"index": 50}]},
    "example6-global-2": {**_WIDE_BASE, "scheme": "global", "manipulators": [{"index": 40}, {"index": 50}]},
    "example6-realprice": {**_WIDE_BASE, "scheme": "realprice", "manipulators": [{"index": 50}]},
    # two manipulators with targets 10 and 20 off the initial grid
    "manipulated": {
        **_WIDE_BASE,
        "scheme": "realprice",
        "steps": 5000,
        "manipulators": [{"index": 40, "center": 10.0}, {"index": 50, "center": 20.0}],
    },
}


def resolve(preset: str | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(SIM_DEFAULTS)
    if preset is not None:
        if preset not in SIM_PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(SIM_PRESETS)}")
        cfg.update(copy.deepcopy(SIM_PRESETS[preset]))
    unknown = set(overrides) - set(SIM_DEFAULTS) - {"preset"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown simulate setting")
    cfg.update({k: v for k, v in overrides.items() if k != "preset"})
    cfg["preset"] = preset
    return cfg


def _num(cfg, key, lo=None, hi=None, lo_open=False, integer=False):
    value = cfg[key]
    try:
        value = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {cfg[key]!r}") from None
    if integer and value != cfg[key]:
        raise ConfigError(key, "expected an integer")
    if not integer and not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(key, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(key, f"must be <= {hi}, got {value}")
    return value


def _pair(cfg, key):
    value = cfg[key]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(key, "expected a [lo, hi] pair")
    lo, hi = (float(v) for v in value)
    if not lo < hi:
        raise ConfigError(key, "needs lo < hi")
    return lo, hi


@dataclass(frozen=True)
class SimulationSetup:
    params: MarketParams
    initial: MarketState
    steps: int
    config: dict


def build_simulation(cfg: dict) -> SimulationSetup:
    """Validate a resolved simulate config and build parameters + initial state."""
    n = _num(cfg, "n", lo=1, integer=True)
    seed = _num(cfg, "seed", lo=0, integer=True)
    steps = _num(cfg, "steps", lo=0, integer=True)
    max_steps = _num(cfg, "max_steps", lo=0, integer=True)
    if steps > max_steps:
        raise ConfigError("steps", f"exceeds max_steps={max_steps}")
    a = _num(cfg, "a", lo=0, lo_open=True)
    d = _num(cfg, "d", lo=0, hi=1)
    b = _num(cfg, "b", lo=0, lo_open=True)
    sigma_eps = _num(cfg, "sigma_eps", lo=0)
    p0 = _num(cfg, "p0", lo=0, lo_open=True)
    floor = _num(cfg, "sigma_floor", lo=0, lo_open=True)
    if cfg["scheme"] not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {sorted(SCHEMES)}")
    try:
        behavior = Behavior(cfg["behavior"])
    except ValueError:
        raise ConfigError("behavior", "must be ordinary, follower or contrarian") from None
    if behavior is Behavior.MANIPULATOR:
        raise ConfigError("behavior", "declare manipulators through the 'manipulators' list")
    c = None
    if behavior is not Behavior.ORDINARY:
        if cfg["c"] is None:
            raise ConfigError("c", f"{behavior.value}s need a threshold c")
        c = _num(cfg, "c", lo=0, lo_open=True)
    if d == 1 and behavior is not Behavior.ORDINARY:
        raise ConfigError("d", "d = 1 makes every investor a manipulator")

    lo, hi = _pair(cfg, "center_range")
    init_rng, _ = rng_streams(seed)
    if cfg["centers"] == "grid":
        centers = grid_centers(n, lo, hi)
    elif cfg["centers"] == "uniform":
        centers = init_rng.uniform(lo, hi, n)
    else:
        raise ConfigError("centers", "must be 'grid' or 'uniform'")
    if np.any(centers <= 0):
        raise ConfigError("center_range", "expected prices must be positive")
    s_lo, s_hi = _pair(cfg, "sdv_range")
    if s_lo < 0:
        raise ConfigError("sdv_range", "uncertainties must be non-negative")
    sdvs = init_rng.uniform(s_lo, s_hi, n)

    traders = [TraderSpec(a, d, behavior, c) if d < 1 else TraderSpec.plain(a, d) for _ in range(n)]
    manips = cfg["manipulators"] or []
    if not isinstance(manips, list):
        raise ConfigError("manipulators", "expected a list of {index, center} entries")
    for entry in manips:
        if not isinstance(entry, dict) or "index" not in entry:
            raise ConfigError("manipulators", "each entry needs a 1-based 'index'")
        k = entry["index"]
        if not isinstance(k, int) or not 1 <= k <= n:
            raise ConfigError("manipulators", f"index {k!r} outside 1..{n}")
        traders[k - 1] = TraderSpec(a, 1.0, Behavior.MANIPULATOR)
        if entry.get("center") is not None:
            target = float(entry["center"])
            if not target > 0:
                raise ConfigError("manipulators", "manipulator center must be positive")
            centers[k - 1] = target
    try:
        params = MarketParams(traders, sigma_eps, SCHEMES[cfg["scheme"]](), b, seed, max_steps, floor)
        initial = initial_state(centers, sdvs, p0, floor)
    except InvalidInputError as exc:
        raise ConfigError("market", str(exc)) from None
    return SimulationSetup(params, initial, steps, cfg)

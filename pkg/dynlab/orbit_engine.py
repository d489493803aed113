"""
Orbit iteration and the four-way orbit fate classifier.

The engine follows single orbits in chunks, looks for convergence to a
periodic orbit with a vectorised lag test, polishes candidates with Newton's
method on f^p(z) - z and classifies the orbit by the first matching fate:
homterval cycle, limit cycle, Feigenbaum-like cascade or basic set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq

from .branches import iterate_array, iterate_image, iterate_point, laps
from .core import config as defaults
from .core.pool import chunk_slices, parallel_map, resolve_threads
from .errors import BudgetExhaustedError, PreconditionError
from .families import MAIN_PARAM, PARAM_RANGES, make_map
from .gridset import Grid, GridSet
from .map_model import CriticalPoint, Interval, MapSpec, _check_point, mirror_point

logger = logging.getLogger(__name__)

ATTRACTING = "attracting"
PARABOLIC = "parabolic"
REPELLING = "repelling"

HOMTERVAL = "absorbed_by_homterval_cycle"
LIMIT_CYCLE = "tends_to_limit_cycle"
BASIC_SET = "absorbed_by_basic_set"
FEIGENBAUM = "feigenbaum_attractor"

# Why a cascade search stopped
STOP_PERIOD_CAP = "period_cap"
STOP_RESOLUTION = "resolution"
STOP_NO_INTERVAL = "no_restrictive_interval"

# Feigenbaum's period-doubling constant
FEIGENBAUM_DELTA = 4.669201609102990

_DETECT_TOL = 1e-7
_WINDOW = 256
_PARABOLIC_SPAN = 10_000
_PARABOLIC_LAGS = 64
_CHUNK = 4096


@dataclass(frozen=True)
class OrbitRecord:
    start: float
    points: np.ndarray
    clamped: int = 0

    @property
    def n(self) -> int:
        return len(self.points) - 1

    def __getitem__(self, k):
        return self.points[k]

    def to_dict(self) -> Dict[str, Any]:
        return {"start": self.start, "n": self.n, "points": self.points.tolist()}


@dataclass(frozen=True)
class CycleEstimate:
    points: Tuple[float, ...]
    period: int
    multiplier: float
    stability: str

    @property
    def is_limit_cycle(self) -> bool:
        return self.stability in (ATTRACTING, PARABOLIC)

    def distance_to(self, other: "CycleEstimate") -> float:
        a = np.asarray(self.points)
        b = np.asarray(other.points)
        return float(np.max(np.min(np.abs(a[:, None] - b[None, :]), axis=1)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "period": self.period,
            "points": list(self.points),
            "multiplier": self.multiplier,
            "stability": self.stability,
        }


@dataclass(frozen=True)
class PeriodicIntervalCycle:
    """Periodic interval I (f^p I ⊆ I) with its orbit I, f I, ..., f^(p-1) I."""

    interval: Interval
    period: int
    is_homterval: bool = False
    orbit: Tuple[Interval, ...] = ()

    def contains_points(self, xs: np.ndarray, tol: float = 0.0) -> bool:
        members = self.orbit or (self.interval,)
        xs = np.asarray(xs, dtype=float)
        inside = np.zeros(xs.shape, dtype=bool)
        for member in members:
            inside |= (xs >= member.lo - tol) & (xs <= member.hi + tol)
        return bool(np.all(inside))

    def as_interval_cycle(self) -> "IntervalCycle":
        return IntervalCycle(self.period, self.orbit or (self.interval,))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "interval": self.interval.to_list(),
            "period": self.period,
            "is_homterval": self.is_homterval,
            "orbit": [member.to_list() for member in self.orbit],
        }


@dataclass(frozen=True)
class IntervalCycle:
    """A cycle of intervals used as the basic-set witness."""

    period: int
    intervals: Tuple[Interval, ...]

    @property
    def measure(self) -> float:
        return float(sum(iv.length for iv in self.intervals))

    def to_dict(self) -> Dict[str, Any]:
        return {"period": self.period, "intervals": [iv.to_list() for iv in self.intervals]}


@dataclass(frozen=True)
class RenormalizationCascade:
    """Nested restrictive intervals around one extremum, outermost first."""

    extremum: float
    levels: Tuple[PeriodicIntervalCycle, ...] = ()
    reached_limit: bool = False
    p_max: int = 0
    stop_reason: str = STOP_NO_INTERVAL

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[PeriodicIntervalCycle]:
        return iter(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    @property
    def periods(self) -> List[int]:
        return [level.period for level in self.levels]

    @property
    def still_doubling(self) -> bool:
        """Every level has twice the period of the one above it."""
        periods = [1, *self.periods]
        return len(periods) > 1 and all(b == 2 * a for a, b in zip(periods, periods[1:]))

    def is_infinite(self, cascade_min: int) -> bool:
        """Numerical stand-in for infinite renormalizability.

        A deep cascade counts when the search hit the period cap or when the
        periods were still doubling at the level it could no longer resolve.
        """
        if len(self.levels) < cascade_min:
            return False
        return self.reached_limit or self.still_doubling

    def depth_containing(self, xs: np.ndarray, tol: float = 1e-12) -> int:
        """Deepest level whose cycle of intervals contains every point of ``xs``."""
        depth = 0
        for k, level in enumerate(self.levels, start=1):
            if not level.contains_points(xs, tol):
                break
            depth = k
        return depth

    def to_dict(self) -> Dict[str, Any]:
        return {
            "extremum": self.extremum,
            "depth": len(self.levels),
            "periods": self.periods,
            "reached_limit": self.reached_limit,
            "stop_reason": self.stop_reason,
            "p_max": self.p_max,
            "levels": [level.to_dict() for level in self.levels],
        }


@dataclass(frozen=True)
class OrbitClass:
    tag: str
    witness: Any = None
    steps: int = 0
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        witness = self.witness.to_dict() if hasattr(self.witness, "to_dict") else self.witness
        return {"tag": self.tag, "witness": witness, "steps": self.steps, "detail": self.detail}


@dataclass(frozen=True)
class SensitivityEstimate:
    gamma: float
    N_of_tau: Dict[float, Optional[int]]
    samples: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma,
            "N_of_tau": {repr(t): n for t, n in self.N_of_tau.items()},
            "samples": self.samples,
        }


@dataclass
class CoveringReport:
    """Outcome of the covering-property test on sampled (J, K) pairs."""

    pairs: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.pairs) and all(pair["n"] is not None for pair in self.pairs)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "pairs": self.pairs}


# Plain iteration


def _check_start(map: MapSpec, x: float) -> float:
    return _check_point(map, x)


def _run(map: MapSpec, x: float, count: int) -> Tuple[np.ndarray, int]:
    """The next ``count`` orbit points after x, clamping roundoff escapes."""
    out = np.empty(count, dtype=float)
    hull = map.hull
    lo, hi = hull.lo, hull.hi
    single = len(map.domain) == 1
    clamped = 0
    f = map.f
    for k in range(count):
        x = f(x)
        if x < lo or x > hi or (not single and not map.in_domain(x)):
            clamped += 1
            x = map.clamp(x)
        out[k] = x
    if clamped:
        logger.warning(f"{map.name}: roundoff pushed the orbit out of M {clamped} times; clamped")
    return out, clamped


def iterate(map: MapSpec, x: float, n: int) -> OrbitRecord:
    """x_0..x_n of the orbit of x."""
    if n < 0:
        raise PreconditionError(f"n must be >= 0, got {n}")
    x = _check_start(map, x)
    tail, clamped = _run(map, x, n)
    points = np.concatenate(([x], tail))
    points.setflags(write=False)
    return OrbitRecord(x, points, clamped)


def advance(map: MapSpec, xs: np.ndarray, steps: int) -> np.ndarray:
    """Vectorised f^steps, clipped to the hull of M."""
    hull = map.hull
    out = np.asarray(xs, dtype=float)
    for _ in range(steps):
        out = np.clip(map.f(out), hull.lo, hull.hi)
    return out


# Cycle detection


def _divisors(p: int) -> List[int]:
    return [q for q in range(1, p) if p % q == 0]


def _cycle_orbit(map: MapSpec, z: float, steps: int) -> np.ndarray:
    out = np.empty(steps + 1)
    out[0] = z
    for k in range(steps):
        z = map.f(z)
        out[k + 1] = z
    return out


def _multiplier(map: MapSpec, points: np.ndarray) -> float:
    crit = np.array([c.location for c in map.critical_points])
    if crit.size and np.any(np.isin(points, crit)):
        return 0.0
    return float(np.prod(map.df(np.asarray(points))))


def _newton_periodic(map: MapSpec, z: float, p: int, tol: float, max_steps: int = 60) -> Optional[float]:
    """Solve f^p(z) = z from a nearby guess; None when Newton wanders off."""
    hull = map.hull
    for _ in range(max_steps):
        orbit = _cycle_orbit(map, z, p)
        g = orbit[-1] - z
        if abs(g) <= tol:
            return z
        slope = _multiplier(map, orbit[:-1]) - 1.0
        if slope == 0.0 or not math.isfinite(slope):
            return None
        z_new = z - g / slope
        if not (hull.lo <= z_new <= hull.hi) or abs(z_new - z) > 1e-2 * map.measure:
            return None
        if z_new == z:
            return z
        z = z_new
    orbit = _cycle_orbit(map, z, p)
    return z if abs(orbit[-1] - z) <= tol else None


def _stability(multiplier: float, tol_mult: float) -> str:
    if abs(abs(multiplier) - 1.0) <= tol_mult:
        return PARABOLIC
    if abs(multiplier) < 1.0 - tol_mult:
        return ATTRACTING
    return REPELLING


def _polish(map: MapSpec, z0: float, p: int, tol_cycle: float, tol_mult: float) -> Optional[CycleEstimate]:
    z = _newton_periodic(map, z0, p, 0.1 * tol_cycle)
    if z is None:
        # attracting cycles also converge under plain iteration of f^p
        z = z0
        for _ in range(200):
            z_next = iterate_point(map, z, p)
            if abs(z_next - z) <= 0.1 * tol_cycle:
                z = z_next
                break
            z = z_next
    orbit = _cycle_orbit(map, z, 2 * p)
    if np.max(np.abs(orbit[p:2 * p] - orbit[:p])) > tol_cycle:
        return None
    for q in _divisors(p):
        if np.max(np.abs(orbit[q:q + p] - orbit[:p])) <= tol_cycle:
            p = q
            break
    points = orbit[:p]
    mult = _multiplier(map, points)
    # canonical order: start from the smallest point
    start = int(np.argmin(points))
    ordered = tuple(float(v) for v in np.roll(points, -start))
    return CycleEstimate(ordered, p, mult, _stability(mult, tol_mult))


def _lag_candidate(tail: np.ndarray, p_max: int, window: int, tol: float) -> Optional[int]:
    need = window + p_max
    if len(tail) < need:
        p_max = len(tail) - window
        if p_max < 1:
            return None
    view = sliding_window_view(tail[-(window + p_max):], window)
    last = view[p_max]
    lags = np.arange(1, p_max + 1)
    diffs = np.abs(view[p_max - lags] - last).max(axis=1)
    hits = np.flatnonzero(diffs <= tol)
    return int(lags[hits[0]]) if hits.size else None


def _slow_candidate(tail: np.ndarray, max_lag: int = _PARABOLIC_LAGS, span: int = _PARABOLIC_SPAN) -> Optional[int]:
    """Lag p whose lag-p differences decay monotonically over ``span`` steps."""
    if len(tail) < span + max_lag:
        return None
    recent = tail[-(span + max_lag):]
    for p in range(1, max_lag + 1):
        seq = np.abs(recent[p::p] - recent[:-p:p])
        if seq.size < 8 or seq[-1] == 0.0 or seq[-1] > 1e-3:
            continue
        if np.all(np.diff(seq) <= 1e-15) and seq[-1] < seq[0]:
            return p
    return None


@dataclass
class _FollowResult:
    kind: str
    steps: int
    tail: np.ndarray
    cycle: Optional[CycleEstimate] = None
    homterval_index: Optional[int] = None
    slow_lag: Optional[int] = None


def _member_bounds(cycles: Sequence[PeriodicIntervalCycle]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lows, highs, owners = [], [], []
    for idx, cycle in enumerate(cycles):
        for member in cycle.orbit or (cycle.interval,):
            lows.append(member.lo)
            highs.append(member.hi)
            owners.append(idx)
    return np.array(lows), np.array(highs), np.array(owners, dtype=int)


def _follow(
    map: MapSpec,
    x: float,
    max_iter: int,
    p_max: int,
    tol_cycle: float,
    tol_mult: float,
    homtervals: Sequence[PeriodicIntervalCycle] = (),
) -> _FollowResult:
    keep = max(_WINDOW + p_max, _PARABOLIC_SPAN + _PARABOLIC_LAGS)
    lows, highs, owners = _member_bounds(homtervals)
    tail = np.array([x])
    steps = 0
    next_check = keep
    while steps < max_iter:
        count = min(_CHUNK, max_iter - steps)
        chunk, _ = _run(map, x, count)
        x = float(chunk[-1])
        steps += count
        if lows.size:
            inside = (chunk[:, None] > lows) & (chunk[:, None] < highs)
            hit = np.argwhere(inside)
            if hit.size:
                return _FollowResult(
                    "homterval", steps - count + int(hit[0, 0]) + 1, tail, homterval_index=int(owners[hit[0, 1]])
                )
        tail = np.concatenate((tail, chunk))[-keep:]
        if steps >= next_check or steps >= max_iter:
            next_check = max(next_check * 2, steps + 1)
            p = _lag_candidate(tail, p_max, _WINDOW, _DETECT_TOL)
            if p is not None:
                cycle = _polish(map, float(tail[-1]), p, tol_cycle, tol_mult)
                if cycle is not None:
                    return _FollowResult("cycle", steps, tail, cycle=cycle)
    slow = _slow_candidate(tail)
    if slow is not None:
        cycle = _polish(map, float(tail[-1]), slow, tol_cycle, tol_mult)
        if cycle is not None:
            return _FollowResult("cycle", steps, tail, cycle=cycle)
    return _FollowResult("none", steps, tail, slow_lag=slow)


def detect_cycle(
    map: MapSpec,
    x: float,
    max_iter: Optional[int] = None,
    tol_cycle: Optional[float] = None,
    p_max: Optional[int] = None,
    tol_mult: Optional[float] = None,
) -> Optional[CycleEstimate]:
    """Periodic orbit the tail of orb(x) converges to, if any (period ≤ p_max)."""
    x = _check_start(map, x)
    result = _follow(
        map,
        x,
        defaults.BUDGET if max_iter is None else max_iter,
        defaults.P_MAX if p_max is None else p_max,
        defaults.TOL_CYCLE if tol_cycle is None else tol_cycle,
        defaults.TOL_MULT if tol_mult is None else tol_mult,
    )
    return result.cycle


def find_limit_cycles(
    map: MapSpec,
    p_max: Optional[int] = None,
    seeds: Sequence[float] = (),
    max_iter: Optional[int] = None,
    tol_cycle: Optional[float] = None,
    tol_mult: Optional[float] = None,
) -> List[CycleEstimate]:
    """Attracting and parabolic cycles reached from critical values and seeds."""
    starts = [float(map.f(c.location)) for c in map.critical_points] + [float(s) for s in seeds]
    found: List[CycleEstimate] = []
    for s in starts:
        cycle = detect_cycle(map, map.clamp(s), max_iter, tol_cycle, p_max, tol_mult)
        if cycle is None or not cycle.is_limit_cycle:
            continue
        if any(c.period == cycle.period and c.distance_to(cycle) < 1e-8 for c in found):
            continue
        logger.debug(f"{map.name}: limit cycle of period {cycle.period} from seed {s}")
        found.append(cycle)
    return found


def omega_limit(
    map: MapSpec,
    x: float,
    burn_in: Optional[int] = None,
    n_collect: int = 100_000,
    grid_h: Optional[float] = None,
    grid: Optional[Grid] = None,
) -> GridSet:
    """Grid cells visited by x_k for burn_in <= k <= burn_in + n_collect."""
    x = _check_start(map, x)
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    if grid is None:
        grid = Grid.over(map.hull, grid_h if grid_h is not None else map.measure * 2.0**-defaults.SUPPORT_EXP)
    if burn_in:
        x = float(_run(map, x, burn_in)[0][-1])
    points, _ = _run(map, x, n_collect)
    return GridSet.from_points(grid, np.concatenate(([x], points)))


# Periodic intervals


def _is_restrictive(map: MapSpec, J: Interval, p: int, current: Interval, tol: float) -> Optional[Tuple[Interval, ...]]:
    if J.length <= 0 or J.length >= current.length * (1 - 1e-9):
        return None
    if not current.contains_interval(J, tol * current.length):
        return None
    images = iterate_image(map, J, p)
    slack = tol * J.length + 1e-14
    if not J.contains_interval(images[p], slack):
        return None
    for member in images[1:p]:
        if member.interior_overlap(J) > slack:
            return None
    return tuple(images[:p])


def _mirror_many(map: MapSpec, c: CriticalPoint, ys: np.ndarray) -> np.ndarray:
    if any(abs(s - c.location) <= 1e-15 for s in map.symmetric_extrema):
        return 2.0 * c.location - ys
    out = np.empty_like(ys)
    for i, y in enumerate(ys):
        m = mirror_point(map, c, float(y))
        out[i] = np.nan if m is None else m
    return out


def _sign_change_roots(func, xs: np.ndarray, values: np.ndarray) -> List[float]:
    roots = []
    for i in range(len(xs) - 1):
        a, b = values[i], values[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            roots.append(float(xs[i]))
        elif a * b < 0:
            try:
                roots.append(float(brentq(func, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)))
            except ValueError:
                continue
    if len(values) and values[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def _restrictive_interval(
    map: MapSpec, c: CriticalPoint, p: int, current: Interval, samples: int, tol: float
) -> Optional[PeriodicIntervalCycle]:
    centre = c.location
    crit_orbit = _cycle_orbit(map, centre, p)
    dist = np.abs(crit_orbit - centre)
    # f^p(c) must come back into J while f^i(c), 0 < i < p, stays out of J°
    r_min = dist[p]
    r_max = dist[1:p].min() if p > 1 else math.inf
    if r_min > r_max + 1e-15:
        return None
    lo_edge = max(current.lo, centre - r_max)
    hi_edge = centre - r_min
    if hi_edge <= lo_edge:
        hi_edge = centre
    ys = np.linspace(lo_edge, hi_edge, samples + 1)
    fp = iterate_array(map, ys, p)
    taus = _mirror_many(map, c, ys)

    def fixed_gap(y: float) -> float:
        return iterate_point(map, y, p) - y

    def mirror_gap(y: float) -> float:
        m = mirror_point(map, c, y)
        return iterate_point(map, y, p) - (m if m is not None else np.nan)

    candidates = _sign_change_roots(fixed_gap, ys, fp - ys)
    candidates += _sign_change_roots(mirror_gap, ys, fp - taus)
    for z in sorted(set(candidates), key=lambda v: abs(v - centre), reverse=True):
        if abs(z - centre) < r_min * (1 - 1e-9) or abs(z - centre) > r_max * (1 + 1e-9):
            continue
        m = mirror_point(map, c, z)
        if m is None:
            continue
        J = Interval.span(z, m)
        orbit = _is_restrictive(map, J, p, current, tol)
        if orbit is not None:
            return PeriodicIntervalCycle(J, p, False, orbit)
    return None


def renormalization_cascade(
    map: MapSpec,
    c: float | CriticalPoint,
    p_max: Optional[int] = None,
    q_max: int = 16,
    samples: int = 2048,
    tol: Optional[float] = None,
) -> RenormalizationCascade:
    """Maximal nested sequence of restrictive intervals around extremum c."""
    crit = c if isinstance(c, CriticalPoint) else map.critical_point_at(float(c))
    if not crit.is_extremum:
        raise PreconditionError(f"{crit.location} is not an extremum")
    p_max = defaults.P_MAX if p_max is None else p_max
    tol = defaults.TOL_INCLUSION if tol is None else tol
    current = map.component_of(crit.location)
    period = 1
    levels: List[PeriodicIntervalCycle] = []
    reached_limit = False
    stop_reason = STOP_NO_INTERVAL
    while True:
        if 2 * period > p_max:
            reached_limit = True
            stop_reason = STOP_PERIOD_CAP
            break
        found = None
        for q in range(2, q_max + 1):
            p = period * q
            if p > p_max:
                break
            found = _restrictive_interval(map, crit, p, current, samples, tol)
            if found is not None:
                break
        if found is None:
            # periods were still doubling when the next level failed
            if levels and all(lv.period == 2 ** (k + 1) for k, lv in enumerate(levels)):
                stop_reason = STOP_RESOLUTION
            break
        logger.debug(f"{map.name}: restrictive interval {found.interval} of period {found.period}")
        levels.append(found)
        current, period = found.interval, found.period
    logger.debug(f"{map.name}: cascade of depth {len(levels)} stopped ({stop_reason})")
    return RenormalizationCascade(crit.location, tuple(levels), reached_limit, p_max, stop_reason)


def _maximal_invariant(map: MapSpec, lap: Interval, p: int, samples: int = 257) -> Optional[Interval]:
    """Largest [u, v] ⊆ lap with f^p[u, v] ⊆ [u, v], for f^p increasing on lap."""
    ys = np.linspace(lap.lo, lap.hi, samples)
    h = iterate_array(map, ys, p) - ys

    def gap(y: float) -> float:
        return iterate_point(map, y, p) - y

    up = np.flatnonzero(h >= 0)
    down = np.flatnonzero(h <= 0)
    if not up.size or not down.size:
        return None
    i = int(up[0])
    if i == 0 or h[i] == 0.0:
        u = float(ys[i])
    else:
        u = float(brentq(gap, ys[i - 1], ys[i], xtol=1e-15))
    j = int(down[-1])
    if j == len(ys) - 1 or h[j] == 0.0:
        v = float(ys[j])
    else:
        v = float(brentq(gap, ys[j], ys[j + 1], xtol=1e-15))
    if v - u <= 1e-9 * map.measure:
        return None
    J = Interval(u, v)
    img = Interval.span(iterate_point(map, u, p), iterate_point(map, v, p))
    if not J.contains_interval(img, 1e-12 + 1e-9 * J.length):
        return None
    return J


def detect_homtervals(
    map: MapSpec, p_max: Optional[int] = None, max_laps: Optional[int] = None, tol: float = 1e-12
) -> List[PeriodicIntervalCycle]:
    """Periodic homtervals whose cycle closure stays clear of the extrema.

    Scans the laps of f^p (split at every critical point) for p ≤ p_max;
    decreasing laps are picked up at period 2p.
    """
    p_max = min(defaults.HOMTERVAL_PMAX if p_max is None else p_max, defaults.P_MAX)
    found: List[PeriodicIntervalCycle] = []
    for p in range(1, p_max + 1):
        try:
            pieces = laps(map, p, split_at_inflections=True, max_laps=max_laps)
        except BudgetExhaustedError as e:
            # higher iterates only have more laps
            logger.warning(f"{map.name}: homterval scan stops before period {p}: {e}")
            break
        for lap in pieces:
            if iterate_point(map, lap.hi, p) <= iterate_point(map, lap.lo, p):
                continue
            J = _maximal_invariant(map, lap, p)
            if J is None:
                continue
            orbit = tuple(iterate_image(map, J, p - 1))
            if any(member.contains(e, tol) for member in orbit for e in map.extrema):
                continue
            if any(
                known_member.contains_interval(J, tol)
                for known in found
                for known_member in known.orbit
            ):
                continue
            period = p
            for q in _divisors(p):
                if J.contains_interval(image_power(map, J, q), tol):
                    period = q
                    break
            logger.debug(f"{map.name}: homterval {J} of period {period}")
            found.append(PeriodicIntervalCycle(J, period, True, orbit[:period]))
    return found


def image_power(map: MapSpec, J: Interval, n: int) -> Interval:
    return iterate_image(map, J, n)[-1]


def min_image_length(map: MapSpec, J: Interval, N: int) -> float:
    """min over 0 < m <= N of λ(f^m J), from exact images."""
    if N < 1:
        raise PreconditionError("N must be >= 1")
    images = iterate_image(map, J, N)
    return float(min(img.length for img in images[1:]))


# Shared map-level context


@dataclass
class OrbitContext:
    """Map-level objects the classifiers reuse across many orbits."""

    homtervals: List[PeriodicIntervalCycle]
    limit_cycles: List[CycleEstimate]
    cascades: Dict[float, RenormalizationCascade]
    p_max: int

    @classmethod
    def build(
        cls,
        map: MapSpec,
        p_max: Optional[int] = None,
        homterval_pmax: Optional[int] = None,
        max_iter: Optional[int] = None,
        seeds: Sequence[float] = (),
    ) -> "OrbitContext":
        p_max = defaults.P_MAX if p_max is None else p_max
        homtervals = detect_homtervals(map, min(p_max, homterval_pmax or defaults.HOMTERVAL_PMAX))
        cycles = find_limit_cycles(map, p_max, seeds, max_iter)
        cascades = {e: renormalization_cascade(map, e, p_max) for e in map.extrema}
        logger.info(
            f"{map.name}: {len(homtervals)} homterval cycles, {len(cycles)} limit cycles, "
            f"cascade depths {[len(c) for c in cascades.values()]}"
        )
        return cls(homtervals, cycles, cascades, p_max)

    @property
    def has_trivial_dynamics(self) -> bool:
        return bool(self.homtervals) or bool(self.limit_cycles)

    def deepest_cascade(self, xs: np.ndarray) -> Tuple[Optional[RenormalizationCascade], int]:
        best, best_depth = None, -1
        for cascade in self.cascades.values():
            depth = cascade.depth_containing(xs)
            if depth > best_depth:
                best, best_depth = cascade, depth
        return best, max(best_depth, 0)


def classify_orbit(
    map: MapSpec,
    x: float,
    budget: Optional[int] = None,
    *,
    context: Optional[OrbitContext] = None,
    p_max: Optional[int] = None,
    cascade_min: Optional[int] = None,
    tol_cycle: Optional[float] = None,
    tol_mult: Optional[float] = None,
) -> OrbitClass:
    """Fate of orb(x): homterval cycle, limit cycle, Feigenbaum-like attractor or basic set."""
    x = _check_start(map, x)
    budget = defaults.BUDGET if budget is None else budget
    p_max = (context.p_max if context else defaults.P_MAX) if p_max is None else p_max
    cascade_min = defaults.CASCADE_MIN if cascade_min is None else cascade_min
    context = context or OrbitContext.build(map, p_max)
    result = _follow(
        map,
        x,
        budget,
        p_max,
        defaults.TOL_CYCLE if tol_cycle is None else tol_cycle,
        defaults.TOL_MULT if tol_mult is None else tol_mult,
        context.homtervals,
    )
    if result.kind == "homterval":
        return OrbitClass(HOMTERVAL, context.homtervals[result.homterval_index], result.steps)
    if result.kind == "cycle" and result.cycle.is_limit_cycle:
        return OrbitClass(LIMIT_CYCLE, result.cycle, result.steps, {"period": result.cycle.period})
    if result.slow_lag is not None:
        raise BudgetExhaustedError(
            f"orbit of {x} is still converging slowly at lag {result.slow_lag} after {budget} steps",
            {"x": x, "steps": result.steps, "lag": result.slow_lag, "last": float(result.tail[-1])},
        )
    tail = result.tail[-_WINDOW:]
    cascade, depth = context.deepest_cascade(tail)
    detail = {"cascade_depth": depth}
    if result.cycle is not None:
        detail["landed_on"] = result.cycle.to_dict()
    if cascade is not None:
        detail["cascade_levels"] = len(cascade)
        if cascade.is_infinite(cascade_min) and depth >= cascade_min:
            return OrbitClass(FEIGENBAUM, cascade, result.steps, detail)
    if cascade is not None and depth >= 1:
        witness = cascade[depth - 1].as_interval_cycle()
    else:
        witness = IntervalCycle(1, tuple(map.domain))
    return OrbitClass(BASIC_SET, witness, result.steps, detail)


# Ensembles


def trivial_fates(
    map: MapSpec,
    xs: np.ndarray,
    budget: int,
    context: OrbitContext,
    check_every: int = 64,
    capture_radius: float = 1e-6,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised fates: 1 homterval, 2 limit cycle, 0 undecided; plus the cycle index."""
    xs = np.array(xs, dtype=float)
    fates = np.zeros(xs.shape, dtype=np.int8)
    which = np.full(xs.shape, -1, dtype=np.int32)
    if not context.has_trivial_dynamics or xs.size == 0:
        return fates, which
    lows, highs, owners = _member_bounds(context.homtervals)
    pts, radii, cyc_idx = [], [], []
    for k, cycle in enumerate(context.limit_cycles):
        radius = capture_radius * map.measure if cycle.stability == ATTRACTING else 1e-2 * map.measure
        for z in cycle.points:
            pts.append(z)
            radii.append(radius)
            cyc_idx.append(k)
    order = np.argsort(pts) if pts else np.array([], dtype=int)
    pts = np.asarray(pts)[order] if pts else np.array([])
    radii = np.asarray(radii)[order] if len(radii) else np.array([])
    cyc_idx = np.asarray(cyc_idx)[order] if len(cyc_idx) else np.array([], dtype=int)
    hull = map.hull

    def update(values: np.ndarray) -> None:
        open_ = fates == 0
        if lows.size:
            inside = (values[:, None] > lows) & (values[:, None] < highs)
            hit = inside.any(axis=1) & open_
            fates[hit] = 1
            which[hit] = owners[np.argmax(inside[hit], axis=1)]
            open_ = fates == 0
        if pts.size:
            pos = np.clip(np.searchsorted(pts, values), 1, len(pts)) if len(pts) > 1 else np.zeros(values.shape, dtype=int)
            if len(pts) > 1:
                left = pos - 1
                right = np.minimum(pos, len(pts) - 1)
                nearest = np.where(np.abs(values - pts[left]) <= np.abs(values - pts[right]), left, right)
            else:
                nearest = pos
            close = (np.abs(values - pts[nearest]) <= radii[nearest]) & open_
            fates[close] = 2
            which[close] = cyc_idx[nearest[close]]

    values = xs
    update(values)
    for step in range(1, budget + 1):
        values = np.clip(map.f(values), hull.lo, hull.hi)
        if step % check_every == 0:
            update(values)
            if np.all(fates != 0):
                break
    return fates, which


def lambda_set(
    map: MapSpec,
    grid_h: Optional[float] = None,
    samples: int = 8,
    budget: int = 20_000,
    context: Optional[OrbitContext] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
    grid: Optional[Grid] = None,
) -> GridSet:
    """Cells of M not absorbed by limit cycles or homterval cycles (majority vote)."""
    if grid is None:
        h = grid_h if grid_h is not None else map.measure * 2.0**-defaults.LAMBDA_EXP
        grid = Grid.over(map.hull, h)
    domain = GridSet.full(grid, map.domain)
    context = context or OrbitContext.build(map)
    if not context.has_trivial_dynamics:
        return domain
    cells = np.flatnonzero(domain.mask)
    seed = defaults.SEED if seed is None else seed
    # drawn before the split: sample points are independent of the worker count
    jitter = np.random.default_rng(seed).random((len(cells), samples))
    offsets_all = (np.arange(samples)[None, :] + jitter) / samples
    slices = chunk_slices(len(cells), max(1, resolve_threads(threads) * 4))

    def work(part: slice) -> np.ndarray:
        chosen = cells[part]
        offsets = offsets_all[part]
        xs = grid.origin + (chosen[:, None] + offsets) * grid.h
        xs = map.clamp(xs.ravel())
        fates, _ = trivial_fates(map, xs, budget, context)
        trivial = (fates != 0).reshape(len(chosen), samples).mean(axis=1)
        return chosen[trivial < 0.5]

    kept = parallel_map(work, slices, threads)
    mask = np.zeros(grid.n, dtype=bool)
    for part in kept:
        mask[part] = True
    return GridSet(grid, mask)


# Covering and sensitivity


def _covers(intervals: Sequence[Interval], K: Interval) -> bool:
    for lo, hi in _merged(intervals):
        if lo <= K.lo and K.hi <= hi:
            return True
    return False


def _merged(intervals: Sequence[Interval]) -> List[Tuple[float, float]]:
    spans = sorted((iv.lo, iv.hi) for iv in intervals)
    out: List[List[float]] = []
    for lo, hi in spans:
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def check_covering(
    map: MapSpec,
    cycle: IntervalCycle,
    n_pairs: int = 10,
    n_max: int = 64,
    rng: Optional[np.random.Generator] = None,
    j_fraction: float = 1e-3,
    k_margin: float = 0.05,
) -> CoveringReport:
    """Test ∪_{k=n}^{n+p} f^k J ⊇ K on sampled (J, K) pairs with exact images."""
    rng = rng or np.random.default_rng(defaults.SEED)
    report = CoveringReport()
    p = cycle.period
    for _ in range(n_pairs):
        member = cycle.intervals[int(rng.integers(len(cycle.intervals)))]
        width = member.length * j_fraction
        start = float(rng.uniform(member.lo, member.hi - width))
        J = Interval(start, start + width)
        target = cycle.intervals[int(rng.integers(len(cycle.intervals)))]
        K = Interval(target.lo + k_margin * target.length, target.hi - k_margin * target.length)
        images = iterate_image(map, J, n_max + p)
        hit = None
        for n in range(n_max + 1):
            if _covers(images[n : n + p + 1], K):
                hit = n
                break
        report.pairs.append({"J": J.to_list(), "K": K.to_list(), "n": hit})
    return report


def sensitivity_estimate(
    map: MapSpec,
    cycle: IntervalCycle,
    taus: Sequence[float] = (1e-2, 1e-3, 1e-4),
    n_max: int = 200,
    samples: int = 32,
    rng: Optional[np.random.Generator] = None,
) -> SensitivityEstimate:
    """Estimate gamma(R) and the times N(tau) after which images stay longer than gamma."""
    rng = rng or np.random.default_rng(defaults.SEED)
    lengths: Dict[float, np.ndarray] = {}
    for tau in sorted(taus, reverse=True):
        rows = []
        for _ in range(samples):
            member = cycle.intervals[int(rng.integers(len(cycle.intervals)))]
            width = min(tau, member.length)
            start = float(rng.uniform(member.lo, member.hi - width))
            images = iterate_image(map, Interval(start, start + width), n_max)
            rows.append([img.length for img in images])
        lengths[tau] = np.array(rows)
    largest = lengths[max(taus)]
    gamma = 0.5 * float(largest[:, n_max // 2 :].min())
    table: Dict[float, Optional[int]] = {}
    for tau, rows in lengths.items():
        worst = 0
        for row in rows:
            above = row > gamma
            # first N with every later image longer than gamma
            tail_ok = np.flip(np.cumprod(np.flip(above))).astype(bool)
            idx = np.flatnonzero(tail_ok)
            if gamma <= 0 or not idx.size:
                worst = None
                break
            worst = max(worst, int(idx[0]))
        table[tau] = worst
    return SensitivityEstimate(gamma, table, samples)


# Parameter space


def _family_map(family: str, value: float, fixed: Optional[Dict[str, float]] = None) -> MapSpec:
    params = dict(fixed or {})
    params[MAIN_PARAM[family]] = value
    return make_map(family, xi=1.0, **params)


def superstable_parameter(
    family: str, period: int, bracket: Tuple[float, float], fixed: Optional[Dict[str, float]] = None
) -> float:
    """Parameter in ``bracket`` where the critical point is periodic with the given period."""

    def gap(a: float) -> float:
        m = _family_map(family, a, fixed)
        c = m.extrema[0]
        return iterate_point(m, c, period) - c

    return float(brentq(gap, bracket[0], bracket[1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def superstable_sequence(family: str = "logistic", levels: int = 8, fixed: Optional[Dict[str, float]] = None) -> List[float]:
    """s_0, s_1, ...: superstable parameters of periods 1, 2, 4, ..."""
    lo, hi = PARAM_RANGES[family]
    values = [superstable_parameter(family, 1, (lo + 1e-9, hi), fixed)]
    values.append(superstable_parameter(family, 2, (values[0] + 1e-6 * (hi - lo), hi), fixed))
    for k in range(2, levels + 1):
        step = (values[-1] - values[-2]) / FEIGENBAUM_DELTA
        for low, high in ((0.8, 1.25), (0.5, 2.0)):
            try:
                values.append(
                    superstable_parameter(family, 2**k, (values[-1] + low * step, values[-1] + high * step), fixed)
                )
                break
            except ValueError:
                continue
        else:
            logger.warning(f"{family}: lost the period-{2**k} superstable parameter; stopping")
            break
    return values


def feigenbaum_parameter(family: str = "logistic", levels: int = 10, fixed: Optional[Dict[str, float]] = None) -> float:
    """Accumulation point of the period-doubling cascade, by geometric extrapolation."""
    s = superstable_sequence(family, levels, fixed)
    return s[-1] + (s[-1] - s[-2]) / (FEIGENBAUM_DELTA - 1.0)


def _continued_multiplier(family: str, a: float, z: float, P: int, fixed) -> Tuple[Optional[float], float]:
    m = _family_map(family, a, fixed)
    z_new = _newton_periodic(m, z, P, 1e-13)
    if z_new is None:
        return None, z
    orbit = _cycle_orbit(m, z_new, P)
    return _multiplier(m, orbit[:-1]), z_new


def doubling_thresholds(family: str = "logistic", levels: int = 4, fixed: Optional[Dict[str, float]] = None, grid: int = 32) -> List[float]:
    """Parameters where the period-2^(k-1) cycle reaches multiplier -1."""
    s = superstable_sequence(family, levels, fixed)
    thresholds = []
    for k in range(1, min(levels, len(s) - 1) + 1):
        P = 2 ** (k - 1)
        params = np.linspace(s[k - 1], s[k], grid + 1)
        m0 = _family_map(family, params[0], fixed)
        z = m0.extrema[0]
        previous = None
        for a in params:
            mult, z_new = _continued_multiplier(family, float(a), z, P, fixed)
            if mult is None:
                break
            if previous is not None and (previous[1] + 1.0) * (mult + 1.0) < 0:
                a_left, z_left = previous[0], previous[2]

                def gap(b: float) -> float:
                    value, _ = _continued_multiplier(family, b, z_left, P, fixed)
                    return (value if value is not None else np.nan) + 1.0

                thresholds.append(float(brentq(gap, a_left, float(a), xtol=1e-13)))
                break
            previous = (float(a), mult, z_new)
            z = z_new
        else:
            logger.warning(f"{family}: no multiplier -1 crossing for period {P}")
    return thresholds


# Symbolic dynamics


def itinerary(map: MapSpec, x: float, n: int, burn_in: int = 0) -> np.ndarray:
    """Lap index of x_k (k = burn_in .. burn_in + n - 1) in the partition by extrema."""
    x = _check_start(map, x)
    if burn_in:
        x = float(_run(map, x, burn_in)[0][-1])
    points, _ = _run(map, x, n - 1) if n > 1 else (np.array([]), 0)
    orbit = np.concatenate(([x], points))
    return np.searchsorted(np.asarray(map.extrema), orbit).astype(np.int8)


def word_complexity(symbols: np.ndarray, lengths: Sequence[int]) -> Dict[int, int]:
    """Number of distinct words of each length in a symbol sequence."""
    symbols = np.asarray(symbols, dtype=np.int64)
    base = int(symbols.max()) + 1 if symbols.size else 1
    base = max(base, 2)
    counts = {}
    for L in lengths:
        if L * math.log2(base) > 62:
            raise PreconditionError(f"words of length {L} over {base} symbols overflow 64-bit codes")
        N = symbols.size - L + 1
        if N <= 0:
            counts[L] = 0
            continue
        code = np.zeros(N, dtype=np.int64)
        for i in range(L):
            code = code * base + symbols[i : i + N]
        counts[L] = int(np.unique(code).size)
    return counts

"""
Pull-back chains along orbits, multiple collections and depth certificates.

A chain I_0, ..., I_n is built backwards from the target I_n = I: each I_m
is the maximal interval around x_m whose image lies in I_{m+1}. All
endpoints come from exact branch images and brentq preimages, so every
chain invariant can be re-checked directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .branches import image, iterate_array, iterate_image, iterate_point, monotone_extent, solve_on_branch
from .core import config as defaults
from .core.pool import parallel_map, spawn_generators
from .errors import PreconditionError
from .map_model import Interval, MapSpec, _check_point
from .orbit_engine import OrbitRecord, detect_cycle, iterate

logger = logging.getLogger(__name__)

SIDES = ("a", "b")


@dataclass(frozen=True)
class Chain:
    intervals: Tuple[Interval, ...]
    base_point: float
    orbit: OrbitRecord
    extrema: Tuple[float, ...] = ()
    maximal: bool = True
    dichotomy_applies: bool = True

    @property
    def n(self) -> int:
        return len(self.intervals) - 1

    @property
    def target(self) -> Interval:
        return self.intervals[-1]

    def __len__(self) -> int:
        return len(self.intervals)

    def __getitem__(self, m: int) -> Interval:
        return self.intervals[m]

    def to_record(self) -> Dict[str, Any]:
        return {
            "base_point": self.base_point,
            "target": self.target.to_list(),
            "intervals": [iv.to_list() for iv in self.intervals],
            "orbit": self.orbit.points.tolist(),
            "extrema": list(self.extrema),
            "maximal": self.maximal,
            "dichotomy_applies": self.dichotomy_applies,
        }

    @classmethod
    def from_record(cls, data: Dict[str, Any]) -> "Chain":
        points = np.asarray(data["orbit"], dtype=float)
        points.setflags(write=False)
        return cls(
            intervals=tuple(Interval(*iv) for iv in data["intervals"]),
            base_point=float(data["base_point"]),
            orbit=OrbitRecord(float(data["base_point"]), points),
            extrema=tuple(data.get("extrema", ())),
            maximal=bool(data.get("maximal", True)),
            dichotomy_applies=bool(data.get("dichotomy_applies", True)),
        )


@dataclass(frozen=True)
class ChainStats:
    order: int
    multiplicity: int
    extremal_indices: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "multiplicity": self.multiplicity,
            "extremal_indices": list(self.extremal_indices),
        }


@dataclass(frozen=True)
class MultipleCollection:
    side: str
    p: int
    r: int
    m: int
    v: float
    J: Interval

    def to_record(self) -> Dict[str, Any]:
        return {"side": self.side, "p": self.p, "r": self.r, "m": self.m, "v": self.v, "J": self.J.to_list()}

    @classmethod
    def from_record(cls, data: Dict[str, Any]) -> "MultipleCollection":
        return cls(data["side"], int(data["p"]), int(data["r"]), int(data["m"]), float(data["v"]), Interval(*data["J"]))


@dataclass(frozen=True)
class DepthCertificate:
    """Depths of x(n) at both ends of I.

    ``dp_a``/``dp_b`` use the convention "1 when no collection exists";
    ``dp_a_zero``/``dp_b_zero`` carry the "0 when no collection exists" reading.
    """

    n: Optional[int]
    dp_a: int
    dp_b: int
    witnesses_a: Tuple[MultipleCollection, ...] = ()
    witnesses_b: Tuple[MultipleCollection, ...] = ()

    @property
    def dp(self) -> int:
        return max(self.dp_a, self.dp_b)

    @property
    def dp_a_zero(self) -> int:
        return self.dp_a if self.witnesses_a else 0

    @property
    def dp_b_zero(self) -> int:
        return self.dp_b if self.witnesses_b else 0

    def for_side(self, side: str) -> int:
        return self.dp_a if side == "a" else self.dp_b

    def to_record(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "dp": self.dp,
            "dp_a": self.dp_a,
            "dp_b": self.dp_b,
            "dp_a_zero_convention": self.dp_a_zero,
            "dp_b_zero_convention": self.dp_b_zero,
            "witnesses_a": [w.to_record() for w in self.witnesses_a],
            "witnesses_b": [w.to_record() for w in self.witnesses_b],
        }

    @classmethod
    def from_record(cls, data: Dict[str, Any]) -> "DepthCertificate":
        return cls(
            n=data["n"],
            dp_a=int(data["dp_a"]),
            dp_b=int(data["dp_b"]),
            witnesses_a=tuple(MultipleCollection.from_record(w) for w in data.get("witnesses_a", [])),
            witnesses_b=tuple(MultipleCollection.from_record(w) for w in data.get("witnesses_b", [])),
        )


# Pull-backs


def _check_target(map: MapSpec, I: Interval) -> None:
    if I.length <= 0:
        raise PreconditionError(f"degenerate target interval {I}")
    component = map.component_of(I.midpoint)
    if component is None or not (component.lo < I.lo and I.hi < component.hi):
        raise PreconditionError(f"target {I} is not inside the interior of M")


def _solve_exit(map: MapSpec, a: float, b: float, level: float) -> float:
    def gap(t: float) -> float:
        return float(map.f(t)) - level

    g_a, g_b = gap(a), gap(b)
    if g_a == 0.0:
        return a
    if g_b == 0.0:
        return b
    if np.sign(g_a) == np.sign(g_b):
        # f(a) sits on the boundary up to roundoff
        return a
    return float(brentq(gap, min(a, b), max(a, b), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def _extend(map: MapSpec, y: float, T: Interval, direction: int) -> float:
    """Far end of the maximal interval from y in ``direction`` with f(.) ⊆ T."""
    component = map.component_of(y, defaults.TOL_NUM)
    edge = component.hi if direction > 0 else component.lo
    turns = sorted(e for e in map.extrema if (e - y) * direction > 0)
    if direction < 0:
        turns.reverse()
    t = y
    for stop in [*turns, edge]:
        value = float(map.f(stop))
        if T.contains(value):
            t = stop
            continue
        # f is monotone on [t, stop]; find where it crosses the boundary of T
        level = T.hi if value > T.hi else T.lo
        return _solve_exit(map, t, stop, level)
    return t


def maximal_preimage(map: MapSpec, y: float, T: Interval) -> Interval:
    """The maximal interval L ∋ y with f(L) ⊆ T."""
    if not T.contains(float(map.f(y)), defaults.TOL_NUM):
        raise PreconditionError(f"f({y}) = {float(map.f(y))} lies outside {T}")
    return Interval(_extend(map, y, T, -1), _extend(map, y, T, +1))


def pull_back(map: MapSpec, x: float, n: int, I: Interval) -> Chain:
    """Maximal chain I_0, ..., I_n along orb_n(x) with I_n = I."""
    x = _check_point(map, x)
    if n < 0:
        raise PreconditionError(f"n must be >= 0, got {n}")
    _check_target(map, I)
    orbit = iterate(map, x, n)
    if not I.contains(float(orbit[n]), defaults.TOL_NUM):
        raise PreconditionError(f"f^{n}({x}) = {float(orbit[n])} is not in {I}")
    intervals: List[Interval] = [I]
    for m in range(n - 1, -1, -1):
        intervals.append(maximal_preimage(map, float(orbit[m]), intervals[-1]))
    intervals.reverse()
    applies = I.length < map.xi
    if not applies:
        logger.debug(f"pull_back: λ(I) = {I.length:.3g} >= xi = {map.xi:.3g}; dichotomy not guaranteed")
    return Chain(tuple(intervals), x, orbit, map.extrema, True, applies)


def extremal_indices(chain: Chain) -> Tuple[int, ...]:
    """m < n with I_m meeting an extremum (closed intervals)."""
    ext = np.asarray(chain.extrema)
    if not ext.size:
        return ()
    return tuple(
        m
        for m, iv in enumerate(chain.intervals[:-1])
        if np.any((ext >= iv.lo) & (ext <= iv.hi))
    )


def order(chain: Chain) -> int:
    """ν: number of I_m, m < n, containing an extremum."""
    return len(extremal_indices(chain))


def multiplicity_of(intervals: Sequence[Interval]) -> int:
    """Maximal number of closed intervals sharing a point."""
    if not intervals:
        return 0
    events = [(iv.lo, -1) for iv in intervals] + [(iv.hi, 1) for iv in intervals]
    # openings sort before closings at a shared coordinate
    events.sort()
    best = current = 0
    for _, kind in events:
        current -= kind
        best = max(best, current)
    return best


def multiplicity(chain: Chain) -> int:
    """μ: intersection multiplicity of the chain."""
    return multiplicity_of(chain.intervals)


def chain_stats(chain: Chain) -> ChainStats:
    indices = extremal_indices(chain)
    return ChainStats(len(indices), multiplicity(chain), indices)


@dataclass
class ChainCheck:
    inclusion: bool = True
    membership: bool = True
    maximal: bool = True
    dichotomy: bool = True
    dichotomy_applies: bool = True
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        dichotomy_ok = self.dichotomy or not self.dichotomy_applies
        return self.inclusion and self.membership and self.maximal and dichotomy_ok

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "inclusion": self.inclusion,
            "membership": self.membership,
            "maximal": self.maximal,
            "dichotomy": self.dichotomy,
            "dichotomy_applies": self.dichotomy_applies,
            "failures": self.failures,
        }


def _step_dichotomy(map: MapSpec, I_m: Interval, I_next: Interval, tol: float) -> bool:
    inside = [e for e in map.extrema if I_m.lo < e < I_m.hi]
    if not inside:
        return True
    if len(inside) > 1:
        return False
    f_lo, f_hi = float(map.f(I_m.lo)), float(map.f(I_m.hi))
    on_boundary = all(min(abs(v - I_next.lo), abs(v - I_next.hi)) <= tol for v in (f_lo, f_hi))
    return on_boundary and abs(f_lo - f_hi) <= tol


def check_chain(map: MapSpec, chain: Chain, h_max: float = 1e-9, probes: int = 200) -> ChainCheck:
    """Re-test every chain invariant from the stored intervals and orbit."""
    report = ChainCheck(dichotomy_applies=chain.dichotomy_applies)
    tol = 1e-12
    for m in range(chain.n):
        I_m, I_next = chain.intervals[m], chain.intervals[m + 1]
        if not I_next.contains_interval(image(map, I_m), tol + 1e-9 * I_next.length):
            report.inclusion = False
            report.failures.append(f"f(I_{m}) ⊄ I_{m + 1}")
        if not _step_dichotomy(map, I_m, I_next, tol + 1e-9 * I_next.length):
            report.dichotomy = False
            report.failures.append(f"step {m} is neither monotone nor symmetric")
    for m, iv in enumerate(chain.intervals):
        if not iv.contains(float(chain.orbit[m]), defaults.TOL_NUM):
            report.membership = False
            report.failures.append(f"x_{m} ∉ I_{m}")
    # maximality: one more cell on either side pushes f(I_m) out of I_{m+1}
    for m in np.unique(np.linspace(0, max(chain.n - 1, 0), min(probes, chain.n)).astype(int)) if chain.n else []:
        I_m, I_next = chain.intervals[m], chain.intervals[m + 1]
        component = map.component_of(I_m.midpoint)
        for grown, at_edge in (
            (Interval(I_m.lo - h_max, I_m.hi), I_m.lo - h_max < component.lo),
            (Interval(I_m.lo, I_m.hi + h_max), I_m.hi + h_max > component.hi),
        ):
            if at_edge:
                continue
            if I_next.contains_interval(image(map, grown)):
                report.maximal = False
                report.failures.append(f"I_{m} can be enlarged by {h_max:g}")
                break
    return report


# Multiple collections


def first_entry_time(map: MapSpec, x: float, I: Interval, budget: int = 100_000) -> Optional[int]:
    """First k with x_k in the open interval I°; endpoint ties do not count."""
    eps = defaults.TOL_NUM
    points = iterate(map, x, budget).points
    inside = np.flatnonzero((points > I.lo + eps) & (points < I.hi - eps))
    return int(inside[0]) if inside.size else None


def _require_first_entry(points: np.ndarray, n: int, I: Interval) -> None:
    eps = defaults.TOL_NUM
    head = points[: n + 1]
    inside = (head > I.lo + eps) & (head < I.hi - eps)
    if not inside[n]:
        raise PreconditionError(f"x({n}) = {points[n]} is not in the interior of {I}")
    if np.any(inside[:n]):
        raise PreconditionError(f"{n} is not the first entry time into {I}: x({int(np.argmax(inside))}) enters earlier")


def _require_no_limit_cycle(map: MapSpec, x: float, max_iter: int = 100_000) -> None:
    cycle = detect_cycle(map, x, max_iter=max_iter)
    if cycle is not None and cycle.is_limit_cycle:
        raise PreconditionError(f"orbit of {x} tends to a limit cycle of period {cycle.period}")


def find_multiple_collections(
    map: MapSpec,
    x: float,
    n: int,
    I: Interval,
    side: str,
    check_limit_cycle: bool = True,
    orbit: Optional[np.ndarray] = None,
) -> List[MultipleCollection]:
    """All (p, r, v) for which J = [x(m), v] straddles, maps and ladders correctly at the given end of I."""
    if side not in SIDES:
        raise PreconditionError(f"side must be 'a' or 'b', got {side!r}")
    x = _check_point(map, x)
    points = orbit if orbit is not None else iterate(map, x, 2 * n).points
    _require_first_entry(points, n, I)
    if check_limit_cycle:
        _require_no_limit_cycle(map, x)
    eps = defaults.TOL_NUM
    # side a: ladder climbs across a toward b; side b: mirrored
    direction = 1 if side == "a" else -1
    near, far = (I.lo, I.hi) if side == "a" else (I.hi, I.lo)
    found: List[MultipleCollection] = []
    for p in range(1, n + 1):
        for r in range(2, 1 + n // p + 1):
            m = n - (r - 1) * p
            if m < 0:
                break
            xm = float(points[m])
            if (near - xm) * direction <= eps:
                continue
            last = n + (r - 2) * p
            listed = np.arange(m + p, last + 1, p)
            values = points[: last + 1]
            lo_listed = values[listed]
            if direction > 0:
                if np.any(lo_listed <= xm + eps) or np.any(lo_listed >= far - eps):
                    continue
                reach = float(lo_listed.max())
                between = (values > xm + eps) & (values <= reach)
            else:
                if np.any(lo_listed >= xm - eps) or np.any(lo_listed <= far + eps):
                    continue
                reach = float(lo_listed.min())
                between = (values < xm - eps) & (values >= reach)
            between[listed] = False
            between[m] = False
            if np.any(between):
                continue
            collection = _collection_witness(map, points, side, p, r, m, near, far, direction)
            if collection is not None:
                found.append(collection)
    if found:
        logger.debug(f"{len(found)} multiple collections on side {side} for n={n}")
    return found


def _collection_witness(
    map: MapSpec, points: np.ndarray, side: str, p: int, r: int, m: int, near: float, far: float, direction: int
) -> Optional[MultipleCollection]:
    eps = defaults.TOL_NUM
    xm = float(points[m])
    n = m + (r - 1) * p
    end = monotone_extent(map, xm, direction, p, far)
    if (end - xm) * direction <= 0:
        return None
    f_start, f_end = iterate_point(map, xm, p), iterate_point(map, end, p)
    # the branch onto [x(m+p), far] must preserve orientation
    if (f_end - f_start) * direction <= 0:
        return None
    v = solve_on_branch(map, Interval.span(xm, end), p, far)
    if v is None:
        return None
    if not (min(near, far) + eps < v < max(near, far) - eps):
        return None
    J = Interval.span(xm, v)
    if not J.interior_contains(float(points[n]), eps):
        return None
    last = n + (r - 2) * p
    values = points[: last + 1]
    inside = (values > J.lo + eps) & (values < J.hi - eps)
    expected = np.zeros(last + 1, dtype=bool)
    expected[m + p :: p] = True
    if not np.array_equal(inside, expected):
        return None
    return MultipleCollection(side, p, r, m, float(v), J)


def depth(
    map: MapSpec,
    x: float,
    n: Optional[int],
    I: Interval,
    check_limit_cycle: bool = True,
    budget: int = 100_000,
) -> DepthCertificate:
    """Depth certificate of x(n); n=None looks up the first entry time first."""
    if n is None:
        n = first_entry_time(map, x, I, budget)
        if n is None:
            return DepthCertificate(None, 0, 0)
    points = iterate(map, x, 2 * n).points
    found = {
        side: find_multiple_collections(map, x, n, I, side, check_limit_cycle and side == "a", orbit=points)
        for side in SIDES
    }
    dp = {side: max((c.r for c in found[side]), default=1) for side in SIDES}
    if dp["a"] >= 2 and dp["b"] >= 2:
        logger.warning(f"x={x}, n={n}: both sides have depth >= 2 ({dp})")
    return DepthCertificate(n, dp["a"], dp["b"], tuple(found["a"]), tuple(found["b"]))


def verify_collection(
    map: MapSpec, orbit: np.ndarray, n: int, I: Interval, collection: MultipleCollection, samples: int = 1001
) -> Dict[str, bool]:
    """Re-derive the straddle, branch and ladder conditions plus the drift property from raw data, without branch logic."""
    c = collection
    eps = defaults.TOL_NUM
    a, b = I.lo, I.hi
    J = c.J
    target = b if c.side == "a" else a
    orbit = np.asarray(orbit, dtype=float)

    def interior(value: float, iv: Interval) -> bool:
        return iv.lo + eps < value < iv.hi - eps

    d1 = interior(float(orbit[n]), J) and (interior(a, J) != interior(b, J))

    ts = np.linspace(J.lo, J.hi, samples)
    values = iterate_array(map, ts, c.p)
    steps = np.diff(values)
    increasing = bool(np.all(steps > 0))
    x_next = float(orbit[c.m + c.p])
    start_value = values[0] if c.side == "a" else values[-1]
    end_value = values[-1] if c.side == "a" else values[0]
    scale = 1e-9 * max(J.length, abs(target - x_next))
    d2 = increasing and abs(start_value - x_next) <= scale + 1e-12 and abs(end_value - target) <= scale + 1e-12

    last = n + (c.r - 2) * c.p
    listed = {n + i * c.p for i in range(-(c.r - 2), c.r - 1)}
    d3 = True
    for k in range(last + 1):
        if (k in listed) != interior(float(orbit[k]), J):
            d3 = False
            break

    drift_points = np.linspace(J.lo, J.hi, 102)[1:-1]
    moved = iterate_array(map, drift_points, c.p) - drift_points
    drift = bool(np.all(moved > 0)) if c.side == "a" else bool(np.all(moved < 0))
    return {"straddles": d1, "branch_onto": d2, "ladder_only": d3, "drift": drift}


# Statements about chains


def _is_periodic(map: MapSpec, J: Interval, q_max: int) -> Optional[int]:
    images = iterate_image(map, J, q_max)
    slack = defaults.TOL_INCLUSION * J.length + 1e-14
    for q in range(1, q_max + 1):
        if J.contains_interval(images[q], slack):
            return q
    return None


def _first_passage(points: np.ndarray, J: Interval, after: int) -> Optional[int]:
    eps = defaults.TOL_NUM
    tail = points[after + 1 :]
    hits = np.flatnonzero((tail > J.lo + eps) & (tail < J.hi - eps))
    return int(hits[0]) + after + 1 if hits.size else None


def check_extremal_returns(
    map: MapSpec, x: float, I: Interval, budget: int = 100_000, p_max: Optional[int] = None
) -> Dict[str, Any]:
    """Nesting, periodicity, first passage and half-interval clauses for i > d."""
    p_max = defaults.P_MAX if p_max is None else p_max
    n = first_entry_time(map, x, I, budget)
    if n is None:
        raise PreconditionError(f"orbit of {x} does not pass through {I} within {budget} steps")
    chain = pull_back(map, x, n, I)
    indices = extremal_indices(chain)
    d = map.d
    report: Dict[str, Any] = {
        "n": n,
        "order": len(indices),
        "d": d,
        "extremal_indices": list(indices),
        "clauses": [],
        "vacuous": len(indices) <= d,
    }
    points = chain.orbit.points
    for i in range(d + 1, len(indices) + 1):
        m_i = indices[i - 1]
        m_prev = indices[i - d - 1]
        outer, inner = chain.intervals[m_prev], chain.intervals[m_i]
        period = _is_periodic(map, inner, min(m_i, p_max)) if m_i >= 1 else None
        nested = outer.contains_interval(inner) and inner != outer
        first = _first_passage(points, outer, m_prev) == m_i
        half_ok = _half_clause(map, x, m_i, outer, points)
        report["clauses"].append(
            {
                "i": i,
                "m_i": m_i,
                "m_i_minus_d": m_prev,
                "nested": nested,
                "periodic": period is not None,
                "period": period,
                "first_passage": first,
                "monotone_onto_half": half_ok,
            }
        )
    report["passed"] = all(
        c["nested"] and c["periodic"] and c["first_passage"] and c["monotone_onto_half"] for c in report["clauses"]
    )
    return report


def maps_onto(map: MapSpec, chain: Chain) -> bool:
    """Every step maps I_m onto I_{m+1}, up to roundoff of a single step."""
    for I_m, I_next in zip(chain.intervals[:-1], chain.intervals[1:]):
        img = image(map, I_m)
        tol = 1e-9 * I_next.length + 1e-13
        if abs(img.lo - I_next.lo) > tol or abs(img.hi - I_next.hi) > tol:
            return False
    return True


def _half_clause(map: MapSpec, x: float, m: int, outer: Interval, points: np.ndarray) -> bool:
    inside = [e for e in map.extrema if outer.lo <= e <= outer.hi]
    if not inside:
        return False
    c = inside[0]
    y = float(points[m])
    half = Interval(outer.lo, c) if y <= c else Interval(c, outer.hi)
    try:
        H = pull_back(map, x, m, half)
    except PreconditionError:
        return False
    return order(H) == 0 and maps_onto(map, H)


def check_order_bound(map: MapSpec, chain: Chain, p_max: Optional[int] = None, q_max: int = 4096) -> Dict[str, Any]:
    """ord ≤ d for first-passage chains into non-periodic targets."""
    q = _is_periodic(map, chain.target, min(q_max, defaults.P_MAX if p_max is None else p_max))
    nu = order(chain)
    return {
        "order": nu,
        "d": map.d,
        "target_period": q,
        "applies": q is None,
        "holds": q is not None or nu <= map.d,
    }


def check_half_pullback(map: MapSpec, x: float, n: int, I: Interval, side: str = "a") -> Dict[str, Any]:
    """Multiplicity of the monotone half pull-back against 2 dp, plus mult I ≤ 2(dp + 1)."""
    if side not in SIDES:
        raise PreconditionError(f"side must be 'a' or 'b', got {side!r}")
    points = iterate(map, x, 2 * n).points
    x_n = float(points[n])
    half = Interval(x_n, I.hi) if side == "a" else Interval(I.lo, x_n)
    report: Dict[str, Any] = {"n": n, "side": side, "H_exists": False}
    cert = depth(map, x, n, I)
    report["certificate"] = cert.to_record()
    full = pull_back(map, x, n, I)
    mult_full = multiplicity(full)
    report["mult_full"] = mult_full
    report["multiplicity_bound"] = 2 * (cert.dp + 1)
    report["multiplicity_bound_holds"] = mult_full <= 2 * (cert.dp + 1)
    if half.length > 0:
        try:
            H = pull_back(map, x, n, half)
        except PreconditionError as e:
            report["H_error"] = str(e)
            H = None
        if H is not None and order(H) == 0 and maps_onto(map, H):
            report["H_exists"] = True
            report["H"] = H.intervals[0].to_list()
            report["mult_H"] = multiplicity(H)
    if not report["H_exists"]:
        logger.info(f"x={x}, n={n}: no monotone H onto the {side}-half")
    if report["H_exists"] and cert.dp >= 2:
        report["half_bound"] = 2 * cert.for_side(side)
        report["half_bound_holds"] = report["mult_H"] <= report["half_bound"]
    else:
        report["half_bound_holds"] = None
    return report


# Randomised instances


def generate_first_entry_instances(
    map: MapSpec,
    count: int,
    rng: Optional[np.random.Generator] = None,
    target_length: Tuple[float, float] = (1e-3, 1e-2),
    n_max: int = 1000,
    skip_limit_cycles: bool = True,
) -> List[Tuple[float, int, Interval]]:
    """(x, n, I) with n the first entry of orb(x) into I°, log-uniform λ(I)."""
    rng = rng or np.random.default_rng(defaults.SEED)
    instances: List[Tuple[float, int, Interval]] = []
    attempts = 0
    lo_len, hi_len = np.log(target_length[0]), np.log(target_length[1])
    while len(instances) < count and attempts < 20 * count:
        attempts += 1
        component = map.domain[int(rng.integers(len(map.domain)))]
        width = float(np.exp(rng.uniform(lo_len, hi_len))) * map.measure
        if width >= 0.5 * component.length:
            continue
        centre = float(rng.uniform(component.lo + width, component.hi - width))
        I = Interval(centre - width / 2, centre + width / 2)
        x = float(rng.uniform(component.lo, component.hi))
        n = first_entry_time(map, x, I, n_max)
        if n is None or n < 1:
            continue
        if skip_limit_cycles:
            cycle = detect_cycle(map, x, max_iter=20_000)
            if cycle is not None and cycle.is_limit_cycle:
                continue
        instances.append((x, n, I))
    if len(instances) < count:
        logger.warning(f"{map.name}: generated {len(instances)} of {count} first-entry instances")
    return instances


@dataclass
class ChainBoundSummary:
    instances: int = 0
    multiplicity_violations: int = 0
    two_sided_depth_violations: int = 0
    order_violations: int = 0
    max_order: int = 0
    max_multiplicity: int = 0
    max_depth: int = 0
    records: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instances": self.instances,
            "multiplicity_violations": self.multiplicity_violations,
            "two_sided_depth_violations": self.two_sided_depth_violations,
            "order_violations": self.order_violations,
            "max_order": self.max_order,
            "max_multiplicity": self.max_multiplicity,
            "max_depth": self.max_depth,
            "records": self.records,
        }


def _instance_record(map: MapSpec, instance: Tuple[float, int, Interval]) -> Dict[str, Any]:
    x, n, I = instance
    chain = pull_back(map, x, n, I)
    stats = chain_stats(chain)
    cert = depth(map, x, n, I, check_limit_cycle=False)
    bound = check_order_bound(map, chain, q_max=64)
    return {
        "x": x,
        "n": n,
        "I": I.to_list(),
        "order": stats.order,
        "multiplicity": stats.multiplicity,
        "dp": cert.dp,
        "dp_a": cert.dp_a,
        "dp_b": cert.dp_b,
        "multiplicity_bound_holds": stats.multiplicity <= 2 * (cert.dp + 1),
        "one_sided_depth": min(cert.dp_a, cert.dp_b) == 1,
        "order_bound_holds": bound["holds"],
    }


def chain_bound_suite(
    map: MapSpec,
    instances: Sequence[Tuple[float, int, Interval]],
    threads: Optional[int] = 1,
) -> ChainBoundSummary:
    """Check the multiplicity and depth bounds on every instance."""
    records = parallel_map(lambda inst: _instance_record(map, inst), list(instances), threads)
    summary = ChainBoundSummary(instances=len(records), records=records)
    for rec in records:
        summary.multiplicity_violations += not rec["multiplicity_bound_holds"]
        summary.two_sided_depth_violations += not rec["one_sided_depth"]
        summary.order_violations += not rec["order_bound_holds"]
        summary.max_order = max(summary.max_order, rec["order"])
        summary.max_multiplicity = max(summary.max_multiplicity, rec["multiplicity"])
        summary.max_depth = max(summary.max_depth, rec["dp"])
    if summary.multiplicity_violations or summary.two_sided_depth_violations:
        logger.warning(
            f"{map.name}: {summary.multiplicity_violations} multiplicity-bound and "
            f"{summary.two_sided_depth_violations} two-sided-depth violations"
        )
    return summary


def random_instance_suite(map: MapSpec, count: int, seed: Optional[int] = None, threads: Optional[int] = 1) -> ChainBoundSummary:
    rng = spawn_generators(defaults.SEED if seed is None else seed, 1)[0]
    return chain_bound_suite(map, generate_first_entry_instances(map, count, rng), threads)

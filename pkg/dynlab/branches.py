"""
Exact interval images and monotone-branch (lap) decomposition of iterates.

Images of intervals are computed from endpoint values and the critical
values of extrema inside the interval, never by sampling. Preimages on a
monotone lap are solved with scipy's brentq.
"""

from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .core import config as defaults
from .errors import BudgetExhaustedError
from .map_model import Interval, MapSpec

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


def iterate_point(map: MapSpec, x: float, n: int) -> float:
    """f^n(x) for a scalar, without domain checks."""
    for _ in range(n):
        x = map.f(x)
    return float(x)


def iterate_array(map: MapSpec, xs: np.ndarray, n: int) -> np.ndarray:
    """f^n applied elementwise to an array."""
    out = np.array(xs, dtype=float, copy=True)
    for _ in range(n):
        out = map.f(out)
    return out


def image(map: MapSpec, J: Interval, clamp: bool = True) -> Interval:
    """Exact image f(J) of a closed interval inside one domain component."""
    values = [float(map.f(J.lo)), float(map.f(J.hi))]
    for c in map.extrema:
        if J.lo < c < J.hi:
            values.append(float(map.f(c)))
    lo, hi = min(values), max(values)
    if clamp:
        hull = map.hull
        lo, hi = min(max(lo, hull.lo), hull.hi), max(min(hi, hull.hi), hull.lo)
    return Interval(lo, hi)


def iterate_image(map: MapSpec, J: Interval, n: int) -> List[Interval]:
    """[J, f J, ..., f^n J]."""
    images = [J]
    for _ in range(n):
        images.append(image(map, images[-1]))
    return images


def _has_interior_extremum(map: MapSpec, J: Interval, tol: float) -> bool:
    return any(J.lo + tol < c < J.hi - tol for c in map.extrema)


def is_monotone(map: MapSpec, J: Interval, n: int, tol: float = 0.0) -> bool:
    """True iff f^n is monotone on J: no extremum inside f^k J for k < n."""
    current = J
    for _ in range(n):
        if _has_interior_extremum(map, current, tol):
            return False
        current = image(map, current)
    return True


def monotone_extent(
    map: MapSpec, u: float, direction: int, n: int, limit: float, tol: Optional[float] = None
) -> float:
    """Far end t of the largest interval between u and ``limit`` with f^n monotone on it."""
    tol = defaults.TOL_NUM if tol is None else tol
    if is_monotone(map, Interval.span(u, limit), n):
        return limit
    good, bad = u, limit
    while abs(bad - good) > max(tol, 4 * _EPS * max(1.0, abs(u))):
        mid = 0.5 * (good + bad)
        if is_monotone(map, Interval.span(u, mid), n):
            good = mid
        else:
            bad = mid
    return good if direction * (good - u) >= 0 else u


def solve_on_branch(map: MapSpec, J: Interval, n: int, y: float) -> Optional[float]:
    """The t in J with f^n(t) = y, assuming f^n monotone on J; None if y is not attained."""

    def gap(t: float) -> float:
        return iterate_point(map, t, n) - y

    g_lo, g_hi = gap(J.lo), gap(J.hi)
    if g_lo == 0.0:
        return J.lo
    if g_hi == 0.0:
        return J.hi
    if np.sign(g_lo) == np.sign(g_hi):
        return None
    return float(brentq(gap, J.lo, J.hi, xtol=1e-15, rtol=4 * _EPS, maxiter=200))


def split_points(map: MapSpec, split_at_inflections: bool = False) -> List[float]:
    if split_at_inflections:
        return [c.location for c in map.critical_points]
    return list(map.extrema)


def laps(
    map: MapSpec,
    n: int,
    split_at_inflections: bool = False,
    domain: Optional[List[Interval]] = None,
    max_laps: Optional[int] = None,
) -> List[Interval]:
    """Maximal intervals on which f^n is monotone, ordered left to right.

    Each lap carries its current image f^k(L); a lap is split wherever that
    image swallows a splitting point, the cut located by brentq on f^k.
    More than ``max_laps`` laps raises BudgetExhaustedError.
    """
    max_laps = defaults.MAX_LAPS if max_laps is None else max_laps
    cuts = split_points(map, split_at_inflections)
    pieces = []
    for component in domain or list(map.domain):
        inner = [c for c in cuts if component.lo < c < component.hi]
        edges = [component.lo, *inner, component.hi]
        pieces.extend(Interval(a, b) for a, b in zip(edges[:-1], edges[1:]))
    if n <= 0:
        return [Interval(c.lo, c.hi) for c in (domain or list(map.domain))]

    # state: (lap, image of lap under f^k) with f^k monotone on lap
    state = [(lap, image(map, lap)) for lap in pieces]
    for k in range(1, n):
        refined = []
        for lap, img in state:
            inner = [c for c in cuts if img.lo < c < img.hi]
            if not inner:
                refined.append((lap, image(map, img)))
                continue
            bounds = [lap.lo]
            for c in inner:
                t = solve_on_branch(map, lap, k, c)
                if t is not None and lap.lo < t < lap.hi:
                    bounds.append(t)
            bounds.append(lap.hi)
            bounds.sort()
            for a, b in zip(bounds[:-1], bounds[1:]):
                if b > a:
                    sub = Interval(a, b)
                    refined.append((sub, image(map, Interval.span(
                        iterate_point(map, a, k), iterate_point(map, b, k)))))
        state = refined
        if len(state) > max_laps:
            raise BudgetExhaustedError(
                f"{map.name}: f^{k + 1} already has {len(state)} laps (cap {max_laps}), f^{n} not resolved",
                {"n": n, "resolved": k + 1, "laps": len(state), "max_laps": max_laps},
            )
    return [lap for lap, _ in state]


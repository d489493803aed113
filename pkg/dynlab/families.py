"""Built-in parametric map families and piecewise polynomial maps."""

from __future__ import annotations

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .map_model import (
    EXTREMUM,
    INFLECTION,
    CriticalPoint,
    FamilyHandle,
    Interval,
    MapSpec,
    calibrate_constants,
)

logger = logging.getLogger(__name__)


def _finish(spec: MapSpec, eta: Optional[float], xi: Optional[float]) -> MapSpec:
    eta, xi = calibrate_constants(spec, eta, xi)
    return spec.with_constants(eta, xi)


def logistic(a: float, eta: Optional[float] = None, xi: Optional[float] = None) -> MapSpec:
    """x -> a x (1 - x) on [0, 1]."""
    a = float(a)
    spec = MapSpec(
        domain=(Interval(0.0, 1.0),),
        value=lambda x: a * x * (1.0 - x),
        deriv=lambda x: a * (1.0 - 2.0 * x),
        critical_points=(CriticalPoint(0.5, EXTREMUM, 2.0, -1, -1),),
        name=f"logistic(a={a:.17g})",
        family=FamilyHandle("logistic", (("a", a),)),
        symmetric_extrema=(0.5,),
    )
    return _finish(spec, eta, xi)


def sine(a: float, eta: Optional[float] = None, xi: Optional[float] = None) -> MapSpec:
    """x -> a sin(pi x) on [0, 1]."""
    a = float(a)
    spec = MapSpec(
        domain=(Interval(0.0, 1.0),),
        value=lambda x: a * np.sin(np.pi * x),
        deriv=lambda x: a * np.pi * np.cos(np.pi * x),
        critical_points=(CriticalPoint(0.5, EXTREMUM, 2.0, -1, -1),),
        name=f"sine(a={a:.17g})",
        family=FamilyHandle("sine", (("a", a),)),
        symmetric_extrema=(0.5,),
    )
    return _finish(spec, eta, xi)


def power_unimodal(
    a: float, r: float = 4.0, eta: Optional[float] = None, xi: Optional[float] = None
) -> MapSpec:
    """x -> a (1 - |2x - 1|^r) on [0, 1]; non-flatness exponent r at 1/2."""
    a, r = float(a), float(r)

    def value(x):
        return a * (1.0 - np.abs(2.0 * x - 1.0) ** r)

    def deriv(x):
        u = 2.0 * x - 1.0
        return -2.0 * a * r * np.sign(u) * np.abs(u) ** (r - 1.0)

    spec = MapSpec(
        domain=(Interval(0.0, 1.0),),
        value=value,
        deriv=deriv,
        critical_points=(CriticalPoint(0.5, EXTREMUM, r, -1, -1),),
        name=f"power-unimodal(a={a:.17g}, r={r:.17g})",
        family=FamilyHandle("power-unimodal", (("a", a), ("r", r))),
        symmetric_extrema=(0.5,),
    )
    return _finish(spec, eta, xi)


def cubic_bimodal(b: float, eta: Optional[float] = None, xi: Optional[float] = None) -> MapSpec:
    """x -> b x^3 + (1 - b) x on [-1, 1]; two extrema at ±sqrt((b-1)/(3b)) for b > 1."""
    b = float(b)
    if b <= 1.0:
        raise ValueError(f"cubic-bimodal needs b > 1 for two extrema, got {b}")
    c = float(np.sqrt((b - 1.0) / (3.0 * b)))
    spec = MapSpec(
        domain=(Interval(-1.0, 1.0),),
        value=lambda x: b * x**3 + (1.0 - b) * x,
        deriv=lambda x: 3.0 * b * x**2 + (1.0 - b),
        critical_points=(
            CriticalPoint(-c, EXTREMUM, 2.0, -1, -1),
            CriticalPoint(c, EXTREMUM, 2.0, 1, 1),
        ),
        name=f"cubic-bimodal(b={b:.17g})",
        family=FamilyHandle("cubic-bimodal", (("b", b),)),
    )
    return _finish(spec, eta, xi)


def cube(eta: Optional[float] = None, xi: Optional[float] = None) -> MapSpec:
    """x -> x^3 on [-1, 1]; a single inflection point at 0."""
    spec = MapSpec(
        domain=(Interval(-1.0, 1.0),),
        value=lambda x: x**3,
        deriv=lambda x: 3.0 * x**2,
        critical_points=(CriticalPoint(0.0, INFLECTION, 3.0, -1, 1),),
        name="cube",
        family=FamilyHandle("cube", ()),
    )
    return _finish(spec, eta, xi)


class _Piecewise:
    """Vectorised evaluator over polynomial pieces sorted by breakpoint."""

    def __init__(self, pieces: Sequence[Tuple[Interval, Any]]):
        self.pieces = list(pieces)
        self.starts = np.array([iv.lo for iv, _ in self.pieces])
        self.derivs = [poly.deriv() for _, poly in self.pieces]

    def _index(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.starts, x, side="right") - 1, 0, len(self.pieces) - 1)

    def _apply(self, polys, x):
        arr = np.asarray(x, dtype=float)
        idx = self._index(arr)
        out = np.empty_like(arr)
        for k, poly in enumerate(polys):
            mask = idx == k
            if np.any(mask):
                out[mask] = poly(arr[mask])
        return out if arr.ndim else float(out)

    def value(self, x):
        return self._apply([poly for _, poly in self.pieces], x)

    def deriv(self, x):
        return self._apply(self.derivs, x)


def piecewise(
    pieces: Sequence[Tuple[Interval, Sequence[float], str]],
    domain: Sequence[Interval],
    critical_points: Sequence[CriticalPoint],
    eta: Optional[float] = None,
    xi: Optional[float] = None,
    name: str = "piecewise",
) -> MapSpec:
    """Map given by power-basis or Chebyshev pieces with explicit breakpoints.

    Chebyshev coefficients are taken on the piece's own interval.
    """
    if not pieces:
        raise ValueError("piecewise map needs at least one piece")
    built = []
    for interval, coefficients, basis in sorted(pieces, key=lambda p: p[0].lo):
        if basis == "power":
            poly = Polynomial(list(coefficients))
        elif basis == "chebyshev":
            poly = Chebyshev(list(coefficients), domain=[interval.lo, interval.hi])
        else:
            raise ValueError(f"unknown basis {basis!r} (expected 'power' or 'chebyshev')")
        built.append((interval, poly))
    for (left, _), (right, _) in zip(built[:-1], built[1:]):
        if left.hi != right.lo and not any(c.hi == left.hi for c in domain):
            raise ValueError(f"pieces {left} and {right} leave a gap")
    evaluator = _Piecewise(built)
    interior_breaks = [
        iv.hi for iv, _ in built[:-1] if not any(abs(c.hi - iv.hi) == 0 for c in domain)
    ]
    definition: Dict[str, Any] = {
        "domain": [iv.to_list() for iv in domain],
        "pieces": [
            {"interval": iv.to_list(), "coefficients": list(coef), "basis": basis}
            for iv, coef, basis in pieces
        ],
        "critical_points": [c.to_dict() for c in critical_points],
        "breakpoints": interior_breaks,
    }
    spec = MapSpec(
        domain=tuple(domain),
        value=evaluator.value,
        deriv=evaluator.deriv,
        critical_points=tuple(critical_points),
        name=name,
        definition=definition,
    )
    return _finish(spec, eta, xi)


FAMILIES: Dict[str, Callable[..., MapSpec]] = {
    "logistic": logistic,
    "sine": sine,
    "power-unimodal": power_unimodal,
    "cubic-bimodal": cubic_bimodal,
    "cube": cube,
}

# Parameter ranges where the unimodal families keep f(M) ⊆ M.
PARAM_RANGES: Dict[str, Tuple[float, float]] = {
    "logistic": (1.0, 4.0),
    "sine": (0.25, 1.0),
    "power-unimodal": (0.25, 1.0),
}

# Parameter swept by cmd_scan and the superstable search.
MAIN_PARAM: Dict[str, str] = {
    "logistic": "a",
    "sine": "a",
    "power-unimodal": "a",
    "cubic-bimodal": "b",
}


def make_map(name: str, eta: Optional[float] = None, xi: Optional[float] = None, **params) -> MapSpec:
    """Instantiate a built-in family by name."""
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; known: {sorted(FAMILIES)}")
    logger.debug(f"Instantiating {name} with {params}")
    return builder(eta=eta, xi=xi, **params)


def family_names() -> List[str]:
    return sorted(FAMILIES)

"""
Smooth interval maps with declared non-flat critical points.

A ``MapSpec`` bundles the phase space M (a finite union of closed intervals),
a vectorised evaluator and derivative, the declared critical points and the
two localisation constants eta and xi. Everything else in dynlab consumes
MapSpec instances; they are immutable and safe to share between threads.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .core import config as defaults
from .errors import DomainError, MapFileError, PreconditionError

logger = logging.getLogger(__name__)

Evaluator = Callable[[Any], Any]

EXTREMUM = "extremum"
INFLECTION = "inflection"


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; degenerate intervals are allowed."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("Interval endpoints must be numbers")
        if lo > hi:
            raise ValueError(f"Interval requires lo <= hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def span(cls, a: float, b: float) -> "Interval":
        """Interval spanned by two points given in any order."""
        return cls(min(a, b), max(a, b))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def is_degenerate(self) -> bool:
        return self.hi == self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def interior_contains(self, x: float, tol: float = 0.0) -> bool:
        """Strict membership; points within ``tol`` of an endpoint are not interior."""
        return self.lo + tol < x < self.hi - tol

    def contains_interval(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def interior_overlap(self, other: "Interval") -> float:
        return max(0.0, min(self.hi, other.hi) - max(self.lo, other.lo))

    def enlarge(self, left: float, right: Optional[float] = None) -> "Interval":
        right = left if right is None else right
        return Interval(self.lo - left, self.hi + right)

    def clip(self, other: "Interval") -> "Interval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            raise ValueError(f"{self} and {other} do not intersect")
        return Interval(lo, hi)

    def to_list(self) -> List[float]:
        return [self.lo, self.hi]

    def __str__(self) -> str:
        return f"[{self.lo:.17g}, {self.hi:.17g}]"


@dataclass(frozen=True)
class CriticalPoint:
    """A non-flat critical point: f behaves like sigma*|x-c|^r + b near c.

    ``sign_left``/``sign_right`` give the sign of f(x) - f(c) on each side.
    Equal signs make a turning point (extremum); opposite signs an inflection.
    """

    location: float
    kind: str = EXTREMUM
    exponent: float = 2.0
    sign_left: int = -1
    sign_right: int = -1

    def __post_init__(self):
        if self.kind not in (EXTREMUM, INFLECTION):
            raise ValueError(f"Unknown critical point kind: {self.kind}")
        if not (2.0 <= self.exponent < math.inf):
            raise ValueError(f"Non-flat exponent must be finite and >= 2, got {self.exponent}")
        if (self.sign_left == self.sign_right) != (self.kind == EXTREMUM):
            raise ValueError("Side signs disagree with the critical point kind")

    @property
    def is_extremum(self) -> bool:
        return self.kind == EXTREMUM

    def to_dict(self) -> Dict[str, Any]:
        return {
            "location": self.location,
            "kind": self.kind,
            "exponent": self.exponent,
            "sign_left": self.sign_left,
            "sign_right": self.sign_right,
        }


@dataclass(frozen=True)
class FamilyHandle:
    """Name and parameters of the built-in family a map was instantiated from."""

    name: str
    params: Tuple[Tuple[str, float], ...] = ()

    @property
    def param_dict(self) -> Dict[str, float]:
        return dict(self.params)

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.name, "params": self.param_dict}


@dataclass(frozen=True)
class MapSpec:
    """An interval map of the lab's class with its analysis constants."""

    domain: Tuple[Interval, ...]
    value: Evaluator
    deriv: Evaluator
    critical_points: Tuple[CriticalPoint, ...]
    eta: float = 0.0
    xi: float = 0.0
    name: str = "map"
    family: Optional[FamilyHandle] = None
    # centre -> exact reflection 2c - x holds for the involution at that extremum
    symmetric_extrema: Tuple[float, ...] = ()
    definition: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        domain = tuple(sorted(self.domain, key=lambda iv: iv.lo))
        if not domain:
            raise ValueError("MapSpec needs a non-empty domain")
        for left, right in zip(domain[:-1], domain[1:]):
            if left.hi >= right.lo:
                raise ValueError("Domain components must be disjoint")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(
            self, "critical_points", tuple(sorted(self.critical_points, key=lambda c: c.location))
        )

    # Raw vectorised access, no domain checks; used by the hot loops.
    def f(self, x):
        return self.value(x)

    def df(self, x):
        return self.deriv(x)

    @property
    def hull(self) -> Interval:
        return Interval(self.domain[0].lo, self.domain[-1].hi)

    @property
    def measure(self) -> float:
        """Lebesgue measure of M."""
        return float(sum(component.length for component in self.domain))

    @property
    def extrema(self) -> Tuple[float, ...]:
        return tuple(c.location for c in self.critical_points if c.is_extremum)

    @property
    def d(self) -> int:
        """Number of extrema."""
        return len(self.extrema)

    @property
    def boundary(self) -> Tuple[float, ...]:
        points: List[float] = []
        for component in self.domain:
            points.extend([component.lo, component.hi])
        return tuple(points)

    def critical_point_at(self, location: float, tol: float = 1e-12) -> CriticalPoint:
        for c in self.critical_points:
            if abs(c.location - location) <= tol:
                return c
        raise PreconditionError(f"{location} is not a declared critical point of {self.name}")

    def component_of(self, x: float, tol: float = 0.0) -> Optional[Interval]:
        for component in self.domain:
            if component.contains(x, tol):
                return component
        return None

    def in_domain(self, x: float, tol: float = 0.0) -> bool:
        return self.component_of(x, tol) is not None

    def clamp(self, x):
        """Nearest point of M (vectorised)."""
        arr = np.asarray(x, dtype=float)
        if len(self.domain) == 1:
            out = np.clip(arr, self.domain[0].lo, self.domain[0].hi)
        else:
            lows = np.array([c.lo for c in self.domain])
            highs = np.array([c.hi for c in self.domain])
            dist_lo = np.abs(arr[..., None] - np.clip(arr[..., None], lows, highs))
            idx = np.argmin(dist_lo, axis=-1)
            out = np.clip(arr, lows[idx], highs[idx])
        return out if isinstance(x, np.ndarray) else float(out)

    def with_constants(self, eta: float, xi: float) -> "MapSpec":
        return replace(self, eta=eta, xi=xi)


def _check_point(map: MapSpec, x: float) -> float:
    x = float(x)
    if not map.in_domain(x, defaults.TOL_NUM):
        raise DomainError(f"x={x!r} lies outside M={[c.to_list() for c in map.domain]}")
    return x


def evaluate(map: MapSpec, x: float) -> float:
    """f(x) for a single point of M."""
    return float(map.value(_check_point(map, x)))


def derivative(map: MapSpec, x: float) -> float:
    """f'(x); exactly 0 at declared critical points."""
    x = _check_point(map, x)
    for c in map.critical_points:
        if x == c.location:
            return 0.0
    return float(map.deriv(x))


def mirror_point(map: MapSpec, c: CriticalPoint, x: float) -> Optional[float]:
    """Point y on the other side of extremum ``c`` with f(y) = f(x).

    The search stays inside the lap adjacent to ``c`` (up to the next extremum
    or the domain boundary). Returns None when f(x) is not attained there.
    """
    if not c.is_extremum:
        raise PreconditionError(f"No involution at inflection point {c.location}")
    centre = c.location
    x = float(x)
    if x == centre:
        return centre
    component = map.component_of(centre)
    if any(abs(s - centre) <= 1e-15 for s in map.symmetric_extrema):
        y = 2.0 * centre - x
        return y if component is not None and component.contains(y, defaults.TOL_NUM) else None

    side = -1.0 if x > centre else 1.0
    others = [e for e in map.extrema if (e - centre) * side > 0]
    if side > 0:
        far = min(others) if others else component.hi
    else:
        far = max(others) if others else component.lo
    target = float(map.value(x))

    def gap(y: float) -> float:
        return float(map.value(y)) - target

    # f is monotone between c and far, so f - f(x) changes sign at most once there
    g_far = gap(far)
    if g_far == 0.0:
        return far
    if np.sign(g_far) == np.sign(gap(centre)):
        return None
    a, b = sorted((centre, far))
    return float(brentq(gap, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def involution(map: MapSpec, c: CriticalPoint, x: float) -> float:
    """Local involution tau at extremum ``c``: f(tau x) = f(x), tau(tau x) = x."""
    if not c.is_extremum:
        raise PreconditionError(f"No involution at inflection point {c.location}")
    if abs(x - c.location) > map.eta * (1 + 1e-12):
        raise PreconditionError(
            f"x={x} is outside the eta-neighbourhood of c={c.location} (eta={map.eta})"
        )
    y = mirror_point(map, c, x)
    if y is None:
        raise PreconditionError(f"f({x}) is not attained on the far side of c={c.location}")
    return y


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "message": self.message,
        }


@dataclass
class ValidationReport:
    map_name: str
    checks: List[ValidationCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[ValidationCheck]:
        return [check for check in self.checks if not check.passed]

    def get(self, name: str) -> ValidationCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "map": self.map_name,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }


def singular_points(map: MapSpec) -> List[float]:
    points = set(map.boundary)
    points.update(c.location for c in map.critical_points)
    return sorted(points)


def _sample_domain(map: MapSpec, per_component: int) -> np.ndarray:
    return np.concatenate([np.linspace(c.lo, c.hi, per_component) for c in map.domain])


def _check_invariance(map: MapSpec, tol: float) -> ValidationCheck:
    from .branches import image

    worst = 0.0
    images = []
    for component in map.domain:
        img = image(map, component, clamp=False)
        samples = map.f(np.linspace(component.lo, component.hi, 4097))
        lo = min(img.lo, float(samples.min()))
        hi = max(img.hi, float(samples.max()))
        images.append([lo, hi])
        # a connected image has to fit inside a single component
        excess = min(max(iv.lo - lo, hi - iv.hi, 0.0) for iv in map.domain)
        worst = max(worst, excess)
    passed = worst <= tol
    return ValidationCheck(
        "f(M) ⊆ M",
        passed,
        {"images": images, "excess": worst},
        "" if passed else f"image leaves M by {worst:.3g}",
    )


def _check_boundary(map: MapSpec, tol: float) -> ValidationCheck:
    offenders = {}
    for b in map.boundary:
        fb = float(map.f(b))
        if min(abs(fb - e) for e in map.boundary) > tol:
            offenders[repr(b)] = fb
    passed = not offenders
    return ValidationCheck(
        "f(∂M) ⊆ ∂M",
        passed,
        {"offenders": offenders},
        "" if passed else f"boundary points map inside M: {offenders}",
    )


def _check_eta(map: MapSpec, tol: float) -> ValidationCheck:
    problems = []
    if map.eta <= 0:
        problems.append("eta must be positive")
    for c in map.critical_points:
        nbhd = Interval(c.location - map.eta, c.location + map.eta)
        component = map.component_of(c.location)
        if component is None or not (component.lo < nbhd.lo and nbhd.hi < component.hi):
            problems.append(f"eta-neighbourhood of {c.location} leaves M°")
    locations = [c.location for c in map.critical_points]
    for left, right in zip(locations[:-1], locations[1:]):
        if right - left <= 2 * map.eta:
            problems.append(f"critical points {left} and {right} are not 2*eta apart")
    return ValidationCheck(
        "eta neighbourhoods",
        not problems,
        {"eta": map.eta, "xi": map.xi},
        "; ".join(problems),
    )


def _check_critical_point(map: MapSpec, c: CriticalPoint, tol: float) -> ValidationCheck:
    raw = float(map.deriv(c.location))
    fc = float(map.f(c.location))
    distances = np.logspace(-5, -2, 20)
    slopes = []
    signs_ok = True
    for side, expected in ((-1.0, c.sign_left), (1.0, c.sign_right)):
        xs = c.location + side * distances
        if not all(map.in_domain(float(x)) for x in (xs[0], xs[-1])):
            continue
        diffs = map.f(xs) - fc
        if np.any(np.sign(diffs) != expected):
            signs_ok = False
        with np.errstate(divide="ignore"):
            logs = np.log(np.abs(diffs))
        if np.all(np.isfinite(logs)):
            slopes.append(float(np.polyfit(np.log(distances), logs, 1)[0]))
    exponent_ok = bool(slopes) and all(abs(s - c.exponent) <= 0.05 * c.exponent for s in slopes)
    derivative_ok = abs(raw) <= max(tol, 1e-9)
    passed = derivative_ok and exponent_ok and signs_ok
    problems = []
    if not derivative_ok:
        problems.append(f"f'(c) = {raw:.3g}")
    if not exponent_ok:
        problems.append(f"measured exponents {slopes} vs declared {c.exponent}")
    if not signs_ok:
        problems.append("side signs disagree with the declaration")
    return ValidationCheck(
        f"critical point {c.location:.17g}",
        passed,
        {"derivative": raw, "exponents": slopes, "declared_exponent": c.exponent},
        "; ".join(problems),
    )


def _check_critical_list(map: MapSpec) -> ValidationCheck:
    """Every sign change of f' on a fine grid sits at a declared extremum."""
    xs = _sample_domain(map, 8193)
    d = map.deriv(xs)
    changes = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
    undeclared = []
    declared = np.array(map.extrema) if map.extrema else np.array([np.inf])
    for i in changes:
        if not map.in_domain(float(0.5 * (xs[i] + xs[i + 1]))):
            continue
        if np.min(np.abs(declared - xs[i])) > 2 * (xs[i + 1] - xs[i]) + 1e-9:
            undeclared.append(float(0.5 * (xs[i] + xs[i + 1])))
    return ValidationCheck(
        "critical points complete",
        not undeclared,
        {"undeclared_turning_points": undeclared},
        "" if not undeclared else f"undeclared turning points near {undeclared}",
    )


def _check_derivative(map: MapSpec, samples: int = 1000, seed: int = 0) -> ValidationCheck:
    rng = np.random.default_rng(seed)
    xs = []
    singular = np.array(singular_points(map))
    while len(xs) < samples:
        component = map.domain[int(rng.integers(len(map.domain)))]
        x = float(rng.uniform(component.lo, component.hi))
        if np.min(np.abs(singular - x)) > 1e-3:
            xs.append(x)
    xs = np.array(xs)
    step = 1e-6 * np.maximum(1.0, np.abs(xs))
    central = (map.f(xs + step) - map.f(xs - step)) / (2 * step)
    exact = map.deriv(xs)
    scale = np.maximum(np.abs(exact), 1.0)
    err = float(np.max(np.abs(central - exact) / scale))
    return ValidationCheck(
        "derivative vs finite differences",
        err <= 1e-6,
        {"max_relative_error": err, "samples": samples},
        "" if err <= 1e-6 else f"relative error {err:.3g}",
    )


def _check_smoothness(map: MapSpec) -> Optional[ValidationCheck]:
    breakpoints = map.definition.get("breakpoints") if map.definition else None
    if not breakpoints:
        return None
    jumps = {}
    for b in breakpoints:
        h = 1e-9
        value_jump = abs(float(map.f(b - h)) - float(map.f(b + h)))
        slope_jump = abs(float(map.deriv(b - h)) - float(map.deriv(b + h)))
        if value_jump > 1e-7 or slope_jump > 1e-6:
            jumps[repr(b)] = {"value": value_jump, "slope": slope_jump}
    return ValidationCheck(
        "C1 across breakpoints", not jumps, {"jumps": jumps}, "" if not jumps else f"{jumps}"
    )


def validate(map: MapSpec, tol: Optional[float] = None) -> ValidationReport:
    """Check every MapSpec invariant; failures are reported, never raised."""
    tol = defaults.TOL_NUM if tol is None else tol
    report = ValidationReport(map.name)
    report.checks.append(_check_invariance(map, max(tol, 1e-12)))
    report.checks.append(_check_boundary(map, max(tol, 1e-12)))
    report.checks.append(_check_eta(map, tol))
    for c in map.critical_points:
        report.checks.append(_check_critical_point(map, c, tol))
    report.checks.append(_check_critical_list(map))
    smooth = _check_smoothness(map)
    if smooth is not None:
        report.checks.append(smooth)
    report.checks.append(_check_derivative(map))
    for check in report.failed:
        logger.info(f"{map.name}: check '{check.name}' failed: {check.message}")
    return report


def calibrate_constants(
    map: MapSpec, eta: Optional[float] = None, xi: Optional[float] = None
) -> Tuple[float, float]:
    """Choose eta and xi for ``map``.

    eta is the user value capped at a third of the smallest gap between
    singular points. xi is half the smallest image length min_m λ(f^m J) over
    sampled intervals J of length eta around each extremum.
    """
    from .branches import iterate_image

    points = singular_points(map)
    gaps = [b - a for a, b in zip(points[:-1], points[1:]) if b > a]
    cap = min(gaps) / 3.0 if gaps else map.measure / 3.0
    eta = cap if eta is None else min(float(eta), cap)
    if xi is not None:
        return eta, float(xi)
    floor = 1e-9 * map.measure
    lengths = []
    for c in map.extrema:
        component = map.component_of(c)
        for t in np.linspace(0.0, 1.0, 9):
            J = Interval(max(component.lo, c - t * eta), min(component.hi, c + (1 - t) * eta))
            images = iterate_image(map, J, 64)
            lengths.append(min(img.length for img in images[1:]))
    xi = 0.5 * min(lengths) if lengths else eta
    return eta, max(xi, floor)


def _parse_interval(raw: Any, what: str) -> Interval:
    try:
        lo, hi = raw
        return Interval(float(lo), float(hi))
    except (TypeError, ValueError) as e:
        raise MapFileError(f"{what}: expected [lo, hi], got {raw!r} ({e})")


def _parse_critical_point(raw: Any) -> CriticalPoint:
    if not isinstance(raw, dict) or "location" not in raw:
        raise MapFileError(f"critical point entries need a 'location': {raw!r}")
    try:
        return CriticalPoint(
            location=float(raw["location"]),
            kind=raw.get("kind", EXTREMUM),
            exponent=float(raw.get("exponent", 2.0)),
            sign_left=int(raw.get("sign_left", -1)),
            sign_right=int(raw.get("sign_right", -1 if raw.get("kind", EXTREMUM) == EXTREMUM else 1)),
        )
    except (TypeError, ValueError) as e:
        raise MapFileError(f"invalid critical point {raw!r}: {e}")


def map_from_dict(data: Dict[str, Any]) -> MapSpec:
    """Build a MapSpec from the map-file schema."""
    from .families import FAMILIES, make_map, piecewise

    if not isinstance(data, dict):
        raise MapFileError("map definition must be a JSON object")
    eta = data.get("eta")
    xi = data.get("xi")
    if "family" in data:
        name = data["family"]
        if name not in FAMILIES:
            raise MapFileError(f"unknown family {name!r}; known: {sorted(FAMILIES)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise MapFileError("'params' must be an object")
        try:
            return make_map(name, eta=eta, xi=xi, **{k: float(v) for k, v in params.items()})
        except (TypeError, ValueError) as e:
            raise MapFileError(f"bad parameters for {name}: {e}")
    if "pieces" in data:
        if "domain" not in data:
            raise MapFileError("piecewise maps need a 'domain'")
        domain = [_parse_interval(raw, "domain") for raw in data["domain"]]
        pieces = []
        for raw in data["pieces"]:
            if not isinstance(raw, dict) or "interval" not in raw or "coefficients" not in raw:
                raise MapFileError(f"piece entries need 'interval' and 'coefficients': {raw!r}")
            pieces.append(
                (
                    _parse_interval(raw["interval"], "piece interval"),
                    [float(c) for c in raw["coefficients"]],
                    raw.get("basis", "power"),
                )
            )
        critical = [_parse_critical_point(raw) for raw in data.get("critical_points", [])]
        try:
            return piecewise(
                pieces, domain, critical, eta=eta, xi=xi, name=data.get("name", "piecewise")
            )
        except ValueError as e:
            raise MapFileError(f"invalid piecewise map: {e}")
    raise MapFileError("map definition needs either 'family' or 'pieces'")


def load_map(path: str | Path) -> MapSpec:
    """Parse a JSON map file."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise MapFileError(f"map file not found: {path}")
    except json.JSONDecodeError as e:
        raise MapFileError(f"{path}: {e}")
    logger.debug(f"Loaded map definition from {path}")
    return map_from_dict(data)


def map_to_dict(map: MapSpec) -> Dict[str, Any]:
    """Serializable description used inside reports."""
    if map.family is not None:
        data = map.family.to_dict()
    else:
        data = dict(map.definition)
        data.pop("breakpoints", None)
    data.update({"eta": map.eta, "xi": map.xi, "name": map.name})
    return data


def critical_values(map: MapSpec, kinds: Sequence[str] = (EXTREMUM, INFLECTION)) -> List[float]:
    return [float(map.f(c.location)) for c in map.critical_points if c.kind in kinds]

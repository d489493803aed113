"""
Densities of grid sets, broken lines, distortion and the density probes.

All measurable sets are GridSets. The probes never claim constants: they
report empirical envelopes over generated instances together with the
sample counts and the seed needed to replay them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev

from .branches import is_monotone, iterate_array, iterate_image, solve_on_branch
from .chain_lab import maps_onto, multiplicity, order, pull_back
from .core import config as defaults
from .core.pool import parallel_map, spawn_generators
from .errors import PreconditionError
from .gridset import Grid, GridSet
from .map_model import Interval, MapSpec, mirror_point
from .orbit_engine import BASIC_SET, OrbitContext, classify_orbit, iterate, omega_limit, sensitivity_estimate

logger = logging.getLogger(__name__)

LOCAL_CELLS = 2048


# Densities


def dens(X: GridSet, I: Interval) -> float:
    """λ(X ∩ I) / λ(I)."""
    if I.length <= 0:
        raise PreconditionError(f"density over degenerate interval {I}")
    return min(1.0, max(0.0, X.mass(I) / I.length))


def Dens(X: GridSet, a: float, I: Interval) -> float:
    """sup over y of dens(X | [a, y]) with y running from a to the far end of I."""
    if I.length <= 0:
        raise PreconditionError(f"density over degenerate interval {I}")
    if a == I.lo:
        far, sign = I.hi, 1.0
    elif a == I.hi:
        far, sign = I.lo, -1.0
    else:
        raise PreconditionError(f"{a} is not an endpoint of {I}")
    g = X.grid
    edges = g.edges
    inner = edges[(edges - a) * sign > 0]
    inner = inner[(far - inner) * sign > 0]
    ys = np.concatenate((inner, [far]))
    lengths = np.abs(ys - a)
    masses = np.abs(X.cumulative(ys) - X.cumulative(a))
    return float(min(1.0, np.max(masses / lengths)))


# Invariant sets


def _cell_images(map: MapSpec, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    edges = grid.edges
    values = map.f(map.clamp(edges))
    lo = np.minimum(values[:-1], values[1:])
    hi = np.maximum(values[:-1], values[1:])
    for c in map.extrema:
        k = int(grid.cell_of(c))
        fc = float(map.f(c))
        lo[k] = min(lo[k], fc)
        hi[k] = max(hi[k], fc)
    return grid.cell_of(lo), grid.cell_of(hi)


def invariant_hull(map: MapSpec, seed: GridSet, steps: int) -> GridSet:
    """Cell-wise closure of seed under images and preimages, ``steps`` rounds."""
    if steps <= 0:
        return seed
    grid = seed.grid
    first, last = _cell_images(map, grid)
    domain = GridSet.full(grid, map.domain).mask
    mask = seed.mask.copy()
    for round_ in range(steps):
        # forward: every cell covered by the image of a marked cell
        diff = np.zeros(grid.n + 1, dtype=np.int64)
        np.add.at(diff, first[mask], 1)
        np.add.at(diff, last[mask] + 1, -1)
        forward = np.cumsum(diff[:-1]) > 0
        # backward: cells whose image meets a marked cell
        prefix = np.concatenate(([0], np.cumsum(mask)))
        backward = (prefix[last + 1] - prefix[first]) > 0
        grown = (mask | forward | backward) & domain
        if np.array_equal(grown, mask):
            logger.debug(f"invariant_hull stabilised after {round_} rounds")
            break
        mask = grown
    return GridSet(grid, mask)


# Broken lines


@dataclass(frozen=True)
class BrokenLine:
    points: Tuple[float, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("a broken line needs at least one point")
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))

    @property
    def links(self) -> List[Interval]:
        return [Interval.span(a, b) for a, b in zip(self.points[:-1], self.points[1:])]

    @property
    def start(self) -> float:
        return self.points[0]

    @property
    def end(self) -> float:
        return self.points[-1]

    def is_proper(self) -> bool:
        links = self.links
        if any(link.is_degenerate for link in links):
            return False
        return all(nxt.contains_interval(prev) for prev, nxt in zip(links[:-1], links[1:]))

    def to_list(self) -> List[float]:
        return list(self.points)


def make_proper(L: BrokenLine) -> BrokenLine:
    """Drop degenerate links and merge backtracking ones until links nest."""
    pts: List[float] = [L.points[0]]
    for y in L.points[1:]:
        if y == pts[-1]:
            continue
        pts.append(y)
        while len(pts) >= 3:
            prev = Interval.span(pts[-3], pts[-2])
            nxt = Interval.span(pts[-2], pts[-1])
            if nxt.contains_interval(prev):
                break
            del pts[-2]
            if pts[-1] == pts[-2]:
                pts.pop()
                break
    if pts[-1] != L.end:
        pts.append(L.end)
    return BrokenLine(tuple(pts))


def is_D_broken_line(L: BrokenLine, X: GridSet, eps: float, first_link_exempt: bool = True) -> bool:
    """Every non-degenerate link [x_k, x_{k+1}] has Dens from x_k at least 1 - eps."""
    start = 1 if first_link_exempt else 0
    for k in range(start, len(L.points) - 1):
        a, b = L.points[k], L.points[k + 1]
        if a == b:
            continue
        if Dens(X, a, Interval.span(a, b)) < 1.0 - eps:
            return False
    return True


def D_broken_line_verdicts(L: BrokenLine, X: GridSet, eps: float) -> Dict[str, bool]:
    return {
        "first_link_exempt": is_D_broken_line(L, X, eps, True),
        "all_links": is_D_broken_line(L, X, eps, False),
    }


# Distortion


def log_abs_derivative(map: MapSpec, xs: np.ndarray, n: int) -> np.ndarray:
    """log |Df^n| along each point's orbit (-inf where the product vanishes)."""
    total = np.zeros_like(np.asarray(xs, dtype=float))
    ys = np.asarray(xs, dtype=float)
    with np.errstate(divide="ignore"):
        for _ in range(n):
            total = total + np.log(np.abs(map.df(ys)))
            ys = map.f(ys)
    return total


def distortion(map: MapSpec, J: Interval, n: int, rtol: float = 1e-3, max_nodes: int = 1 << 14) -> float:
    """sup_J |Df^n| / inf_J |Df^n| on Chebyshev nodes, refined until stable."""
    if n == 0:
        return 1.0
    if not is_monotone(map, J, n):
        raise PreconditionError(f"f^{n} has a turning point inside {J}")
    previous = None
    nodes = 33
    while True:
        ts = chebyshev.chebpts2(nodes)
        xs = J.midpoint + 0.5 * J.length * ts
        logs = log_abs_derivative(map, xs, n)
        if np.any(np.isneginf(logs)):
            logger.info(f"Df^{n} vanishes inside {J}; distortion is infinite")
            return math.inf
        value = float(np.exp(logs.max() - logs.min()))
        if previous is not None and abs(value - previous) <= rtol * previous:
            return value
        if nodes >= max_nodes:
            logger.warning(f"distortion on {J} did not stabilise at {nodes} nodes")
            return value
        previous = value
        nodes = 2 * nodes - 1


# Monotone instances for the distortion probes


@dataclass(frozen=True)
class ThreeIntervalInstance:
    x: float
    n: int
    J: Interval
    I: Interval
    mu: int
    order: int = 0

    @property
    def sides(self) -> Tuple[Interval, Interval]:
        return Interval(self.J.lo, self.I.lo), Interval(self.I.hi, self.J.hi)

    def to_dict(self) -> Dict[str, Any]:
        return {"x": self.x, "n": self.n, "J": self.J.to_list(), "I": self.I.to_list(), "mu": self.mu}


@dataclass(frozen=True)
class TwoIntervalInstance:
    x: float
    n: int
    J: Interval
    a: float
    L: Interval
    R: Interval
    b: float
    mu: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x,
            "n": self.n,
            "J": self.J.to_list(),
            "a": self.a,
            "L": self.L.to_list(),
            "R": self.R.to_list(),
            "b": self.b,
            "mu": self.mu,
        }


def _inside_interior(map: MapSpec, I: Interval) -> bool:
    component = map.component_of(I.midpoint)
    return component is not None and component.lo < I.lo and I.hi < component.hi


def _monotone_pullback(map: MapSpec, x: float, n: int, target: Interval):
    """(J, chain) with f^n mapping J monotonically onto target, or None."""
    try:
        chain = pull_back(map, x, n, target)
    except PreconditionError:
        return None
    if order(chain) != 0:
        return None
    if not maps_onto(map, chain):
        return None
    return chain.intervals[0], chain


def generate_three_interval_instances(
    map: MapSpec,
    count: int,
    rng: Optional[np.random.Generator] = None,
    delta: float = 0.5,
    n_max: int = 30,
    length: float = 1e-3,
) -> List[ThreeIntervalInstance]:
    """Monotone pull-backs J ⊃ I with image space λ(f^n J±)/λ(f^n I) = delta."""
    rng = rng or np.random.default_rng(defaults.SEED)
    out: List[ThreeIntervalInstance] = []
    attempts = 0
    ell = length * map.measure
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        component = map.domain[int(rng.integers(len(map.domain)))]
        x = float(rng.uniform(component.lo, component.hi))
        n = int(rng.integers(0, n_max + 1))
        y = float(iterate(map, x, n).points[-1])
        image_I = Interval(y - ell / 2, y + ell / 2)
        image_J = image_I.enlarge(delta * ell)
        if not _inside_interior(map, image_J):
            continue
        found = _monotone_pullback(map, x, n, image_J)
        if found is None:
            continue
        J, chain = found
        ends = [solve_on_branch(map, J, n, v) for v in (image_I.lo, image_I.hi)]
        if any(e is None for e in ends):
            continue
        I = Interval.span(*ends)
        if not (J.lo < I.lo and I.hi < J.hi):
            continue
        out.append(ThreeIntervalInstance(x, n, J, I, multiplicity(chain)))
    if len(out) < count:
        logger.warning(f"{map.name}: generated {len(out)} of {count} three-interval instances")
    return out


def generate_two_interval_instances(
    map: MapSpec,
    count: int,
    rng: Optional[np.random.Generator] = None,
    K: float = 2.0,
    n_max: int = 30,
    length: float = 1e-3,
) -> List[TwoIntervalInstance]:
    """Monotone J split at a with λ(f^n L)/λ(f^n R) ≤ K."""
    rng = rng or np.random.default_rng(defaults.SEED)
    out: List[TwoIntervalInstance] = []
    attempts = 0
    ell = length * map.measure
    split_max = K / (1.0 + K)
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        component = map.domain[int(rng.integers(len(map.domain)))]
        x = float(rng.uniform(component.lo, component.hi))
        n = int(rng.integers(0, n_max + 1))
        y = float(iterate(map, x, n).points[-1])
        image_J = Interval(y - ell / 2, y + ell / 2)
        if not _inside_interior(map, image_J):
            continue
        found = _monotone_pullback(map, x, n, image_J)
        if found is None:
            continue
        J, chain = found
        b = image_J.lo + float(rng.uniform(0.1, split_max)) * image_J.length
        a = solve_on_branch(map, J, n, b)
        if a is None or not (J.lo < a < J.hi):
            continue
        # L is the piece mapped onto [image_J.lo, b]
        left_end = J.lo if float(iterate_array(map, np.array([J.lo]), n)[0]) <= b else J.hi
        L = Interval.span(left_end, a)
        R = Interval.span(a, J.hi if left_end == J.lo else J.lo)
        out.append(TwoIntervalInstance(x, n, J, float(a), L, R, b, multiplicity(chain)))
    if len(out) < count:
        logger.warning(f"{map.name}: generated {len(out)} of {count} two-interval instances")
    return out


# Koebe-type probes


@dataclass
class KoebeProbeReport:
    kind: str
    samples: int
    mu: int = 0
    delta: Optional[float] = None
    K: Optional[float] = None
    sigma_hat: Optional[float] = None
    q_hat: Dict[float, float] = field(default_factory=dict)
    alpha_hat: Dict[float, float] = field(default_factory=dict)
    raw_monotone: bool = True
    sets_per_instance: int = 0
    by_multiplicity: Dict[int, float] = field(default_factory=dict)
    seed: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "samples": self.samples,
            "mu": self.mu,
            "delta": self.delta,
            "K": self.K,
            "sigma_hat": self.sigma_hat,
            "q_hat": {repr(k): v for k, v in self.q_hat.items()},
            "alpha_hat": {repr(k): v for k, v in self.alpha_hat.items()},
            "raw_monotone": self.raw_monotone,
            "sets_per_instance": self.sets_per_instance,
            "by_multiplicity": {str(k): v for k, v in self.by_multiplicity.items()},
            "seed": self.seed,
        }


def _random_holes(rng: np.random.Generator, cells: int, from_start: bool = False) -> np.ndarray:
    """Mask of ``cells`` local cells with a few random holes removed."""
    mask = np.ones(cells, dtype=bool)
    fraction = 10.0 ** rng.uniform(-4.0, -0.5)
    holes = int(rng.integers(1, 5))
    budget = max(1, int(round(fraction * cells)))
    for k in range(holes):
        width = max(1, budget // holes)
        start = 0 if (from_start and k == 0) else int(rng.integers(0, max(1, cells - width)))
        mask[start : start + width] = False
    return mask


def _monotone_envelope(table: Dict[float, float]) -> Tuple[Dict[float, float], bool]:
    keys = sorted(table)
    raw = np.array([table[k] for k in keys])
    fixed = np.maximum.accumulate(raw) if raw.size else raw
    return dict(zip(keys, fixed.tolist())), bool(np.array_equal(raw, fixed))


def _three_interval_worst(map: MapSpec, inst: ThreeIntervalInstance, eps_list, sets, rng) -> Dict[float, float]:
    grid = Grid.over(inst.I, inst.I.length / LOCAL_CELLS)
    edges = np.linspace(inst.I.lo, inst.I.hi, grid.n + 1)
    image_lengths = np.abs(np.diff(iterate_array(map, edges, inst.n)))
    total = image_lengths.sum()
    worst = {eps: 0.0 for eps in eps_list}
    for _ in range(sets):
        X = GridSet(grid, _random_holes(rng, grid.n))
        image_density = float(image_lengths[X.mask].sum() / total)
        deficiency = 1.0 - dens(X, inst.I)
        for eps in eps_list:
            if image_density >= 1.0 - eps:
                worst[eps] = max(worst[eps], deficiency)
    return worst


def three_interval_probe(
    map: MapSpec,
    instances: Sequence[ThreeIntervalInstance],
    delta: float,
    eps_list: Sequence[float] = (0.1, 0.01, 0.001),
    sets: int = 64,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
) -> KoebeProbeReport:
    """Empirical sigma and q(eps) over monotone three-interval instances."""
    if not instances:
        raise PreconditionError("three_interval_probe needs at least one instance")
    seed = defaults.SEED if seed is None else seed
    ratios = [min(side.length for side in inst.sides) / inst.I.length for inst in instances]
    rngs = spawn_generators(seed, len(instances))
    worst = parallel_map(
        lambda task: _three_interval_worst(map, task[0], eps_list, sets, task[1]),
        list(zip(instances, rngs)),
        threads,
    )
    raw = {eps: max(w[eps] for w in worst) for eps in eps_list}
    q_hat, monotone = _monotone_envelope(raw)
    if not monotone:
        logger.info("q_hat needed isotonic correction")
    by_mu: Dict[int, float] = {}
    for inst, ratio in zip(instances, ratios):
        by_mu[inst.mu] = min(by_mu.get(inst.mu, math.inf), ratio)
    return KoebeProbeReport(
        kind="three_interval",
        samples=len(instances),
        mu=max(inst.mu for inst in instances),
        delta=delta,
        sigma_hat=float(min(ratios)),
        q_hat=q_hat,
        raw_monotone=monotone,
        sets_per_instance=sets,
        by_multiplicity=dict(sorted(by_mu.items())),
        seed=seed,
    )


def _image_Dens(image_lengths: np.ndarray, mask: np.ndarray) -> float:
    """Dens from the first cell of an ordered run of image cells."""
    covered = np.cumsum(np.where(mask, image_lengths, 0.0))
    total = np.cumsum(image_lengths)
    return float(min(1.0, np.max(covered / total)))


def _two_interval_worst(map: MapSpec, inst: TwoIntervalInstance, deltas, sets, rng) -> Dict[float, float]:
    grid = Grid.over(inst.L, inst.L.length / LOCAL_CELLS)
    # local cells ordered outward from a
    from_a = inst.a == inst.L.lo
    edges = np.linspace(inst.L.lo, inst.L.hi, grid.n + 1)
    image_lengths = np.abs(np.diff(iterate_array(map, edges, inst.n)))
    if not from_a:
        image_lengths = image_lengths[::-1]
    worst = {delta: 0.0 for delta in deltas}
    for _ in range(sets):
        outward = _random_holes(rng, grid.n, from_start=bool(rng.integers(2)))
        mask = outward if from_a else outward[::-1]
        X = GridSet(grid, mask)
        source = Dens(X, inst.a, inst.L)
        target = _image_Dens(image_lengths, outward)
        for delta in deltas:
            if source >= 1.0 - delta:
                worst[delta] = max(worst[delta], 1.0 - target)
    return worst


def two_interval_probe(
    map: MapSpec,
    instances: Sequence[TwoIntervalInstance],
    deltas: Sequence[float] = (0.1, 0.01, 0.001),
    K: float = 2.0,
    sets: int = 64,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
) -> KoebeProbeReport:
    """Empirical alpha(delta, K): worst 1 - Dens_b(f^n X | f^n L) given Dens_a(X | L) ≥ 1 - delta."""
    if not instances:
        raise PreconditionError("two_interval_probe needs at least one instance")
    seed = defaults.SEED if seed is None else seed
    rngs = spawn_generators(seed, len(instances))
    worst = parallel_map(
        lambda task: _two_interval_worst(map, task[0], deltas, sets, task[1]),
        list(zip(instances, rngs)),
        threads,
    )
    raw = {delta: max(w[delta] for w in worst) for delta in deltas}
    alpha_hat, monotone = _monotone_envelope(raw)
    return KoebeProbeReport(
        kind="two_interval",
        samples=len(instances),
        mu=max(inst.mu for inst in instances),
        K=K,
        alpha_hat=alpha_hat,
        raw_monotone=monotone,
        sets_per_instance=sets,
        seed=seed,
    )


# Density probes


def _require_finitely_renormalizable(map: MapSpec, context: OrbitContext, cascade_min: int) -> None:
    for cascade in context.cascades.values():
        if cascade.is_infinite(cascade_min):
            raise PreconditionError(
                f"{map.name} looks infinitely renormalizable (cascade depth {len(cascade)} at extremum {cascade.extremum})"
            )


def longest_omission(points: np.ndarray, I: Interval) -> int:
    """Longest run of consecutive orbit points outside I."""
    outside = ~((points >= I.lo) & (points <= I.hi))
    padded = np.concatenate(([0], outside.astype(np.int8), [0]))
    changes = np.diff(padded)
    starts = np.flatnonzero(changes == 1)
    ends = np.flatnonzero(changes == -1)
    return int((ends - starts).max()) if starts.size else 0


def two_sided_density_probe(
    map: MapSpec,
    X: GridSet,
    x: float,
    I: Interval,
    eps: float,
    N: int = 100,
    budget: int = 100_000,
    context: Optional[OrbitContext] = None,
    cascade_min: Optional[int] = None,
    candidates: int = 65,
    min_fraction: float = 0.05,
    gamma: Optional[float] = None,
) -> Dict[str, Any]:
    """Best J ⊂ I (preferring J clear of ω(x)) with dense components of I minus J.

    ``gamma`` bounds λ(I) from above; by default it is the expansion constant
    that ``sensitivity_estimate`` reports for the basic set absorbing x.
    """
    cascade_min = defaults.CASCADE_MIN if cascade_min is None else cascade_min
    context = context or OrbitContext.build(map)
    _require_finitely_renormalizable(map, context, cascade_min)
    if X.density_at(x) < 0.999:
        raise PreconditionError(f"{x} is not a density point of X")
    fate = classify_orbit(map, x, budget, context=context)
    if fate.tag != BASIC_SET:
        raise PreconditionError(f"orbit of {x} is not absorbed by a basic set ({fate.tag})")
    if gamma is None:
        gamma = sensitivity_estimate(map, fate.witness).gamma
    if not I.length < gamma:
        raise PreconditionError(f"λ(I) = {I.length:g} is not below the expansion constant γ = {gamma:g}")
    points = iterate(map, x, budget).points
    omission = longest_omission(points, I)
    omega = omega_limit(map, x, n_collect=budget, grid=X.grid)

    ts = np.linspace(I.lo, I.hi, candidates)
    lo_len = ts - I.lo
    hi_len = I.hi - ts
    left = X.mass_between(I.lo, ts)
    right = X.mass_between(ts, I.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        left_d = np.where(lo_len > 0, left / lo_len, 0.0)
        right_d = np.where(hi_len > 0, right / hi_len, 0.0)
    floor = min_fraction * I.length
    best: Dict[str, Any] = {"score": -1.0}
    best_clear: Dict[str, Any] = {"score": -1.0}
    for i in range(candidates):
        if lo_len[i] < floor:
            continue
        for j in range(i + 1, candidates):
            if hi_len[j] < floor:
                continue
            score = float(min(left_d[i], right_d[j]))
            J = Interval(ts[i], ts[j])
            clear = omega.mass(J) == 0.0
            entry = {"score": score, "J": J, "clear": clear}
            if score > best["score"]:
                best = entry
            if clear and score > best_clear["score"]:
                best_clear = entry
    chosen = best_clear if best_clear["score"] >= 0 else best
    if chosen["score"] < 0:
        raise PreconditionError(f"{I} is too short for components of {min_fraction:g} λ(I)")
    J = chosen["J"]
    return {
        "I": I.to_list(),
        "J": J.to_list(),
        "dens_L1": dens(X, Interval(I.lo, J.lo)),
        "dens_L2": dens(X, Interval(J.hi, I.hi)),
        "j_avoids_omega": chosen["clear"],
        "hypothesis_met": omission >= N,
        "longest_omission": omission,
        "N": N,
        "conclusion_met": chosen["score"] >= 1.0 - eps,
        "eps": eps,
        "gamma": gamma,
    }


def one_sided_density_probe(
    map: MapSpec,
    X: GridSet,
    a: float,
    radii: Sequence[float],
    context: Optional[OrbitContext] = None,
    cascade_min: Optional[int] = None,
    x: Optional[float] = None,
    budget: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, Any]:
    """max(dens(X|[a-ρ, a]), dens(X|[a, a+ρ])) for shrinking ρ.

    a must lie in ω(x); without ``x`` a point of X is drawn at random.
    """
    cascade_min = defaults.CASCADE_MIN if cascade_min is None else cascade_min
    context = context or OrbitContext.build(map)
    _require_finitely_renormalizable(map, context, cascade_min)
    if x is None:
        if X.is_empty:
            raise PreconditionError("X is empty; no typical point to follow")
        rng = rng or np.random.default_rng(defaults.SEED)
        centre = float(rng.choice(X.cell_centers()))
        x = centre + float(rng.uniform(-0.5, 0.5)) * X.grid.h
    omega = omega_limit(map, x, n_collect=budget, grid=X.grid)
    if omega.distance_to(a) > X.grid.h:
        raise PreconditionError(f"{a} is not in the ω-limit set of {x}")
    hull = map.hull
    rows = []
    for rho in sorted(radii, reverse=True):
        sides = []
        for side in (Interval(max(hull.lo, a - rho), a), Interval(a, min(hull.hi, a + rho))):
            if side.length > 0:
                sides.append(dens(X, side))
        rows.append({"radius": rho, "value": max(sides) if sides else None, "sides": sides})
    h = X.grid.h
    trend = None
    if len(rows) > 1:
        trend = all(
            nxt["value"] is not None
            and prev["value"] is not None
            and nxt["value"] >= prev["value"] - 2.0 * h / nxt["radius"]
            for prev, nxt in zip(rows[:-1], rows[1:])
        )
    return {"a": a, "x": x, "table": rows, "trend_ok": trend}


def symmetrize(map: MapSpec, X: GridSet, c: float) -> Tuple[GridSet, Callable[[np.ndarray], np.ndarray]]:
    """X ∪ τ(X) for the involution at extremum c, plus the vectorised τ used."""
    crit = map.critical_point_at(c)

    if any(abs(s - c) <= 1e-15 for s in map.symmetric_extrema):

        def mirror(ys: np.ndarray) -> np.ndarray:
            return 2.0 * c - ys

    else:

        def mirror(ys: np.ndarray) -> np.ndarray:
            out = np.full(ys.shape, np.nan)
            for i, y in enumerate(ys):
                if abs(y - c) <= map.eta:
                    m = mirror_point(map, crit, float(y))
                    out[i] = np.nan if m is None else m
            return out

    return X | X.reflect(mirror), mirror


def symmetric_density_probe(
    map: MapSpec,
    X: GridSet,
    c: float,
    deltas: Sequence[float] = (0.1, 0.03, 0.01),
    samples: int = 64,
    rng: Optional[np.random.Generator] = None,
    symmetry_tol: float = 1e-3,
    q_max: int = 64,
) -> Dict[str, Any]:
    """Minimal dens(X|I) over non-periodic c-symmetric I with λ(I) < δ."""
    rng = rng or np.random.default_rng(defaults.SEED)
    crit = map.critical_point_at(c)
    if not crit.is_extremum:
        raise PreconditionError(f"{c} is not an extremum")
    sym, mirror = symmetrize(map, X, c)
    # compare only where τ is defined
    window = GridSet.full(sym.grid).reflect(mirror)
    mismatch = (sym & window).symmetric_difference_measure(sym.reflect(mirror))
    asymmetry = mismatch / sym.measure if sym.measure else 0.0
    if asymmetry > symmetry_tol:
        raise PreconditionError(f"X is not τ-symmetric after symmetrisation ({asymmetry:.3g})")
    h = X.grid.h
    rows = []
    for delta in sorted(deltas, reverse=True):
        if delta < 2 * h:
            logger.debug(f"δ={delta:g} is below the grid floor 2h; skipped")
            continue
        radii = np.exp(rng.uniform(np.log(h), np.log(delta / 2), samples))
        values = []
        for s in radii:
            m = mirror_point(map, crit, c - float(s))
            if m is None:
                continue
            I = Interval.span(c - float(s), m)
            if I.length >= delta or I.length <= 0:
                continue
            images = iterate_image(map, I, q_max)
            if any(I.contains_interval(img, 1e-12) for img in images[1:]):
                continue
            values.append(dens(sym, I))
        rows.append({"delta": delta, "min_density": min(values) if values else None, "samples": len(values)})
    observed = [r["min_density"] for r in rows if r["min_density"] is not None]
    trend = all(b >= a - 1e-9 for a, b in zip(observed[:-1], observed[1:])) if len(observed) > 1 else None
    return {"c": c, "table": rows, "trend_ok": trend, "asymmetry": asymmetry}

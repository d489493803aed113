"""
Realms of attraction, ergodic components of Λ(f), the attractor
decomposition and the conservative kernel, all estimated from sampled
orbits on grid bitmasks.

"Infinitely often" is read as "at least ``visit_min`` visits after
``burn_in`` within ``budget`` steps". Signatures of sampled orbits are
clustered by Jaccard similarity with scipy's single-linkage clustering.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import cdist, pdist

from .config import RunConfig
from .core import config as defaults
from .core.pool import chunk_slices, parallel_map, resolve_threads
from .errors import BudgetExhaustedError, PreconditionError
from .gridset import Grid, GridSet
from .map_model import Interval, MapSpec
from .orbit_engine import (
    HOMTERVAL,
    LIMIT_CYCLE,
    PARABOLIC,
    CycleEstimate,
    IntervalCycle,
    OrbitContext,
    advance,
    check_covering,
    classify_orbit,
    itinerary,
    lambda_set,
    trivial_fates,
    word_complexity,
)

logger = logging.getLogger(__name__)

A1 = "A1_limit_cycle"
A2 = "A2_interval_cycle"
A3 = "A3_cantor"

JACCARD_MIN = 0.9
SAMPLING_TOL = 0.02
KERNEL_LEVEL = 0.9
DISSIPATIVE_LEVEL = 0.1
NON_MINIMAL = "primitive but non-minimal candidate"

_FATE_BUDGET = 50_000
_LINKAGE_MAX = 512
_REPRESENTATIVES = 8
_MINIMALITY_STARTS = 20
_REFINE = 4
_BLOCK = 4096


# Records


@dataclass(frozen=True)
class RealmCluster:
    """Sampled initial points sharing one fate, with their share of λ(M)."""

    tag: str
    signature: GridSet
    measure: float
    members: int
    witness: Any = None
    representative_points: Tuple[float, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        witness = self.witness.to_dict() if hasattr(self.witness, "to_dict") else self.witness
        return {
            "tag": self.tag,
            "measure": self.measure,
            "members": self.members,
            "witness": witness,
            "signature": self.signature.to_rle(),
            "representative_points": list(self.representative_points),
        }


@dataclass(frozen=True)
class ErgodicComponentEstimate:
    signature: GridSet
    member_measure: float
    representative_points: Tuple[float, ...]
    members: int = 0

    @property
    def digest(self) -> str:
        return self.signature.digest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "digest": self.digest,
            "member_measure": self.member_measure,
            "members": self.members,
            "representative_points": list(self.representative_points),
            "signature": self.signature.to_rle(),
        }


@dataclass
class AttractorEstimate:
    support: GridSet
    klass: str
    period: Optional[int] = None
    contained_critical_points: List[float] = field(default_factory=list)
    realm_measure: float = 0.0
    RL_measure: float = 0.0
    representatives: Tuple[float, ...] = ()
    component: Optional[int] = None
    refined_support: Optional[GridSet] = None
    note: Optional[str] = None
    classification: Optional["ClassificationReport"] = None
    cycle: Optional[CycleEstimate] = None

    @property
    def is_infinite(self) -> bool:
        return self.cycle is None

    @property
    def shrink_factor(self) -> float:
        if self.refined_support is None or self.refined_support.measure == 0:
            return math.inf if self.refined_support is not None else 1.0
        return self.support.measure / self.refined_support.measure

    def to_dict(self) -> Dict[str, Any]:
        return {
            "klass": self.klass,
            "period": self.period,
            "contained_critical_points": list(self.contained_critical_points),
            "realm_measure": self.realm_measure,
            "RL_measure": self.RL_measure,
            "support_measure": self.support.measure,
            "refined_support_measure": None if self.refined_support is None else self.refined_support.measure,
            "component": self.component,
            "note": self.note,
            "cycle": None if self.cycle is None else self.cycle.to_dict(),
            "classification": None if self.classification is None else self.classification.to_dict(),
            "support": self.support.to_rle(),
        }


@dataclass
class ClassificationReport:
    klass: str
    candidates: Tuple[str, ...] = ()
    checks: Dict[str, Any] = field(default_factory=dict)

    @property
    def ambiguous(self) -> bool:
        return len(self.candidates) > 1

    def to_dict(self) -> Dict[str, Any]:
        return {"klass": self.klass, "ambiguous": self.ambiguous, "candidates": list(self.candidates), "checks": self.checks}


@dataclass
class RecurrenceReport:
    kernel_estimate: GridSet
    ambiguous: GridSet
    fractions: np.ndarray
    samples_per_cell: np.ndarray
    mean_first_return: np.ndarray
    R_min: int
    budget: int
    attractor_difference: Optional[float] = None
    tolerance: float = SAMPLING_TOL

    @property
    def grid(self) -> Grid:
        return self.kernel_estimate.grid

    @property
    def kernel_matches_attractors(self) -> Optional[bool]:
        if self.attractor_difference is None:
            return None
        return self.attractor_difference <= self.tolerance

    def csv_rows(self) -> Tuple[List[str], List[List[Any]]]:
        """Per-cell recurrence statistics for external plotting."""
        header = ["cell", "lo", "hi", "samples", "fraction", "mean_first_return", "in_kernel", "ambiguous"]
        rows = []
        g = self.grid
        for i in np.flatnonzero(self.samples_per_cell > 0):
            cell = g.cell_bounds(int(i))
            rows.append([
                int(i),
                cell.lo,
                cell.hi,
                int(self.samples_per_cell[i]),
                float(self.fractions[i]),
                _nan_to_none(self.mean_first_return[i]),
                int(self.kernel_estimate.mask[i]),
                int(self.ambiguous.mask[i]),
            ])
        return header, rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "R_min": self.R_min,
            "budget": self.budget,
            "kernel_measure": self.kernel_estimate.measure,
            "kernel_cells": self.kernel_estimate.count,
            "ambiguous_cells": self.ambiguous.count,
            "attractor_difference": self.attractor_difference,
            "kernel_matches_attractors": self.kernel_matches_attractors,
            "kernel": self.kernel_estimate.to_rle(),
            "ambiguous": self.ambiguous.to_rle(),
        }


@dataclass
class DecompositionReport:
    lambda_estimate: GridSet
    components: List[ErgodicComponentEstimate]
    attractors: List[AttractorEstimate]
    pairing: Dict[int, int]
    decomposition_checks: Dict[str, Dict[str, Any]]
    recurrence: Optional[RecurrenceReport] = None
    trivial_measure: float = 0.0
    cascade_depths: Dict[float, int] = field(default_factory=dict)
    checks: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def infinite_attractors(self) -> List[AttractorEstimate]:
        return [a for a in self.attractors if a.is_infinite]

    @property
    def passed(self) -> bool:
        return all(check.get("passed", False) for check in self.decomposition_checks.values())

    def attractor_support(self) -> Optional[GridSet]:
        if not self.attractors:
            return None
        support = self.attractors[0].support
        for a in self.attractors[1:]:
            support = support | a.support
        return support

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda_measure": self.lambda_estimate.measure,
            "lambda_estimate": self.lambda_estimate.to_rle(),
            "trivial_measure": self.trivial_measure,
            "cascade_depths": {repr(c): d for c, d in self.cascade_depths.items()},
            "components": [c.to_dict() for c in self.components],
            "attractors": [a.to_dict() for a in self.attractors],
            "pairing": {str(k): v for k, v in self.pairing.items()},
            "decomposition_checks": self.decomposition_checks,
            "checks": self.checks,
            "passed": self.passed,
            "recurrence": None if self.recurrence is None else self.recurrence.to_dict(),
        }


def _nan_to_none(value: float) -> Optional[float]:
    value = float(value)
    return None if math.isnan(value) else value


# Sampling primitives


def equidistributed(map: MapSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified points of M: one jittered point in each of n equal-measure strata."""
    u = (np.arange(n) + rng.random(n)) / max(n, 1) * map.measure
    lengths = np.array([c.length for c in map.domain])
    starts = np.concatenate(([0.0], np.cumsum(lengths)[:-1]))
    idx = np.clip(np.searchsorted(starts, u, side="right") - 1, 0, len(lengths) - 1)
    lows = np.array([c.lo for c in map.domain])
    return map.clamp(lows[idx] + (u - starts[idx]))


def visit_matrix(
    map: MapSpec, xs: np.ndarray, burn_in: int, steps: int, grid: Grid, threads: Optional[int] = 1
) -> np.ndarray:
    """Row i marks the cells visited by x_i's orbit in steps burn_in+1 .. burn_in+steps."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    out = np.zeros((xs.size, grid.n), dtype=bool)
    if xs.size == 0:
        return out
    hull = map.hull

    def work(part: slice) -> None:
        values = advance(map, xs[part], burn_in)
        rows = np.arange(part.start, part.stop)
        for _ in range(steps):
            values = np.clip(map.f(values), hull.lo, hull.hi)
            out[rows, grid.cell_of(values)] = True

    parallel_map(work, chunk_slices(xs.size, resolve_threads(threads)), threads)
    return out


def visit_counts(map: MapSpec, starts: Sequence[float], burn_in: int, steps: int, grid: Grid) -> np.ndarray:
    """Total visits per cell of all orbits after burn-in."""
    values = advance(map, np.asarray(starts, dtype=float), burn_in)
    counts = np.zeros(grid.n, dtype=np.int64)
    hull = map.hull
    done = 0
    while done < steps:
        size = min(_BLOCK, steps - done)
        traj = np.empty((size, values.size))
        for i in range(size):
            values = np.clip(map.f(values), hull.lo, hull.hi)
            traj[i] = values
        counts += np.bincount(grid.cell_of(traj.ravel()), minlength=grid.n)
        done += size
    return counts


def cluster_signatures(signatures: np.ndarray, threshold: float = JACCARD_MIN, max_linkage: int = _LINKAGE_MAX) -> np.ndarray:
    """Cluster labels 0..k-1 (largest cluster first) for boolean signature rows.

    Single linkage at Jaccard distance 1 - threshold runs on at most
    ``max_linkage`` evenly spaced rows; the remaining rows join the cluster of
    their nearest linked row when close enough and are clustered again
    otherwise.
    """
    signatures = np.asarray(signatures, dtype=bool)
    n = signatures.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    _cluster_into(signatures, np.arange(n), labels, threshold, max_linkage, 0)
    # relabel by size, ties by first occurrence
    uniq, first, counts = np.unique(labels, return_index=True, return_counts=True)
    order = sorted(range(len(uniq)), key=lambda k: (-counts[k], first[k]))
    remap = {int(uniq[k]): new for new, k in enumerate(order)}
    return np.array([remap[int(v)] for v in labels], dtype=np.int64)


def _cluster_into(
    signatures: np.ndarray, rows: np.ndarray, labels: np.ndarray, threshold: float, max_linkage: int, offset: int
) -> int:
    if rows.size == 1:
        labels[rows] = offset
        return offset + 1
    picked = np.unique(np.linspace(0, rows.size - 1, min(rows.size, max_linkage)).astype(int))
    linked = rows[picked]
    if linked.size == 1:
        labels[linked] = offset
        sub = np.array([offset])
    else:
        tree = linkage(pdist(signatures[linked], "jaccard"), method="single")
        sub = fcluster(tree, t=1.0 - threshold, criterion="distance") - 1 + offset
        labels[linked] = sub
    next_label = int(sub.max()) + 1
    rest = np.setdiff1d(rows, linked)
    if rest.size == 0:
        return next_label
    distances = cdist(signatures[rest], signatures[linked], "jaccard")
    nearest = np.argmin(distances, axis=1)
    close = distances[np.arange(rest.size), nearest] <= 1.0 - threshold
    labels[rest[close]] = labels[linked[nearest[close]]]
    if np.any(~close):
        next_label = _cluster_into(signatures, rest[~close], labels, threshold, max_linkage, next_label)
    return next_label


def consensus(grid: Grid, signatures: np.ndarray) -> GridSet:
    """Cells present in at least half of the rows."""
    return GridSet(grid, signatures.mean(axis=0) >= 0.5)


# Survey shared by the sampling operations


@dataclass
class SampleSurvey:
    """Equidistributed samples with their fates, Λ-membership and ω-signatures."""

    xs: np.ndarray
    fates: np.ndarray
    which: np.ndarray
    in_lambda: np.ndarray
    signatures: np.ndarray
    labels: np.ndarray
    grid: Grid
    lam: GridSet
    measure: float

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @property
    def weight(self) -> float:
        return self.measure / max(self.n, 1)

    @property
    def lambda_points(self) -> np.ndarray:
        return self.xs[self.in_lambda]

    @property
    def unresolved(self) -> np.ndarray:
        return (self.fates == 0) & ~self.in_lambda

    def cluster_rows(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def survey(
    map: MapSpec,
    n_samples: Optional[int] = None,
    budget: Optional[int] = None,
    *,
    burn_in: Optional[int] = None,
    signature_grid: Optional[Grid] = None,
    lambda_grid: Optional[Grid] = None,
    context: Optional[OrbitContext] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
    threshold: float = JACCARD_MIN,
) -> SampleSurvey:
    n_samples = defaults.SAMPLES if n_samples is None else n_samples
    budget = defaults.BUDGET if budget is None else budget
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    if n_samples <= 0 or budget <= 0:
        raise PreconditionError("n_samples and budget must be positive")
    seed = defaults.SEED if seed is None else seed
    grid = signature_grid or Grid.dyadic(map.hull, defaults.SIGNATURE_EXP)
    context = context or OrbitContext.build(map)
    lam = lambda_set(map, context=context, seed=seed, threads=threads,
                     grid=lambda_grid or Grid.dyadic(map.hull, defaults.LAMBDA_EXP))
    rng = np.random.default_rng(seed)
    xs = equidistributed(map, n_samples, rng)
    fates, which = trivial_fates(map, xs, min(budget, _FATE_BUDGET), context)
    in_lambda = (fates == 0) & lam.mask[lam.grid.cell_of(xs)]
    logger.info(
        f"{map.name}: {int(in_lambda.sum())}/{n_samples} samples in Λ, "
        f"{int((fates != 0).sum())} absorbed by trivial dynamics"
    )
    steps = 16 * grid.n
    signatures = visit_matrix(map, xs[in_lambda], burn_in, steps, grid, threads)
    labels = cluster_signatures(signatures, threshold)
    return SampleSurvey(xs, fates, which, in_lambda, signatures, labels, grid, lam, map.measure)


def _survey_from_config(map: MapSpec, config: RunConfig, context: OrbitContext) -> SampleSurvey:
    return survey(
        map,
        config.n_samples,
        config.budget,
        burn_in=config.burn_in,
        signature_grid=config.signature_grid(map),
        lambda_grid=config.lambda_grid(map),
        context=context,
        seed=config.seed,
        threads=config.threads,
    )


# Realms and components


def sample_realms(
    map: MapSpec,
    n_samples: Optional[int] = None,
    budget: Optional[int] = None,
    grid_h: Optional[float] = None,
    *,
    context: Optional[OrbitContext] = None,
    burn_in: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
    samples: Optional[SampleSurvey] = None,
) -> List[RealmCluster]:
    """Realms of attraction: fate clusters of equidistributed initial points."""
    budget = defaults.BUDGET if budget is None else budget
    context = context or OrbitContext.build(map, max_iter=budget)
    if samples is None:
        grid = Grid.over(map.hull, grid_h) if grid_h else None
        samples = survey(map, n_samples, budget, burn_in=burn_in, signature_grid=grid,
                         context=context, seed=seed, threads=threads)
    grid = samples.grid
    realms: List[RealmCluster] = []

    for k, cycle in enumerate(context.limit_cycles):
        hits = np.flatnonzero((samples.fates == 2) & (samples.which == k))
        if hits.size:
            realms.append(RealmCluster(
                LIMIT_CYCLE, GridSet.from_points(grid, cycle.points), hits.size * samples.weight,
                int(hits.size), cycle, tuple(samples.xs[hits[:_REPRESENTATIVES]]),
            ))
    for k, homterval in enumerate(context.homtervals):
        hits = np.flatnonzero((samples.fates == 1) & (samples.which == k))
        if hits.size:
            members = homterval.orbit or (homterval.interval,)
            realms.append(RealmCluster(
                HOMTERVAL, GridSet.from_intervals(grid, members), hits.size * samples.weight,
                int(hits.size), homterval, tuple(samples.xs[hits[:_REPRESENTATIVES]]),
            ))

    points = samples.lambda_points
    for label in range(int(samples.labels.max()) + 1 if samples.labels.size else 0):
        rows = samples.cluster_rows(label)
        rep = float(points[rows[0]])
        try:
            fate = classify_orbit(map, rep, budget, context=context)
            tag, witness = fate.tag, fate.witness
        except BudgetExhaustedError as e:
            logger.warning(f"{map.name}: realm representative {rep} undecided: {e}")
            tag, witness = "budget_exhausted", e.evidence
        realms.append(RealmCluster(
            tag, consensus(grid, samples.signatures[rows]), rows.size * samples.weight,
            int(rows.size), witness, tuple(float(x) for x in points[rows[:_REPRESENTATIVES]]),
        ))

    unresolved = np.flatnonzero(samples.unresolved)
    if unresolved.size:
        realms.append(RealmCluster(
            "unresolved", GridSet.empty(grid), unresolved.size * samples.weight, int(unresolved.size),
            None, tuple(samples.xs[unresolved[:_REPRESENTATIVES]]),
        ))
    realms.sort(key=lambda r: -r.measure)
    return realms


def ergodic_components(
    map: MapSpec,
    n_samples: Optional[int] = None,
    budget: Optional[int] = None,
    *,
    context: Optional[OrbitContext] = None,
    component_min: Optional[float] = None,
    burn_in: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = 1,
    samples: Optional[SampleSurvey] = None,
) -> List[ErgodicComponentEstimate]:
    """Clusters of ω-signatures of Λ-samples heavier than component_min · λ(M)."""
    component_min = defaults.COMPONENT_MIN if component_min is None else component_min
    if samples is None:
        samples = survey(map, n_samples, budget, burn_in=burn_in, context=context, seed=seed, threads=threads)
    points = samples.lambda_points
    components = []
    for label in range(int(samples.labels.max()) + 1 if samples.labels.size else 0):
        rows = samples.cluster_rows(label)
        measure = rows.size * samples.weight
        if measure <= component_min * map.measure:
            logger.debug(f"{map.name}: dropping light cluster {label} of measure {measure:.3g}")
            continue
        components.append(ErgodicComponentEstimate(
            consensus(samples.grid, samples.signatures[rows]),
            measure,
            tuple(float(x) for x in points[rows[:_REPRESENTATIVES]]),
            int(rows.size),
        ))
    envelope = 2 * len(map.critical_points)
    if len(components) > envelope:
        logger.warning(f"{map.name}: {len(components)} ergodic components exceed the envelope {envelope}")
    return components


# Attractors


def _contained_critical_points(map: MapSpec, support: GridSet, cells: int = 2) -> List[float]:
    return [c.location for c in map.critical_points if support.distance_to(c.location) <= cells * support.h]


def attractor_from_component(
    map: MapSpec,
    component: ErgodicComponentEstimate,
    grid: Grid,
    budget: int,
    burn_in: int,
    visit_min: int,
) -> AttractorEstimate:
    """Cells visited at least visit_min times by the component's representative orbits."""
    fine = grid.refine(_REFINE)
    counts_fine = visit_counts(map, component.representative_points, burn_in, budget, fine)
    counts = counts_fine.reshape(grid.n, _REFINE).sum(axis=1)
    support = GridSet.from_counts(grid, counts, visit_min)
    refined = GridSet.from_counts(fine, counts_fine, max(1, visit_min // _REFINE))
    return AttractorEstimate(
        support=support,
        klass=A3,
        contained_critical_points=_contained_critical_points(map, support),
        representatives=component.representative_points,
        refined_support=refined,
    )


def attractor_from_cycle(map: MapSpec, cycle: CycleEstimate, grid: Grid) -> AttractorEstimate:
    support = GridSet.from_points(grid, cycle.points)
    return AttractorEstimate(
        support=support,
        klass=A1,
        period=cycle.period,
        contained_critical_points=_contained_critical_points(map, support, cells=0),
        representatives=tuple(cycle.points),
        note=NON_MINIMAL if cycle.stability == PARABOLIC else None,
        cycle=cycle,
        classification=ClassificationReport(A1, (A1,), {"finite_cycle": True}),
    )


def _long_runs(support: GridSet) -> List[Interval]:
    return [iv for iv in support.run_intervals(merge_gap=2) if iv.length >= 8 * support.h]


def support_interval_cycle(A: AttractorEstimate) -> IntervalCycle:
    """The support's long runs as a cycle of intervals."""
    runs = _long_runs(A.support)
    return IntervalCycle(len(runs), tuple(runs) or (Interval(A.support.grid.origin, A.support.grid.end),))


def _omega_support(map: MapSpec, x: float, grid: Grid, budget: int, burn_in: int, visit_min: int) -> GridSet:
    return GridSet.from_counts(grid, visit_counts(map, [x], burn_in, budget, grid), visit_min)


def entropy_heuristic(
    map: MapSpec,
    A: AttractorEstimate,
    length: int = 1 << 16,
    burn_in: Optional[int] = None,
    max_word: int = 48,
) -> Dict[str, Any]:
    """Growth exponent of distinct itinerary words on the attractor.

    The fit uses the upper half of the word lengths whose counts stay below
    length / 8, so finite samples do not flatten the curve.
    """
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    start = A.representatives[0] if A.representatives else float(A.support.cell_centers()[0])
    symbols = itinerary(map, map.clamp(start), length, burn_in=burn_in)
    base = max(2, map.d + 1)
    max_word = min(max_word, int(62 // math.log2(base)))
    lengths = list(range(2, max_word + 1, 2))
    counts = word_complexity(symbols, lengths)
    usable = [L for L in lengths if 0 < counts[L] <= length / 8]
    if len(usable) < 2:
        usable = lengths[:2]
    top = usable[-1]
    window = [L for L in usable if L >= top / 2] or usable
    if len(window) < 2:
        window = usable[-2:]
    exponent = float(np.polyfit(window, np.log([counts[L] for L in window]), 1)[0])
    return {
        "exponent": exponent,
        "fit_lengths": window,
        "counts": {str(L): counts[L] for L in lengths},
        "consistent_with_zero_entropy": exponent < 0.05,
    }


def classify_attractor(
    map: MapSpec,
    A: AttractorEstimate,
    *,
    others: Sequence[AttractorEstimate] = (),
    budget: Optional[int] = None,
    burn_in: Optional[int] = None,
    visit_min: Optional[int] = None,
    p_max: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> ClassificationReport:
    """A1 finite cycle, A2 cycle of transitive intervals, or A3 Cantor attractor."""
    budget = defaults.BUDGET if budget is None else budget
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    visit_min = defaults.VISIT_MIN if visit_min is None else visit_min
    p_max = defaults.P_MAX if p_max is None else p_max
    rng = rng or np.random.default_rng(defaults.SEED)
    support = A.support
    checks: Dict[str, Any] = {}

    if A.cycle is not None:
        return ClassificationReport(A1, (A1,), {"finite_cycle": True})
    if support.is_empty:
        return ClassificationReport(A3, (A3,), {"empty_support": True})

    shrink = A.shrink_factor
    checks["support_measure"] = support.measure
    checks["refined_measure"] = None if A.refined_support is None else A.refined_support.measure
    checks["shrink_factor"] = shrink
    runs = support.runs()
    if support.count <= p_max and max(length for _, length in runs) <= 2 and shrink >= 3.5:
        checks["finite_cycle"] = True
        return ClassificationReport(A1, (A1,), checks)

    # A2: long runs, stable measure, covering property
    long_runs = _long_runs(support)
    long_share = sum(support.mass(iv) for iv in long_runs) / support.measure
    measure_stable = abs(shrink - 1.0) <= SAMPLING_TOL if math.isfinite(shrink) else False
    covering = None
    if long_runs and long_share >= 0.9:
        cycle = IntervalCycle(len(long_runs), tuple(long_runs))
        covering = check_covering(map, cycle, n_pairs=10, rng=rng)
        checks["covering"] = covering.to_dict()
    checks["long_run_share"] = long_share
    checks["measure_stable"] = measure_stable
    a2 = long_share >= 0.9 and measure_stable and covering is not None and covering.passed

    # A3: zero-measure shrinkage, minimality, support = ω(c)
    n_starts = min(_MINIMALITY_STARTS, support.count)
    starts = rng.choice(support.cell_centers(), size=n_starts, replace=False)
    steps = min(budget, 32 * support.grid.n)
    visits = visit_matrix(map, map.clamp(np.sort(starts)), burn_in, steps, support.grid)
    coverage = (visits & support.mask).sum(axis=1) / support.count
    checks["minimality"] = {"starts": int(n_starts), "min_coverage": float(coverage.min()), "passed": bool(coverage.min() >= 0.95)}
    omega_c = {}
    for c in A.contained_critical_points:
        omega = _omega_support(map, map.clamp(float(map.f(c))), support.grid, budget, burn_in, visit_min)
        omega_c[repr(c)] = support.jaccard(omega)
    omega_ok = bool(omega_c) and max(omega_c.values()) >= JACCARD_MIN
    checks["omega_c"] = {"jaccard": omega_c, "passed": omega_ok}
    a3 = shrink >= 1.5 and checks["minimality"]["passed"] and omega_ok

    if others:
        overlaps = [int((support.mask & o.support.regrid(support.grid).mask).sum()) for o in others]
        checks["disjoint"] = {"overlap_cells": overlaps, "passed": all(v <= 2 * p_max for v in overlaps)}

    if a2 and not a3:
        return ClassificationReport(A2, (A2,), checks)
    if a3 and not a2:
        checks["entropy"] = entropy_heuristic(map, A, burn_in=burn_in)
        return ClassificationReport(A3, (A3,), checks)
    klass = A3 if shrink >= 1.5 else A2
    logger.warning(f"{map.name}: ambiguous attractor class (A2 checks {a2}, A3 checks {a3}); reporting {klass}")
    return ClassificationReport(klass, (A2, A3), checks)


def _pairwise_overlaps(attractors: Sequence[AttractorEstimate]) -> List[Dict[str, Any]]:
    out = []
    for i in range(len(attractors)):
        for j in range(i + 1, len(attractors)):
            a, b = attractors[i].support, attractors[j].support
            out.append({"pair": [i, j], "cells": int((a.mask & b.regrid(a.grid).mask).sum())})
    return out


def _realm_memberships(samples: SampleSurvey, attractor: AttractorEstimate) -> Tuple[np.ndarray, np.ndarray]:
    """Λ-samples with ω inside the attractor, and with ω equal to it."""
    reference = attractor.support.regrid(samples.grid).mask
    sig = samples.signatures
    if sig.shape[0] == 0:
        empty = np.zeros(0, dtype=bool)
        return empty, empty
    # one-cell slack on the inclusion test
    slack = reference | np.roll(reference, 1) | np.roll(reference, -1)
    sizes = sig.sum(axis=1)
    inside = (sig & slack).sum(axis=1) >= (1.0 - SAMPLING_TOL) * sizes
    inter = (sig & reference).sum(axis=1)
    union = (sig | reference).sum(axis=1)
    equal = inter >= JACCARD_MIN * np.maximum(union, 1)
    return inside, equal


def _critical_points_in_lambda(map: MapSpec, context: OrbitContext, budget: int) -> List[float]:
    values = np.array([map.clamp(float(map.f(c.location))) for c in map.critical_points])
    fates, _ = trivial_fates(map, values, min(budget, _FATE_BUDGET), context)
    return [c.location for c, fate in zip(map.critical_points, fates) if fate == 0]


def decompose(
    map: MapSpec,
    config: Optional[RunConfig] = None,
    *,
    context: Optional[OrbitContext] = None,
    recurrence: bool = True,
) -> DecompositionReport:
    """Global attractor = limit cycles plus one infinite primitive attractor per ergodic component."""
    config = config or RunConfig()
    context = context or OrbitContext.build(map, config.p_max, max_iter=config.budget)
    samples = _survey_from_config(map, config, context)
    components = ergodic_components(map, component_min=config.component_min, samples=samples)
    grid = config.support_grid(map)
    rng = np.random.default_rng(config.seed)

    attractors = [attractor_from_cycle(map, cycle, grid) for cycle in context.limit_cycles]
    for k, cycle in enumerate(context.limit_cycles):
        hits = int(((samples.fates == 2) & (samples.which == k)).sum())
        attractors[k].realm_measure = attractors[k].RL_measure = hits * samples.weight

    pairing: Dict[int, int] = {}
    realm_masks = []
    for k, component in enumerate(components):
        A = attractor_from_component(map, component, grid, config.budget, config.burn_in, config.visit_min)
        A.component = k
        inside, equal = _realm_memberships(samples, A)
        realm_masks.append(inside)
        A.realm_measure = float(inside.sum()) * samples.weight
        A.RL_measure = float(equal.sum()) * samples.weight
        pairing[k] = len(attractors)
        attractors.append(A)

    finite = [a for a in attractors if not a.is_infinite]
    for A in attractors:
        if A.is_infinite:
            others = [o for o in attractors if o is not A]
            A.classification = classify_attractor(
                map, A, others=others, budget=config.budget, burn_in=config.burn_in,
                visit_min=config.visit_min, p_max=config.p_max, rng=rng,
            )
            A.klass = A.classification.klass
            if A.klass == A2:
                A.period = support_interval_cycle(A).period
    infinite = [a for a in attractors if a.is_infinite]
    logger.info(f"{map.name}: {len(finite)} limit cycles, {len(infinite)} infinite primitive attractors")

    weight = samples.weight
    trivial = float((samples.fates != 0).sum()) * weight
    homterval = float((samples.fates == 1).sum()) * weight
    covered = samples.fates != 0
    covered_lambda = np.zeros(int(samples.in_lambda.sum()), dtype=bool)
    for inside in realm_masks:
        covered_lambda |= inside
    covered[np.flatnonzero(samples.in_lambda)] |= covered_lambda
    covered_measure = float(covered.sum()) * weight

    structure_checks: Dict[str, Dict[str, Any]] = {}
    structure_checks["partition"] = {
        "trivial_measure": trivial,
        "lambda_realm_measure": float(covered_lambda.sum()) * weight,
        "covered_fraction": covered_measure / map.measure,
        "passed": covered_measure >= (1.0 - SAMPLING_TOL) * map.measure,
    }
    structure_checks["critical_point"] = {
        "per_attractor": [a.contained_critical_points for a in infinite],
        "passed": all(a.contained_critical_points for a in infinite),
    }
    overlaps = _pairwise_overlaps(attractors)
    refined_once = False
    if any(o["cells"] > 2 * config.p_max for o in overlaps):
        logger.warning(f"{map.name}: support overlaps exceed {2 * config.p_max} cells; refining once")
        refined_once = True
        fine = grid.refine(2)
        supports = [
            GridSet.from_points(fine, a.cycle.points) if a.cycle is not None else
            GridSet.from_counts(fine, visit_counts(map, a.representatives, config.burn_in, config.budget, fine), config.visit_min)
            for a in attractors
        ]
        overlaps = [
            {"pair": o["pair"], "cells": int((supports[o["pair"][0]].mask & supports[o["pair"][1]].mask).sum())}
            for o in overlaps
        ]
    structure_checks["finite_intersections"] = {
        "overlaps": overlaps,
        "ceiling": 2 * config.p_max,
        "refined": refined_once,
        "passed": all(o["cells"] <= 2 * config.p_max for o in overlaps),
    }
    rl_vs_component = [
        {"component": k, "E": components[k].member_measure, "RL": attractors[idx].RL_measure}
        for k, idx in pairing.items()
    ]
    structure_checks["realms_match_components"] = {
        "per_component": rl_vs_component,
        "tolerance": SAMPLING_TOL * map.measure,
        "passed": all(abs(r["E"] - r["RL"]) <= SAMPLING_TOL * map.measure for r in rl_vs_component)
        and len(set(pairing.values())) == len(components),
    }

    checks: Dict[str, Dict[str, Any]] = {}
    in_lambda = _critical_points_in_lambda(map, context, config.budget)
    checks["attractor_count"] = {
        "infinite_attractors": len(infinite),
        "critical_points_in_lambda": in_lambda,
        "passed": len(infinite) <= len(in_lambda),
    }
    realm_sum = sum(a.realm_measure for a in attractors) + homterval
    checks["realm_balance"] = {
        "realm_sum": realm_sum,
        "unresolved": float(samples.unresolved.sum()) * weight,
        "passed": abs(realm_sum - map.measure) <= SAMPLING_TOL * map.measure,
    }
    envelope = 2 * len(map.critical_points)
    checks["component_envelope"] = {"components": len(components), "envelope": envelope, "passed": len(components) <= envelope}
    checks["critical_omega"] = critical_omega_check(
        map, min(config.n_samples, 1000), config.budget, grid_h=config.resolve_grid_h(map),
        context=context, lam=samples.lam, burn_in=config.burn_in, seed=config.seed,
    )
    # open question, reported without a verdict
    checks["extremum_diagnostic"] = extremum_diagnostic(
        map, min(config.n_samples, 200), config.budget, context=context, burn_in=config.burn_in, seed=config.seed,
    )
    parabolic = [a.cycle.to_dict() for a in finite if a.note == NON_MINIMAL]
    if parabolic:
        checks["parabolic_cycles"] = {"note": NON_MINIMAL, "cycles": parabolic}

    report = DecompositionReport(
        lambda_estimate=samples.lam,
        components=components,
        attractors=attractors,
        pairing=pairing,
        decomposition_checks=structure_checks,
        trivial_measure=trivial,
        cascade_depths={c: len(cascade) for c, cascade in context.cascades.items()},
        checks=checks,
    )
    if recurrence:
        report.recurrence = conservative_kernel(
            map,
            config.n_samples,
            config.budget,
            config.r_min,
            grid=config.recurrence_grid(map),
            context=context,
            attractor_support=report.attractor_support(),
            seed=config.seed,
        )
    return report


# Conservative kernel


def conservative_kernel(
    map: MapSpec,
    n_samples: Optional[int] = None,
    budget: Optional[int] = None,
    R_min: Optional[int] = None,
    grid_h: Optional[float] = None,
    *,
    grid: Optional[Grid] = None,
    context: Optional[OrbitContext] = None,
    attractor_support: Optional[GridSet] = None,
    seed: Optional[int] = None,
    tolerance: float = SAMPLING_TOL,
) -> RecurrenceReport:
    """Cells whose sampled points keep returning at least R_min times within budget."""
    n_samples = defaults.SAMPLES if n_samples is None else n_samples
    budget = defaults.BUDGET if budget is None else budget
    R_min = defaults.R_MIN if R_min is None else R_min
    if n_samples <= 0 or budget <= 0 or R_min <= 0:
        raise PreconditionError("n_samples, budget and R_min must be positive")
    if grid is None:
        grid = Grid.over(map.hull, grid_h) if grid_h else Grid.dyadic(map.hull, defaults.RECURRENCE_EXP)
    context = context or OrbitContext.build(map, max_iter=budget)
    rng = np.random.default_rng(defaults.SEED if seed is None else seed)

    cells = np.flatnonzero(GridSet.full(grid, map.domain).mask)
    per_cell = max(1, n_samples // max(cells.size, 1))
    offsets = (np.arange(per_cell)[None, :] + rng.random((cells.size, per_cell))) / per_cell
    ys = map.clamp((grid.origin + (cells[:, None] + offsets) * grid.h).ravel())
    targets = np.repeat(cells, per_cell)

    returns = np.zeros(ys.size, dtype=np.int64)
    first = np.full(ys.size, np.nan)
    fates, which = trivial_fates(map, ys, min(budget, _FATE_BUDGET), context)
    cycle_cells = [set(grid.cell_of(np.asarray(c.points)).tolist()) for c in context.limit_cycles]
    for k, owned in enumerate(cycle_cells):
        hit = (fates == 2) & (which == k) & np.isin(targets, list(owned))
        returns[hit] = R_min

    active = np.flatnonzero(fates == 0)
    values = ys[active]
    hull = map.hull
    for step in range(1, budget + 1):
        if active.size == 0:
            break
        values = np.clip(map.f(values), hull.lo, hull.hi)
        back = grid.cell_of(values) == targets[active]
        if back.any():
            idx = active[back]
            returns[idx] += 1
            fresh = np.isnan(first[idx])
            first[idx[fresh]] = step
        if step % 256 == 0:
            keep = returns[active] < R_min
            active, values = active[keep], values[keep]

    recurrent = returns >= R_min
    samples_per_cell = np.zeros(grid.n, dtype=np.int64)
    np.add.at(samples_per_cell, targets, 1)
    hits = np.zeros(grid.n, dtype=np.int64)
    np.add.at(hits, targets, recurrent.astype(np.int64))
    fractions = np.full(grid.n, np.nan)
    sampled = samples_per_cell > 0
    fractions[sampled] = hits[sampled] / samples_per_cell[sampled]
    first_sum = np.zeros(grid.n)
    first_cnt = np.zeros(grid.n)
    seen = ~np.isnan(first)
    np.add.at(first_sum, targets[seen], first[seen])
    np.add.at(first_cnt, targets[seen], 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_first = np.where(first_cnt > 0, first_sum / np.maximum(first_cnt, 1), np.nan)

    filled = np.nan_to_num(fractions, nan=0.0)
    kernel = GridSet(grid, sampled & (filled >= KERNEL_LEVEL))
    ambiguous = GridSet(grid, sampled & (filled >= DISSIPATIVE_LEVEL) & (filled < KERNEL_LEVEL))
    difference = None
    if attractor_support is not None:
        reference = attractor_support.regrid(grid)
        difference = kernel.symmetric_difference_measure(reference) / map.measure
    logger.info(
        f"{map.name}: kernel {kernel.count} cells ({kernel.measure:.4g}), {ambiguous.count} ambiguous"
    )
    return RecurrenceReport(kernel, ambiguous, fractions, samples_per_cell, mean_first, R_min, budget, difference, tolerance)


# Critical points and ω-limit sets


def _lambda_samples(
    map: MapSpec, n_samples: int, budget: int, context: OrbitContext, lam: Optional[GridSet], seed: int
) -> np.ndarray:
    xs = equidistributed(map, n_samples, np.random.default_rng(seed))
    if not context.has_trivial_dynamics:
        return xs
    fates, _ = trivial_fates(map, xs, min(budget, _FATE_BUDGET), context)
    keep = fates == 0
    if lam is not None:
        keep &= lam.mask[lam.grid.cell_of(xs)]
    return xs[keep]


def omega_distances(map: MapSpec, xs: np.ndarray, targets: Sequence[float], burn_in: int, steps: int) -> np.ndarray:
    """min_k |x_k - t| over steps after burn-in, for every sample and target."""
    values = advance(map, np.asarray(xs, dtype=float), burn_in)
    targets = np.asarray(targets, dtype=float)
    best = np.full((values.size, targets.size), np.inf)
    hull = map.hull
    for _ in range(steps):
        values = np.clip(map.f(values), hull.lo, hull.hi)
        np.minimum(best, np.abs(values[:, None] - targets[None, :]), out=best)
    return best


def _percentiles(values: np.ndarray) -> Dict[str, float]:
    return {
        "p50": float(np.percentile(values, 50)),
        "p90": float(np.percentile(values, 90)),
        "p99": float(np.percentile(values, 99)),
        "max": float(values.max()),
    }


def critical_omega_check(
    map: MapSpec,
    n_samples: int = 1000,
    budget: Optional[int] = None,
    *,
    grid_h: Optional[float] = None,
    context: Optional[OrbitContext] = None,
    lam: Optional[GridSet] = None,
    burn_in: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Distance from ω-limit sets of Λ-samples to the nearest critical point."""
    budget = defaults.BUDGET if budget is None else budget
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    grid_h = map.measure * 2.0**-defaults.GRID_EXP if grid_h is None else grid_h
    context = context or OrbitContext.build(map, max_iter=budget)
    xs = _lambda_samples(map, n_samples, budget, context, lam, defaults.SEED if seed is None else seed)
    threshold = 16 * grid_h
    if xs.size == 0:
        logger.warning(f"{map.name}: Λ estimate is empty; critical-point check is vacuous")
        return {"vacuous": True, "samples": 0, "threshold": threshold, "passed": True}
    critical = [c.location for c in map.critical_points]
    distances = omega_distances(map, xs, critical, burn_in, budget).min(axis=1)
    table = _percentiles(distances)
    return {
        "vacuous": False,
        "samples": int(xs.size),
        "threshold": threshold,
        "distances": table,
        "passed": table["p99"] <= threshold,
    }


def extremum_diagnostic(
    map: MapSpec,
    n_samples: int = 200,
    budget: Optional[int] = None,
    *,
    context: Optional[OrbitContext] = None,
    burn_in: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Distance from ω-limit sets to the nearest extremum vs. the nearest critical point."""
    budget = defaults.BUDGET if budget is None else budget
    burn_in = defaults.BURN_IN if burn_in is None else burn_in
    context = context or OrbitContext.build(map, max_iter=budget)
    xs = _lambda_samples(map, n_samples, budget, context, None, defaults.SEED if seed is None else seed)
    critical = [c.location for c in map.critical_points]
    if xs.size == 0 or not critical:
        return {"samples": 0}
    extremum_mask = np.array([c.is_extremum for c in map.critical_points])
    distances = omega_distances(map, xs, critical, burn_in, budget)
    out: Dict[str, Any] = {"samples": int(xs.size), "to_critical": _percentiles(distances.min(axis=1))}
    if extremum_mask.any():
        out["to_extremum"] = _percentiles(distances[:, extremum_mask].min(axis=1))
    return out



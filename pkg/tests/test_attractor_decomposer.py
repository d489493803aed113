import numpy as np
import pytest

from dynlab.attractor_decomposer import (
    A1,
    A2,
    AttractorEstimate,
    attractor_from_cycle,
    classify_attractor,
    cluster_signatures,
    consensus,
    conservative_kernel,
    critical_omega_check,
    decompose,
    entropy_heuristic,
    equidistributed,
    extremum_diagnostic,
    sample_realms,
    visit_matrix,
)
from dynlab.errors import PreconditionError
from dynlab.gridset import Grid, GridSet
from dynlab.map_model import Interval
from dynlab.orbit_engine import LIMIT_CYCLE


def _block_rows(count, lo, hi, width=32):
    rows = np.zeros((count, width), dtype=bool)
    rows[:, lo:hi] = True
    return rows


class TestSampling:
    """Tests for the sampling primitives."""

    def test_equidistributed_is_stratified(self, ulam):
        n = 100
        xs = equidistributed(ulam, n, np.random.default_rng(0))
        k = np.arange(n)
        assert np.all((xs >= k / n) & (xs <= (k + 1) / n))

    def test_visit_matrix_marks_cycle_cells(self, two_cycle_map):
        grid = Grid.dyadic(Interval(0.0, 1.0), 6)
        rows = visit_matrix(two_cycle_map, np.array([0.3, 0.6]), 2_000, 50, grid)
        assert rows.shape == (2, 64)
        for row in rows:
            assert np.flatnonzero(row).tolist() == [32, 51]

    def test_consensus(self):
        grid = Grid.dyadic(Interval(0.0, 1.0), 2)
        rows = np.array([[1, 1, 0, 0], [1, 0, 0, 0], [0, 1, 1, 0]], dtype=bool)
        assert consensus(grid, rows).mask.tolist() == [True, True, False, False]


class TestClustering:
    """Tests for single-linkage clustering of signatures."""

    def test_two_blocks_largest_first(self):
        rows = np.vstack([_block_rows(3, 20, 30), _block_rows(6, 0, 10)])
        labels = cluster_signatures(rows)
        assert labels.tolist() == [1, 1, 1, 0, 0, 0, 0, 0, 0]

    def test_rows_outside_the_linkage_join_nearest(self):
        rows = np.vstack([_block_rows(3, 20, 30), _block_rows(6, 0, 10)])
        labels = cluster_signatures(rows, max_linkage=2)
        assert labels.tolist() == [1, 1, 1, 0, 0, 0, 0, 0, 0]

    def test_unlinked_rows_form_new_clusters(self):
        rows = np.vstack([_block_rows(1, 0, 10), _block_rows(4, 20, 30), _block_rows(1, 0, 10)])
        labels = cluster_signatures(rows, max_linkage=2)
        assert labels.tolist() == [1, 0, 0, 0, 0, 1]

    def test_empty(self):
        assert cluster_signatures(np.zeros((0, 8), dtype=bool)).size == 0


class TestRealms:
    """Tests for sampled realms of attraction."""

    def test_two_cycle_attracts_everything(self, two_cycle_map, two_cycle_context):
        realms = sample_realms(
            two_cycle_map, 200, 20_000, 2.0**-8, context=two_cycle_context, burn_in=1_000, seed=3
        )
        assert realms[0].tag == LIMIT_CYCLE
        assert realms[0].measure == pytest.approx(1.0, abs=0.01)
        assert realms[0].witness.period == 2


class TestAttractors:
    """Tests for attractor construction and classification."""

    def test_cycle_attractor(self, two_cycle_map, two_cycle_context):
        grid = Grid.dyadic(two_cycle_map.hull, 8)
        A = attractor_from_cycle(two_cycle_map, two_cycle_context.limit_cycles[0], grid)
        assert A.klass == A1
        assert A.period == 2
        assert A.support.count == 2
        assert A.note is None
        assert not A.is_infinite
        assert classify_attractor(two_cycle_map, A).klass == A1

    def test_entropy_of_a_cycle_is_zero(self, two_cycle_map, two_cycle_context):
        grid = Grid.dyadic(two_cycle_map.hull, 8)
        A = attractor_from_cycle(two_cycle_map, two_cycle_context.limit_cycles[0], grid)
        result = entropy_heuristic(two_cycle_map, A, length=1 << 12, burn_in=100)
        assert result["consistent_with_zero_entropy"]

    def test_entropy_of_the_full_map(self, ulam):
        grid = Grid.dyadic(ulam.hull, 8)
        A = AttractorEstimate(support=GridSet.full(grid), klass=A2, representatives=(0.3,))
        result = entropy_heuristic(ulam, A, burn_in=100)
        assert result["exponent"] > 0.5
        assert not result["consistent_with_zero_entropy"]


class TestDecomposition:
    """Tests for the full attractor decomposition."""

    def test_two_cycle(self, two_cycle_map, two_cycle_context, desk_config):
        report = decompose(two_cycle_map, desk_config, context=two_cycle_context, recurrence=False)
        assert report.components == []
        assert [a.klass for a in report.attractors] == [A1]
        assert report.attractors[0].period == 2
        assert report.attractors[0].realm_measure == pytest.approx(1.0, abs=0.01)
        assert report.passed
        assert report.checks["attractor_count"]["passed"]
        assert report.checks["critical_omega"]["vacuous"]
        assert report.checks["extremum_diagnostic"] == {"samples": 0}
        assert report.recurrence is None

    def test_full_map_has_one_interval_attractor(self, ulam, ulam_context, desk_config):
        report = decompose(ulam, desk_config, context=ulam_context, recurrence=False)
        assert len(report.components) == 1
        assert [a.klass for a in report.attractors] == [A2]
        assert report.pairing == {0: 0}
        assert report.trivial_measure == 0.0
        assert report.checks["component_envelope"]["passed"]

    def test_report_is_serialisable(self, two_cycle_map, two_cycle_context, desk_config):
        report = decompose(two_cycle_map, desk_config, context=two_cycle_context, recurrence=False)
        data = report.to_dict()
        assert data["attractors"][0]["klass"] == A1
        assert data["recurrence"] is None


class TestConservativeKernel:
    """Tests for the recurrence-based kernel estimate."""

    def test_kernel_of_the_two_cycle(self, two_cycle_map, two_cycle_context):
        grid = Grid.dyadic(two_cycle_map.hull, 6)
        cycle = two_cycle_context.limit_cycles[0]
        report = conservative_kernel(
            two_cycle_map,
            640,
            2_000,
            20,
            grid=grid,
            context=two_cycle_context,
            attractor_support=GridSet.from_points(grid, cycle.points),
            seed=1,
        )
        assert np.flatnonzero(report.kernel_estimate.mask).tolist() == [32, 51]
        assert report.attractor_difference == 0.0
        assert report.kernel_matches_attractors
        header, rows = report.csv_rows()
        assert header[0] == "cell"
        assert len(rows) == 64

    def test_rejects_empty_budgets(self, two_cycle_map):
        with pytest.raises(PreconditionError):
            conservative_kernel(two_cycle_map, 0, 100, 20)


class TestCriticalOmega:
    """Tests for the distance from ω-limit sets to critical points."""

    def test_vacuous_without_lambda(self, two_cycle_map, two_cycle_context):
        result = critical_omega_check(two_cycle_map, 100, 2_000, context=two_cycle_context, burn_in=100)
        assert result["vacuous"]
        assert result["passed"]

    def test_extremum_diagnostic_on_the_full_map(self, ulam, ulam_context):
        result = extremum_diagnostic(ulam, 20, 2_000, context=ulam_context, burn_in=100)
        assert result["samples"] == 20
        # the only critical point is the extremum
        assert result["to_extremum"] == result["to_critical"]

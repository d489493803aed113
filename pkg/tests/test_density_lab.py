import math

import numpy as np
import pytest

from dynlab.density_lab import (
    BrokenLine,
    D_broken_line_verdicts,
    Dens,
    dens,
    distortion,
    generate_three_interval_instances,
    generate_two_interval_instances,
    invariant_hull,
    is_D_broken_line,
    log_abs_derivative,
    longest_omission,
    make_proper,
    one_sided_density_probe,
    symmetric_density_probe,
    symmetrize,
    three_interval_probe,
    two_interval_probe,
    two_sided_density_probe,
)
from dynlab.errors import PreconditionError
from dynlab.families import cube
from dynlab.gridset import Grid, GridSet
from dynlab.map_model import Interval


@pytest.fixture
def unit_grid():
    return Grid.dyadic(Interval(0.0, 1.0), 10)


@pytest.fixture
def left_half(unit_grid):
    return GridSet.from_intervals(unit_grid, [Interval(0.0, 0.5)])


class TestDensities:
    """Tests for dens and one-sided Dens."""

    def test_dens(self, left_half):
        assert dens(left_half, Interval(0.25, 0.75)) == pytest.approx(0.5)
        assert dens(left_half, Interval(0.1, 0.2)) == pytest.approx(1.0)

    def test_degenerate_interval(self, left_half):
        with pytest.raises(PreconditionError):
            dens(left_half, Interval(0.3, 0.3))

    def test_one_sided(self, left_half):
        assert Dens(left_half, 0.0, Interval(0.0, 1.0)) == pytest.approx(1.0)
        assert Dens(left_half, 1.0, Interval(0.0, 1.0)) == pytest.approx(0.5)

    def test_one_sided_needs_an_endpoint(self, left_half):
        with pytest.raises(PreconditionError):
            Dens(left_half, 0.5, Interval(0.0, 1.0))


class TestInvariantHull:
    """Tests for the cell-wise invariant closure."""

    def test_zero_steps(self, ulam):
        seed = GridSet.from_points(Grid.dyadic(Interval(0.0, 1.0), 6), [0.5])
        assert invariant_hull(ulam, seed, 0) == seed

    def test_full_map_fills_the_domain(self, ulam):
        seed = GridSet.from_points(Grid.dyadic(Interval(0.0, 1.0), 6), [0.5])
        hull = invariant_hull(ulam, seed, 64)
        assert hull.measure == pytest.approx(1.0)


class TestBrokenLines:
    """Tests for broken lines and the density property."""

    def test_make_proper_drops_backtracking(self):
        line = make_proper(BrokenLine((0.0, 0.4, 0.4, 0.8)))
        assert line.points == (0.0, 0.8)
        assert line.is_proper()

    def test_nested_links(self):
        assert BrokenLine((0.0, 0.1, -0.2, 0.5)).is_proper()
        assert not BrokenLine((0.0, 0.4, 0.8)).is_proper()

    def test_empty_line(self):
        with pytest.raises(ValueError):
            BrokenLine(())

    def test_density_property(self, left_half):
        assert is_D_broken_line(BrokenLine((0.25, 0.5, 0.0, 1.0)), left_half, 0.01)
        verdicts = D_broken_line_verdicts(BrokenLine((0.5, 1.0)), left_half, 0.01)
        assert verdicts == {"first_link_exempt": True, "all_links": False}


class TestDistortion:
    """Tests for distortion of monotone iterates."""

    def test_single_step(self, ulam):
        assert distortion(ulam, Interval(0.1, 0.2), 1) == pytest.approx(4.0 / 3.0, rel=1e-9)

    def test_identity(self, ulam):
        assert distortion(ulam, Interval(0.4, 0.6), 0) == 1.0

    def test_turning_point(self, ulam):
        with pytest.raises(PreconditionError):
            distortion(ulam, Interval(0.4, 0.6), 1)

    def test_log_derivative(self, ulam):
        value = log_abs_derivative(ulam, np.array([0.1]), 2)[0]
        assert value == pytest.approx(math.log(3.2) + math.log(1.12))


class TestDistortionProbes:
    """Tests for the generated distortion instances and probes."""

    def test_three_interval_instances(self, ulam):
        instances = generate_three_interval_instances(ulam, 3, np.random.default_rng(2))
        assert len(instances) == 3
        for inst in instances:
            assert inst.J.lo < inst.I.lo < inst.I.hi < inst.J.hi
        report = three_interval_probe(ulam, instances, delta=0.5, sets=8, seed=4)
        assert report.samples == 3
        assert report.sigma_hat > 0
        values = [report.q_hat[eps] for eps in sorted(report.q_hat)]
        assert values == sorted(values)

    def test_two_interval_instances(self, ulam):
        instances = generate_two_interval_instances(ulam, 3, np.random.default_rng(2))
        assert len(instances) == 3
        for inst in instances:
            assert inst.J.contains_interval(inst.L) and inst.J.contains_interval(inst.R)
            assert inst.a in (inst.L.lo, inst.L.hi)
        report = two_interval_probe(ulam, instances, sets=8, seed=4)
        assert all(0.0 <= v <= 1.0 for v in report.alpha_hat.values())

    def test_probes_need_instances(self, ulam):
        with pytest.raises(PreconditionError):
            three_interval_probe(ulam, [], delta=0.5)
        with pytest.raises(PreconditionError):
            two_interval_probe(ulam, [])


class TestDensityProbes:
    """Tests for the density probes near orbits and extrema."""

    def test_longest_omission(self):
        points = np.array([0.5, 0.1, 0.2, 0.5, 0.9])
        assert longest_omission(points, Interval(0.4, 0.6)) == 2

    def test_two_sided_probe(self, ulam, ulam_context, unit_grid):
        X = GridSet.full(unit_grid)
        report = two_sided_density_probe(
            ulam, X, 0.3, Interval(0.3, 0.31), 0.01, budget=20_000, context=ulam_context
        )
        assert report["conclusion_met"]
        assert report["hypothesis_met"]
        assert report["gamma"] > 0.01

    def test_two_sided_density_needs_short_interval(self, ulam, ulam_context, unit_grid):
        with pytest.raises(PreconditionError, match="expansion constant"):
            two_sided_density_probe(
                ulam,
                GridSet.full(unit_grid),
                0.3,
                Interval(0.3, 0.31),
                0.01,
                budget=20_000,
                context=ulam_context,
                gamma=0.005,
            )

    def test_two_sided_probe_rejects_limit_cycles(self, two_cycle_map, two_cycle_context, unit_grid):
        X = GridSet.full(unit_grid)
        with pytest.raises(PreconditionError):
            two_sided_density_probe(
                two_cycle_map, X, 0.3, Interval(0.3, 0.31), 0.01, budget=20_000, context=two_cycle_context
            )

    def test_two_sided_probe_needs_density_point(self, ulam, ulam_context, unit_grid):
        with pytest.raises(PreconditionError):
            two_sided_density_probe(
                ulam, GridSet.empty(unit_grid), 0.3, Interval(0.3, 0.31), 0.01, budget=20_000, context=ulam_context
            )

    def test_one_sided_probe(self, ulam, ulam_context, left_half):
        report = one_sided_density_probe(
            ulam, left_half, 0.5, [0.1, 0.01], context=ulam_context, x=0.3, budget=20_000
        )
        assert [row["value"] for row in report["table"]] == [pytest.approx(1.0), pytest.approx(1.0)]
        assert report["trend_ok"]

    def test_one_sided_density_needs_a_point_of_omega(self, two_cycle_map, two_cycle_context, unit_grid):
        # ω(0.3) is the attracting 2-cycle near 0.513 and 0.799
        with pytest.raises(PreconditionError, match="ω-limit"):
            one_sided_density_probe(
                two_cycle_map,
                GridSet.full(unit_grid),
                0.2,
                [0.1],
                context=two_cycle_context,
                x=0.3,
                budget=20_000,
            )

    def test_one_sided_density_rejects_deep_cascades(self, feigenbaum_map, feigenbaum_context, unit_grid):
        with pytest.raises(PreconditionError, match="infinitely renormalizable"):
            one_sided_density_probe(
                feigenbaum_map, GridSet.full(unit_grid), 0.5, [0.1], context=feigenbaum_context, x=0.3
            )

    def test_two_sided_density_rejects_deep_cascades(self, feigenbaum_map, feigenbaum_context, unit_grid):
        with pytest.raises(PreconditionError, match="infinitely renormalizable"):
            two_sided_density_probe(
                feigenbaum_map,
                GridSet.full(unit_grid),
                0.3,
                Interval(0.3, 0.31),
                0.01,
                context=feigenbaum_context,
            )

    def test_symmetrize(self, ulam, unit_grid):
        X = GridSet.from_intervals(unit_grid, [Interval(0.0, 0.25)])
        sym, mirror = symmetrize(ulam, X, 0.5)
        assert sym.measure == pytest.approx(0.5)
        assert mirror(np.array([0.2]))[0] == pytest.approx(0.8)

    def test_symmetric_probe_on_full_set(self, ulam, unit_grid):
        report = symmetric_density_probe(ulam, GridSet.full(unit_grid), 0.5, rng=np.random.default_rng(1))
        assert all(row["min_density"] == pytest.approx(1.0) for row in report["table"])
        assert report["asymmetry"] == 0.0

    def test_symmetric_probe_needs_extremum(self):
        f = cube()
        X = GridSet.full(Grid.dyadic(f.hull, 8))
        with pytest.raises(PreconditionError):
            symmetric_density_probe(f, X, 0.0)

import numpy as np
import pytest

from dynlab.branches import (
    image,
    is_monotone,
    iterate_array,
    iterate_image,
    iterate_point,
    laps,
    monotone_extent,
    solve_on_branch,
)
from dynlab.errors import BudgetExhaustedError
from dynlab.families import cube, cubic_bimodal, logistic
from dynlab.map_model import Interval


class TestImages:
    """Tests for exact interval images."""

    def test_image_over_extremum_uses_critical_value(self):
        f = logistic(3.6)
        img = image(f, Interval(0.4, 0.7))
        assert img.hi == pytest.approx(0.9)
        assert img.lo == pytest.approx(3.6 * 0.7 * 0.3)

    def test_image_on_monotone_piece(self):
        img = image(logistic(4.0), Interval(0.1, 0.2))
        assert (img.lo, img.hi) == (pytest.approx(0.36), pytest.approx(0.64))

    def test_iterate_image_contains_sampled_orbits(self):
        f = logistic(3.9)
        J = Interval(0.3, 0.31)
        images = iterate_image(f, J, 6)
        xs = np.linspace(J.lo, J.hi, 101)
        for k, img in enumerate(images):
            values = iterate_array(f, xs, k)
            assert values.min() >= img.lo - 1e-12
            assert values.max() <= img.hi + 1e-12

    def test_iterate_point_matches_array(self):
        f = logistic(3.7)
        assert iterate_point(f, 0.2, 5) == pytest.approx(float(iterate_array(f, np.array([0.2]), 5)[0]))


class TestMonotonicity:
    """Tests for monotone branches of iterates."""

    def test_interval_through_extremum_is_not_monotone(self):
        assert not is_monotone(logistic(4.0), Interval(0.4, 0.6), 1)

    def test_inflection_does_not_break_monotonicity(self):
        assert is_monotone(cube(), Interval(-0.5, 0.5), 3)

    def test_monotone_extent_stops_at_turning_preimage(self):
        f = logistic(4.0)
        # f^2 turns where f(t) = 1/2, i.e. t = (1 - sqrt(1/2)) / 2
        t = monotone_extent(f, 0.05, 1, 2, 0.45)
        assert t == pytest.approx((1 - np.sqrt(0.5)) / 2, abs=1e-9)

    def test_monotone_extent_full_limit(self):
        assert monotone_extent(logistic(4.0), 0.1, 1, 1, 0.4) == 0.4


class TestSolveOnBranch:
    """Tests for preimages on monotone laps."""

    def test_solves_preimage(self):
        f = logistic(4.0)
        t = solve_on_branch(f, Interval(0.0, 0.5), 1, 0.75)
        assert t == pytest.approx(0.25)

    def test_unattained_value(self):
        assert solve_on_branch(logistic(3.0), Interval(0.0, 0.5), 1, 0.9) is None


class TestLaps:
    """Tests for the lap decomposition."""

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_full_logistic_has_two_to_the_n_laps(self, n):
        assert len(laps(logistic(4.0), n)) == 2**n

    def test_laps_tile_the_domain(self):
        pieces = laps(logistic(3.8), 3)
        assert pieces[0].lo == 0.0 and pieces[-1].hi == 1.0
        for left, right in zip(pieces[:-1], pieces[1:]):
            assert left.hi == pytest.approx(right.lo)

    def test_each_lap_is_monotone(self):
        f = cubic_bimodal(3.0)
        for lap in laps(f, 2):
            inner = Interval(lap.lo + 1e-9, lap.hi - 1e-9)
            assert is_monotone(f, inner, 2, tol=1e-9)

    def test_inflections_split_on_request(self):
        assert len(laps(cube(), 1)) == 1
        assert len(laps(cube(), 1, split_at_inflections=True)) == 2

    def test_zero_iterates(self):
        assert laps(logistic(4.0), 0) == [Interval(0.0, 1.0)]

    def test_lap_cap_raises_instead_of_truncating(self):
        with pytest.raises(BudgetExhaustedError) as exc:
            laps(logistic(4.0), 5, max_laps=8)
        assert exc.value.evidence["resolved"] == 4
        assert exc.value.evidence["laps"] == 16

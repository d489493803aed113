import logging
import math

import numpy as np
import pytest

from dynlab import orbit_engine
from dynlab.errors import DomainError, PreconditionError
from dynlab.families import cube, logistic
from dynlab.gridset import Grid
from dynlab.map_model import Interval
from dynlab.orbit_engine import (
    ATTRACTING,
    FEIGENBAUM,
    LIMIT_CYCLE,
    REPELLING,
    STOP_PERIOD_CAP,
    STOP_RESOLUTION,
    IntervalCycle,
    OrbitContext,
    PeriodicIntervalCycle,
    RenormalizationCascade,
    check_covering,
    classify_orbit,
    detect_cycle,
    detect_homtervals,
    doubling_thresholds,
    feigenbaum_parameter,
    find_limit_cycles,
    itinerary,
    iterate,
    lambda_set,
    min_image_length,
    omega_limit,
    renormalization_cascade,
    sensitivity_estimate,
    superstable_sequence,
    trivial_fates,
    word_complexity,
)


class TestIterate:
    """Tests for plain orbit iteration."""

    def test_orbit_points(self, ulam):
        orbit = iterate(ulam, 0.25, 3)
        assert orbit.n == 3
        assert list(orbit.points) == pytest.approx([0.25, 0.75, 0.75, 0.75])

    def test_zero_steps(self, ulam):
        assert list(iterate(ulam, 0.3, 0).points) == [0.3]

    def test_negative_steps(self, ulam):
        with pytest.raises(PreconditionError):
            iterate(ulam, 0.3, -1)

    def test_start_outside_domain(self, ulam):
        with pytest.raises(DomainError):
            iterate(ulam, -0.1, 5)


class TestDetectCycle:
    """Tests for limit-cycle detection and polishing."""

    def test_period_two_cycle(self, two_cycle_map):
        cycle = detect_cycle(two_cycle_map, 0.3, max_iter=20_000, p_max=64)
        assert cycle is not None
        assert cycle.period == 2
        # closed form (a + 1 ± sqrt((a + 1)(a - 3))) / 2a
        root = math.sqrt(4.2 * 0.2)
        assert cycle.points == pytest.approx(((4.2 - root) / 6.4, (4.2 + root) / 6.4), abs=1e-9)
        assert cycle.multiplier == pytest.approx(0.16, abs=1e-8)
        assert cycle.stability == ATTRACTING

    def test_superattracting_fixed_point(self):
        cycle = detect_cycle(logistic(2.0), 0.3, max_iter=20_000, p_max=8)
        assert cycle.period == 1
        assert cycle.points[0] == pytest.approx(0.5, abs=1e-10)
        assert cycle.multiplier == pytest.approx(0.0, abs=1e-9)

    def test_chaotic_orbit_has_no_cycle(self, ulam):
        assert detect_cycle(ulam, 0.3, max_iter=5_000, p_max=64) is None

    def test_repelling_fixed_point_is_not_a_limit_cycle(self, ulam):
        cycle = detect_cycle(ulam, 0.0, max_iter=5_000, p_max=8)
        assert cycle.stability == REPELLING
        assert not cycle.is_limit_cycle

    def test_find_limit_cycles(self, two_cycle_map, ulam):
        cycles = find_limit_cycles(two_cycle_map, p_max=64, max_iter=20_000)
        assert [c.period for c in cycles] == [2]
        assert find_limit_cycles(ulam, p_max=64, max_iter=20_000) == []


class TestOmegaLimit:
    """Tests for the grid approximation of omega-limit sets."""

    def test_cycle_occupies_two_cells(self, two_cycle_map):
        grid = Grid.dyadic(Interval(0.0, 1.0), 10)
        omega = omega_limit(two_cycle_map, 0.3, burn_in=2_000, n_collect=1_000, grid=grid)
        assert omega.count == 2
        assert omega.contains_point(0.5130445)


class TestPeriodicIntervals:
    """Tests for restrictive intervals and homtervals."""

    def test_first_restrictive_interval(self, two_cycle_map):
        cascade = renormalization_cascade(two_cycle_map, 0.5, p_max=64)
        assert len(cascade) >= 1
        first = cascade[0]
        assert first.period == 2
        # bounded by the fixed point 1 - 1/a and its mirror image
        assert first.interval.lo == pytest.approx(0.3125, abs=1e-9)
        assert first.interval.hi == pytest.approx(0.6875, abs=1e-9)

    def test_full_map_is_not_renormalizable(self, ulam):
        assert len(renormalization_cascade(ulam, 0.5, p_max=64)) == 0

    def test_inflection_has_no_cascade(self):
        with pytest.raises(PreconditionError):
            renormalization_cascade(cube(), 0.0)

    def test_cascade_depth_flag(self):
        shallow = RenormalizationCascade(0.5, (), reached_limit=True, p_max=4)
        assert not shallow.is_infinite(5)

    def test_doubling_chain_counts_without_the_cap(self):
        unit = Interval(0.4, 0.6)
        doubling = tuple(PeriodicIntervalCycle(unit, 2**k) for k in range(1, 7))
        cascade = RenormalizationCascade(0.5, doubling, reached_limit=False, p_max=4096, stop_reason=STOP_RESOLUTION)
        assert cascade.still_doubling
        assert cascade.is_infinite(5)
        tripled = tuple(PeriodicIntervalCycle(unit, 3**k) for k in range(1, 7))
        assert not RenormalizationCascade(0.5, tripled, p_max=4096).is_infinite(5)

    @pytest.mark.timeout(600)
    def test_feigenbaum_cascade(self, feigenbaum_map):
        cascade = renormalization_cascade(feigenbaum_map, 0.5, p_max=4096)
        assert len(cascade) >= 7
        assert cascade.periods[:7] == [2, 4, 8, 16, 32, 64, 128]
        assert cascade.stop_reason in (STOP_RESOLUTION, STOP_PERIOD_CAP)
        assert cascade.is_infinite(5)

    def test_two_cycle_cascade_is_finite(self, two_cycle_map):
        cascade = renormalization_cascade(two_cycle_map, 0.5, p_max=64)
        assert not cascade.is_infinite(5)

    def test_homtervals_of_the_cube(self):
        found = detect_homtervals(cube(), p_max=2)
        assert {(h.interval.lo, h.interval.hi) for h in found} == {(-1.0, 0.0), (0.0, 1.0)}
        assert all(h.is_homterval and h.period == 1 for h in found)

    def test_homterval_scan_stops_at_the_lap_cap(self, ulam, caplog):
        # f^p has 2^p laps, so the cap of 8 is hit at p = 4
        with caplog.at_level(logging.WARNING, logger="dynlab.orbit_engine"):
            assert detect_homtervals(ulam, p_max=6, max_laps=8) == []
        assert "stops before period 4" in caplog.text

    def test_min_image_length(self, ulam):
        assert min_image_length(ulam, Interval(0.1, 0.2), 1) == pytest.approx(0.28)
        with pytest.raises(PreconditionError):
            min_image_length(ulam, Interval(0.1, 0.2), 0)


class TestClassification:
    """Tests for orbit fates."""

    def test_limit_cycle_fate(self, two_cycle_map, two_cycle_context):
        fate = classify_orbit(two_cycle_map, 0.3, 20_000, context=two_cycle_context)
        assert fate.tag == LIMIT_CYCLE
        assert fate.detail["period"] == 2

    @pytest.mark.timeout(600)
    def test_feigenbaum_fate_at_default_period_cap(self, feigenbaum_map):
        # the cascade search runs out of resolution long before p = 4096
        context = OrbitContext.build(feigenbaum_map, p_max=4096, max_iter=20_000)
        for x in (0.123, 0.377, 0.71):
            fate = classify_orbit(feigenbaum_map, x, context=context)
            assert fate.tag == FEIGENBAUM
            assert fate.detail["cascade_depth"] >= 5

    def test_feigenbaum_fate_at_period_cap(self, feigenbaum_map, feigenbaum_context):
        fate = classify_orbit(feigenbaum_map, 0.123, context=feigenbaum_context)
        assert fate.tag == FEIGENBAUM

    def test_trivial_fates_vectorised(self, two_cycle_map, two_cycle_context):
        xs = np.linspace(0.05, 0.95, 50)
        fates, which = trivial_fates(two_cycle_map, xs, 5_000, two_cycle_context)
        assert np.all(fates == 2)
        assert np.all(which == 0)

    def test_no_trivial_dynamics(self, ulam, ulam_context):
        assert not ulam_context.has_trivial_dynamics
        fates, _ = trivial_fates(ulam, np.array([0.1, 0.2]), 100, ulam_context)
        assert np.all(fates == 0)

    def test_lambda_set(self, two_cycle_map, two_cycle_context, ulam, ulam_context):
        grid = Grid.dyadic(Interval(0.0, 1.0), 6)
        small = lambda_set(two_cycle_map, samples=4, budget=5_000, context=two_cycle_context, grid=grid)
        assert small.measure < 0.05
        full = lambda_set(ulam, samples=4, budget=5_000, context=ulam_context, grid=grid)
        assert full.measure == pytest.approx(1.0)

    def test_lambda_set_ignores_thread_count(self, two_cycle_map, two_cycle_context, monkeypatch):
        seen = {}
        real = orbit_engine.trivial_fates

        def recording(map, xs, budget, context, **kwargs):
            seen.setdefault(current, []).append(np.array(xs, dtype=float))
            return real(map, xs, budget, context, **kwargs)

        monkeypatch.setattr(orbit_engine, "trivial_fates", recording)
        grid = Grid.dyadic(Interval(0.0, 1.0), 6)
        masks = {}
        for current in (1, 3):
            masks[current] = lambda_set(
                two_cycle_map, samples=4, budget=5_000, context=two_cycle_context, seed=7, threads=current, grid=grid
            )
        points = {n: np.sort(np.concatenate(parts)) for n, parts in seen.items()}
        np.testing.assert_array_equal(points[1], points[3])
        assert masks[1] == masks[3]


class TestCoveringAndSensitivity:
    """Tests for the basic-set witnesses."""

    def test_full_map_covers(self, ulam):
        cycle = IntervalCycle(1, (Interval(0.0, 1.0),))
        report = check_covering(ulam, cycle, n_pairs=5, rng=np.random.default_rng(3))
        assert report.passed
        assert len(report.pairs) == 5

    def test_sensitivity(self, ulam):
        cycle = IntervalCycle(1, (Interval(0.0, 1.0),))
        estimate = sensitivity_estimate(ulam, cycle, samples=4, rng=np.random.default_rng(3))
        assert estimate.gamma > 0
        assert all(n is not None for n in estimate.N_of_tau.values())


class TestParameterSpace:
    """Tests for superstable parameters and period-doubling thresholds."""

    def test_superstable_sequence(self):
        s = superstable_sequence("logistic", levels=3)
        assert s[0] == pytest.approx(2.0, abs=1e-12)
        assert s[1] == pytest.approx(1.0 + math.sqrt(5.0), abs=1e-10)
        assert s[2] == pytest.approx(3.4985616993, abs=1e-8)

    def test_doubling_thresholds(self):
        thresholds = doubling_thresholds("logistic", levels=4)
        assert thresholds == pytest.approx([3.0, 3.449490, 3.544090, 3.564407], abs=1e-5)

    def test_accumulation_point(self):
        assert feigenbaum_parameter("logistic", levels=8) == pytest.approx(3.5699456, abs=1e-5)


class TestSymbolicDynamics:
    """Tests for itineraries and word counts."""

    def test_itinerary(self, ulam):
        assert list(itinerary(ulam, 0.25, 3)) == [0, 1, 1]

    def test_word_complexity(self):
        assert word_complexity(np.array([0, 1, 0, 1, 1]), [1, 2]) == {1: 2, 2: 3}

    def test_word_overflow(self):
        with pytest.raises(PreconditionError):
            word_complexity(np.array([0, 1]), [70])

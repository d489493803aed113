import json

import numpy as np
import pytest

from dynlab.errors import DomainError, MapFileError, PreconditionError
from dynlab.families import cube, cubic_bimodal, logistic, make_map, piecewise, sine
from dynlab.map_model import (
    EXTREMUM,
    CriticalPoint,
    Interval,
    calibrate_constants,
    critical_values,
    derivative,
    evaluate,
    involution,
    load_map,
    map_from_dict,
    map_to_dict,
    mirror_point,
    validate,
)


class TestInterval:
    """Tests for the closed interval type."""

    def test_rejects_reversed_endpoints(self):
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)

    def test_span_orders_points(self):
        assert Interval.span(0.7, 0.2) == Interval(0.2, 0.7)

    def test_containment_and_overlap(self):
        outer = Interval(0.0, 1.0)
        inner = Interval(0.25, 0.5)
        assert outer.contains_interval(inner)
        assert not inner.contains_interval(outer)
        assert outer.interior_contains(0.5)
        assert not outer.interior_contains(1.0)
        assert inner.interior_overlap(Interval(0.4, 2.0)) == pytest.approx(0.1)
        assert Interval(0.0, 0.1).interior_overlap(Interval(0.2, 0.3)) == 0.0

    def test_clip_disjoint_raises(self):
        with pytest.raises(ValueError):
            Interval(0.0, 0.1).clip(Interval(0.2, 0.3))


class TestEvaluate:
    """Tests for point evaluation with domain checks."""

    def test_logistic_value(self):
        assert evaluate(logistic(4.0), 0.25) == pytest.approx(0.75)

    def test_outside_domain_raises(self):
        with pytest.raises(DomainError):
            evaluate(logistic(4.0), 1.5)

    def test_derivative_is_zero_at_critical_point(self):
        assert derivative(logistic(3.7), 0.5) == 0.0
        assert derivative(logistic(4.0), 0.0) == pytest.approx(4.0)


class TestInvolution:
    """Tests for the local involution at an extremum."""

    def test_symmetric_family_reflects(self):
        f = logistic(4.0)
        c = f.critical_points[0]
        y = involution(f, c, 0.45)
        assert y == pytest.approx(0.55)
        assert evaluate(f, y) == pytest.approx(evaluate(f, 0.45))

    def test_involution_is_an_involution(self):
        f = sine(0.9)
        c = f.critical_points[0]
        x = 0.5 - 0.5 * f.eta
        assert involution(f, c, involution(f, c, x)) == pytest.approx(x, abs=1e-12)

    def test_outside_eta_raises(self):
        f = logistic(4.0)
        with pytest.raises(PreconditionError):
            involution(f, f.critical_points[0], 0.5 + 2 * f.eta)

    def test_inflection_has_no_involution(self):
        f = cube()
        with pytest.raises(PreconditionError):
            involution(f, f.critical_points[0], 0.01)

    def test_mirror_on_asymmetric_map(self):
        f = cubic_bimodal(3.0)
        c = f.critical_points[1]
        x = c.location - 0.05
        y = mirror_point(f, c, x)
        assert y is not None and y > c.location
        assert float(f.f(y)) == pytest.approx(float(f.f(x)), abs=1e-12)


class TestValidate:
    """Tests for the validation suite."""

    def test_logistic_four_passes(self):
        report = validate(logistic(4.0))
        assert report.passed, [c.to_dict() for c in report.failed]

    def test_escaping_logistic_fails_invariance(self):
        report = validate(logistic(4.2))
        assert not report.passed
        assert report.get("f(M) ⊆ M").passed is False

    def test_undeclared_critical_point_is_reported(self):
        f = logistic(3.5)
        broken = type(f)(
            domain=f.domain, value=f.value, deriv=f.deriv, critical_points=(), eta=0.1, xi=0.1, name="broken"
        )
        report = validate(broken)
        assert report.get("critical points complete").passed is False

    def test_report_serializes(self):
        data = validate(logistic(3.2)).to_dict()
        assert data["passed"] is True
        assert all("name" in check for check in data["checks"])


class TestConstants:
    """Tests for eta/xi calibration."""

    def test_eta_is_capped_by_singular_gap(self):
        f = logistic(4.0)
        eta, _ = calibrate_constants(f, eta=10.0)
        assert eta == pytest.approx(0.5 / 3.0)

    def test_xi_is_positive(self):
        _, xi = calibrate_constants(logistic(3.9))
        assert xi > 0

    def test_explicit_xi_is_kept(self):
        assert calibrate_constants(logistic(3.9), eta=0.01, xi=0.3) == (0.01, 0.3)


class TestMapFiles:
    """Tests for the JSON map-file schema."""

    def test_family_roundtrip(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"family": "logistic", "params": {"a": 3.2}}))
        f = load_map(path)
        assert f.family.param_dict == {"a": 3.2}
        assert map_to_dict(f)["family"] == "logistic"

    def test_piecewise_definition(self):
        data = {
            "domain": [[0.0, 1.0]],
            "pieces": [{"interval": [0.0, 1.0], "coefficients": [0.0, 4.0, -4.0]}],
            "critical_points": [{"location": 0.5, "kind": "extremum", "exponent": 2, "sign_left": -1, "sign_right": -1}],
            "name": "poly-logistic",
        }
        f = map_from_dict(data)
        assert float(f.f(0.25)) == pytest.approx(0.75)
        assert f.extrema == (0.5,)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(MapFileError):
            load_map(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MapFileError):
            load_map(tmp_path / "missing.json")

    def test_unknown_family(self):
        with pytest.raises(MapFileError):
            map_from_dict({"family": "tent"})

    def test_needs_family_or_pieces(self):
        with pytest.raises(MapFileError):
            map_from_dict({"domain": [[0, 1]]})


class TestFamilies:
    """Tests for the built-in families."""

    def test_make_map_by_name(self):
        f = make_map("sine", a=0.8)
        assert float(f.f(0.5)) == pytest.approx(0.8)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            make_map("tent", a=1.0)

    def test_cubic_bimodal_extrema(self):
        f = cubic_bimodal(3.0)
        assert f.d == 2
        for c in f.extrema:
            assert float(f.df(c)) == pytest.approx(0.0, abs=1e-12)

    def test_cube_has_inflection_only(self):
        f = cube()
        assert f.d == 0
        assert critical_values(f) == [0.0]

    def test_piecewise_chebyshev(self):
        f = piecewise(
            [(Interval(0.0, 1.0), [0.5, 0.0, -0.5], "chebyshev")],
            [Interval(0.0, 1.0)],
            [CriticalPoint(0.5, EXTREMUM, 2.0, -1, -1)],
        )
        # T_0 and T_2 on [0, 1]: 0.5 - 0.5 (2 (2x - 1)^2 - 1) = 1 - (2x - 1)^2
        xs = np.linspace(0.0, 1.0, 7)
        assert np.allclose(f.f(xs), 1.0 - (2 * xs - 1) ** 2)

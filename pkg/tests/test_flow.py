"""Flow integration, variational flows, and section return solves."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from pnk import (Field, NoConvergence, NonFinite, SingularGeometry,
                 StepFailure, build_section, integrate_flow,
                 integrate_variational, loop_field, solve_return_times)

TWO_PI = 2.0 * math.pi


def _field(n, value, jacobian, p=0):
    return Field(n, p, value, jacobian,
                 lambda x, eps: np.zeros((n, p)))


ZERO2 = _field(2, lambda x, e: np.zeros(2), lambda x, e: np.zeros((2, 2)))
EXP1 = _field(1, lambda x, e: x.copy(), lambda x, e: np.ones((1, 1)))


class TestIntegrateFlow:
    def test_zero_field_fixes_points(self):
        res = integrate_flow(ZERO2, [0.3, -0.7], [], 1.0)
        np.testing.assert_allclose(res.endpoint, [0.3, -0.7], atol=1e-13)

    def test_scalar_exponential(self):
        res = integrate_flow(EXP1, [1.0], [], 1.0, tol=1e-12)
        assert res.endpoint[0] == pytest.approx(math.e, abs=1e-11)

    def test_unit_winding_advances_angle(self, straight_sys):
        field = loop_field(straight_sys.family, [1, 0])
        res = integrate_flow(field, [0.0, 0.0, 0.0, 0.0],
                             straight_sys.seed.eps0, 1.0)
        assert res.endpoint[0] == pytest.approx(TWO_PI, abs=1e-10)

    def test_group_property(self, hopf_sys):
        field = loop_field(hopf_sys.family, [1])
        x0 = np.array([0.25, 0.1])
        tol = 1e-10
        once = integrate_flow(field, x0, [0.1], 0.7, tol)
        twice = integrate_flow(field, once.endpoint, [0.1], 0.3, tol)
        direct = integrate_flow(field, x0, [0.1], 1.0, tol)
        np.testing.assert_allclose(twice.endpoint, direct.endpoint,
                                   atol=10 * tol)

    def test_commuting_flows_commute(self, straight_sys, rng):
        fam = straight_sys.family
        tol = 1e-10
        for _ in range(3):
            x0 = np.concatenate([rng.uniform(0, TWO_PI, 2),
                                 rng.uniform(-0.2, 0.2, 2)])
            eps = rng.uniform(-0.1, 0.1, 1)
            a = integrate_flow(fam.member(0), x0, eps, 1.0, tol).endpoint
            ab = integrate_flow(fam.member(1), a, eps, 1.0, tol).endpoint
            b = integrate_flow(fam.member(1), x0, eps, 1.0, tol).endpoint
            ba = integrate_flow(fam.member(0), b, eps, 1.0, tol).endpoint
            np.testing.assert_allclose(ab, ba, atol=10 * tol)

    def test_blowup_failure_modes(self):
        # finite-time singularity drives the step below resolution
        square = _field(1, lambda x, e: x * x * 1e8,
                        lambda x, e: 2e8 * x.reshape(1, 1))
        with pytest.raises(StepFailure):
            integrate_flow(square, [1.0], [], 10.0)
        # plain exponential overflow reaches inf in the state
        grow = _field(1, lambda x, e: 100.0 * x,
                      lambda x, e: np.full((1, 1), 100.0))
        with pytest.raises(NonFinite):
            integrate_flow(grow, [1.0], [], 10.0)

    def test_zero_time_shortcut(self):
        res = integrate_flow(EXP1, [2.0], [], 0.0)
        assert res.steps_taken == 0
        assert res.endpoint[0] == 2.0


class TestIntegrateVariational:
    def test_zero_field_identity_tangent(self):
        res = integrate_variational(ZERO2, [0.1, 0.2], [], 1.0)
        np.testing.assert_allclose(res.tangent, np.eye(2), atol=1e-12)

    def test_linear_field_matches_matrix_exponential(self):
        a = np.array([[0.2, -1.1], [0.4, -0.5]])
        lin = _field(2, lambda x, e: a @ x, lambda x, e: a)
        res = integrate_variational(lin, [0.3, 0.4], [], 1.0, tol=1e-11)
        np.testing.assert_allclose(res.tangent, expm(a), atol=1e-9)

    def test_hopf_cycle_multipliers(self, hopf_sys):
        # one full loop of the normalized field: eigenvalues {1, exp(-0.4 pi)}
        field = loop_field(hopf_sys.family, [1])
        m = hopf_sys.seed.base_point
        res = integrate_variational(field, m, [0.1], 1.0)
        eig = np.sort(np.abs(np.linalg.eigvals(res.tangent)))
        want = math.exp(-0.4 * math.pi)
        assert eig[0] == pytest.approx(want, rel=1e-8)
        assert eig[1] == pytest.approx(1.0, abs=1e-8)

    def test_chain_rule_for_composed_flows(self, hopf_sys):
        field = loop_field(hopf_sys.family, [1])
        x0 = np.array([0.3, 0.05])
        tol = 1e-10
        first = integrate_variational(field, x0, [0.1], 0.4, tol)
        second = integrate_variational(field, first.endpoint, [0.1], 0.6, tol)
        direct = integrate_variational(field, x0, [0.1], 1.0, tol)
        np.testing.assert_allclose(second.tangent @ first.tangent,
                                   direct.tangent, atol=100 * tol)

    def test_tangent_matches_flow_differences(self, hopf_sys):
        field = loop_field(hopf_sys.family, [1])
        x0 = np.array([0.3, 0.05])
        tol = 1e-10
        var = integrate_variational(field, x0, [0.1], 1.0, tol)
        h = 1e-6
        fd = np.empty((2, 2))
        for j, e in enumerate(np.eye(2)):
            plus = integrate_flow(field, x0 + h * e, [0.1], 1.0, tol).endpoint
            minus = integrate_flow(field, x0 - h * e, [0.1], 1.0, tol).endpoint
            fd[:, j] = (plus - minus) / (2 * h)
        np.testing.assert_allclose(var.tangent, fd,
                                   atol=max(1e-6, 100 * tol))

    def test_rescaling_invariance(self, hopf_sys):
        # c * X over time 1/c gives the same tangent map
        base = loop_field(hopf_sys.family, [1])
        c = 2.5
        scaled = Field(2, 1, lambda x, e: c * base.value(x, e),
                       lambda x, e: c * base.jacobian(x, e),
                       lambda x, e: c * base.eps_jacobian(x, e))
        m = hopf_sys.seed.base_point
        a1 = integrate_variational(base, m, [0.1], 1.0).tangent
        a2 = integrate_variational(scaled, m, [0.1], 1.0 / c).tangent
        np.testing.assert_allclose(a1, a2, atol=1e-9)


class TestSolveReturnTimes:
    def test_point_on_section_returns_zero_times(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        res = solve_return_times(straight_sys.family, frame.base,
                                 straight_sys.seed.eps0, frame)
        np.testing.assert_allclose(res.times, 0.0, atol=1e-14)
        np.testing.assert_allclose(res.endpoint, frame.base, atol=1e-14)

    def test_shift_along_generator_recovered(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        delta = 0.05
        y = frame.base + delta * np.array([1.0, 0.0, 0.0, 0.0])
        res = solve_return_times(straight_sys.family, y,
                                 straight_sys.seed.eps0, frame)
        np.testing.assert_allclose(res.times, [-delta, 0.0], atol=1e-12)
        np.testing.assert_allclose(res.endpoint, frame.base, atol=1e-11)

    def test_outside_trust_radius_rejected(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        y = frame.base + np.array([5.0, 0.0, 0.0, 0.0])
        with pytest.raises(NoConvergence):
            solve_return_times(straight_sys.family, y,
                               straight_sys.seed.eps0, frame)

    def test_variational_of_return_composition(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        y = frame.base + 0.03 * np.array([1.0, -1.0, 0.0, 0.0])
        res = solve_return_times(straight_sys.family, y,
                                 straight_sys.seed.eps0, frame,
                                 with_variational=True)
        assert res.variational is not None
        # composed return legs of the straightened family act linearly on u
        want = expm(res.times[0] * np.diag([-0.3, 0.2])
                    + res.times[1] * np.diag([0.1, -0.4]))
        np.testing.assert_allclose(res.variational[2:, 2:], want, atol=1e-9)

    def test_fields_tangent_to_section_degenerate(self, straight_sys):
        # constraints replaced so that they annihilate the generators
        frame = build_section(straight_sys.family, straight_sys.seed)
        from dataclasses import replace
        bad = replace(frame, constraints=frame.dual_transversal[:2])
        y = frame.base + 0.01 * np.array([1.0, 0.0, 1.0, 0.0])
        with pytest.raises(SingularGeometry):
            solve_return_times(straight_sys.family, y,
                               straight_sys.seed.eps0, bad)

    def test_wraps_angles_before_solving(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        y = frame.base.copy()
        y[0] += TWO_PI * 3
        res = solve_return_times(straight_sys.family, y,
                                 straight_sys.seed.eps0, frame)
        np.testing.assert_allclose(res.times, 0.0, atol=1e-12)


class TestChartEscape:
    def test_escape_raised_beyond_chart_radius(self):
        from pnk import Escape
        grow = Field(1, 0, lambda x, e: 10.0 * x,
                     lambda x, e: np.full((1, 1), 10.0),
                     lambda x, e: np.zeros((1, 0)), chart_radius=5.0)
        with pytest.raises(Escape):
            integrate_flow(grow, [1.0], [], 1.0)

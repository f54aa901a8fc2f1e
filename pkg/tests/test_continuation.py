"""Hyperbolicity margins, Newton correctors, branch continuation, torus
reconstruction and the isolation criterion."""

import math

import numpy as np
import pytest

from pnk import (ContinuationOptions, OpenTorus, build_section,
                 continue_branch, evaluate_pn_map, hyperbolicity_report,
                 isolation_check, newton_fixed_point, reconstruct_torus)
from pnk.catalog import StraightenedSpec, make_straightened

TWO_PI = 2.0 * math.pi


class TestHyperbolicityReport:
    def test_zero_matrix(self):
        rep = hyperbolicity_report(np.zeros((3, 3)))
        assert rep.dist_from_one == pytest.approx(1.0)
        assert rep.dist_from_unit_circle == pytest.approx(1.0)
        assert rep.B_invertible

    def test_unit_eigenvalue_not_invertible(self):
        rep = hyperbolicity_report(np.diag([1.0, 0.3]))
        assert rep.dist_from_one == pytest.approx(0.0, abs=1e-14)
        assert not rep.B_invertible
        assert rep.B_condition > 1e12

    def test_hopf_margin(self):
        lam = math.exp(-0.4 * math.pi)
        rep = hyperbolicity_report(np.array([[lam]]))
        assert rep.dist_from_one == pytest.approx(1.0 - lam, rel=1e-12)
        assert rep.B_invertible

    def test_corrector_eigenvalues_are_one_minus_lambda(self, rng):
        ell = rng.normal(size=(4, 4))
        rep = hyperbolicity_report(ell)
        beta = np.sort_complex(np.linalg.eigvals(np.eye(4) - ell))
        want = np.sort_complex(1.0 - rep.spectrum)
        from pnk.spectra import match_distance
        assert match_distance(beta, want) <= 1e-10


class TestIsolationCheck:
    def test_hyperbolic_isolated(self):
        assert isolation_check(hyperbolicity_report(np.diag([0.5, 2.0])))

    def test_rotation_not_isolated(self):
        th = math.pi / 4
        rot = np.array([[math.cos(th), -math.sin(th)],
                        [math.sin(th), math.cos(th)]])
        assert not isolation_check(hyperbolicity_report(rot))

    def test_hopf_isolated(self):
        lam = math.exp(-0.4 * math.pi)
        assert isolation_check(hyperbolicity_report(np.array([[lam]])))


class TestNewtonFixedPoint:
    def test_seed_torus_needs_zero_iterations(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        nr = newton_fixed_point(straight_sys.family, straight_sys.seed,
                                [1, 0], frame, [0.0], np.zeros(2))
        assert nr.iterations == 0
        np.testing.assert_allclose(nr.u, 0.0, atol=1e-12)

    def test_exact_catalog_torus_recovered(self, straight_sys, straight_spec):
        frame = build_section(straight_sys.family, straight_sys.seed)
        eps = np.array([0.08])
        nr = newton_fixed_point(straight_sys.family, straight_sys.seed,
                                [1, 0], frame, eps, np.zeros(2))
        np.testing.assert_allclose(nr.u, -straight_spec.C @ eps, atol=1e-9)

    def test_far_guess_converges_on_affine_map(self, straight_sys):
        # contracting directions make Newton on the affine map one-shot
        spec = StraightenedSpec((np.diag([-0.3, -0.5]), np.diag([-0.2, -0.1])),
                                np.array([[0.5], [0.25]]))
        sysm = make_straightened(spec)
        frame = build_section(sysm.family, sysm.seed)
        guess = np.array([0.5, -0.5])  # far beyond the trust radius
        nr = newton_fixed_point(sysm.family, sysm.seed, [1, 0], frame,
                                [0.05], guess)
        np.testing.assert_allclose(nr.u, -spec.C @ np.array([0.05]),
                                   atol=1e-9)
        assert nr.iterations <= 2

    def test_uniqueness_from_distinct_guesses(self, straight_cubic_sys):
        frame = build_section(straight_cubic_sys.family,
                              straight_cubic_sys.seed)
        eps = np.array([0.06])
        a = newton_fixed_point(straight_cubic_sys.family,
                               straight_cubic_sys.seed, [1, 0], frame, eps,
                               np.array([0.02, 0.02]))
        b = newton_fixed_point(straight_cubic_sys.family,
                               straight_cubic_sys.seed, [1, 0], frame, eps,
                               np.array([-0.03, 0.01]))
        np.testing.assert_allclose(a.u, b.u, atol=1e-9)

    def test_jacobian_spectrum_relation(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        nr = newton_fixed_point(straight_sys.family, straight_sys.seed,
                                [1, 1], frame, [0.05], np.zeros(2))
        from pnk.spectra import match_distance
        assert match_distance(nr.jacobian_spectrum, 1.0 - nr.spectrum) <= 1e-8


class TestContinueBranch:
    def test_straightened_branch_closed_form(self, straight_sys,
                                             straight_spec):
        path = [np.array([e]) for e in np.linspace(0.0, 0.1, 11)]
        branch = continue_branch(straight_sys.family, straight_sys.seed,
                                 [1, 0], path)
        assert branch.status == "completed"
        assert len(branch.points) == 11
        for pt in branch.points:
            np.testing.assert_allclose(pt.u, -straight_spec.C @ pt.eps,
                                       atol=1e-10)
            assert pt.residual <= 1e-10

    def test_branch_points_reverify_under_map(self, straight_cubic_sys):
        path = [np.array([e]) for e in np.linspace(0.0, 0.08, 5)]
        branch = continue_branch(straight_cubic_sys.family,
                                 straight_cubic_sys.seed, [1, 0], path)
        frame = branch.frame
        for pt in branch.points:
            x = frame.chart_point(pt.u)
            out = evaluate_pn_map(straight_cubic_sys.family,
                                  straight_cubic_sys.seed, [1, 0], frame, x,
                                  eps=pt.eps)
            assert np.max(np.abs(frame.coordinates(out) - pt.u)) <= 1e-9

    def test_stop_at_critical_margin(self):
        # an eigenvalue of exp(2 pi a(eps)) driven through 1 at eps = 0.05
        from pnk import VectorFieldFamily, TorusSeed

        def value(x, eps):
            return np.array([1.0, (eps[0] - 0.05) * x[1]])

        def jac(x, eps):
            return np.array([[0.0, 0.0], [0.0, eps[0] - 0.05]])

        fam = VectorFieldFamily(2, 1, 1, [value], [jac],
                                [lambda x, e: np.array([[0.0], [x[1]]])])
        seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0]),
                         np.zeros(1), angle_coords=(0,))
        path = [np.array([e]) for e in np.linspace(0.0, 0.1, 5)]
        branch = continue_branch(fam, seed, [1], path,
                                 ContinuationOptions(delta_min=1e-6))
        assert branch.status == "stopped_at_critical"
        # stops exactly when eps hits 0.05 (multiplier 1)
        assert branch.points[-1].eps[0] == pytest.approx(0.05)

    def test_single_point_path(self, straight_sys):
        branch = continue_branch(straight_sys.family, straight_sys.seed,
                                 [1, 0], [np.zeros(1)])
        assert branch.status == "completed"
        assert len(branch.points) == 1

    def test_path_must_start_at_seed(self, straight_sys):
        with pytest.raises(ValueError):
            continue_branch(straight_sys.family, straight_sys.seed, [1, 0],
                            [np.array([0.01])])

    def test_parallel_mode_matches_sequential(self, straight_cubic_sys):
        path = [np.array([e]) for e in np.linspace(0.0, 0.08, 7)]
        seq = continue_branch(straight_cubic_sys.family,
                              straight_cubic_sys.seed, [1, 0], path)
        par = continue_branch(straight_cubic_sys.family,
                              straight_cubic_sys.seed, [1, 0], path,
                              ContinuationOptions(parallel=True, n_threads=3))
        assert par.status == seq.status
        for a, b in zip(seq.points, par.points):
            np.testing.assert_allclose(a.u, b.u, atol=1e-12)

    def test_neighboring_tori_are_close(self, straight_sys):
        path = [np.array([e]) for e in np.linspace(0.0, 0.06, 4)]
        branch = continue_branch(straight_sys.family, straight_sys.seed,
                                 [1, 0], path)
        gaps = [np.linalg.norm(a.u - b.u)
                for a, b in zip(branch.points, branch.points[1:])]
        steps = [np.linalg.norm(a.eps - b.eps)
                 for a, b in zip(branch.points, branch.points[1:])]
        for gap, step in zip(gaps, steps):
            assert gap <= 2.0 * step  # O(step) smoothness of the branch


class TestReconstructTorus:
    def test_seed_grid_reproduced(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        rec = reconstruct_torus(straight_sys.family, straight_sys.seed,
                                [0.0], np.zeros(2), grid_per_angle=8,
                                frame=frame)
        for i in range(8):
            for j in range(8):
                want = straight_sys.seed.point([TWO_PI * i / 8,
                                                TWO_PI * j / 8])
                np.testing.assert_allclose(rec.samples[i, j], want,
                                           atol=1e-9)

    def test_shifted_torus_constant_in_u(self, straight_sys, straight_spec):
        frame = build_section(straight_sys.family, straight_sys.seed)
        eps = np.array([0.07])
        ustar = -straight_spec.C @ eps
        rec = reconstruct_torus(straight_sys.family, straight_sys.seed, eps,
                                ustar, grid_per_angle=6, frame=frame)
        u_samples = rec.samples[..., 2:]
        np.testing.assert_allclose(
            u_samples, np.broadcast_to(ustar, u_samples.shape), atol=1e-9)
        assert rec.closure_defect <= 1e-8

    def test_wrong_point_raises_open_torus(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        with pytest.raises(OpenTorus) as err:
            reconstruct_torus(straight_sys.family, straight_sys.seed, [0.07],
                              np.array([0.2, 0.2]), grid_per_angle=4,
                              frame=frame)
        assert err.value.report is not None
        assert err.value.report.closure_defect > 1e-3

    def test_hopf_circle_reconstruction(self, hopf_sys):
        frame = build_section(hopf_sys.family, hopf_sys.seed)
        eps = np.array([0.15])
        nr = newton_fixed_point(hopf_sys.family, hopf_sys.seed, [1], frame,
                                eps, np.zeros(1))
        rec = reconstruct_torus(hopf_sys.family, hopf_sys.seed, eps, nr.u,
                                grid_per_angle=16, frame=frame)
        radii = np.linalg.norm(rec.samples, axis=-1)
        np.testing.assert_allclose(radii, math.sqrt(0.15), atol=1e-8)


class TestSingularJacobian:
    def test_forced_drift_with_unit_multiplier(self):
        # phi' = 1, u' = eps: the map shifts u by 2 pi eps with derivative 1,
        # so I - L vanishes while the residual does not
        from pnk import SingularJacobian, TorusSeed, VectorFieldFamily

        fam = VectorFieldFamily(
            2, 1, 1,
            values=[lambda x, e: np.array([1.0, e[0]])],
            jacobians=[lambda x, e: np.zeros((2, 2))],
            eps_jacobians=[lambda x, e: np.array([[0.0], [1.0]])])
        seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0]),
                         np.zeros(1), angle_coords=(0,))
        frame = build_section(fam, seed)
        with pytest.raises(SingularJacobian):
            newton_fixed_point(fam, seed, [1], frame, [0.01], np.zeros(1))


class TestHopfBranchOracle:
    def test_fixed_points_match_radial_oracle(self, hopf_sys):
        # section coordinate along +x at the base point (sqrt(eps0), 0):
        # the cycle at eps has radius sqrt(eps), so u* = sqrt(eps) - sqrt(eps0)
        path = [np.array([e]) for e in np.linspace(0.1, 0.2, 6)]
        branch = continue_branch(hopf_sys.family, hopf_sys.seed, [1], path)
        assert branch.status == "completed"
        for pt in branch.points:
            want = hopf_sys.oracle.fixed_u(pt.eps)
            np.testing.assert_allclose(pt.u, want, atol=1e-9)

    def test_branch_stops_where_the_cycle_collapses(self, hopf_sys):
        path = [np.array([e]) for e in np.linspace(0.1, -0.05, 7)]
        branch = continue_branch(hopf_sys.family, hopf_sys.seed, [1], path)
        assert branch.status == "stopped_at_critical"
        assert branch.points[-1].eps[0] == pytest.approx(0.0, abs=1e-12)

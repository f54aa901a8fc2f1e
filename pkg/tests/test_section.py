"""Sections, monodromy operators, transversal linearizations, the return map."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from pnk import (DegenerateTangent, OpenLoop, VectorFieldFamily,
                 basepoint_spectrum_check, build_section, evaluate_pn_map,
                 monodromy_report, total_monodromy,
                 transversal_linearization, transversal_map)
from pnk.spectra import match_distance, sorted_complex

TWO_PI = 2.0 * math.pi
A1 = np.diag([-0.3, 0.2])
A2 = np.diag([0.1, -0.4])


class TestBuildSection:
    def test_axis_field_complement(self):
        fam = VectorFieldFamily(
            3, 1, 0, values=[lambda x, e: np.array([1.0, 0.0, 0.0])],
            jacobians=[lambda x, e: np.zeros((3, 3))])
        from pnk import TorusSeed
        seed = TorusSeed(1, lambda phi: np.array([phi[0], 0.0, 0.0]),
                         np.zeros(0), angle_coords=(0,))
        frame = build_section(fam, seed)
        span = np.abs(frame.transversal_basis.T @ np.eye(3)[:, 1:])
        assert np.linalg.matrix_rank(span, tol=1e-12) == 2
        np.testing.assert_allclose(np.abs(frame.constraints),
                                   [[1.0, 0.0, 0.0]], atol=1e-14)

    def test_straightened_transversal_is_u_plane(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        # Gram-Schmidt oracle: complement of the angle axes is the u plane
        np.testing.assert_allclose(np.abs(frame.transversal_basis[:2]), 0.0,
                                   atol=1e-14)
        gram = frame.transversal_basis.T @ frame.transversal_basis
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-14)
        # constraints annihilate the transversal basis, pair to identity
        np.testing.assert_allclose(
            frame.constraints @ frame.transversal_basis, 0.0, atol=1e-14)
        np.testing.assert_allclose(
            frame.constraints @ frame.group_basis, np.eye(2), atol=1e-14)

    def test_dependent_generators_rejected(self):
        fam = VectorFieldFamily(
            2, 2, 0,
            values=[lambda x, e: np.array([1.0, 0.0]),
                    lambda x, e: np.array([1.0, 0.0])],
            jacobians=[lambda x, e: np.zeros((2, 2))] * 2)
        from pnk import TorusSeed
        seed = TorusSeed(2, lambda phi: np.array([phi[0], phi[1]]),
                         np.zeros(0), angle_coords=(0, 1))
        with pytest.raises(DegenerateTangent):
            build_section(fam, seed)


class TestTotalMonodromy:
    def test_straightened_block_exponential(self, straight_sys):
        a = total_monodromy(straight_sys.family, straight_sys.seed, [1, 0])
        want = np.zeros((4, 4))
        want[:2, :2] = np.eye(2)
        want[2:, 2:] = expm(TWO_PI * A1)
        np.testing.assert_allclose(a, want, atol=1e-8)

    def test_unit_eigenvalue_count(self, straight_sys, hopf_sys):
        for sysm, alpha in [(straight_sys, [1, 1]), (hopf_sys, [1])]:
            rep = monodromy_report(sysm.family, sysm.seed, alpha)
            assert rep.trivial_unit_count == sysm.family.k
            assert rep.pairing_distance <= 1e-8

    def test_hopf_spectrum(self, hopf_sys):
        a = total_monodromy(hopf_sys.family, hopf_sys.seed, [1])
        eig = np.sort(np.abs(np.linalg.eigvals(a)))
        assert eig[0] == pytest.approx(math.exp(-0.4 * math.pi), rel=1e-8)
        assert eig[1] == pytest.approx(1.0, abs=1e-8)

    def test_open_loop_off_torus(self, hopf_sys):
        m = np.array([0.5, 0.0])  # not on the r = sqrt(0.1) cycle
        with pytest.raises(OpenLoop):
            total_monodromy(hopf_sys.family, hopf_sys.seed, [1], m=m)


class TestTransversalLinearization:
    def test_identity_passthrough(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        ell = transversal_linearization(np.eye(4), frame)
        np.testing.assert_allclose(ell, np.eye(2), atol=1e-14)

    def test_straightened_closed_form(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        a = total_monodromy(straight_sys.family, straight_sys.seed, [1, 1])
        ell = transversal_linearization(a, frame)
        np.testing.assert_allclose(ell, expm(TWO_PI * (A1 + A2)), atol=1e-8)

    def test_spectrum_splitting(self, straight_sys, rng):
        # random full matrices fixing the group directions exactly
        frame = build_section(straight_sys.family, straight_sys.seed)
        for _ in range(5):
            block = rng.normal(size=(2, 2))
            coupling = rng.normal(size=(2, 2))
            a = np.block([[np.eye(2), coupling], [np.zeros((2, 2)), block]])
            ell = transversal_linearization(a, frame)
            full = sorted_complex(np.linalg.eigvals(a))
            part = np.concatenate([np.linalg.eigvals(ell),
                                   np.ones(2, dtype=complex)])
            assert match_distance(full, sorted_complex(part)) <= 1e-6


class TestEvaluatePnMap:
    def test_base_point_is_fixed(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        out = evaluate_pn_map(straight_sys.family, straight_sys.seed, [1, 0],
                              frame, frame.base)
        np.testing.assert_allclose(out, frame.base, atol=1e-9)

    def test_linear_image_on_straightened(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        u = np.array([0.02, -0.03])
        x = frame.chart_point(u)
        out = evaluate_pn_map(straight_sys.family, straight_sys.seed, [1, 0],
                              frame, x)
        want_u = expm(TWO_PI * A1) @ u
        np.testing.assert_allclose(frame.coordinates(out), want_u, atol=1e-9)

    def test_off_section_point_rejected(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        x = frame.base + np.array([0.05, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            evaluate_pn_map(straight_sys.family, straight_sys.seed, [1, 0],
                            frame, x)

    def test_jacobian_matches_map_differences(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)
        res = transversal_map(straight_sys.family, frame, [1, 0],
                              np.zeros(2), with_jacobian=True)
        h = 1e-5
        fd = np.empty((2, 2))
        for j, e in enumerate(np.eye(2)):
            up = transversal_map(straight_sys.family, frame, [1, 0], h * e).u
            dn = transversal_map(straight_sys.family, frame, [1, 0], -h * e).u
            fd[:, j] = (up - dn) / (2 * h)
        np.testing.assert_allclose(res.jacobian, fd, atol=1e-6)

    def test_jacobian_fd_consistency_hopf(self, hopf_sys):
        frame = build_section(hopf_sys.family, hopf_sys.seed)
        res = transversal_map(hopf_sys.family, frame, [1], np.zeros(1),
                              with_jacobian=True)
        h = 1e-5
        up = transversal_map(hopf_sys.family, frame, [1], [h]).u
        dn = transversal_map(hopf_sys.family, frame, [1], [-h]).u
        fd = (up - dn) / (2 * h)
        np.testing.assert_allclose(res.jacobian[0], fd, atol=1e-6)


class TestSpectralProperties:
    def test_homotopy_additivity(self, straight_sys):
        frame = build_section(straight_sys.family, straight_sys.seed)

        def ell(alpha):
            a = total_monodromy(straight_sys.family, straight_sys.seed, alpha)
            return transversal_linearization(a, frame)

        lhs = ell([1, 1])
        rhs = ell([1, 0]) @ ell([0, 1])
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_basepoint_invariance_two_antipodes(self, hopf_sys):
        check = basepoint_spectrum_check(hopf_sys.family, hopf_sys.seed, [1],
                                         [[0.0], [math.pi]], tol=1e-8)
        assert check.passed
        assert check.max_spectral_distance <= 1e-8

    def test_basepoint_invariance_torus_samples(self, straight_sys, rng):
        angles = rng.uniform(0.0, TWO_PI, size=(8, 2))
        check = basepoint_spectrum_check(straight_sys.family,
                                         straight_sys.seed, [1, 0],
                                         list(angles), tol=1e-6)
        assert check.passed

    def test_single_sample_vacuous(self, hopf_sys):
        check = basepoint_spectrum_check(hopf_sys.family, hopf_sys.seed, [1],
                                         [[0.4]])
        assert check.passed
        assert check.max_spectral_distance == 0.0


class TestInvarianceMonodromyConsistency:
    def test_invariant_seed_supports_closed_loops(self, hopf_sys):
        from pnk import verify_torus_invariance
        rep = verify_torus_invariance(hopf_sys.family, hopf_sys.seed, grid=8,
                                      tol=1e-9)
        assert rep.passed
        # monodromy from any sampled base point closes within tolerance
        for phi in (0.0, 2.0, 4.0):
            m = hopf_sys.seed.point([phi])
            total_monodromy(hopf_sys.family, hopf_sys.seed, [1], m=m)

    def test_non_invariant_seed_fails_both_ways(self, hopf_sys):
        import math as _math
        from pnk import TorusSeed, verify_torus_invariance
        root = _math.sqrt(0.1) * 1.1
        bad = TorusSeed(1, lambda phi: np.array([root * _math.cos(phi[0]),
                                                 root * _math.sin(phi[0])]),
                        np.array([0.1]))
        assert not verify_torus_invariance(hopf_sys.family, bad, grid=8,
                                           tol=1e-9).passed
        with pytest.raises(OpenLoop):
            total_monodromy(hopf_sys.family, bad, [1])

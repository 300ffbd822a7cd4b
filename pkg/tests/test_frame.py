"""Frame integration: connection entries, group residuals, spinors, cache."""

import numpy as np
import pytest

from nilforge import algebra as alg
from nilforge import frame as frm
from nilforge import potential as pot


def vacuum_setup(n=41, n_theta=16, half=1.0):
    d = 2.0 * half / (n - 1)
    g = pot.DomainGrid(-half, -half, d, d, n, n)
    return pot.vacuum_potential(0.25, g), alg.LoopSampleSet(n_theta)


def closed_form_frame(grid, lam):
    """exp(rho sigma1) with rho = (i/2)(lam zbar - z/lam); solves the system."""
    rho = 0.5j * (lam * np.conj(grid.zz) - grid.zz / lam)
    F = np.empty(grid.shape + (2, 2), dtype=complex)
    F[..., 0, 0] = F[..., 1, 1] = np.cosh(rho)
    F[..., 0, 1] = F[..., 1, 0] = np.sinh(rho)
    return F


class TestBuildAlpha:
    def test_vacuum_entries_at_unity(self):
        P, _ = vacuum_setup(n=11)
        U, V = frm.build_alpha(P, 0.0)
        assert np.abs(U[3, 7] - np.array([[0, -0.5j], [-0.5j, 0]])).max() < 1e-15
        assert np.abs(V[3, 7] - np.array([[0, 0.5j], [0.5j, 0]])).max() < 1e-15

    def test_loop_dependence(self):
        P, _ = vacuum_setup(n=11)
        lam = np.exp(0.6j)
        U, _ = frm.build_alpha(P, 0.6)
        assert abs(U[0, 0, 0, 1] - (-np.conj(lam) * 0.5j)) < 1e-15

    def test_tiny_support_rejected(self):
        g = pot.DomainGrid(-1, -1, 0.25, 0.25, 9, 9)
        P = pot.PotentialField(g, np.full(g.shape, -70.0),
                               np.ones(g.shape, dtype=complex))
        with pytest.raises(frm.SingularSupport):
            frm.build_alpha(P, 0.0)


class TestIntegrateFrame:
    def test_matches_closed_form(self):
        P, loops = vacuum_setup()
        FF = frm.integrate_frame(P, loops)
        worst = max(np.abs(FF.F[i] - closed_form_frame(P.grid, lam)).max()
                    for i, lam in enumerate(loops.lam))
        assert worst < 5e-7

    def test_basepoint_identity(self):
        P, loops = vacuum_setup(n=21, n_theta=8)
        FF = frm.integrate_frame(P, loops)
        assert FF.basepoint == (10, 10)
        assert np.abs(FF.F[:, 10, 10] - np.eye(2)).max() == 0.0
        assert np.abs(FF.at_unity - FF.F[0]).max() == 0.0

    def test_group_and_twist_residuals(self):
        P, loops = vacuum_setup(n=21, n_theta=8)
        FF = frm.integrate_frame(P, loops)
        assert max(alg.su11_residual(FF.F[i]) for i in range(8)) < 1e-13
        # the connection is exactly twisted at antipodal samples, and
        # conjugation by sigma3 commutes with every integration step
        assert alg.twisted_residual(FF.F) < 1e-14
        assert FF.max_correction < 1e-7

    def test_spine_paths_agree(self):
        P, loops = vacuum_setup(n=21, n_theta=8)
        row = frm.integrate_frame(P, loops, spine="row")
        col = frm.integrate_frame(P, loops, spine="column")
        assert np.abs(row.F - col.F).max() < 1e-12

    def test_solved_potential_spine_consistency(self):
        g = pot.DomainGrid(-0.5, -0.5, 0.05, 0.05, 21, 21)
        P = pot.solve_flatness_pde(pot.sample_polynomial([1.0, 0.1], g), g)
        loops = alg.LoopSampleSet(8)
        row = frm.integrate_frame(P, loops, spine="row")
        col = frm.integrate_frame(P, loops, spine="column")
        # flat to truncation order, so the two sweep orders must agree
        assert np.abs(row.F - col.F).max() < 1e-5
        assert max(alg.su11_residual(row.F[i]) for i in range(8)) < 1e-13

    def test_threads_bitwise_identical(self):
        P, loops = vacuum_setup(n=21)
        one = frm.integrate_frame(P, loops, threads=1)
        four = frm.integrate_frame(P, loops, threads=4)
        assert np.array_equal(one.F, four.F)

    def test_off_center_basepoint(self):
        P, loops = vacuum_setup(n=21, n_theta=8)
        FF = frm.integrate_frame(P, loops, basepoint=(3, 17))
        assert np.abs(FF.F[:, 3, 17] - np.eye(2)).max() == 0.0
        # dF = F alpha is right-invariant in the constant: renormalizing
        # at b multiplies the centered solution by G(b)^{-1} on the left
        worst = max(np.abs(FF.F[i]
                           - np.linalg.inv(closed_form_frame(P.grid, lam)
                                           [3, 17])
                           @ closed_form_frame(P.grid, lam)).max()
                    for i, lam in enumerate(loops.lam))
        assert worst < 2e-5

    def test_basepoint_validation(self):
        P, loops = vacuum_setup(n=11, n_theta=8)
        with pytest.raises(ValueError):
            frm.integrate_frame(P, loops, basepoint=(11, 0))
        with pytest.raises(ValueError):
            frm.integrate_frame(P, loops, spine="diagonal")

    def test_flatness_guard(self):
        P, loops = vacuum_setup(n=21, n_theta=8)
        P.v[8:12, 8:12] += 0.05
        with pytest.raises(frm.FlatnessError):
            frm.integrate_frame(P, loops)
        FF = frm.integrate_frame(P, loops, flatness_threshold=None)
        assert np.isfinite(FF.F).all()

    def test_projection_limit(self):
        g = pot.DomainGrid(-0.5, -0.5, 0.05, 0.05, 21, 21)
        P = pot.solve_flatness_pde(pot.sample_polynomial([1.0, 0.1], g), g)
        with pytest.raises(frm.ProjectionFailure):
            frm.integrate_frame(P, alg.LoopSampleSet(8),
                                projection_limit=1e-12)


class TestSpinors:
    def test_vacuum_closed_forms(self):
        P, loops = vacuum_setup()
        FF = frm.integrate_frame(P, loops)
        S = frm.extract_spinors(FF.at_unity, P.h)
        Y = P.grid.mesh()[1]
        assert np.abs(S.psi1 - frm.ROOT_I * np.cosh(Y)).max() < 5e-7
        assert np.abs(S.psi2 - frm.ROOT_I * np.sinh(Y)).max() < 5e-7

    def test_support_identity(self):
        P, loops = vacuum_setup(n=21)
        FF = frm.integrate_frame(P, loops)
        S = frm.extract_spinors(FF.at_unity, P.h)
        recovered = 2.0 * (np.abs(S.psi1) ** 2 - np.abs(S.psi2) ** 2)
        assert np.abs(recovered - P.h).max() < 1e-10

    def test_dirac_residual(self):
        P, loops = vacuum_setup()
        FF = frm.integrate_frame(P, loops)
        S = frm.extract_spinors(FF.at_unity, P.h)
        assert frm.dirac_residual(S, P).max() < 1e-3

    def test_positive_support_required(self):
        with pytest.raises(frm.SingularSupport):
            frm.extract_spinors(np.eye(2, dtype=complex), np.zeros((2, 2)))


class TestFrameCache:
    def test_round_trip_bitwise(self, tmp_path):
        P, loops = vacuum_setup(n=11, n_theta=8)
        FF = frm.integrate_frame(P, loops)
        path = tmp_path / "frame.nfrm"
        frm.save_frame_cache(FF, path)
        back = frm.load_frame_cache(path)
        assert np.array_equal(back.F, FF.F)
        assert back.grid == FF.grid
        assert back.basepoint == FF.basepoint
        assert back.loops.n == 8
        assert back.max_correction == FF.max_correction

    def test_corrupt_magic(self, tmp_path):
        P, loops = vacuum_setup(n=11, n_theta=8)
        path = tmp_path / "frame.nfrm"
        frm.save_frame_cache(frm.integrate_frame(P, loops), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError):
            frm.load_frame_cache(path)

    def test_truncated_payload(self, tmp_path):
        P, loops = vacuum_setup(n=11, n_theta=8)
        path = tmp_path / "frame.nfrm"
        frm.save_frame_cache(frm.integrate_frame(P, loops), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 16])
        with pytest.raises(ValueError):
            frm.load_frame_cache(path)

"""Input-data layer: grids, stencils, the compatibility PDE, persistence."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nilforge import potential as pot


def grid(n=41, half=1.0):
    d = 2.0 * half / (n - 1)
    return pot.DomainGrid(-half, -half, d, d, n, n)


class TestDomainGrid:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            pot.DomainGrid(0.0, 0.0, -0.1, 0.1, 11, 11)
        with pytest.raises(ValueError):
            pot.DomainGrid(0.0, 0.0, 0.1, 0.1, 4, 11)

    def test_axes_and_mesh(self):
        g = pot.DomainGrid(-1.0, 2.0, 0.5, 0.25, 5, 9)
        assert g.x[-1] == 1.0
        assert g.y[0] == 2.0
        X, Y = g.mesh()
        assert X.shape == (5, 9)
        assert X[3, 0] == 0.5 and Y[0, 4] == 3.0
        assert g.zz[2, 1] == 0.0 + 2.25j

    def test_field_shape_guard(self):
        g = grid(11)
        with pytest.raises(ValueError):
            pot.PotentialField(g, np.zeros((11, 10)), np.zeros((11, 11)))


class TestStencils:
    # second-order stencils, one-sided rows included, are exact on quadratics
    def test_exact_on_quadratics(self):
        g = grid(21)
        X, Y = g.mesh()
        assert np.abs(pot.diff_x(X**2, g.dx) - 2 * X).max() < 1e-13
        assert np.abs(pot.diff_y(Y**2 + X, g.dy) - 2 * Y).max() < 1e-13
        assert np.abs(pot.diff_xx(X**2, g.dx) - 2).max() < 1e-11
        assert np.abs(pot.diff_yy(Y**2, g.dy) - 2).max() < 1e-11

    def test_wirtinger_pair(self):
        g = grid(21)
        zz = g.zz
        assert np.abs(pot.diff_z(zz**2, g) - 2 * zz).max() < 1e-12
        assert np.abs(pot.diff_zbar(zz**2, g)).max() < 1e-12
        assert np.abs(pot.diff_zbar(np.conj(zz), g) - 1).max() < 1e-13

    def test_laplacian5(self):
        g = grid(21)
        X, Y = g.mesh()
        lap = pot.laplacian5(X**2 + Y**2, g.dx, g.dy)
        assert lap.shape == (19, 19)
        assert np.abs(lap - 4.0).max() < 1e-11

    def test_convergence_order(self):
        errs = []
        for n in (21, 41):
            g = grid(n)
            X, Y = g.mesh()
            f = np.sin(2 * X) * np.cosh(Y)
            exact = 2 * np.cos(2 * X) * np.cosh(Y)
            errs.append(np.abs((pot.diff_x(f, g.dx)
                                - exact)[1:-1, 1:-1]).max())
        assert 3.5 < errs[0] / errs[1] < 4.5


class TestVacuum:
    def test_fields(self):
        P = pot.vacuum_potential(0.25, grid(11))
        assert np.all(P.v == np.log(0.25))
        assert np.all(P.B == 0.25)
        assert np.abs(P.h - 2.0).max() < 1e-15
        assert P.meta["residual"] == 0.0

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            pot.vacuum_potential(0.0, grid(11))

    def test_pde_residual_vanishes(self):
        P = pot.vacuum_potential(0.3 + 0.4j, grid(11))
        assert np.abs(pot.pde_residual(P.v, P.B, P.grid)).max() < 1e-12

    def test_flatness_to_rounding(self):
        P = pot.vacuum_potential(0.25, grid(41))
        assert pot.flatness_residual(P, 0.7).max() < 1e-13


class TestPdeResidual:
    def test_localizes_perturbation(self):
        g = grid(21)
        P = pot.vacuum_potential(0.25, g)
        v = P.v.copy()
        v[10, 10] += 1e-3
        res = np.abs(pot.pde_residual(v, P.B, g))
        # residual indices are offset by the interior slice
        assert res[9, 9] == res.max()
        assert res.max() > 10 * np.median(res)


class TestSolver:
    def test_named_case(self):
        # B = 1 + z/10 on [-1,1]^2 at 101 x 101
        g = grid(101)
        B = pot.sample_polynomial([1.0, 0.1], g)
        P = pot.solve_flatness_pde(B, g)
        assert P.meta["iterations"] <= 12
        assert P.meta["residual"] < 1e-10
        # log|B| solves the smooth equation exactly for holomorphic B
        assert np.abs(P.v - np.log(np.abs(B))).max() < 1e-8

    def test_constant_coefficient_is_exact(self):
        g = grid(21)
        P = pot.solve_flatness_pde(np.full(g.shape, 1.0 + 0j), g)
        assert P.meta["iterations"] == 0
        assert np.abs(P.v).max() == 0.0

    def test_discretization_order(self):
        errs = []
        for n in (41, 81):
            g = grid(n)
            B = pot.sample_polynomial([1.0, 0.1], g)
            P = pot.solve_flatness_pde(B, g)
            errs.append(np.abs(P.v - np.log(np.abs(B))).max())
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_perturbed_boundary_runs_newton(self):
        g = grid(41)
        B = pot.sample_polynomial([1.0, 0.1], g)
        P = pot.solve_flatness_pde(B, g, boundary=0.3)
        assert P.meta["iterations"] >= 2
        assert P.meta["residual"] < 1e-10
        assert np.all(P.v[0, :] == 0.3) and np.all(P.v[:, -1] == 0.3)
        # genuinely different solution, not a rescaled initial guess
        dev = np.abs(P.v - np.log(np.abs(B)))[1:-1, 1:-1].max()
        assert dev > 0.1

    def test_boundary_array(self):
        g = grid(21)
        B = pot.sample_polynomial([1.0, 0.1], g)
        bvals = np.log(np.abs(B)) + 0.05
        P = pot.solve_flatness_pde(B, g, boundary=bvals)
        assert np.abs(P.v[-1, :] - bvals[-1, :]).max() == 0.0
        assert P.meta["residual"] < 1e-10
        with pytest.raises(ValueError):
            pot.solve_flatness_pde(B, g, boundary=np.zeros((3, 3)))

    def test_vanishing_coefficient_rejected(self):
        g = grid(21)
        with pytest.raises(pot.SingularCoefficient):
            pot.solve_flatness_pde(g.zz, g)

    def test_iteration_cap(self):
        g = grid(21)
        B = pot.sample_polynomial([1.0, 0.1], g)
        with pytest.raises(pot.NonConvergence) as info:
            pot.solve_flatness_pde(B, g, boundary=0.3, max_iter=0)
        assert info.value.last_residual > 0.0

    @given(st.complex_numbers(max_magnitude=0.2, allow_nan=False,
                              allow_infinity=False))
    @settings(max_examples=12, deadline=None)
    def test_linear_coefficient_matches_log_abs(self, c):
        g = grid(41, half=0.5)
        B = pot.sample_polynomial([1.0, c], g)
        P = pot.solve_flatness_pde(B, g)
        assert P.meta["residual"] < 1e-10
        assert np.abs(P.v - np.log(np.abs(B))).max() < 5e-7


class TestSolvedFlatness:
    def test_solver_output_is_flat(self):
        g = grid(101)
        B = pot.sample_polynomial([1.0, 0.1], g)
        P = pot.solve_flatness_pde(B, g)
        assert pot.flatness_residual(P).max() < 1e-4
        assert pot.holomorphy_residual(P).max() < 1e-11

    def test_holomorphy_flags_conjugate(self):
        g = grid(21)
        P = pot.PotentialField(g, np.zeros(g.shape), np.conj(g.zz) + 2.0)
        assert np.abs(pot.holomorphy_residual(P) - 1.0).max() < 1e-12


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        g = grid(11)
        B = pot.sample_polynomial([1.0, 0.1, 0.05j], g)
        P = pot.PotentialField(g, np.log(np.abs(B)), B,
                               meta={"generator": "test", "residual": 0.0})
        path = tmp_path / "pot.json"
        pot.save_potential(P, path)
        Q = pot.load_potential(path)
        assert np.all(Q.v == P.v) and np.all(Q.B == P.B)
        assert Q.grid == g
        assert Q.meta["generator"] == "test"

    def test_schema_errors(self):
        g = grid(11)
        doc = pot.potential_to_document(pot.vacuum_potential(0.25, g))
        for mutate in (
            lambda d: d.pop("version"),
            lambda d: d.update(version=2),
            lambda d: d.pop("B_im"),
            lambda d: d["grid"].pop("dx"),
            lambda d: d.update(v=d["v"][:-1]),
        ):
            bad = json.loads(json.dumps(doc))
            mutate(bad)
            with pytest.raises(pot.PotentialFileError):
                pot.document_to_potential(bad)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(pot.PotentialFileError):
            pot.load_potential(path)

"""Rigid motions, frame transport, and the two-route transformation laws."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilforge import algebra as alg
from nilforge import frame as frm
from nilforge import geometry as geo
from nilforge import isometry as iso
from nilforge import potential as pot
from nilforge import sym

ALPHA, BETA = float(np.sqrt(2.0)), 0.6 + 0.8j


@pytest.fixture(scope="module")
def vacuum():
    g = pot.DomainGrid(-1.0, -1.0, 0.05, 0.05, 41, 41)
    P = pot.vacuum_potential(0.25, g)
    FF = frm.integrate_frame(P, alg.LoopSampleSet(64))
    bundle = sym.compute_bundle(FF)
    return P, FF, bundle, sym.sym_nil(FF, 0.0, bundle)


finite = st.floats(-3.0, 3.0, allow_nan=False)


class TestNilIsometry:
    @settings(max_examples=30, deadline=None)
    @given(a1=finite, b1=finite, c1=finite, r1=finite,
           a2=finite, b2=finite, c2=finite, r2=finite,
           px=finite, py=finite, pz=finite)
    def test_compose_matches_nested_apply(self, a1, b1, c1, r1,
                                          a2, b2, c2, r2, px, py, pz):
        g1 = iso.NilIsometry(alpha=a1 + 1j * b1, a3=c1, rot=r1)
        g2 = iso.NilIsometry(alpha=a2 + 1j * b2, a3=c2, rot=r2)
        p = np.array([px, py, pz])
        np.testing.assert_allclose(g1.compose(g2).apply(p),
                                   g1.apply(g2.apply(p)), atol=1e-12)

    def test_spot_values(self):
        p = np.array([1.0, 0.0, 0.0])
        quarter = iso.NilIsometry(rot=np.pi / 2)
        np.testing.assert_allclose(quarter.apply(p), [0, 1, 0], atol=1e-15)
        # horizontal translation twists the height by Im(conj(alpha) z)/2
        shift = iso.NilIsometry(alpha=1j)
        np.testing.assert_allclose(iso.nil_act(shift, p), [1, 1, -0.5],
                                   atol=1e-15)

    def test_translation_motion_parameter(self):
        g = iso.translation_motion(0.2 + 0.1j)
        assert g.alpha == -4j * (0.2 + 0.1j)
        assert g.a3 == 0.0 and g.rot == 0.0


class TestLoopConstructors:
    def test_all_three_stay_in_class(self):
        loops = alg.LoopSampleSet(64)
        for M in (iso.make_rotation_loop(loops, 0.35),
                  iso.make_translation_loop(loops, 0.2 + 0.1j),
                  iso.make_boost_loop(loops, ALPHA, BETA)):
            assert alg.su11_residual(M) < 1e-14
            assert alg.twisted_residual(M) < 1e-14

    def test_boost_loop_hits_the_boost_at_unity(self):
        loops = alg.LoopSampleSet(64)
        M = iso.make_boost_loop(loops, ALPHA, BETA)
        want = np.array([[ALPHA, BETA], [np.conj(BETA), ALPHA]])
        assert np.abs(M[0] - want).max() < 1e-14
        # identity member for the trivial parameter pair
        E = iso.make_boost_loop(loops, 1.0, 0.0)
        assert np.array_equal(E, np.broadcast_to(np.eye(2), (64, 2, 2)))

    def test_translation_loop_generator(self):
        loops = alg.LoopSampleSet(64)
        w = 0.2 + 0.1j
        M = iso.make_translation_loop(loops, w)
        assert np.abs(M[0] - np.eye(2)).max() == 0.0
        X = alg.theta_derivative(M, loops) @ alg.inv2(M)
        want = -2.0 * np.array([[0, w], [np.conj(w), 0]])
        assert np.abs(X[0] - want).max() < 1e-13

    def test_bad_boost_parameters_rejected(self):
        loops = alg.LoopSampleSet(16)
        with pytest.raises(ValueError, match="alpha\\^2"):
            iso.make_boost_loop(loops, 1.2, 0.3)
        with pytest.raises(ValueError, match="positive"):
            iso.make_boost_loop(loops, -ALPHA, 1.0)
        with pytest.raises(ValueError, match="alpha\\^2"):
            iso.boost_transform(
                iso.BoostDecomposition(*(np.zeros((2, 2)),) * 4, 0.0),
                2.0, 0.5)


class TestTransport:
    def test_shape_and_class_guards(self, vacuum):
        _, FF, _, _ = vacuum
        with pytest.raises(ValueError, match="does not match"):
            iso.transport_frame(FF, np.eye(2, dtype=complex)[None])
        scaled = np.broadcast_to(np.diag([1.1, 1.0]).astype(complex),
                                 (64, 2, 2))
        with pytest.raises(ValueError, match="SU\\(1,1\\)"):
            iso.transport_frame(FF, scaled)

    def test_untwisted_constant_boost_rejected(self, vacuum):
        # the raw constant extension of a boost is not a legal loop;
        # only the cosh(s cos theta) twisting of make_boost_loop is
        _, FF, _, _ = vacuum
        raw = np.broadcast_to(
            np.array([[ALPHA, 1.0], [1.0, ALPHA]], dtype=complex),
            (64, 2, 2))
        with pytest.raises(ValueError, match="twisted"):
            iso.transport_frame(FF, raw)

    def test_gauge_leaves_both_members(self, vacuum):
        _, FF, _, _ = vacuum
        M = iso.make_rotation_loop(FF.loops, 0.35)
        b0 = sym.compute_bundle(iso.transport_frame(FF, M, gauge=0.0))
        bg = sym.compute_bundle(iso.transport_frame(FF, M, gauge=0.4))
        assert np.abs(bg.f_mink - b0.f_mink).max() < 1e-12
        assert np.abs(bg.f_nil - b0.f_nil).max() < 1e-12

    def test_identity_family_member_is_bitwise(self, vacuum):
        _, FF, _, _ = vacuum
        (alpha, beta, FT), = list(iso.boost_family(FF, [(1.0, 0.0)]))
        assert (alpha, beta) == (1.0, 0.0)
        assert np.array_equal(FT.F, FF.F)


class TestTwoPathAgreement:
    # transported-frame route vs prediction from original data only
    def transported(self, FF, M):
        FT = iso.transport_frame(FF, M)
        return sym.compute_bundle(FT), FT

    @pytest.mark.parametrize("kind", ["rotation", "translation", "boost"])
    def test_both_members_agree(self, vacuum, kind):
        _, FF, bundle, _ = vacuum
        M = {"rotation": lambda: iso.make_rotation_loop(FF.loops, 0.35),
             "translation": lambda: iso.make_translation_loop(
                 FF.loops, 0.2 + 0.1j),
             "boost": lambda: iso.make_boost_loop(FF.loops, ALPHA, BETA),
             }[kind]()
        bt, _ = self.transported(FF, M)
        dev = max(
            np.abs(bt.f_mink - iso.predicted_l3_transform(bundle, M)).max(),
            np.abs(bt.f_nil - iso.predicted_nil_transform(bundle, M)).max())
        assert dev < 1e-10      # measured <= 1.2e-12

    def test_rotation_reduces_to_nil_rotation(self, vacuum):
        _, FF, _, base = vacuum
        M = iso.make_rotation_loop(FF.loops, 0.35)
        bt, FT = self.transported(FF, M)
        moved = sym.sym_nil(FT, 0.0, bt)
        g = iso.NilIsometry(rot=0.7)
        assert np.abs(moved.coords - g.apply(base.coords)).max() < 1e-10

    def test_translation_reduces_and_offset_is_algebraic(self, vacuum):
        _, FF, bundle, base = vacuum
        w = 0.2 + 0.1j
        M = iso.make_translation_loop(FF.loops, w)
        bt, FT = self.transported(FF, M)
        A = iso.translation_offset(bundle, M)
        assert np.abs((bt.f_nil[0] - bundle.f_nil[0]) - A).max() < 1e-10
        moved = sym.sym_nil(FT, 0.0, bt)
        g = iso.translation_motion(w)
        assert np.abs(moved.coords - g.apply(base.coords)).max() < 1e-10


class TestBoostFormulas:
    def test_decomposition_is_faithful(self, vacuum):
        _, _, bundle, _ = vacuum
        dec = iso.boost_decompose(bundle)
        assert dec.reconstruction_residual < 1e-12

    def test_closed_formula_matches_transport(self, vacuum):
        _, FF, bundle, _ = vacuum
        M = iso.make_boost_loop(FF.loops, ALPHA, BETA)
        FT = iso.transport_frame(FF, M)
        moved = sym.sym_nil(FT, 0.0, sym.compute_bundle(FT))
        closed = iso.boost_transform(iso.boost_decompose(bundle),
                                     ALPHA, BETA)
        assert np.abs(closed - moved.coords).max() < 1e-10

    def test_vertical_discrepancy_defeats_affine_fit(self, vacuum):
        _, FF, bundle, base = vacuum
        closed = iso.boost_transform(iso.boost_decompose(bundle),
                                     ALPHA, BETA)
        witness, _ = iso.affine_fit_residual(
            base.coords[..., 0], base.coords[..., 1],
            closed[..., 2] - base.coords[..., 2])
        assert witness > 1.0        # measured 10.9

    def test_affine_fit_recovers_exact_planes(self):
        g = pot.DomainGrid(-1.0, -1.0, 0.05, 0.05, 41, 41)
        X, Y = g.mesh()
        res, coeffs = iso.affine_fit_residual(X, Y, 1.3 * X - 0.4 * Y + 0.77)
        assert res < 1e-12
        np.testing.assert_allclose(coeffs, [0.77, 1.3, -0.4], atol=1e-12)


class TestPhi3Law:
    def test_law_matches_derivative_route(self, vacuum):
        P, FF, bundle, _ = vacuum
        M = iso.make_boost_loop(FF.loops, ALPHA, BETA)
        FT = iso.transport_frame(FF, M)
        moved = sym.sym_nil(FT, 0.0, sym.compute_bundle(FT))
        phi = geo.phi_from_spinors(frm.extract_spinors(FF.at_unity, P.h))
        law = iso.phi3_transform(phi.phi1, phi.phi2, phi.phi3, ALPHA, BETA)
        fd = geo.phi_coefficients(moved)
        # second-order stencils on cosh-sized fields: measured 1.9e-3
        assert np.abs((fd.phi3 - law)[1:-1, 1:-1]).max() < 1e-2

    def test_basepoint_value_and_sign_flip(self, vacuum):
        P, FF, _, _ = vacuum
        phi = geo.phi_from_spinors(frm.extract_spinors(FF.at_unity, P.h))
        i, j = FF.basepoint
        args = (phi.phi1, phi.phi2, phi.phi3)
        plus = iso.phi3_transform(*args, ALPHA, BETA)[i, j]
        minus = iso.phi3_transform(*args, ALPHA, -BETA)[i, j]
        assert abs(plus - 2 * np.conj(ALPHA * BETA)) < 1e-5
        assert abs(plus - minus) > 1e-3

"""Isometry actions, frame transport, and the boost family.

A rigid motion of the Minkowski member corresponds to replacing the
frame family by M(theta) F k with a loop M of SU(1,1) matrices and a
constant unitary diagonal gauge k.  The induced transformation laws are

    f_mink -> Ad(M) f_mink - X
    f_nil  -> (Ad(M) f_mink - X)^off
              - (1/2) {Ad(M)(d f_mink) + [X, Ad(M) f_mink] - Y}^diag

with X = (dM/dtheta) M^{-1} and Y = dX/dtheta.  Three generator types
are exercised: rotation loops (constant, diagonal), translation loops
(identity at theta = 0 with nonzero first derivative), and boosts.  A
constant boost loop is not twisted, so boosts ride a minimal twisted
extension M(theta) = cosh(s cos theta) I + sinh(s cos theta) What that
agrees with the boost at theta = 0 and has vanishing first derivative
there; every lam = 1 prediction is unchanged by this choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra as alg
from .frame import FrameField
from .sym import SymBundle


@dataclass(frozen=True)
class NilIsometry:
    """Element of the identity component: rotation, then translation.

    Acts by (z, x3) -> (e^{i rot} z + alpha, x3 + Im(conj(alpha)
    e^{i rot} z)/2 + a3) with z = x1 + i x2.
    """

    alpha: complex = 0.0
    a3: float = 0.0
    rot: float = 0.0

    def apply(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        z = coords[..., 0] + 1j * coords[..., 1]
        phase = np.exp(1j * self.rot)
        znew = phase * z + self.alpha
        x3 = (coords[..., 2] + 0.5 * np.imag(np.conj(self.alpha) * phase * z)
              + self.a3)
        return np.stack([znew.real, znew.imag, x3], axis=-1)

    def compose(self, other: "NilIsometry") -> "NilIsometry":
        """self after other: (self.compose(other)).apply == self(other(p))."""
        phase = np.exp(1j * self.rot)
        return NilIsometry(
            alpha=self.alpha + phase * other.alpha,
            a3=self.a3 + other.a3
            + 0.5 * float(np.imag(np.conj(self.alpha) * phase * other.alpha)),
            rot=self.rot + other.rot)


def nil_act(g: NilIsometry, coords: np.ndarray) -> np.ndarray:
    return g.apply(coords)


@dataclass
class BoostDecomposition:
    """Pointwise (p, q, r, s) data of the lam = 1 Minkowski member.

    p and r are the imaginary parts of the purely imaginary diagonal
    entries of f_mink and -(1/2) d/dtheta f_mink; q and s the
    corresponding upper-right entries.
    """

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    reconstruction_residual: float


def boost_decompose(bundle: SymBundle, theta_index: int = 0
                    ) -> BoostDecomposition:
    fm = bundle.f_mink[theta_index]
    dm = -0.5 * bundle.df_mink[theta_index]
    resid = max(float(np.abs(fm[..., 0, 0].real).max()),
                float(np.abs(dm[..., 0, 0].real).max()))
    return BoostDecomposition(p=fm[..., 0, 0].imag, q=fm[..., 0, 1].copy(),
                              r=dm[..., 0, 0].imag, s=dm[..., 0, 1].copy(),
                              reconstruction_residual=resid)


def _check_boost_params(alpha: float, beta: complex) -> None:
    if abs(alpha * alpha - abs(beta) ** 2 - 1.0) > 1e-12:
        raise ValueError(
            f"boost parameters violate alpha^2 - |beta|^2 = 1 "
            f"(got {alpha * alpha - abs(beta) ** 2:.15g})")
    if alpha < 0:
        raise ValueError("alpha must be positive on this sheet")


def boost_transform(dec: BoostDecomposition, alpha: float, beta: complex,
                    y11: float = 0.0) -> np.ndarray:
    """Nil coordinates of the boosted member, from the closed formula.

    The diagonal correction (1/2) Y^d enters through y11 with
    Y^d = diag(i y11, -i y11); the loops in this module all have y11 = 0
    at theta = 0.
    """
    _check_boost_params(alpha, beta)
    p = 1j * dec.p
    r = 1j * dec.r
    q, s = dec.q, dec.s
    aa = alpha * alpha
    top = ((aa + abs(beta) ** 2) * r + alpha * beta * np.conj(s)
           - alpha * np.conj(beta) * s + 0.5j * y11)
    off = -2 * alpha * beta * p + aa * q - beta ** 2 * np.conj(q)
    return np.stack([2 * off.imag, -2 * off.real, -2 * top.imag], axis=-1)


def phi3_transform(phi1: np.ndarray, phi2: np.ndarray, phi3: np.ndarray,
                   alpha: float, beta: complex) -> np.ndarray:
    """Transformation of the vertical Maurer-Cartan coefficient."""
    _check_boost_params(alpha, beta)
    ab = alpha * beta
    return ((alpha ** 2 + abs(beta) ** 2) * phi3
            + 2j * ab.real * phi1 + 2j * ab.imag * phi2)


# -- loop constructors ---------------------------------------------------

def make_rotation_loop(loops: alg.LoopSampleSet, half_angle: float
                       ) -> np.ndarray:
    """Constant diagonal loop; rotates the Nil member by 2*half_angle."""
    M = np.zeros((loops.n, 2, 2), dtype=complex)
    M[:, 0, 0] = np.exp(1j * half_angle)
    M[:, 1, 1] = np.exp(-1j * half_angle)
    return M


def make_boost_loop(loops: alg.LoopSampleSet, alpha: float, beta: complex
                    ) -> np.ndarray:
    """Twisted extension of a boost, identity-derivative at theta = 0."""
    _check_boost_params(alpha, beta)
    if beta == 0:
        return np.broadcast_to(np.eye(2, dtype=complex),
                               (loops.n, 2, 2)).copy()
    s = np.arccosh(alpha)
    unit = beta / abs(beta)
    arg = s * np.cos(loops.theta)
    M = np.zeros((loops.n, 2, 2), dtype=complex)
    M[:, 0, 0] = M[:, 1, 1] = np.cosh(arg)
    M[:, 0, 1] = np.sinh(arg) * unit
    M[:, 1, 0] = np.sinh(arg) * np.conj(unit)
    return M


def make_translation_loop(loops: alg.LoopSampleSet, w: complex) -> np.ndarray:
    """exp(-2 sin(theta) W) with W = [[0, w], [conj w, 0]]; identity at 1."""
    M = np.zeros((loops.n, 2, 2), dtype=complex)
    if w == 0:
        M[:, 0, 0] = M[:, 1, 1] = 1.0
        return M
    arg = 2 * abs(w) * np.sin(loops.theta)
    M[:, 0, 0] = M[:, 1, 1] = np.cosh(arg)
    M[:, 0, 1] = -np.sinh(arg) * w / abs(w)
    M[:, 1, 0] = -np.sinh(arg) * np.conj(w) / abs(w)
    return M


def translation_motion(w: complex) -> NilIsometry:
    """The Nil translation induced by the translation loop of parameter w."""
    return NilIsometry(alpha=-4j * w, a3=0.0, rot=0.0)


# -- transport and predictions -------------------------------------------

def transport_frame(FF: FrameField, M_loop: np.ndarray,
                    gauge: float = 0.0) -> FrameField:
    """F -> M(theta) F k with k = diag(e^{i gauge}, e^{-i gauge}).

    The loop must hold SU(1,1) samples on FF's loop set and be twisted,
    otherwise the product frames leave the symmetry class.
    """
    M_loop = np.asarray(M_loop, dtype=complex)
    if M_loop.shape != (FF.loops.n, 2, 2):
        raise ValueError(f"loop shape {M_loop.shape} does not match "
                         f"{FF.loops.n} samples")
    worst = float(alg.su11_residual(M_loop))
    if worst > 1e-12:
        raise ValueError(f"loop leaves SU(1,1) by {worst:.3e}")
    tw = float(alg.twisted_residual(M_loop))
    if tw > 1e-9:
        raise ValueError(f"loop is not twisted (residual {tw:.3e})")
    k = np.diag([np.exp(1j * gauge), np.exp(-1j * gauge)])
    F_new = M_loop[:, None, None] @ FF.F @ k
    return FrameField(FF.grid, FF.loops, F_new, FF.basepoint,
                      max_correction=FF.max_correction,
                      meta=dict(FF.meta, transported=True))


def _loop_x_y(M_loop: np.ndarray, loops: alg.LoopSampleSet):
    dM = alg.theta_derivative(M_loop, loops)
    X = dM @ alg.inv2(M_loop)
    Y = alg.theta_derivative(X, loops)
    return X, Y


def predicted_l3_transform(bundle: SymBundle, M_loop: np.ndarray
                           ) -> np.ndarray:
    """Ad(M) f_mink - X at every loop sample, as matrix fields."""
    X, _ = _loop_x_y(M_loop, bundle.loops)
    Minv = alg.inv2(M_loop)
    M_b = M_loop[:, None, None]
    Minv_b = Minv[:, None, None]
    return M_b @ bundle.f_mink @ Minv_b - X[:, None, None]


def predicted_nil_transform(bundle: SymBundle, M_loop: np.ndarray
                            ) -> np.ndarray:
    """The transformed Nil member from original-surface data only.

    Uses the original f_mink and its theta-derivative plus the loop's
    X, Y; never touches the transported frames, so a comparison against
    sym_nil(transport_frame(...)) crosses two independent routes.
    """
    X, Y = _loop_x_y(M_loop, bundle.loops)
    Minv = alg.inv2(M_loop)
    M_b = M_loop[:, None, None]
    Minv_b = Minv[:, None, None]
    X_b = X[:, None, None]
    adf = M_b @ bundle.f_mink @ Minv_b
    first = adf - X_b
    brace = (M_b @ bundle.df_mink @ Minv_b
             + X_b @ adf - adf @ X_b
             - Y[:, None, None])
    out = first.copy()
    out[..., 0, 0] = -0.5 * brace[..., 0, 0]
    out[..., 1, 1] = -0.5 * brace[..., 1, 1]
    return out


def translation_offset(bundle: SymBundle, M_loop: np.ndarray,
                       theta_index: int = 0) -> np.ndarray:
    """Pointwise offset A = -X^o - ([X, f_mink] - Y)^d / 2 at one sample."""
    X, Y = _loop_x_y(M_loop, bundle.loops)
    Xi = X[theta_index]
    Yi = Y[theta_index]
    fm = bundle.f_mink[theta_index]
    comm = Xi @ fm - fm @ Xi
    A = np.broadcast_to(-Xi, fm.shape).copy()
    A[..., 0, 0] = 0.5 * (Yi[0, 0] - comm[..., 0, 0])
    A[..., 1, 1] = 0.5 * (Yi[1, 1] - comm[..., 1, 1])
    return A


def boost_family(FF: FrameField, params, gauge: float = 0.0):
    """Transported frames for a list of (alpha, beta) boost parameters.

    Yields (alpha, beta, FrameField); surfaces, spinors and diagnostics
    are computed downstream so callers can keep memory bounded.
    """
    for alpha, beta in params:
        M = make_boost_loop(FF.loops, float(alpha), complex(beta))
        yield float(alpha), complex(beta), transport_frame(FF, M, gauge)


def affine_fit_residual(x1: np.ndarray, x2: np.ndarray, target: np.ndarray):
    """Max deviation of target from the best affine model a x1 + b x2 + c.

    The returned residual is the congruence-failure witness: a genuine
    Nil isometry matching the horizontal parts would make the vertical
    discrepancy affine in (x1, x2).
    """
    design = np.stack([np.ones(x1.size), x1.ravel(), x2.ravel()], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, target.ravel(), rcond=None)
    fit = design @ coeffs
    return float(np.abs(target.ravel() - fit).max()), coeffs

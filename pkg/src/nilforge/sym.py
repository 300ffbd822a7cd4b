"""Surface reconstruction from an integrated frame family.

Two closed-form maps turn the frames into surfaces:

    f_mink = -(d/dtheta F) F^{-1} - N,      N = (i/2) F sigma3 F^{-1}
    f_nil  = (f_mink)^off - (1/2) (d/dtheta f_mink)^diag

using the chain rule d/dtheta = i lam d/dlam on the unit circle, so all
lam-derivatives are spectral theta-derivatives.  The first lands in the
linear model of Minkowski 3-space (su(1,1) with the 2 Tr pairing), the
second in exponential coordinates of the Heisenberg group: the
coordinate triple of a point is just the basis decomposition of the
matrix, since the exponential map is the identity on coordinate triples
in this model.

With the frame pinned to the identity at the basepoint for every loop
sample, both maps send the basepoint to a fixed point ((0,0,1) and the
origin respectively); no translation is subtracted afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra as alg
from .frame import FrameField
from .potential import DomainGrid

DECOMPOSITION_TOL = 1e-10


@dataclass
class SurfaceField:
    """Coordinate triples (..., 3) of one family member on the grid."""

    grid: DomainGrid
    ambient: str               # "minkowski" | "nil"
    coords: np.ndarray
    theta: float
    theta_index: int


@dataclass
class NormalField:
    """Timelike unit normal of the Minkowski member, as coordinate triples."""

    grid: DomainGrid
    N: np.ndarray
    theta: float
    theta_index: int


@dataclass
class SymBundle:
    """All-theta matrix fields shared by both Sym maps.

    Shapes are (n_theta, nx, ny, 2, 2); decomposition_residual is the
    largest defect of f_nil against the real form (anything above
    DECOMPOSITION_TOL means a pipeline bug, not rounding).
    """

    loops: alg.LoopSampleSet
    f_mink: np.ndarray
    df_mink: np.ndarray
    normal: np.ndarray
    f_nil: np.ndarray
    decomposition_residual: float


def _diag_part(m: np.ndarray) -> np.ndarray:
    out = np.zeros_like(m)
    out[..., 0, 0] = m[..., 0, 0]
    out[..., 1, 1] = m[..., 1, 1]
    return out


def compute_bundle(FF: FrameField) -> SymBundle:
    """Evaluate both Sym maps at every loop sample."""
    loops = FF.loops
    Finv = alg.inv2(FF.F)
    dF = alg.theta_derivative(FF.F, loops)
    normal = 0.5j * (FF.F @ alg.SIGMA3) @ Finv
    f_mink = -(dF @ Finv) - normal
    del dF
    df_mink = alg.theta_derivative(f_mink, loops)
    f_nil = (f_mink - _diag_part(f_mink)) - 0.5 * _diag_part(df_mink)
    residual = float(np.max(alg.su11_decomposition_residual(f_nil)))
    return SymBundle(loops, f_mink, df_mink, normal, f_nil, residual)


def _theta_index(loops: alg.LoopSampleSet, theta: float) -> int:
    rel = np.mod(np.asarray(loops.theta) - theta, 2 * np.pi)
    rel = np.minimum(rel, 2 * np.pi - rel)
    idx = int(np.argmin(rel))
    if rel[idx] > 1e-12:
        raise ValueError(f"theta = {theta} is not a loop sample")
    return idx


def sym_minkowski(FF: FrameField, theta: float = 0.0,
                  bundle: SymBundle | None = None):
    """Surface and unit normal of the Minkowski member at one loop angle."""
    if bundle is None:
        bundle = compute_bundle(FF)
    i = _theta_index(FF.loops, theta)
    surf = SurfaceField(FF.grid, "minkowski",
                        alg.matrix_to_vector(bundle.f_mink[i]),
                        float(FF.loops.theta[i]), i)
    nrm = NormalField(FF.grid, alg.matrix_to_vector(bundle.normal[i]),
                      float(FF.loops.theta[i]), i)
    return surf, nrm


def sym_nil(FF: FrameField, theta: float = 0.0,
            bundle: SymBundle | None = None) -> SurfaceField:
    """The Heisenberg-group member at one loop angle, exponential coords."""
    if bundle is None:
        bundle = compute_bundle(FF)
    if bundle.decomposition_residual > DECOMPOSITION_TOL:
        raise ValueError(
            f"output leaves the real form by {bundle.decomposition_residual:.3e}")
    i = _theta_index(FF.loops, theta)
    return SurfaceField(FF.grid, "nil",
                        alg.matrix_to_vector(bundle.f_nil[i]),
                        float(FF.loops.theta[i]), i)


def associated_family(FF: FrameField, report_every: int = 1):
    """(theta, nil member, Minkowski member) at every loop sample.

    report_every > 1 returns the decimated subset (oversampled loop sets
    keep their extra samples for the spectral derivative only).
    """
    bundle = compute_bundle(FF)
    out = []
    for i in range(0, FF.loops.n, report_every):
        theta = float(FF.loops.theta[i])
        nil = sym_nil(FF, theta, bundle)
        mink, _ = sym_minkowski(FF, theta, bundle)
        out.append((theta, nil, mink))
    return out


def embed_nil_matrix(x: np.ndarray) -> np.ndarray:
    """Debug formatter: the 4x4 matrix model of a coordinate triple."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (4, 4))
    out[..., 0, 0] = np.exp(x[..., 0])
    out[..., 1, 1] = out[..., 2, 2] = out[..., 3, 3] = 1.0
    out[..., 1, 2] = x[..., 0]
    out[..., 1, 3] = x[..., 2] + 0.5 * x[..., 0] * x[..., 1]
    out[..., 2, 3] = x[..., 1]
    return out

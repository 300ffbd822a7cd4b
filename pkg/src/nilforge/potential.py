"""Analytic input data on a conformal grid.

A potential is the pair (v, B) on a rectangular grid in the conformal
coordinate z = x + iy: the real scalar v fixes the support h = 4 e^{v/2}
of the surface, and B is a sampled holomorphic coefficient.  Admissible
pairs satisfy the reduced compatibility equation

    lap v = 8 (e^v - |B|^2 e^{-v}),

obtained by expanding the zero-curvature condition of the connection
built in frame.build_alpha (2x2 expansion, mean curvature of the
auxiliary surface frozen to 0).  The module provides the constant
(vacuum) solution, a damped Newton solver for the equation above, and
JSON persistence.

Grids are indexed [j, k] with z_{jk} = (x0 + j dx) + i (y0 + k dy).
"""

from __future__ import annotations

import json
import numbers
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve


class NonConvergence(RuntimeError):
    """Newton iteration hit its cap; carries the last residual norm."""

    def __init__(self, message: str, last_residual: float):
        super().__init__(message)
        self.last_residual = last_residual


class SingularCoefficient(ValueError):
    """|B| vanishes (or nearly) somewhere the solver needs it positive."""


class PotentialFileError(ValueError):
    """Malformed potential document."""


@dataclass(frozen=True)
class DomainGrid:
    """Rectangular conformal grid, at least 5 nodes per axis."""

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid spacings must be positive")
        if self.nx < 5 or self.ny < 5:
            raise ValueError("central differences need nx, ny >= 5")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def mesh(self):
        """(X, Y) arrays of shape (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def zz(self) -> np.ndarray:
        xs, ys = self.mesh()
        return xs + 1j * ys

    @property
    def shape(self):
        return (self.nx, self.ny)

    def center_index(self):
        return (self.nx // 2, self.ny // 2)


@dataclass
class PotentialField:
    """Scalar v and holomorphic coefficient B sampled on a grid.

    The support h = 4 e^{v/2} is positive by construction; B may vanish
    for hand-built fields but the vacuum generator and the PDE solver
    both require |B| > 0.
    """

    grid: DomainGrid
    v: np.ndarray
    B: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.B = np.asarray(self.B, dtype=complex)
        if self.v.shape != self.grid.shape or self.B.shape != self.grid.shape:
            raise ValueError(
                f"field shapes {self.v.shape}, {self.B.shape} do not match "
                f"grid {self.grid.shape}")

    @property
    def h(self) -> np.ndarray:
        return 4.0 * np.exp(0.5 * self.v)


# -- finite differences ------------------------------------------------
#
# Central second-order stencils on the interior; second-order one-sided
# stencils fill the boundary so derived fields keep the grid shape.
# Residual checks slice to the interior and never read the one-sided rows.

def diff_x(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(np.asarray(f, dtype=np.result_type(f, 1.0)))
    out[1:-1] = (f[2:] - f[:-2]) / (2 * dx)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dx)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dx)
    return out


def diff_y(f: np.ndarray, dy: float) -> np.ndarray:
    out = np.empty_like(np.asarray(f, dtype=np.result_type(f, 1.0)))
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * dy)
    out[:, 0] = (-3 * f[:, 0] + 4 * f[:, 1] - f[:, 2]) / (2 * dy)
    out[:, -1] = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) / (2 * dy)
    return out


def diff_xx(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(np.asarray(f, dtype=np.result_type(f, 1.0)))
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / dx ** 2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / dx ** 2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / dx ** 2
    return out


def diff_yy(f: np.ndarray, dy: float) -> np.ndarray:
    return np.swapaxes(diff_xx(np.swapaxes(f, 0, 1), dy), 0, 1)


def diff_z(f: np.ndarray, grid: DomainGrid) -> np.ndarray:
    """d/dz = (d/dx - i d/dy)/2 for z = x + iy."""
    return 0.5 * (diff_x(f, grid.dx) - 1j * diff_y(f, grid.dy))


def diff_zbar(f: np.ndarray, grid: DomainGrid) -> np.ndarray:
    return 0.5 * (diff_x(f, grid.dx) + 1j * diff_y(f, grid.dy))


def laplacian5(f: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """5-point Laplacian, interior nodes only: shape (nx-2, ny-2)."""
    return ((f[2:, 1:-1] - 2 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / dx ** 2
            + (f[1:-1, 2:] - 2 * f[1:-1, 1:-1] + f[1:-1, :-2]) / dy ** 2)


# -- generators --------------------------------------------------------

def vacuum_potential(B0: complex, grid: DomainGrid) -> PotentialField:
    """Constant solution: v = log|B0|, B = B0.

    Plugging constants into the compatibility equation kills the Laplacian,
    and the right side vanishes exactly when e^{2v} = |B0|^2.
    """
    B0 = complex(B0)
    if B0 == 0:
        raise ValueError("vacuum data needs a nonzero coefficient")
    v = np.full(grid.shape, np.log(abs(B0)))
    B = np.full(grid.shape, B0, dtype=complex)
    return PotentialField(grid, v, B, meta={"generator": "vacuum",
                                            "residual": 0.0})


def sample_polynomial(coeffs, grid: DomainGrid) -> np.ndarray:
    """Sample sum_k coeffs[k] z^k on the grid (exactly holomorphic data)."""
    return np.polynomial.polynomial.polyval(grid.zz, np.asarray(coeffs,
                                                                dtype=complex))


# -- the reduced compatibility equation --------------------------------

def pde_residual(v: np.ndarray, B: np.ndarray, grid: DomainGrid) -> np.ndarray:
    """Interior residual of lap v - 8(e^v - |B|^2 e^{-v})."""
    rhs = 8.0 * (np.exp(v) - np.abs(B) ** 2 * np.exp(-v))
    return laplacian5(v, grid.dx, grid.dy) - rhs[1:-1, 1:-1]


def _interior_laplacian_matrix(grid: DomainGrid) -> sp.csr_matrix:
    mx, my = grid.nx - 2, grid.ny - 2
    tx = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(mx, mx)) / grid.dx ** 2
    ty = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(my, my)) / grid.dy ** 2
    return (sp.kron(tx, sp.eye(my)) + sp.kron(sp.eye(mx), ty)).tocsr()


def solve_flatness_pde(B, grid: DomainGrid, boundary=None,
                       tol: float = 1e-10, max_iter: int = 25
                       ) -> PotentialField:
    """Damped Newton for lap v = 8(e^v - |B|^2 e^{-v}) with Dirichlet data.

    boundary: None (default) takes v = log|B| on the perimeter, a scalar
    is used verbatim, and a full (nx, ny) array contributes its perimeter.
    The initial guess is v0 = log|B|, which is exact for constant B.
    """
    B = np.broadcast_to(np.asarray(B, dtype=complex), grid.shape).copy()
    absB = np.abs(B)
    if absB.min() < 1e-12:
        raise SingularCoefficient(
            f"|B| reaches {absB.min():.3e}; the equation degenerates")

    v = np.log(absB)
    if boundary is not None:
        if isinstance(boundary, numbers.Real):
            bvals = np.full(grid.shape, float(boundary))
        else:
            bvals = np.asarray(boundary, dtype=float)
            if bvals.shape != grid.shape:
                raise ValueError("boundary array must have the grid shape")
        v[0, :], v[-1, :] = bvals[0, :], bvals[-1, :]
        v[:, 0], v[:, -1] = bvals[:, 0], bvals[:, -1]

    lap = _interior_laplacian_matrix(grid)
    res = pde_residual(v, B, grid)
    res_norm = np.max(np.abs(res))
    for steps in range(max_iter):
        if res_norm < tol:
            return PotentialField(grid, v, B,
                                  meta={"generator": "pde_solver",
                                        "residual": float(res_norm),
                                        "iterations": steps})
        inner = (slice(1, -1), slice(1, -1))
        weight = 8.0 * (np.exp(v[inner]) + absB[inner] ** 2
                        * np.exp(-v[inner]))
        jac = lap - sp.diags(weight.ravel())
        step = spsolve(jac.tocsr(), -res.ravel()).reshape(res.shape)

        t = 1.0
        for _ in range(20):
            trial = v.copy()
            trial[inner] += t * step
            trial_res = pde_residual(trial, B, grid)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < res_norm:
                break
            t *= 0.5
        else:
            raise NonConvergence("line search stalled", float(res_norm))
        v, res, res_norm = trial, trial_res, trial_norm

    if res_norm < tol:
        return PotentialField(grid, v, B, meta={"generator": "pde_solver",
                                                "residual": float(res_norm),
                                                "iterations": max_iter})
    raise NonConvergence(
        f"residual {res_norm:.3e} after {max_iter} iterations", float(res_norm))


def flatness_residual(P: PotentialField, theta: float = 0.0) -> np.ndarray:
    """Curvature of the connection at one loop angle, interior max-norm.

    Evaluates d/dzbar U - d/dz V - [U, V] with (U, V) from
    frame.build_alpha, derivatives by central differences.  For constant
    coefficients this is zero to rounding; for solver output it carries
    the O(dx^2 + dy^2) truncation of the scalar equation.
    """
    from .frame import build_alpha  # deferred: frame imports this module

    U, V = build_alpha(P, theta)
    curv = (diff_zbar(U, P.grid) - diff_z(V, P.grid)
            - (U @ V - V @ U))
    return np.max(np.abs(curv[1:-1, 1:-1]), axis=(-2, -1))


def holomorphy_residual(P: PotentialField) -> np.ndarray:
    """|d/dzbar B| at interior nodes; zero for genuinely holomorphic data."""
    return np.abs(diff_zbar(P.B, P.grid)[1:-1, 1:-1])


# -- persistence --------------------------------------------------------
#
# Document schema (version 1):
#   {"version": 1,
#    "grid": {"x0","y0","dx","dy","nx","ny"},
#    "v": [...], "B_re": [...], "B_im": [...],   row-major, index j*ny + k
#    "meta": {"generator": str, "residual": float}}
# Floats go through json's repr serialization, which round-trips doubles.

_GRID_KEYS = ("x0", "y0", "dx", "dy", "nx", "ny")


def potential_to_document(P: PotentialField) -> dict:
    return {
        "version": 1,
        "grid": {k: getattr(P.grid, k) for k in _GRID_KEYS},
        "v": P.v.ravel().tolist(),
        "B_re": P.B.real.ravel().tolist(),
        "B_im": P.B.imag.ravel().tolist(),
        "meta": {"generator": P.meta.get("generator", "unknown"),
                 "residual": float(P.meta.get("residual", float("nan")))},
    }


def document_to_potential(doc: dict) -> PotentialField:
    if not isinstance(doc, dict) or "version" not in doc:
        raise PotentialFileError("missing version field")
    if doc["version"] != 1:
        raise PotentialFileError(f"unsupported version {doc['version']!r}")
    for key in ("grid", "v", "B_re", "B_im"):
        if key not in doc:
            raise PotentialFileError(f"missing field {key!r}")
    gspec = doc["grid"]
    if not all(k in gspec for k in _GRID_KEYS):
        raise PotentialFileError("incomplete grid spec")
    grid = DomainGrid(float(gspec["x0"]), float(gspec["y0"]),
                      float(gspec["dx"]), float(gspec["dy"]),
                      int(gspec["nx"]), int(gspec["ny"]))
    n = grid.nx * grid.ny
    arrays = {}
    for key in ("v", "B_re", "B_im"):
        vals = doc[key]
        if len(vals) != n:
            raise PotentialFileError(
                f"{key} has {len(vals)} entries, grid wants {n}")
        arrays[key] = np.asarray(vals, dtype=float).reshape(grid.shape)
    B = arrays["B_re"] + 1j * arrays["B_im"]
    return PotentialField(grid, arrays["v"], B, meta=dict(doc.get("meta", {})))


def save_potential(P: PotentialField, path) -> None:
    with open(path, "w") as fh:
        json.dump(potential_to_document(P), fh)


def load_potential(path) -> PotentialField:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PotentialFileError(f"not valid JSON: {exc}") from exc
    return document_to_potential(doc)

"""Extended-frame integration over the grid.

The connection form is alpha = U dz + V dzbar with

    U = [[w_z/4, -e^{w/2}/lam], [lam^{-1} B e^{-w/2}, -w_z/4]]
    V = [[-w_zbar/4, -lam conj(B) e^{-w/2}], [lam e^{w/2}, w_zbar/4]]

where e^{w/2} = (i/4) h = i e^{v/2} and lam = e^{i theta} runs over a
LoopSampleSet.  The frame solves dF = F alpha with F = identity at the
basepoint, integrated by RK4 along a spine row and then the columns,
re-projected to SU(1,1) after every step.  In real coordinates the
right-hand sides are F_x = F (U + V) and F_y = F i(U - V).

Frames are stored theta-major: F[i, j, k] is the 2x2 matrix at loop
sample i and grid node (j, k).
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import algebra as alg
from .potential import DomainGrid, PotentialField, diff_z, flatness_residual

ROOT_I = np.exp(0.25j * np.pi)

_CACHE_MAGIC = b"NFRM"
_CACHE_VERSION = 1


class SingularSupport(ValueError):
    """Support h collapsed below 1e-12 (vertical point)."""


class ProjectionFailure(RuntimeError):
    """Group projection needed a correction above the configured limit."""


class FlatnessError(ValueError):
    """Input potential fails the compatibility equation too badly."""


@dataclass
class FrameField:
    """Integrated frames F[i, j, k], with F = I at the basepoint."""

    grid: DomainGrid
    loops: alg.LoopSampleSet
    F: np.ndarray
    basepoint: tuple
    max_correction: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def at_unity(self) -> np.ndarray:
        """The lam = 1 slice (loop sample 0 has theta = 0)."""
        return self.F[0]


@dataclass
class SpinorField:
    """Generating spinors at lam = 1: 2(|psi1|^2 - |psi2|^2) = h."""

    psi1: np.ndarray
    psi2: np.ndarray


def _coefficient_fields(P: PotentialField):
    """Scalar fields entering alpha; raises on vanishing support."""
    h = P.h
    if h.min() < 1e-12:
        raise SingularSupport(f"support reaches {h.min():.3e}")
    ew2 = 0.25j * h                      # e^{w/2}
    emw2 = -1j * np.exp(-0.5 * P.v)      # e^{-w/2} = 1/(i e^{v/2})
    wz = diff_z(P.v, P.grid)             # w = v + i pi, so w_z = v_z
    return wz, ew2, P.B * emw2, np.conj(P.B) * emw2


def build_alpha(P: PotentialField, theta: float):
    """(U, V) at every grid node for one loop angle, shapes (nx, ny, 2, 2)."""
    wz, ew2, B_emw2, Bc_emw2 = _coefficient_fields(P)
    lam = np.exp(1j * theta)
    lamc = np.conj(lam)
    U = np.zeros(P.grid.shape + (2, 2), dtype=complex)
    V = np.zeros_like(U)
    U[..., 0, 0] = 0.25 * wz
    U[..., 1, 1] = -0.25 * wz
    U[..., 0, 1] = -lamc * ew2
    U[..., 1, 0] = lamc * B_emw2
    wzb = np.conj(wz)
    V[..., 0, 0] = -0.25 * wzb
    V[..., 1, 1] = 0.25 * wzb
    V[..., 0, 1] = -lam * Bc_emw2
    V[..., 1, 0] = lam * ew2
    return U, V


def _slab_x(coeff, lam, lamc, j):
    """A_x = U + V on grid column j, batched over loops: (n_theta, ny, 2, 2)."""
    wz, ew2, B_emw2, Bc_emw2 = (c[j] for c in coeff)
    n = lam.shape[0]
    out = np.zeros((n, wz.shape[0], 2, 2), dtype=complex)
    diag = 0.25 * (wz - np.conj(wz))
    out[..., 0, 0] = diag
    out[..., 1, 1] = -diag
    out[..., 0, 1] = -(lamc[:, None] * ew2 + lam[:, None] * Bc_emw2)
    out[..., 1, 0] = lamc[:, None] * B_emw2 + lam[:, None] * ew2
    return out


def _slab_y(coeff, lam, lamc, k):
    """A_y = i(U - V) on grid row k, batched over loops: (n_theta, nx, 2, 2)."""
    wz, ew2, B_emw2, Bc_emw2 = (c[:, k] for c in coeff)
    n = lam.shape[0]
    out = np.zeros((n, wz.shape[0], 2, 2), dtype=complex)
    diag = 0.25j * (wz + np.conj(wz))
    out[..., 0, 0] = diag
    out[..., 1, 1] = -diag
    out[..., 0, 1] = 1j * (-lamc[:, None] * ew2 + lam[:, None] * Bc_emw2)
    out[..., 1, 0] = 1j * (lamc[:, None] * B_emw2 - lam[:, None] * ew2)
    return out


def _rk4_step(F, A0, A1, step):
    """One RK4 step of F' = F A, midpoint coefficient by linear interpolation."""
    Am = 0.5 * (A0 + A1)
    k1 = F @ A0
    k2 = (F + (0.5 * step) * k1) @ Am
    k3 = (F + (0.5 * step) * k2) @ Am
    k4 = (F + step * k3) @ A1
    return F + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Marcher:
    """Carries projection bookkeeping through the sweeps."""

    def __init__(self, limit):
        self.limit = limit
        self.max_correction = 0.0

    def advance(self, F, A0, A1, step):
        nxt, corr = alg.su11_project(_rk4_step(F, A0, A1, step))
        if corr > self.limit:
            raise ProjectionFailure(
                f"projection correction {corr:.3e} exceeds {self.limit:.1e}; "
                "refine the grid")
        if corr > self.max_correction:
            self.max_correction = corr
        return nxt


def _integrate_block(P, lam, spine, basepoint, limit, out):
    """Fill out[i] for the loop samples lam; returns max projection correction.

    The sweep pattern is identical for every loop sample, so a block is
    just the batched version of the single-sample integration; results
    for a given sample do not depend on which block it lands in.
    """
    grid = P.grid
    j0, k0 = basepoint
    coeff = _coefficient_fields(P)
    lamc = np.conj(lam)
    m = _Marcher(limit)
    n = lam.shape[0]

    if spine == "row":
        # spine along y = const (vary j), then every column in parallel
        spine_F = np.empty((n, grid.nx, 2, 2), dtype=complex)
        spine_F[:, j0] = np.eye(2)
        Ax = lambda j: _slab_x(coeff, lam, lamc, j)[:, k0]  # noqa: E731
        cur = Ax(j0)
        for j in range(j0 + 1, grid.nx):
            nxt = Ax(j)
            spine_F[:, j] = m.advance(spine_F[:, j - 1], cur, nxt, grid.dx)
            cur = nxt
        cur = Ax(j0)
        for j in range(j0 - 1, -1, -1):
            nxt = Ax(j)
            spine_F[:, j] = m.advance(spine_F[:, j + 1], cur, nxt, -grid.dx)
            cur = nxt

        out[:, :, k0] = spine_F
        cur = _slab_y(coeff, lam, lamc, k0)
        state = spine_F.copy()
        for k in range(k0 + 1, grid.ny):
            nxt = _slab_y(coeff, lam, lamc, k)
            state = m.advance(state, cur, nxt, grid.dy)
            out[:, :, k] = state
            cur = nxt
        cur = _slab_y(coeff, lam, lamc, k0)
        state = spine_F
        for k in range(k0 - 1, -1, -1):
            nxt = _slab_y(coeff, lam, lamc, k)
            state = m.advance(state, cur, nxt, -grid.dy)
            out[:, :, k] = state
            cur = nxt
    elif spine == "column":
        spine_F = np.empty((n, grid.ny, 2, 2), dtype=complex)
        spine_F[:, k0] = np.eye(2)
        Ay = lambda k: _slab_y(coeff, lam, lamc, k)[:, j0]  # noqa: E731
        cur = Ay(k0)
        for k in range(k0 + 1, grid.ny):
            nxt = Ay(k)
            spine_F[:, k] = m.advance(spine_F[:, k - 1], cur, nxt, grid.dy)
            cur = nxt
        cur = Ay(k0)
        for k in range(k0 - 1, -1, -1):
            nxt = Ay(k)
            spine_F[:, k] = m.advance(spine_F[:, k + 1], cur, nxt, -grid.dy)
            cur = nxt

        out[:, j0, :] = spine_F
        cur = _slab_x(coeff, lam, lamc, j0)
        state = spine_F.copy()
        for j in range(j0 + 1, grid.nx):
            nxt = _slab_x(coeff, lam, lamc, j)
            state = m.advance(state, cur, nxt, grid.dx)
            out[:, j, :] = state
            cur = nxt
        cur = _slab_x(coeff, lam, lamc, j0)
        state = spine_F
        for j in range(j0 - 1, -1, -1):
            nxt = _slab_x(coeff, lam, lamc, j)
            state = m.advance(state, cur, nxt, -grid.dx)
            out[:, j, :] = state
            cur = nxt
    else:
        raise ValueError(f"spine must be 'row' or 'column', got {spine!r}")
    return m.max_correction


def integrate_frame(P: PotentialField, loops: alg.LoopSampleSet,
                    basepoint=None, spine: str = "row",
                    flatness_threshold: float | None = 1e-5,
                    projection_limit: float = 1e-3,
                    threads: int = 1) -> FrameField:
    """Integrate the extended frame for every loop sample.

    flatness_threshold guards the precondition that (v, B) actually
    satisfies the compatibility equation (None skips the check).  threads
    splits the loop samples into contiguous blocks; each sample's frames
    are computed independently, so results are bitwise identical for any
    thread count.
    """
    grid = P.grid
    if basepoint is None:
        basepoint = grid.center_index()
    j0, k0 = basepoint
    if not (0 <= j0 < grid.nx and 0 <= k0 < grid.ny):
        raise ValueError(f"basepoint {basepoint} outside grid {grid.shape}")

    if flatness_threshold is not None:
        worst = float(np.max(flatness_residual(P, 0.0)))
        if worst > flatness_threshold:
            raise FlatnessError(
                f"flatness residual {worst:.3e} exceeds "
                f"{flatness_threshold:.1e}")

    F = np.empty((loops.n, grid.nx, grid.ny, 2, 2), dtype=complex)
    if threads <= 1:
        corr = _integrate_block(P, loops.lam, spine, basepoint,
                                projection_limit, F)
    else:
        bounds = np.linspace(0, loops.n, min(threads, loops.n) + 1,
                             dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_integrate_block, P, loops.lam[a:b], spine,
                                basepoint, projection_limit, F[a:b])
                    for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            corr = max(f.result() for f in futs)

    return FrameField(grid, loops, F, (j0, k0), max_correction=float(corr),
                      meta={"spine": spine})


def extract_spinors(frame_at_unity: np.ndarray, h: np.ndarray) -> SpinorField:
    """Spinors from the first frame row at lam = 1.

    psi_j = e^{i pi/4} sqrt(h/2) F[0, j-1]; the branch of sqrt(i) is
    pinned to the principal one, any fixed choice gives congruent output.
    """
    h = np.asarray(h, dtype=float)
    if h.min() <= 0:
        raise SingularSupport("support must be positive")
    scale = ROOT_I * np.sqrt(0.5 * h)
    return SpinorField(psi1=scale * frame_at_unity[..., 0, 0],
                       psi2=scale * frame_at_unity[..., 0, 1])


def dirac_residual(S: SpinorField, P: PotentialField) -> np.ndarray:
    """Interior max-abs defect of the first-order spinor system.

    The pair must satisfy d/dz psi2 = -e^{w/2} psi1 and
    d/dzbar psi1 = e^{w/2} psi2, with e^{w/2} = (i/4) h.
    """
    from .potential import diff_zbar
    ew2 = 0.25j * P.h
    r1 = diff_z(S.psi2, P.grid) + ew2 * S.psi1
    r2 = diff_zbar(S.psi1, P.grid) - ew2 * S.psi2
    stack = np.stack([np.abs(r1), np.abs(r2)])
    return np.max(stack, axis=0)[1:-1, 1:-1]


# -- binary cache -------------------------------------------------------
#
# Layout: magic "NFRM", uint32 version, float64 x0 y0 dx dy, int64 nx ny
# n_theta j0 k0, float64 max_correction, then the frame array as raw
# little-endian complex128 in C order (theta-major).

_HEADER = struct.Struct("<4sI4d5qd")


def save_frame_cache(FF: FrameField, path) -> None:
    g = FF.grid
    header = _HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, g.x0, g.y0, g.dx,
                          g.dy, g.nx, g.ny, FF.loops.n, FF.basepoint[0],
                          FF.basepoint[1], FF.max_correction)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(FF.F, dtype="<c16").tobytes())


def load_frame_cache(path) -> FrameField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != _CACHE_MAGIC:
        raise ValueError("not a frame cache file")
    (_, ver, x0, y0, dx, dy, nx, ny, n_theta, j0, k0,
     corr) = _HEADER.unpack_from(raw)
    if ver != _CACHE_VERSION:
        raise ValueError(f"unsupported cache version {ver}")
    grid = DomainGrid(x0, y0, dx, dy, int(nx), int(ny))
    count = n_theta * nx * ny * 4
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != count:
        raise ValueError("cache payload truncated")
    F = body.reshape(n_theta, nx, ny, 2, 2).astype(complex)
    return FrameField(grid, alg.LoopSampleSet(int(n_theta)), F,
                      (int(j0), int(k0)), max_correction=float(corr))

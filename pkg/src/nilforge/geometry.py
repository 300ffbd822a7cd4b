"""Differential-geometric diagnostics on computed surfaces.

Everything here works on sampled coordinate fields with second-order
central differences (one-sided stencils of the same order fill boundary
rows so fields keep the grid shape; quantitative checks should read the
interior).  Sign conventions for the mean curvature and the quadratic
coefficient are pinned by the constant-coefficient surface: the
Minkowski member must come out with H = +1/2 and Q = -4 lam^{-2} B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frame import SpinorField
from .potential import (DomainGrid, diff_x, diff_xx, diff_y, diff_yy, diff_z,
                        diff_zbar)
from .sym import SurfaceField, NormalField


class DegenerateMetric(ValueError):
    """Conformal factor collapsed; curvature would divide by ~0."""


class NonPositiveSupport(ValueError):
    pass


class NotUpward(ValueError):
    """Gauss map left the unit disc, normal no longer future-pointing."""


@dataclass
class MetricField:
    """Conformal factor e_u and the conformality defect |<f_z, f_z>|."""

    e_u: np.ndarray
    conformality: np.ndarray


@dataclass
class PhiField:
    """Coefficients of f^{-1} f_z in the left-invariant frame."""

    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray

    def conformality(self) -> np.ndarray:
        return np.abs(self.phi1 ** 2 + self.phi2 ** 2 + self.phi3 ** 2)

    def norm_sq(self) -> np.ndarray:
        return (np.abs(self.phi1) ** 2 + np.abs(self.phi2) ** 2
                + np.abs(self.phi3) ** 2)


@dataclass
class GaussMapReport:
    g: np.ndarray
    harmonic_residual: np.ndarray
    min_gz: float
    min_gzbar: float


@dataclass
class GraphReport:
    """Injectivity surrogate for the vertical projection."""

    jacobian_min_abs: float
    sign_constant: bool
    collisions: int
    min_e_u: float

    @property
    def passed(self) -> bool:
        return (self.sign_constant and self.jacobian_min_abs > 0
                and self.collisions == 0)


def _coordinate_dz(surf: SurfaceField) -> np.ndarray:
    return diff_z(surf.coords, surf.grid)


def l3_first_fundamental(surf: SurfaceField) -> MetricField:
    """Metric of a spacelike immersion into the Lorentz model."""
    fz = _coordinate_dz(surf)
    pair = (fz[..., 0] * np.conj(fz[..., 0]) + fz[..., 1] * np.conj(fz[..., 1])
            - fz[..., 2] * np.conj(fz[..., 2]))
    null = fz[..., 0] ** 2 + fz[..., 1] ** 2 - fz[..., 2] ** 2
    return MetricField(e_u=2.0 * pair.real, conformality=np.abs(null))


def nil_first_fundamental(surf: SurfaceField) -> MetricField:
    """Pullback of dx1^2 + dx2^2 + (dx3 + (x2 dx1 - x1 dx2)/2)^2."""
    g = surf.grid
    x1, x2, x3 = (surf.coords[..., i] for i in range(3))
    d1x, d1y = diff_x(x1, g.dx), diff_y(x1, g.dy)
    d2x, d2y = diff_x(x2, g.dx), diff_y(x2, g.dy)
    wx = diff_x(x3, g.dx) + 0.5 * (x2 * d1x - x1 * d2x)
    wy = diff_y(x3, g.dy) + 0.5 * (x2 * d1y - x1 * d2y)
    gxx = d1x ** 2 + d2x ** 2 + wx ** 2
    gyy = d1y ** 2 + d2y ** 2 + wy ** 2
    gxy = d1x * d1y + d2x * d2y + wx * wy
    return MetricField(e_u=0.5 * (gxx + gyy),
                       conformality=0.25 * np.abs(gxx - gyy - 2j * gxy))


def _lorentz_pair(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2]


def _second_derivatives(surf: SurfaceField):
    g = surf.grid
    f = surf.coords
    return (diff_xx(f, g.dx), diff_yy(f, g.dy),
            diff_x(diff_y(f, g.dy), g.dx))


def l3_mean_curvature(surf: SurfaceField, normal: NormalField,
                      metric: MetricField | None = None) -> np.ndarray:
    """H = 2 e^{-u} <f_zzbar, N>; wants a conformal parametrization."""
    if metric is None:
        metric = l3_first_fundamental(surf)
    if metric.e_u.min() < 1e-10:
        raise DegenerateMetric(f"e_u reaches {metric.e_u.min():.3e}")
    fxx, fyy, _ = _second_derivatives(surf)
    f_zzbar = 0.25 * (fxx + fyy)
    return 2.0 * _lorentz_pair(f_zzbar, normal.N) / metric.e_u


def hopf_coefficient(surf: SurfaceField, normal: NormalField) -> np.ndarray:
    """Q = <f_zz, N>, the lam^{-2}-scaled holomorphic coefficient."""
    fxx, fyy, fxy = _second_derivatives(surf)
    f_zz = 0.25 * (fxx - fyy - 2j * fxy)
    return _lorentz_pair(f_zz, normal.N)


def phi_coefficients(surf: SurfaceField) -> PhiField:
    """Left-logarithmic derivative in the dual coframe.

    The third coframe element is dx3 + (x2 dx1 - x1 dx2)/2, so phi3 picks
    up the quadratic correction; phi1, phi2 are plain z-derivatives.
    """
    g = surf.grid
    x1, x2, x3 = (surf.coords[..., i] for i in range(3))
    p1 = diff_z(x1, g)
    p2 = diff_z(x2, g)
    p3 = diff_z(x3, g) + 0.5 * (x2 * p1 - x1 * p2)
    return PhiField(p1, p2, p3)


def phi_from_spinors(S: SpinorField) -> PhiField:
    """The same coefficients through the spinor representation."""
    sq1 = S.psi1 ** 2
    sq2c = np.conj(S.psi2) ** 2
    return PhiField(phi1=sq2c - sq1, phi2=1j * (sq2c + sq1),
                    phi3=2.0 * S.psi1 * np.conj(S.psi2))


def support_field(S: SpinorField) -> np.ndarray:
    """h = 2(|psi1|^2 - |psi2|^2); the squared support is the L3 metric."""
    h = 2.0 * (np.abs(S.psi1) ** 2 - np.abs(S.psi2) ** 2)
    if h.min() <= 0:
        raise NonPositiveSupport(f"support reaches {h.min():.3e}")
    return h


def spinor_metrics(S: SpinorField):
    """(e_u, e_u_l3) predicted pointwise by the spinors."""
    a = np.abs(S.psi1) ** 2
    b = np.abs(S.psi2) ** 2
    return 4.0 * (a + b) ** 2, 4.0 * (a - b) ** 2


def normal_gauss_map(S: SpinorField, grid: DomainGrid) -> GaussMapReport:
    """g = psi2 / conj(psi1) with its harmonicity defect.

    The residual is tau = g_zzbar + 2 conj(g) (1-|g|^2)^{-1} g_z g_zbar,
    the tension of a map into the hyperbolic disc; min(|g_z|, |g_zbar|)
    is reported as the non-conformality witness, no threshold attached.
    """
    g = S.psi2 / np.conj(S.psi1)
    mod2 = np.abs(g) ** 2
    if mod2.max() >= 1.0:
        raise NotUpward(f"|g| reaches {np.sqrt(mod2.max()):.6f}")
    gz = diff_z(g, grid)
    gzb = diff_zbar(g, grid)
    g_zzbar = 0.25 * (diff_xx(g, grid.dx) + diff_yy(g, grid.dy))
    tau = g_zzbar + 2.0 * np.conj(g) / (1.0 - mod2) * gz * gzb
    inner = (slice(1, -1), slice(1, -1))
    return GaussMapReport(g=g, harmonic_residual=np.abs(tau),
                          min_gz=float(np.abs(gz[inner]).min()),
                          min_gzbar=float(np.abs(gzb[inner]).min()))


def _quads_overlap(qa: np.ndarray, qb: np.ndarray, tol: float) -> bool:
    """Positive-area overlap of two convex quads, by separating axes.

    Vertices must be in cyclic order.  Projections that merely touch
    (gap above -tol) do not count: the image cells of an injective map
    may share edges or corners exactly.
    """
    for quad in (qa, qb):
        for e in range(4):
            p0 = quad[e]
            p1 = quad[(e + 1) % 4]
            ax = p0[1] - p1[1]
            ay = p1[0] - p0[0]
            norm = math.hypot(ax, ay)
            if norm < 1e-300:
                continue
            ax /= norm
            ay /= norm
            pa = qa[:, 0] * ax + qa[:, 1] * ay
            pb = qb[:, 0] * ax + qb[:, 1] * ay
            if pa.min() >= pb.max() - tol or pb.min() >= pa.max() - tol:
                return False
    return True


def _cell_collisions(x1: np.ndarray, x2: np.ndarray) -> int:
    """Count non-adjacent grid cells whose images genuinely overlap.

    Cells are hashed by bounding box into a uniform bucket grid; every
    candidate pair (boxes overlap, index distance > 1 in some direction)
    is then confirmed with the exact quad test.  Corner- and edge-touching
    images, routine for sheared cells, are not collisions.
    """
    corners1 = [x1[:-1, :-1], x1[1:, :-1], x1[1:, 1:], x1[:-1, 1:]]
    corners2 = [x2[:-1, :-1], x2[1:, :-1], x2[1:, 1:], x2[:-1, 1:]]
    lo1 = np.minimum.reduce(corners1)
    hi1 = np.maximum.reduce(corners1)
    lo2 = np.minimum.reduce(corners2)
    hi2 = np.maximum.reduce(corners2)
    mx, my = lo1.shape
    step1 = max(float((hi1 - lo1).max()), 1e-300)
    step2 = max(float((hi2 - lo2).max()), 1e-300)
    tol = 1e-9 * max(step1, step2)

    quads = np.stack([np.stack([c.ravel() for c in corners1], axis=1),
                      np.stack([c.ravel() for c in corners2], axis=1)],
                     axis=2)
    boxes = np.stack([lo1.ravel(), hi1.ravel(), lo2.ravel(), hi2.ravel()],
                     axis=1)
    b1lo = np.floor(lo1.ravel() / step1).astype(np.int64)
    b1hi = np.floor(hi1.ravel() / step1).astype(np.int64)
    b2lo = np.floor(lo2.ravel() / step2).astype(np.int64)
    b2hi = np.floor(hi2.ravel() / step2).astype(np.int64)

    buckets: dict[tuple[int, int], list[int]] = {}
    for idx in range(mx * my):
        for bu in range(b1lo[idx], b1hi[idx] + 1):
            for bv in range(b2lo[idx], b2hi[idx] + 1):
                buckets.setdefault((bu, bv), []).append(idx)

    hits = 0
    seen: set[tuple[int, int]] = set()
    for members in buckets.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                ia, ib = members[a], members[b]
                if ia > ib:
                    ia, ib = ib, ia
                dj = ia // my - ib // my
                dk = ia % my - ib % my
                if -1 <= dj <= 1 and -1 <= dk <= 1:
                    continue
                key = (ia, ib)
                if key in seen:
                    continue
                seen.add(key)
                if not (boxes[ia, 0] < boxes[ib, 1] - tol
                        and boxes[ib, 0] < boxes[ia, 1] - tol
                        and boxes[ia, 2] < boxes[ib, 3] - tol
                        and boxes[ib, 2] < boxes[ia, 3] - tol):
                    continue
                if _quads_overlap(quads[ia], quads[ib], tol):
                    hits += 1
    return hits


def graph_check(surf: SurfaceField,
                metric: MetricField | None = None) -> GraphReport:
    """Desk-scale surrogate for the entire-graph statement.

    Local: the Jacobian of (x1, x2) over (x, y) keeps one sign and stays
    away from 0 (interior stencils).  Global: no two non-adjacent grid
    cells overlap in the (x1, x2) plane (bounding-box candidates confirmed
    by exact quad intersection).  min e_u is attached as the completeness
    proxy.
    """
    g = surf.grid
    x1, x2 = surf.coords[..., 0], surf.coords[..., 1]
    jac = (diff_x(x1, g.dx) * diff_y(x2, g.dy)
           - diff_y(x1, g.dy) * diff_x(x2, g.dx))
    inner = jac[1:-1, 1:-1]
    sign_constant = bool(inner.max() < 0 or inner.min() > 0)
    if metric is None:
        metric = (nil_first_fundamental(surf) if surf.ambient == "nil"
                  else l3_first_fundamental(surf))
    return GraphReport(jacobian_min_abs=float(np.abs(inner).min()),
                       sign_constant=sign_constant,
                       collisions=_cell_collisions(x1, x2),
                       min_e_u=float(metric.e_u.min()))

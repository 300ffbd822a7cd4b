"""Small-matrix kernels: complex 2x2 arithmetic, the su(1,1) model of
Minkowski 3-space, group membership residuals, and spectral differentiation
on the loop circle.

All matrix-valued arrays have shape (..., 2, 2) with complex128 entries;
Lorentz vectors have shape (..., 3) with real entries and (+, +, -) signature
(third coordinate timelike).
"""

import numpy as np

# Orthonormal su(1,1) basis, third vector timelike.
E1 = 0.5 * np.array([[0.0, 1j], [-1j, 0.0]], dtype=complex)
E2 = 0.5 * np.array([[0.0, -1.0], [-1.0, 0.0]], dtype=complex)
E3 = 0.5 * np.array([[-1j, 0.0], [0.0, 1j]], dtype=complex)

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# Indefinite form preserved by SU(1,1): M J M^H = J.
J_FORM = SIGMA3


def basis_matrices():
    """Return copies of the orthonormal basis (E1, E2, E3)."""
    return E1.copy(), E2.copy(), E3.copy()


def det2(m):
    """Determinant of a (..., 2, 2) array, without LAPACK overhead."""
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv2(m):
    """Inverse of a (..., 2, 2) array via the adjugate."""
    d = det2(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    out[..., 1, 1] = m[..., 0, 0]
    return out / d[..., None, None]

def adj2(m):
    """Conjugate transpose of a (..., 2, 2) array."""
    return np.conj(np.swapaxes(m, -1, -2))


def sqrt2(m):
    """Principal square root of a (..., 2, 2) array.

    Uses the characteristic-polynomial identity
    sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)),
    valid when the denominator does not vanish (always the case for the
    near-identity Gram matrices this is applied to).
    """
    s = np.sqrt(det2(m))
    t = np.sqrt(m[..., 0, 0] + m[..., 1, 1] + 2.0 * s)
    return (m + s[..., None, None] * IDENTITY2) / t[..., None, None]


def expm2(m):
    """Exponential of a traceless (..., 2, 2) array.

    exp(M) = cosh(mu) I + (sinh(mu)/mu) M with mu^2 = -det M; the ratio is
    evaluated by series for small |mu| to avoid 0/0.
    """
    mu2 = -det2(m)
    mu = np.sqrt(mu2.astype(complex))
    small = np.abs(mu) < 1e-6
    mu_safe = np.where(small, 1.0, mu)
    ratio = np.where(small, 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0,
                     np.sinh(mu_safe) / mu_safe)
    return (np.cosh(mu)[..., None, None] * IDENTITY2
            + ratio[..., None, None] * m)


def vector_to_matrix(x):
    """Map Lorentz coordinates (..., 3) to x1 E1 + x2 E2 + x3 E3."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 2), dtype=complex)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    out[..., 0, 0] = -0.5j * x3
    out[..., 0, 1] = 0.5 * (1j * x1 - x2)
    out[..., 1, 0] = 0.5 * (-1j * x1 - x2)
    out[..., 1, 1] = 0.5j * x3
    return out


def matrix_to_vector(m):
    """Read Lorentz coordinates off a (..., 2, 2) su(1,1) element.

    Inverse of vector_to_matrix; components of off-algebra input are
    silently dropped (see su11_decomposition_residual).
    """
    out = np.empty(m.shape[:-2] + (3,), dtype=float)
    out[..., 0] = 2.0 * m[..., 0, 1].imag
    out[..., 1] = -2.0 * m[..., 0, 1].real
    out[..., 2] = -2.0 * m[..., 0, 0].imag
    return out


def su11_decomposition_residual(m) -> float:
    """Max deviation of m from its own basis decomposition.

    Zero iff m lies in the real span of (E1, E2, E3), i.e. in su(1,1).
    """
    back = vector_to_matrix(matrix_to_vector(m))
    return float(np.max(np.abs(m - back)))


def lorentz_inner(a, b):
    """Signature (+, +, -) inner product of coordinate arrays (..., 3)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2]


def matrix_inner(a, b):
    """Lorentz pairing 2 tr(ab) of su(1,1) elements.

    The normalization makes (E1, E2, E3) orthonormal; for inputs in the
    algebra the trace is real and the imaginary part is discarded.
    """
    tr = (a[..., 0, 0] * b[..., 0, 0] + a[..., 0, 1] * b[..., 1, 0]
          + a[..., 1, 0] * b[..., 0, 1] + a[..., 1, 1] * b[..., 1, 1])
    return 2.0 * tr.real


def su11_residual(m) -> float:
    """Membership residual for SU(1,1): max(|m J m^H - J|, |det m - 1|).

    Accepts batched input and reduces over the whole batch.
    """
    g = m @ J_FORM @ adj2(m)
    r1 = np.max(np.abs(g - J_FORM))
    r2 = np.max(np.abs(det2(m) - 1.0))
    return float(max(r1, r2))


def su11_project(f):
    """Project (..., 2, 2) matrices onto SU(1,1).

    Returns (projected, correction) where correction is the max entrywise
    change.  The J-polar step F <- F (J F^H J F)^{-1/2} restores J-unitarity
    to first order; the final rescale pins det = 1.
    """
    gram = J_FORM @ adj2(f) @ J_FORM @ f
    out = f @ inv2(sqrt2(gram))
    out = out / np.sqrt(det2(out))[..., None, None]
    correction = float(np.max(np.abs(out - f)))
    return out, correction


class LoopSampleSet:
    """Equispaced angles theta_k = 2 pi k / n on the unit circle.

    n must be even and >= 8 so that theta_0 = 0 and antipodal pairs
    theta_k, theta_k + pi are both samples (required by the twisted-loop
    residual and by spectral differentiation).
    """

    def __init__(self, n: int):
        if n % 2 != 0 or n < 8:
            raise ValueError(f"loop sample count must be even and >= 8, got {n}")
        self.n = n
        self.theta = 2.0 * np.pi * np.arange(n) / n
        lam = np.exp(1j * self.theta[: n // 2])
        # Second half is exactly the negation of the first: sign flips are
        # then exact in floating point, keeping twisted residuals clean.
        self.lam = np.concatenate([lam, -lam])

    def subset_indices(self, m: int):
        """Indices of the coarser equispaced subset with m angles."""
        if m < 1 or self.n % m != 0:
            raise ValueError(f"{m} does not divide the sample count {self.n}")
        return np.arange(0, self.n, self.n // m)

    def __repr__(self):
        return f"LoopSampleSet(n={self.n})"


def theta_derivative(samples, loops: LoopSampleSet, order: int = 1):
    """Spectral derivative along the loop angle (leading axis).

    Exact for Laurent polynomials in lambda of degree < n/2.  The Nyquist
    mode is zeroed: on an even grid it aliases cos and sin and carries no
    usable odd-derivative information.
    """
    samples = np.asarray(samples)
    if samples.shape[0] != loops.n:
        raise ValueError(
            f"got {samples.shape[0]} samples for a loop set of {loops.n}")
    n = loops.n
    modes = np.fft.fftfreq(n, d=1.0 / n)
    mult = (1j * modes) ** order
    mult[n // 2] = 0.0
    coef = np.fft.fft(samples, axis=0)
    coef *= mult.reshape((n,) + (1,) * (samples.ndim - 1))
    return np.fft.ifft(coef, axis=0)


def twisted_residual(samples) -> float:
    """Deviation from the twisted condition F(theta + pi) = s3 F(theta) s3.

    Zero iff diagonal entries are even and off-diagonal entries odd in
    lambda.  The leading axis must hold a full LoopSampleSet.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if n % 2 != 0:
        raise ValueError("twisted residual needs an even sample count")
    rolled = np.roll(samples, -n // 2, axis=0)
    flipped = samples.copy()
    flipped[..., 0, 1] *= -1.0
    flipped[..., 1, 0] *= -1.0
    return float(np.max(np.abs(rolled - flipped)))

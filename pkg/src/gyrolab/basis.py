"""Landau-level basis in symmetric gauge.

The magnetic Laplacian (i*hbar*grad + b*A)^2 with A = x^perp/2 is
diagonalized by the two commuting oscillators (a, a^dag) and (c, c^dag);
the basis states phi_{n,m} = (a^dag)^n (c^dag)^m / sqrt(n! m!) phi_00 carry
the Landau index n and the angular shift index m.

Pointwise evaluation goes through normalized associated-Laguerre functions

    g_q^{(d)}(t) = sqrt(q!/(q+d)!) * L_q^{(d)}(t) * t^{d/2} * exp(-t/2)

with t = |x|^2 / (2 l_b^2), q = min(n, m), d = |n - m|:

    phi_{n,m}(x) = (2 pi l_b^2)^{-1/2} * i^n * (-1)^q * e^{i(m-n)theta} * g_q^{(d)}(t)

The g recurrence is stable and all factorials live in log space.

Perp convention used throughout the package: (x1, x2)^perp = (-x2, x1),
which makes [p1, p2] = i*hbar*b.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._accel import use_numba

__all__ = [
    "ScalingParams", "BasisIndex", "Truncation", "CoeffMatrix",
    "make_scaling", "eval_basis", "eval_basis_block",
    "ladder_matrix", "position_matrices", "kinetic_matrix",
    "radial_tables", "basis_prefactors", "perp",
]


def perp(v):
    """(v1, v2) -> (-v2, v1), vectorized over leading axes."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


@dataclass(frozen=True)
class ScalingParams:
    """Large-field regime with hbar*b pinned to 1 exactly (hbar = 1/b)."""
    b: float
    hbar: float
    l_b: float

    def __post_init__(self):
        if not (self.b > 0):
            raise ValueError(f"magnetic field amplitude must be positive, got {self.b}")
        if abs(self.hbar * self.b - 1.0) > 1e-15:
            raise ValueError("scaling invariant hbar*b == 1 violated")
        if abs(self.l_b - np.sqrt(self.hbar / self.b)) > 1e-15 * self.l_b:
            raise ValueError("scaling invariant l_b == sqrt(hbar/b) violated")

    @property
    def pauli_cap(self) -> float:
        """Largest admissible occupation, 2*pi*l_b^2."""
        return 2.0 * np.pi * self.l_b ** 2


def make_scaling(b: float) -> ScalingParams:
    """Scaling parameters for field amplitude b > 0 (hbar = 1/b, l_b = 1/b)."""
    b = float(b)
    if not (b > 0) or not np.isfinite(b):
        raise ValueError(f"magnetic field amplitude must be positive, got {b}")
    return ScalingParams(b=b, hbar=1.0 / b, l_b=1.0 / b)


@dataclass(frozen=True)
class BasisIndex:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError(f"basis indices must be nonnegative, got (n={self.n}, m={self.m})")


@dataclass(frozen=True)
class Truncation:
    """Retained index rectangle 0 <= n <= n_max, 0 <= m <= m_ang."""
    n_max: int
    m_ang: int

    def __post_init__(self):
        if self.n_max < 0 or self.m_ang < 0:
            raise ValueError("truncation bounds must be nonnegative")

    @property
    def size(self) -> int:
        return (self.n_max + 1) * (self.m_ang + 1)

    def flat(self, n, m):
        """Flatten (n, m) -> linear index; bijection onto range(size)."""
        n = np.asarray(n)
        m = np.asarray(m)
        if np.any(n < 0) or np.any(n > self.n_max) or np.any(m < 0) or np.any(m > self.m_ang):
            raise IndexError("basis index outside truncation")
        return n * (self.m_ang + 1) + m

    def unflat(self, idx):
        idx = np.asarray(idx)
        return idx // (self.m_ang + 1), idx % (self.m_ang + 1)

    def contains(self, idx: BasisIndex) -> bool:
        return 0 <= idx.n <= self.n_max and 0 <= idx.m <= self.m_ang

    def interior_mask(self) -> np.ndarray:
        """Boolean mask of indices unaffected by ladder truncation
        (n <= n_max-1 and m <= m_ang-1)."""
        n, m = self.unflat(np.arange(self.size))
        return (n <= self.n_max - 1) & (m <= self.m_ang - 1)


@dataclass
class CoeffMatrix:
    """Square complex matrix over the flattened basis with a hermiticity tag."""
    values: np.ndarray
    tag: str = "general"  # "hermitian" | "general"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("CoeffMatrix must be square")
        if self.tag not in ("hermitian", "general"):
            raise ValueError(f"unknown tag {self.tag!r}")
        if self.tag == "hermitian":
            nrm = np.linalg.norm(self.values)
            if nrm > 0 and np.linalg.norm(self.values - self.values.conj().T) > 1e-12 * nrm:
                raise ValueError("matrix tagged hermitian is not Hermitian to 1e-12 relative")

    @property
    def A(self) -> np.ndarray:
        return self.values


# ---------------------------------------------------------------------------
# pointwise evaluation

def _laguerre_g(q: int, d: int, t: np.ndarray) -> np.ndarray:
    """Normalized Laguerre function sqrt(q!/(q+d)!) L_q^{(d)}(t) t^{d/2} e^{-t/2}.

    Stable three-term recurrence in q; the seed is computed in log space so
    large d and large t do not overflow.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logseed = 0.5 * d * np.log(t) - 0.5 * t - 0.5 * gammaln(d + 1.0)
    g0 = np.where(t > 0, np.exp(logseed), 1.0 if d == 0 else 0.0)
    if q == 0:
        return g0
    g1 = (1.0 + d - t) * g0 / np.sqrt(1.0 + d)
    if q == 1:
        return g1
    for k in range(1, q):
        g2 = ((2 * k + 1 + d - t) * g1 - np.sqrt(k * (k + d)) * g0) / np.sqrt((k + 1) * (k + 1 + d))
        g0, g1 = g1, g2
    return g1


def eval_basis(idx: BasisIndex, x, s: ScalingParams) -> complex:
    """phi_{n,m}(x) for x a point (or array of points, shape (..., 2)) in R^2."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    n, m = idx.n, idx.m
    q, d = min(n, m), abs(n - m)
    r2 = pts[..., 0] ** 2 + pts[..., 1] ** 2
    t = r2 / (2.0 * s.l_b ** 2)
    theta = np.arctan2(pts[..., 1], pts[..., 0])
    g = _laguerre_g(q, d, t)
    pref = (1j ** n) * ((-1.0) ** q) / np.sqrt(2.0 * np.pi * s.l_b ** 2)
    val = pref * np.exp(1j * (m - n) * theta) * g
    return complex(val[0]) if scalar else val


def basis_prefactors(t: Truncation) -> np.ndarray:
    """Unimodular prefactors sigma_{n,m} = i^n (-1)^{min(n,m)}, flattened."""
    n, m = t.unflat(np.arange(t.size))
    return (1j ** n) * ((-1.0) ** np.minimum(n, m))


def radial_tables(t: Truncation, s: ScalingParams, r: np.ndarray) -> np.ndarray:
    """Real radial parts G[n, m, j] = g_{min}^{(|n-m|)}(t_j) / sqrt(2 pi l_b^2)
    on radii r, so that phi_{n,m}(r,theta) = sigma_{n,m} G[n,m] e^{i(m-n)theta}."""
    r = np.asarray(r, dtype=float)
    tt = r ** 2 / (2.0 * s.l_b ** 2)
    out = np.empty((t.n_max + 1, t.m_ang + 1, r.size))
    # recurrence runs along q for each diagonal d = |n - m|
    for d in range(t.n_max + t.m_ang + 1):
        qmax = min(t.n_max, t.m_ang - d) if d <= t.m_ang else -1
        qmax = max(qmax, min(t.n_max - d, t.m_ang))
        with np.errstate(divide="ignore", invalid="ignore"):
            logseed = 0.5 * d * np.log(tt) - 0.5 * tt - 0.5 * gammaln(d + 1.0)
        g0 = np.where(tt > 0, np.exp(logseed), 1.0 if d == 0 else 0.0)
        g1 = None
        for q in range(qmax + 1):
            if q == 0:
                g = g0
            elif q == 1:
                g1 = (1.0 + d - tt) * g0 / np.sqrt(1.0 + d)
                g = g1
            else:
                g2 = ((2 * (q - 1) + 1 + d - tt) * g1
                      - np.sqrt((q - 1) * (q - 1 + d)) * g0) / np.sqrt(q * (q + d))
                g0, g1 = g1, g2
                g = g1
            if q + d <= t.m_ang and q <= t.n_max:
                out[q, q + d] = g
            if d > 0 and q + d <= t.n_max and q <= t.m_ang:
                out[q + d, q] = g
    out /= np.sqrt(2.0 * np.pi * s.l_b ** 2)
    return out


def eval_basis_block(t: Truncation, s: ScalingParams, pts: np.ndarray) -> np.ndarray:
    """Matrix Phi[p, i] = phi_i(pts[p]) over all flattened basis indices.

    Used by quadrature assembly and exact Cartesian density evaluation.
    Chunk the points at the call site for large grids.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    G = radial_tables(t, s, r)  # (n, m, p)
    n, m = t.unflat(np.arange(t.size))
    sigma = basis_prefactors(t)
    ell = m - n
    phase = np.exp(1j * np.outer(theta, ell))  # (p, i)
    return phase * sigma[None, :] * G[n, m, :].T


# ---------------------------------------------------------------------------
# operator matrices

def ladder_matrix(kind: str, t: Truncation) -> CoeffMatrix:
    """Matrix of a, a^dag, c or c^dag on the truncated basis.

    a lowers n with sqrt(n); c lowers m with sqrt(m). Rows/columns that would
    leave the truncation are zero (truncated, not projected); trust only the
    indices in Truncation.interior_mask().
    """
    if kind not in ("a", "a_dag", "c", "c_dag"):
        raise ValueError(f"unknown ladder kind {kind!r}")
    size = t.size
    M = np.zeros((size, size), dtype=complex)
    n, m = t.unflat(np.arange(size))
    if kind in ("a", "a_dag"):
        src = n >= 1
        rows = t.flat(n[src] - 1, m[src])
        cols = np.arange(size)[src]
        vals = np.sqrt(n[src].astype(float))
    else:
        src = m >= 1
        rows = t.flat(n[src], m[src] - 1)
        cols = np.arange(size)[src]
        vals = np.sqrt(m[src].astype(float))
    M[rows, cols] = vals
    if kind.endswith("_dag"):
        M = M.conj().T
    return CoeffMatrix(M, tag="general")


def position_matrices(t: Truncation, s: ScalingParams):
    """Hermitian matrices (X1, X2) of the position components.

    Assembled from X = sqrt(2) l_b (c^dag + i a) acting as multiplication by
    x1 + i x2; boundary rows are truncation-contaminated (interior_mask).
    """
    A = ladder_matrix("a", t).A
    Cd = ladder_matrix("c_dag", t).A
    Xc = np.sqrt(2.0) * s.l_b * (Cd + 1j * A)
    X1 = 0.5 * (Xc + Xc.conj().T)
    X2 = (Xc - Xc.conj().T) / 2j
    return CoeffMatrix(X1, tag="hermitian"), CoeffMatrix(X2, tag="hermitian")


def kinetic_matrix(t: Truncation, s: ScalingParams) -> CoeffMatrix:
    """Magnetic Laplacian, diagonal with entries 2*hbar*b*(n + 1/2)."""
    n, _ = t.unflat(np.arange(t.size))
    diag = 2.0 * s.hbar * s.b * (n + 0.5)
    return CoeffMatrix(np.diag(diag.astype(complex)), tag="hermitian")


def kinetic_diagonal(t: Truncation, s: ScalingParams) -> np.ndarray:
    """Diagonal of the magnetic Laplacian as a real vector."""
    n, _ = t.unflat(np.arange(t.size))
    return 2.0 * s.hbar * s.b * (n + 0.5)


_ = use_numba  # referenced by kernel modules; keeps the toggle import explicit

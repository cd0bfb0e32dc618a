"""Vortex coherent states and guiding-center projector kernels.

psi_{z,n} is the state in the n-th Landau level whose orbit center is
localized at z (eigenvector of the lowering operator c with eigenvalue
zbar/(sqrt(2) l_b)). Coefficient space (the m-expansion at fixed n) is the
source of truth for operator actions; the pointwise kernels below are used
for quadrature cross-checks and the Husimi transform.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .basis import ScalingParams, Truncation

__all__ = [
    "CoherentLabel", "TruncationInsufficientError",
    "eval_coherent", "coherent_coeffs", "coherent_coeff_matrix",
    "projector_kernel", "pi_z_kernel", "truncated_projector_sum",
    "gaussian_tail_moment_odd",
]


class TruncationInsufficientError(ValueError):
    """Raised when the angular truncation cannot hold the requested state."""


@dataclass(frozen=True)
class CoherentLabel:
    z: complex
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("Landau index must be nonnegative")


def _as_complex(point) -> complex:
    p = np.asarray(point)
    if p.shape[-1:] == (2,) and not np.iscomplexobj(p):
        return p[..., 0] + 1j * p[..., 1]
    return p


def _perp_dot(z: complex, x: complex):
    """z^perp . x for the fixed convention (z1,z2)^perp = (-z2, z1)."""
    return np.real(z) * np.imag(x) - np.imag(z) * np.real(x)


def eval_coherent(lab: CoherentLabel, x, s: ScalingParams):
    """psi_{z,n}(x) with log-Gamma normalization.

    Closed form: i^n / (sqrt(2 pi n!) l_b) * ((conj(x - z))/(sqrt(2) l_b))^n
    * exp(-(|x-z|^2 - 2i z^perp.x) / (4 l_b^2)).
    """
    z = complex(lab.z)
    n = lab.n
    xc = _as_complex(x)
    d = xc - z
    ad = np.abs(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = np.where(ad > 0, n * np.log(ad / (np.sqrt(2.0) * s.l_b)), 0.0 if n == 0 else -np.inf)
    logmag = logmag - 0.5 * gammaln(n + 1.0) - ad ** 2 / (4.0 * s.l_b ** 2)
    phase = np.exp(1j * (-n * np.angle(d) + _perp_dot(z, xc) / (2.0 * s.l_b ** 2)))
    pref = (1j ** n) / (np.sqrt(2.0 * np.pi) * s.l_b)
    out = pref * np.exp(logmag) * phase
    if n > 0:
        out = np.where(ad > 0, out, 0.0)
    return complex(out) if np.isscalar(out) or out.ndim == 0 else out


def _coeff_row(z: complex, m_ang: int, l_b: float):
    """Coefficients c_m = e^{-|z|^2/4l_b^2} (zbar/(sqrt2 l_b))^m / sqrt(m!)."""
    m = np.arange(m_ang + 1)
    az = abs(z)
    if az == 0.0:
        c = np.zeros(m_ang + 1, dtype=complex)
        c[0] = 1.0
        return c
    logmag = (-az ** 2 / (4.0 * l_b ** 2)
              + m * np.log(az / (np.sqrt(2.0) * l_b))
              - 0.5 * gammaln(m + 1.0))
    return np.exp(logmag) * np.exp(-1j * m * np.angle(z))


def coherent_coeffs(lab: CoherentLabel, t: Truncation, s: ScalingParams,
                    tail_tol: float = 1e-10):
    """Expansion of psi_{z,n} over phi_{n,m}, m <= m_ang, plus the mass tail.

    Returns (coeffs, tail) with tail = 1 - sum |c_m|^2 >= 0. Raises
    TruncationInsufficientError when tail > tail_tol.
    """
    if lab.n > t.n_max:
        raise TruncationInsufficientError(f"level n={lab.n} exceeds n_max={t.n_max}")
    c = _coeff_row(complex(lab.z), t.m_ang, s.l_b)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(c) ** 2)))
    if tail > tail_tol:
        raise TruncationInsufficientError(
            f"coherent tail {tail:.3e} exceeds tolerance {tail_tol:.3e} at |z|={abs(lab.z):.3g}")
    return c, tail


def coherent_coeff_matrix(zs: np.ndarray, m_ang: int, s: ScalingParams):
    """Rows of coherent coefficients for many z at once (no tail gate).

    zs: complex array, shape (Nz,). Returns (C, tails) with C shape
    (Nz, m_ang+1); used by the Husimi transform on full grids.
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    m = np.arange(m_ang + 1)
    az = np.abs(zs)
    safe = np.where(az > 0, az, 1.0)
    logmag = (-az[:, None] ** 2 / (4.0 * s.l_b ** 2)
              + m[None, :] * np.log(safe[:, None] / (np.sqrt(2.0) * s.l_b))
              - 0.5 * gammaln(m + 1.0)[None, :])
    C = np.exp(logmag) * np.exp(-1j * m[None, :] * np.angle(zs)[:, None])
    zero = az == 0.0
    if np.any(zero):
        C[zero] = 0.0
        C[zero, 0] = 1.0
    tails = np.maximum(0.0, 1.0 - np.sum(np.abs(C) ** 2, axis=1))
    return C, tails


def projector_kernel(lab: CoherentLabel, x, y, s: ScalingParams):
    """Kernel Pi_{z,n}(x, y) of |psi_{z,n}><psi_{z,n}| (closed form)."""
    z = complex(lab.z)
    n = lab.n
    xc = _as_complex(x)
    yc = _as_complex(y)
    dx = xc - z
    dy = yc - z
    prod = np.conj(dx) * dy / (2.0 * s.l_b ** 2)
    expo = (-(np.abs(dx) ** 2 + np.abs(dy) ** 2
              - 2j * _perp_dot(z, xc - yc)) / (4.0 * s.l_b ** 2))
    if n == 0:
        powterm = 1.0
    else:
        ap = np.abs(prod)
        with np.errstate(divide="ignore", invalid="ignore"):
            logmag = np.where(ap > 0, n * np.log(ap), -np.inf)
        powterm = np.where(ap > 0, np.exp(logmag - gammaln(n + 1.0) + 1j * n * np.angle(prod)), 0.0)
    out = powterm * np.exp(expo) / (2.0 * np.pi * s.l_b ** 2)
    return complex(out) if np.isscalar(out) or np.ndim(out) == 0 else out


def pi_z_kernel(z, x, y, s: ScalingParams):
    """Full guiding-center projector kernel Pi_z(x,y) = sum_n Pi_{z,n}(x,y)."""
    zc = _as_complex(z)
    xc = _as_complex(x)
    yc = _as_complex(y)
    expo = (-(np.abs(xc - yc) ** 2
              - 2j * (_perp_dot(xc, yc) + 2.0 * _perp_dot(zc, xc - yc)))
            / (4.0 * s.l_b ** 2))
    out = np.exp(expo) / (2.0 * np.pi * s.l_b ** 2)
    return complex(out) if np.isscalar(out) or np.ndim(out) == 0 else out


def truncated_projector_sum(z, x, y, s: ScalingParams, M: int):
    """Pi_{z,<=M}(x,y) by direct summation of levels 0..M."""
    acc = 0.0 + 0.0j
    for n in range(M + 1):
        acc = acc + projector_kernel(CoherentLabel(z=z, n=n), x, y, s)
    return acc


def gaussian_tail_moment_odd(n: int, a: float) -> float:
    """I_{2n+1}(a) = int_a^inf t^{2n+1} e^{-t^2/2} dt (closed recursion form)."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    half = a * a / 2.0
    # sum_{i<=n} (a^2/2)^i / i! by running product
    terms = np.ones(n + 1)
    for i in range(1, n + 1):
        terms[i] = terms[i - 1] * half / i
    return (2.0 ** n) * float(np.exp(gammaln(n + 1.0))) * np.exp(-half) * float(terms.sum())

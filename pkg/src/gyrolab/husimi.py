"""Husimi phase-space densities over (guiding center, Landau level).

m_gamma(z, n) = <psi_{z,n}, gamma psi_{z,n}> / (2 pi l_b^2) is evaluated in
coefficient space; summing levels n <= M gives the truncated semiclassical
density rho^{sc,<=M}, optionally normalized by Tr gamma Pi_{<=M}.
"""

from dataclasses import dataclass, field

import numpy as np

from .coherent import TruncationInsufficientError, coherent_coeff_matrix
from .grids import BoxSpec, GriddedDensity, make_density
from .hartree import DensityMatrix

__all__ = [
    "HusimiField", "husimi_value", "husimi_field", "semiclassical_density",
    "level_capture", "cutoff_schedule", "DegenerateNormalizationError",
]


class DegenerateNormalizationError(ValueError):
    """Cut-off holds less than half the state; the normalized density is meaningless."""


def cutoff_schedule(scaling, n_max: int) -> int:
    """Level cut-off M(b) = round(l_b^{-6/7}), clamped to [2, n_max - 1]."""
    raw = int(np.round(scaling.l_b ** (-6.0 / 7.0)))
    return int(np.clip(raw, 2, max(2, n_max - 1)))


def level_capture(gamma: DensityMatrix, M: int) -> float:
    """Tr gamma Pi_{<=M} within the truncated basis."""
    occ = gamma.landau_occupations()
    return float(occ[: M + 1].sum())


def _level_amplitudes(gamma: DensityMatrix, C: np.ndarray, n: int) -> np.ndarray:
    """<psi_{z,n}, o_k> for every z row of C; shape (nz, rank)."""
    m1 = gamma.truncation.m_ang + 1
    block = gamma.orbitals[n * m1:(n + 1) * m1, :]
    return C.conj() @ block


def husimi_value(gamma: DensityMatrix, z: complex, n: int,
                 tail_tol: float = 1e-10) -> float:
    """m_gamma(z, n), gated on the coherent truncation tail at z."""
    t = gamma.truncation
    if n > t.n_max:
        raise TruncationInsufficientError(f"level {n} beyond n_max={t.n_max}")
    C, tails = coherent_coeff_matrix(np.array([z]), t.m_ang, gamma.scaling)
    if tails[0] > tail_tol:
        raise TruncationInsufficientError(
            f"coherent tail {tails[0]:.3e} at z={z:.3g} exceeds {tail_tol:.0e}")
    amp = _level_amplitudes(gamma, C, n)
    val = float(np.sum(np.abs(amp) ** 2 * gamma.occupations[None, :]))
    return max(val, 0.0) / (2.0 * np.pi * gamma.scaling.l_b ** 2)


@dataclass
class HusimiField:
    """m_gamma(z, n) sampled on the density grid for levels n <= M."""
    values: np.ndarray               # (M+1, N, N)
    box: BoxSpec
    scaling: object
    max_tail: float
    meta: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return self.values.shape[0] - 1

    def level_masses(self) -> np.ndarray:
        """z-integral per level; approximates Tr gamma Pi_n."""
        return self.values.sum(axis=(1, 2)) * self.box.cell_area

    def rows(self):
        """(z1, z2, n, value) rows for CSV export, deterministic order."""
        ax = self.box.axis
        for n in range(self.values.shape[0]):
            for i, x1 in enumerate(ax):
                for j, x2 in enumerate(ax):
                    yield x1, x2, n, self.values[n, i, j]


def husimi_field(gamma: DensityMatrix, box: BoxSpec, M: int,
                 chunk: int = 8192) -> HusimiField:
    """Husimi transform on the grid for all levels n <= M.

    Far-out grid nodes where the angular truncation cannot hold the coherent
    state carry near-zero weight; the worst tail among nodes with
    non-negligible value is reported instead of gating each node.
    """
    t = gamma.truncation
    s = gamma.scaling
    if M > t.n_max:
        raise TruncationInsufficientError(f"cut-off {M} beyond n_max={t.n_max}")
    pts = box.points()
    zs = pts[:, 0] + 1j * pts[:, 1]
    npts = zs.size
    vals = np.empty((M + 1, npts))
    worst_tail = 0.0
    norm = 1.0 / (2.0 * np.pi * s.l_b ** 2)
    occ = gamma.occupations
    for lo in range(0, npts, chunk):
        hi = min(npts, lo + chunk)
        C, tails = coherent_coeff_matrix(zs[lo:hi], t.m_ang, s)
        for n in range(M + 1):
            amp = _level_amplitudes(gamma, C, n)
            v = np.einsum("zk,k->z", np.abs(amp) ** 2, occ) * norm
            vals[n, lo:hi] = np.maximum(v, 0.0)
        sl = vals[:, lo:hi].max(axis=0) > 1e-12 * norm
        if np.any(sl):
            worst_tail = max(worst_tail, float(tails[sl].max()))
    n_cells = box.n_cells
    return HusimiField(vals.reshape(M + 1, n_cells, n_cells), box, s, worst_tail)


def semiclassical_density(gamma: DensityMatrix, M: int, box: BoxSpec,
                          normalized: bool = False) -> GriddedDensity:
    """rho^{sc,<=M}(z) = sum_{n<=M} m_gamma(z, n); normalized divides by
    Tr gamma Pi_{<=M} so the result has unit mass."""
    if M > gamma.truncation.n_max - 1:
        raise ValueError(f"cut-off {M} must stay below n_max={gamma.truncation.n_max}")
    fld = husimi_field(gamma, box, M)
    values = fld.values.sum(axis=0)
    rho = make_density(values, box)
    rho.meta["husimi_max_tail"] = fld.max_tail
    capture = level_capture(gamma, M)
    rho.meta["level_capture"] = capture
    if normalized:
        if capture < 0.5:
            raise DegenerateNormalizationError(
                f"Tr gamma Pi_<={M} = {capture:.3f} < 0.5: cut-off far too small")
        rho = GriddedDensity(rho.values / capture, box, rho.clipped_mass / capture,
                             rho.meta)
    return rho

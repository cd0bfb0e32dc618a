"""Uniform square grids, gridded densities, and Fourier field operations."""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoxSpec", "GriddedDensity", "BoxTooSmallError",
    "make_density", "mean_field", "spectral_perp_grad", "coarsen",
]


class BoxTooSmallError(ValueError):
    """Raised when too much mass sits on or outside the box boundary."""


@dataclass(frozen=True)
class BoxSpec:
    """Square box [-L, L]^2 with n_cells x n_cells cell-centered samples."""
    half_width: float
    n_cells: int

    def __post_init__(self):
        if self.half_width <= 0 or self.n_cells < 2:
            raise ValueError("box needs positive half_width and at least 2 cells")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @property
    def axis(self) -> np.ndarray:
        h = self.spacing
        return -self.half_width + h * (np.arange(self.n_cells) + 0.5)

    def points(self) -> np.ndarray:
        """All cell centers, shape (n_cells**2, 2), row-major in (x1, x2)."""
        ax = self.axis
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def mesh(self):
        ax = self.axis
        return np.meshgrid(ax, ax, indexing="ij")


@dataclass
class GriddedDensity:
    """Nonnegative samples on a BoxSpec grid with mass metadata.

    values[i, j] is the density at (axis[i], axis[j]); negatives below the
    -1e-12 floor are clipped at construction and accounted in clipped_mass.
    """
    values: np.ndarray
    box: BoxSpec
    clipped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.box.cell_area)

    def boundary_mass_fraction(self) -> float:
        v = self.values
        edge = v[0, :].sum() + v[-1, :].sum() + v[1:-1, 0].sum() + v[1:-1, -1].sum()
        total = v.sum()
        return float(edge / total) if total > 0 else 0.0

    def check_box_adequate(self, tol: float = 1e-8):
        frac = self.boundary_mass_fraction()
        if frac > tol:
            raise BoxTooSmallError(
                f"boundary cells hold {frac:.3e} of the mass (tolerance {tol:.0e})")

    def normalized(self) -> "GriddedDensity":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize an empty density")
        return GriddedDensity(self.values / m, self.box, self.clipped_mass / m, dict(self.meta))


def make_density(values: np.ndarray, box: BoxSpec) -> GriddedDensity:
    """Wrap grid samples as a GriddedDensity, clipping tiny negatives."""
    values = np.asarray(values, dtype=float)
    if values.shape != (box.n_cells, box.n_cells):
        raise ValueError(f"values shape {values.shape} does not match box {box.n_cells}")
    neg = values < 0.0
    clipped = float(-values[neg].sum() * box.cell_area) if np.any(neg) else 0.0
    if np.any(values < -1e-12 * max(values.max(initial=0.0), 1e-300) - 1e-300):
        # significant negative values indicate an upstream bug, still clip but record
        pass
    out = values.copy()
    out[neg] = 0.0
    return GriddedDensity(out, box, clipped)


def _kernel_grid(box: BoxSpec, func) -> np.ndarray:
    """Sample func on the doubled (wrapped) difference grid for linear convolution."""
    n = box.n_cells
    h = box.spacing
    idx = np.arange(2 * n)
    wrapped = np.where(idx < n, idx, idx - 2 * n).astype(float) * h
    DX, DY = np.meshgrid(wrapped, wrapped, indexing="ij")
    return func(DX, DY)


def mean_field(w_func, rho: GriddedDensity) -> np.ndarray:
    """w * rho on the same grid by zero-padded FFT (linear convolution).

    w_func(dx, dy) evaluates the interaction kernel on coordinate offsets;
    the result is real to roundoff and returned as a real array.
    """
    n = rho.box.n_cells
    kern = _kernel_grid(rho.box, w_func)
    pad = np.zeros((2 * n, 2 * n))
    pad[:n, :n] = rho.values
    conv = np.fft.irfft2(np.fft.rfft2(pad) * np.fft.rfft2(kern), s=(2 * n, 2 * n))
    out = conv[:n, :n] * rho.box.cell_area
    return out


def spectral_perp_grad(values: np.ndarray, box: BoxSpec):
    """(-d2 f, d1 f) of a periodic-extended grid field by spectral differentiation.

    The fields this is applied to (w * rho and its kin) decay to ~0 at the
    box edge, so the periodic extension is benign; the box adequacy check
    guards the cases where it is not.
    """
    n = box.n_cells
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=box.spacing)
    F = np.fft.fft2(values)
    d1 = np.real(np.fft.ifft2(1j * k[:, None] * F))
    d2 = np.real(np.fft.ifft2(1j * k[None, :] * F))
    return -d2, d1


def coarsen(rho: GriddedDensity, factor: int = 2) -> GriddedDensity:
    """Aggregate factor x factor cell blocks (mass preserving)."""
    n = rho.box.n_cells
    if n % factor:
        raise ValueError(f"n_cells {n} not divisible by factor {factor}")
    m = n // factor
    v = rho.values.reshape(m, factor, m, factor).mean(axis=(1, 3))
    box = BoxSpec(rho.box.half_width, m)
    return GriddedDensity(v, box, rho.clipped_mass, dict(rho.meta))

"""Limiting gyrokinetic transport: classical orbits, the self-consistent
drift flow by characteristics, and Lagrangian marker transport.

The drift velocity is grad-perp(V + w * rho) with the fixed convention
(v1, v2)^perp = (-v2, v1); the flow is divergence-free, so marker weights
are never touched (measure push-forward).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ._kernels import cic_deposit
from .grids import BoxSpec, GriddedDensity, make_density, spectral_perp_grad
from .grids import mean_field as grid_mean_field
from .potentials import PotentialSpec

__all__ = [
    "ParticleEnsemble", "MarkerLeftBoxError", "DriftField",
    "classical_orbit", "newton_integrate", "velocity_field",
    "drift_advance", "deposit", "sample_from_density", "drift_dt_cap",
]


class MarkerLeftBoxError(RuntimeError):
    def __init__(self, indices):
        self.indices = np.asarray(indices)
        super().__init__(f"{self.indices.size} markers left the box "
                         f"(first indices {self.indices[:5].tolist()})")


@dataclass
class ParticleEnsemble:
    """Weighted Lagrangian markers transported by the drift flow."""
    positions: np.ndarray           # (N, 2)
    weights: np.ndarray             # (N,), nonnegative, sum 1
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        if self.weights.shape != (self.positions.shape[0],):
            raise ValueError("weights must match the marker count")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")


# ---------------------------------------------------------------------------
# classical single-particle motion

def _perp(v):
    out = np.empty_like(np.asarray(v, dtype=float))
    out[..., 0] = -np.asarray(v)[..., 1]
    out[..., 1] = np.asarray(v)[..., 0]
    return out


def classical_orbit(F, b: float, v0, t):
    """Closed-form cyclotron + drift decomposition for a constant force.

    Z(t) = (|v0|/b)(cos bt, sin bt) + (F^perp/b) t, with the initial phase
    pinned as Z_d(0) = 0, Z_c(0) = (|v0|/b)(1, 0); only the speed |v0|
    enters, per that convention.
    """
    if b <= 0:
        raise ValueError("field amplitude must be positive")
    F = np.asarray(F, dtype=float)
    speed = float(np.hypot(*np.atleast_1d(np.asarray(v0, dtype=float)).reshape(-1)[:2])) \
        if np.asarray(v0).size == 2 else float(abs(v0))
    t = np.asarray(t, dtype=float)
    rc = speed / b
    zc = np.stack([rc * np.cos(b * t), rc * np.sin(b * t)], axis=-1)
    zd = (_perp(F) / b) * t[..., None] if t.ndim else _perp(F) / b * t
    return zc + zd


def newton_integrate(F, b: float, z0, v0, dt: float, T: float):
    """RK4 trajectory of Z'' = F(t, Z) + b Z'^perp.

    F maps (t, Z) to a force vector. Returns (times, Z, V) arrays. A step
    that under-resolves the cyclotron period (dt > 2 pi / (20 b)) warns.
    """
    if dt > 2.0 * np.pi / (20.0 * b):
        warnings.warn("dt under-resolves the cyclotron period; expect poor accuracy",
                      stacklevel=2)
    nsteps = int(np.ceil(T / dt - 1e-12))
    times = np.linspace(0.0, nsteps * dt, nsteps + 1)
    Z = np.empty((nsteps + 1, 2))
    V = np.empty((nsteps + 1, 2))
    Z[0] = np.asarray(z0, dtype=float)
    V[0] = np.asarray(v0, dtype=float)

    def rhs(t, z, v):
        return v, np.asarray(F(t, z), dtype=float) + b * _perp(v)

    for i in range(nsteps):
        t0 = times[i]
        z, v = Z[i], V[i]
        k1z, k1v = rhs(t0, z, v)
        k2z, k2v = rhs(t0 + dt / 2, z + dt / 2 * k1z, v + dt / 2 * k1v)
        k3z, k3v = rhs(t0 + dt / 2, z + dt / 2 * k2z, v + dt / 2 * k2v)
        k4z, k4v = rhs(t0 + dt, z + dt * k3z, v + dt * k3v)
        Z[i + 1] = z + dt / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        V[i + 1] = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return times, Z, V


# ---------------------------------------------------------------------------
# self-consistent drift field

class DriftField:
    """grad-perp(V + w * rho) with the mean-field part on the grid.

    The external part is analytic; the convolution part is differentiated
    spectrally and interpolated bicubically at marker positions.
    """

    def __init__(self, pot: PotentialSpec, rho: GriddedDensity | None):
        self.pot = pot
        self.box = rho.box if rho is not None else None
        self._splines = None
        if rho is not None and pot.w_amplitude != 0.0:
            W = grid_mean_field(lambda dx, dy: pot.w(dx, dy), rho)
            p1, p2 = spectral_perp_grad(W, rho.box)
            ax = rho.box.axis
            self._splines = (RectBivariateSpline(ax, ax, p1, kx=3, ky=3),
                             RectBivariateSpline(ax, ax, p2, kx=3, ky=3))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.box is not None:
            L = self.box.half_width
            outside = np.any(np.abs(pts) > L, axis=1)
            if np.any(outside):
                raise MarkerLeftBoxError(np.nonzero(outside)[0])
        v1 = -self.pot.V_deriv(0, 1, pts[:, 0], pts[:, 1])
        v2 = self.pot.V_deriv(1, 0, pts[:, 0], pts[:, 1])
        if self._splines is not None:
            v1 = v1 + self._splines[0].ev(pts[:, 0], pts[:, 1])
            v2 = v2 + self._splines[1].ev(pts[:, 0], pts[:, 1])
        return np.stack([v1, v2], axis=-1)


def velocity_field(rho: GriddedDensity | None, pot: PotentialSpec, x) -> np.ndarray:
    """Drift velocity at x (see DriftField); x inside the grid box."""
    fld = DriftField(pot, rho)
    out = fld(x)
    return out[0] if np.asarray(x).ndim == 1 else out


def drift_dt_cap(pot: PotentialSpec) -> float:
    """Step cap 0.1 / (||V||_{W^{2,inf}} + ||w||_{W^{2,inf}})."""
    denom = pot.V_norm(2) + pot.w_norm(2)
    return 0.1 / max(denom, 1e-2)


def deposit(ens: ParticleEnsemble, box: BoxSpec) -> GriddedDensity:
    """Cloud-in-cell deposition; total mass is the exact weight sum."""
    grid = cic_deposit(ens.positions, ens.weights, box.half_width, box.n_cells)
    rho = make_density(grid / box.cell_area, box)
    rho.meta["time"] = ens.time
    return rho


def drift_advance(ens: ParticleEnsemble, pot: PotentialSpec, box: BoxSpec,
                  dt: float, field: DriftField | None = None) -> ParticleEnsemble:
    """One RK4 step of every marker through the frozen drift field.

    The mean field is rebuilt once from deposit(ens) at the step start;
    weights are untouched (divergence-free push-forward).
    """
    cap = drift_dt_cap(pot)
    if dt > cap * (1.0 + 1e-9):
        raise ValueError(f"dt {dt:.3e} exceeds the drift stability cap {cap:.3e}")
    if field is None:
        rho = deposit(ens, box) if pot.w_amplitude != 0.0 else None
        field = DriftField(pot, rho)
        if field.box is None:
            field.box = box
    x = ens.positions
    k1 = field(x)
    k2 = field(x + dt / 2 * k1)
    k3 = field(x + dt / 2 * k2)
    k4 = field(x + dt * k3)
    newpos = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    L = box.half_width
    outside = np.any(np.abs(newpos) > L, axis=1)
    if np.any(outside):
        raise MarkerLeftBoxError(np.nonzero(outside)[0])
    return ParticleEnsemble(newpos, ens.weights.copy(), ens.time + dt,
                            dict(ens.meta))


def sample_from_density(rho: GriddedDensity, n_markers: int,
                        rng: np.random.Generator) -> ParticleEnsemble:
    """Inverse-CDF stratified sampling of a grid density (equal weights)."""
    v = rho.values.ravel()
    total = v.sum()
    if total <= 0:
        raise ValueError("cannot sample an empty density")
    cdf = np.cumsum(v) / total
    u = (np.arange(n_markers) + rng.random(n_markers)) / n_markers
    cells = np.searchsorted(cdf, u, side="right")
    cells = np.minimum(cells, v.size - 1)
    n = rho.box.n_cells
    i = cells // n
    j = cells % n
    h = rho.box.spacing
    jitter = rng.random((n_markers, 2)) - 0.5
    pos = np.stack([rho.box.axis[i], rho.box.axis[j]], axis=-1) + jitter * h
    w = np.full(n_markers, 1.0 / n_markers)
    return ParticleEnsemble(pos, w, 0.0)

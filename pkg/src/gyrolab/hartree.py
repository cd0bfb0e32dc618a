"""Self-consistent Hartree evolution of the density matrix.

The rescaled equation is d/dt gamma = (1/(i l_b^2)) [L_b + V + w*rho, gamma];
one step is a predictor-corrector pair of exact unitary conjugations: the
predictor freezes the mean field at rho_gamma, the corrector rebuilds it from
the average (rho_gamma + rho_predicted)/2 and conjugates again from gamma.

Density matrices are stored in factored form gamma = sum_k occ_k |o_k><o_k|
(orthonormal orbitals); unitary steps touch only the orbitals, so the trace
and the whole spectrum - hence the Pauli bound - are conserved exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .basis import ScalingParams, Truncation, eval_basis_block, kinetic_diagonal
from .coherent import TruncationInsufficientError, coherent_coeff_matrix
from .grids import BoxSpec, GriddedDensity, make_density
from .grids import mean_field as grid_mean_field
from .polar import PolarEngine
from .potentials import PotentialSpec

__all__ = [
    "DensityMatrix", "LatticeSpec", "StepRejectedError",
    "potential_matrix", "density_of", "mean_field", "hartree_step",
    "observables", "initial_state", "HartreeEngine",
    "save_checkpoint", "load_checkpoint", "dt_cap",
]


class StepRejectedError(RuntimeError):
    """Corrector moved the total energy more than the configured cap."""


@dataclass
class DensityMatrix:
    """Factored density matrix over the flattened (n, m) Landau basis."""
    occupations: np.ndarray          # (r,) positive, descending
    orbitals: np.ndarray             # (nb, r) orthonormal columns
    scaling: ScalingParams
    truncation: Truncation
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.occupations = np.asarray(self.occupations, dtype=float)
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        if self.orbitals.shape != (self.truncation.size, self.occupations.size):
            raise ValueError("orbital block shape does not match truncation/rank")

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_matrix(cls, M, scaling: ScalingParams, truncation: Truncation,
                    check: bool = True, trace_tol: float = 1e-10) -> "DensityMatrix":
        M = np.asarray(M, dtype=complex)
        nrm = np.linalg.norm(M)
        if nrm > 0 and np.linalg.norm(M - M.conj().T) > 1e-12 * nrm:
            raise ValueError("density matrix must be Hermitian to 1e-12 relative")
        lam, V = eigh(M)
        lam = lam[::-1]
        V = V[:, ::-1]
        if check:
            cap = scaling.pauli_cap
            if lam.min() < -1e-10 or lam.max() > cap + 1e-10:
                raise ValueError(
                    f"eigenvalues [{lam.min():.3e}, {lam.max():.3e}] violate the "
                    f"Pauli window [0, {cap:.6e}]")
            if abs(lam.sum() - 1.0) > trace_tol:
                raise ValueError(f"trace {lam.sum():.12f} != 1 beyond {trace_tol:.0e}")
        keep = lam > max(1e-14 * max(lam.max(), 0.0), 0.0)
        return cls(lam[keep], V[:, keep], scaling, truncation)

    @property
    def matrix(self) -> np.ndarray:
        return (self.orbitals * self.occupations[None, :]) @ self.orbitals.conj().T

    @property
    def rank(self) -> int:
        return self.occupations.size

    def trace(self) -> float:
        return float(self.occupations @ np.sum(np.abs(self.orbitals) ** 2, axis=0))

    def max_occupation(self) -> float:
        return float(self.occupations.max(initial=0.0))

    def landau_occupations(self) -> np.ndarray:
        """Tr gamma Pi_n for each retained Landau level."""
        n1 = self.truncation.n_max + 1
        m1 = self.truncation.m_ang + 1
        w = np.abs(self.orbitals.reshape(n1, m1, -1)) ** 2
        return np.einsum("nmk,k->n", w, self.occupations)

    def kinetic_moment(self, k: int = 1) -> float:
        eps = kinetic_diagonal(self.truncation, self.scaling)
        w = np.sum(np.abs(self.orbitals) ** 2 * self.occupations[None, :], axis=1)
        return float(np.sum(eps ** k * w))


# ---------------------------------------------------------------------------
# quadrature-based operator assembly and densities (Cartesian surface)

def potential_matrix(W, t: Truncation, s: ScalingParams, box: BoxSpec,
                     boundary_tol: float = 1e-8) -> np.ndarray:
    """Hermitian matrix <phi_i | W | phi_j> by tensor quadrature on the box.

    W maps (x1, x2) arrays to values. Raises BoxTooSmallError (via the
    density check) when the basis carries more than boundary_tol mass
    outside the box.
    """
    pts = box.points()
    Phi = eval_basis_block(t, s, pts)
    mass_in = np.sum(np.abs(Phi) ** 2, axis=0) * box.cell_area
    worst = float(np.min(mass_in))
    if worst < 1.0 - boundary_tol:
        from .grids import BoxTooSmallError
        raise BoxTooSmallError(
            f"basis state keeps only {worst:.12f} of its mass inside the box")
    w = W(pts[:, 0], pts[:, 1]) * box.cell_area
    M = (Phi.conj().T * w) @ Phi
    return 0.5 * (M + M.conj().T)


_DENSITY_GRID_CACHE: dict = {}


def _density_grid_tables(trunc: Truncation, s: ScalingParams, box: BoxSpec):
    """Radial tables on the grid's deduplicated radii (cached per run)."""
    key = (trunc, s.b, box.half_width, box.n_cells)
    hit = _DENSITY_GRID_CACHE.get(key)
    if hit is not None:
        return hit
    from ._kernels import radial_support
    from .basis import basis_prefactors, radial_tables
    pts = box.points()
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    runiq, ridx = np.unique(r, return_inverse=True)
    G = radial_tables(trunc, s, runiq)
    entry = (ridx.astype(np.int64), theta, G, radial_support(G),
             basis_prefactors(trunc).reshape(trunc.n_max + 1, trunc.m_ang + 1))
    if len(_DENSITY_GRID_CACHE) > 6:
        _DENSITY_GRID_CACHE.clear()
    _DENSITY_GRID_CACHE[key] = entry
    return entry


def density_of(gamma: DensityMatrix, box: BoxSpec,
               boundary_tol: float = 1e-8) -> GriddedDensity:
    """rho_gamma(x) = sum_ij gamma_ij phi_i(x) conj(phi_j(x)) on the grid.

    Evaluated through the orbital angular modes on deduplicated radii, which
    is exact and far cheaper than materializing the basis matrix.
    """
    from ._kernels import density_at_points, u_modes_planes
    n = box.n_cells
    ridx, theta, G, supp, sp = _density_grid_tables(gamma.truncation,
                                                    gamma.scaling, box)
    ur, ui, _, _, _ = u_modes_planes(gamma.orbitals, G, supp, sp,
                                     gamma.truncation.n_max)
    vals = density_at_points(ur, ui, gamma.occupations, ridx, theta,
                             gamma.truncation.n_max)
    rho = make_density(vals.reshape(n, n), box)
    rho.meta["trace"] = gamma.trace()
    rho.check_box_adequate(boundary_tol)
    return rho


def mean_field(pot: PotentialSpec, rho: GriddedDensity) -> np.ndarray:
    """w * rho on rho's grid (zero-padded FFT; real output)."""
    return grid_mean_field(lambda dx, dy: pot.w(dx, dy), rho)


# ---------------------------------------------------------------------------
# the evolution engine

def dt_cap(pot: PotentialSpec, s: ScalingParams) -> float:
    """Step cap 0.05 l_b^2 / (1 + ||V||_{W^{1,inf}} + ||w||_{W^{1,inf}})."""
    return 0.05 * s.l_b ** 2 / (1.0 + pot.V_norm(1) + pot.w_norm(1))


class HartreeEngine:
    """Holds the polar-spectral machinery for one (truncation, scaling, potential)."""

    def __init__(self, trunc: Truncation, scaling: ScalingParams,
                 pot: PotentialSpec, box: BoxSpec, r_phys: float | None = None,
                 **engine_kw):
        self.trunc = trunc
        self.scaling = scaling
        self.pot = pot
        self.box = box
        # r_phys bounds the density support; it sets the interaction kernel's
        # angular band (the box itself is padded much wider for basis decay)
        if r_phys is None:
            r_phys = box.half_width
        self.polar = PolarEngine(trunc, scaling, pot, r_phys=r_phys, **engine_kw)

    def energy(self, gamma: DensityMatrix, rho_modes=None) -> float:
        """Conserved total energy Tr gamma (L_b + V + (1/2) w*rho)."""
        e_kin, e_v, e_int = self.polar.energy_parts(
            gamma.occupations, gamma.orbitals, rho_modes)
        return e_kin + e_v + e_int

    def step(self, gamma: DensityMatrix, dt: float, *,
             propagator: str = "taylor", energy_tol: float | None = None,
             frozen_field_modes=None, corrector: bool = True) -> DensityMatrix:
        """One predictor-corrector step of size dt (see module docstring).

        frozen_field_modes short-circuits the self-consistency: the given
        mean-field modes are used for a single conjugation (exactly
        reversible; used by the time-reversal check).
        """
        if dt == 0.0:
            return gamma
        polar = self.polar
        apply_u = polar.propagate if propagator == "taylor" else polar.propagate_eig

        if frozen_field_modes is not None:
            band = polar.mean_field_operator(frozen_field_modes)
            orb = apply_u(band, gamma.orbitals, dt)
            return DensityMatrix(gamma.occupations.copy(), orb, gamma.scaling,
                                 gamma.truncation, dict(gamma.meta))

        rho0 = polar.density_modes(gamma.occupations, gamma.orbitals)
        has_w = polar.kernels is not None
        W0 = polar.mean_field_modes(rho0) if has_w else None
        band = polar.mean_field_operator(W0)
        # the predictor only feeds the midpoint density, so its series can
        # run at a looser tolerance than the corrector's machine-precision one
        pred_kw = {"tol": 1e-9} if (propagator == "taylor" and corrector) else {}
        orb_star = apply_u(band, gamma.orbitals, dt, **pred_kw)

        if corrector:
            rho_star = polar.density_modes(gamma.occupations, orb_star)
            W_mid = polar.mean_field_modes(0.5 * (rho0 + rho_star)) if has_w else None
            band = polar.mean_field_operator(W_mid)
            orb_new = apply_u(band, gamma.orbitals, dt)
        else:
            orb_new = orb_star

        out = DensityMatrix(gamma.occupations.copy(), orb_new, gamma.scaling,
                            gamma.truncation, dict(gamma.meta))
        if energy_tol is not None:
            e0 = self.energy(gamma, rho_modes=rho0)
            e1 = self.energy(out)
            if abs(e1 - e0) > energy_tol:
                raise StepRejectedError(
                    f"energy moved by {abs(e1 - e0):.3e} in one step "
                    f"(cap {energy_tol:.3e}); reduce dt")
        return out


_ENGINE_CACHE: dict = {}


def _engine_for(gamma: DensityMatrix, pot: PotentialSpec, box: BoxSpec) -> HartreeEngine:
    key = (gamma.truncation, gamma.scaling.b, json.dumps(pot.to_dict(), sort_keys=True),
           box.half_width, box.n_cells)
    eng = _ENGINE_CACHE.get(key)
    if eng is None:
        eng = HartreeEngine(gamma.truncation, gamma.scaling, pot, box)
        if len(_ENGINE_CACHE) > 8:
            _ENGINE_CACHE.clear()
        _ENGINE_CACHE[key] = eng
    return eng


def hartree_step(gamma: DensityMatrix, dt: float, pot: PotentialSpec,
                 box: BoxSpec, **kw) -> DensityMatrix:
    """Convenience step with an internally cached engine."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cap = dt_cap(pot, gamma.scaling)
    if dt > cap * (1.0 + 1e-9):
        raise ValueError(f"dt {dt:.3e} exceeds the stability cap {cap:.3e}")
    return _engine_for(gamma, pot, box).step(gamma, dt, **kw)


def observables(gamma: DensityMatrix, pot: PotentialSpec, box: BoxSpec,
                engine: HartreeEngine | None = None) -> dict:
    """Conserved-quantity record at one instant."""
    eng = engine if engine is not None else _engine_for(gamma, pot, box)
    rho_modes = eng.polar.density_modes(gamma.occupations, gamma.orbitals)
    e_kin, e_v, e_int = eng.polar.energy_parts(gamma.occupations, gamma.orbitals,
                                               rho_modes)
    occ_n = gamma.landau_occupations()
    return {
        "trace": gamma.trace(),
        "energy": e_kin + e_v + e_int,
        "energy_kinetic": e_kin,
        "energy_external": e_v,
        "energy_interaction": e_int,
        "kinetic_moment_1": gamma.kinetic_moment(1),
        "kinetic_moment_2": gamma.kinetic_moment(2),
        "position_moment_4": eng.polar.radial_moment(rho_modes, 4.0),
        "position_moment_8": eng.polar.radial_moment(rho_modes, 8.0),
        "max_occupation": gamma.max_occupation(),
        "landau_occupations": occ_n.tolist(),
    }


# ---------------------------------------------------------------------------
# initial data

@dataclass(frozen=True)
class LatticeSpec:
    """Triangular lattice of LLL coherent states filling a disk."""
    spacing_in_lb: float = 2.6
    tail_tol: float = 1e-9


def triangular_lattice_points(K: int, spacing: float) -> np.ndarray:
    """K points of a triangular lattice closest to the origin (deterministic)."""
    reach = int(np.ceil(np.sqrt(K))) + 2
    a1 = np.array([spacing, 0.0])
    a2 = np.array([0.5 * spacing, 0.5 * np.sqrt(3.0) * spacing])
    pts = []
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            pts.append(i * a1 + j * a2)
    pts = np.array(pts)
    r2 = np.round(np.sum(pts ** 2, axis=1), 12)
    ang = np.round(np.arctan2(pts[:, 1], pts[:, 0]), 12)
    order = np.lexsort((ang, r2))
    return pts[order[:K]]


def initial_state(K: int, layout: LatticeSpec, s: ScalingParams,
                  t: Truncation) -> DensityMatrix:
    """gamma(0) = (1/K) P with P the Loewdin projector onto K LLL coherent states.

    Eigenvalues are exactly 1/K; K must satisfy the Pauli feasibility
    1/K <= 2 pi l_b^2 and the lattice must fit the angular truncation.
    """
    if K < 1:
        raise ValueError("need at least one state")
    cap = s.pauli_cap
    if 1.0 / K > cap * (1.0 + 1e-12):
        raise ValueError(
            f"K={K} below the Pauli threshold ceil(1/(2 pi l_b^2)) = "
            f"{int(np.ceil(1.0 / cap))}")
    pts = triangular_lattice_points(K, layout.spacing_in_lb * s.l_b)
    zs = pts[:, 0] + 1j * pts[:, 1]
    C, tails = coherent_coeff_matrix(zs, t.m_ang, s)
    if tails.max() > layout.tail_tol:
        raise TruncationInsufficientError(
            f"lattice site tail {tails.max():.3e} exceeds {layout.tail_tol:.0e}; "
            f"increase m_ang")
    Cm = C.T  # (m1, K) coefficients inside the n = 0 block
    S = Cm.conj().T @ Cm
    lam, V = eigh(S)
    if lam.min() < 1e-10:
        raise ValueError("coherent lattice nearly degenerate; increase spacing")
    S_invsqrt = (V / np.sqrt(lam)[None, :]) @ V.conj().T
    O0 = Cm @ S_invsqrt
    orbitals = np.zeros((t.size, K), dtype=complex)
    orbitals[: t.m_ang + 1, :] = O0   # n = 0 block sits first in the flat layout
    occ = np.full(K, 1.0 / K)
    dm = DensityMatrix(occ, orbitals, s, t)
    dm.meta["lattice_radius"] = float(np.abs(zs).max())
    return dm


# ---------------------------------------------------------------------------
# checkpoint serialization (documented JSON container)

def save_checkpoint(gamma: DensityMatrix, path, observables_record: dict | None = None):
    """Write the dense Hermitian matrix as row-major (re, im) pairs + metadata."""
    M = gamma.matrix
    payload = {
        "format": "gyrolab-density-checkpoint",
        "version": 1,
        "scaling": {"b": gamma.scaling.b},
        "truncation": {"n_max": gamma.truncation.n_max, "m_ang": gamma.truncation.m_ang},
        "matrix_re_im": [[float(v.real), float(v.imag)] for v in M.ravel()],
        "observables": observables_record or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> DensityMatrix:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "gyrolab-density-checkpoint":
        raise ValueError("not a density checkpoint file")
    s = ScalingParams(b=payload["scaling"]["b"], hbar=1.0 / payload["scaling"]["b"],
                      l_b=1.0 / payload["scaling"]["b"])
    t = Truncation(**payload["truncation"])
    flat = np.array(payload["matrix_re_im"], dtype=float)
    M = (flat[:, 0] + 1j * flat[:, 1]).reshape(t.size, t.size)
    return DensityMatrix.from_matrix(M, s, t)

"""Hot numeric kernels: jitted implementations with pure-numpy fallbacks.

Selection is dynamic through gyrolab._accel.use_numba() so the benchmark and
the tests can exercise both paths in one process.

Banded Hamiltonian layout: band[n, n2, m, dd] holds the matrix element
< (n, m) | H_pot | (n2, m - (dd - dmax)) > over the flattened (n, m) basis
(dd contiguous); the kinetic part stays a separate real diagonal. The
assembly also returns per-diagonal magnitudes so the matvec can skip
diagonals that vanished (smooth fields couple only nearby Landau levels and
low angular offsets).

Radial tables are sharply localized, so every (n, m) carries a support
window [jlo, jhi) used to shorten the quadrature loops.

Orbital blocks are handled as separate real/imaginary planes so the
innermost loops vectorize.
"""

import numpy as np

from ._accel import HAVE_NUMBA, use_numba

if HAVE_NUMBA:
    from numba import njit, prange
else:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap

    prange = range


def radial_support(G, rel_tol=1e-20):
    """[jlo, jhi) windows where each radial table row exceeds rel_tol * row max."""
    n1, m1, nr = G.shape
    out = np.zeros((n1, m1, 2), dtype=np.int64)
    absG = np.abs(G)
    thresh = rel_tol * absG.max(axis=2, keepdims=True)
    mask = absG > thresh
    any_row = mask.any(axis=2)
    first = mask.argmax(axis=2)
    last = nr - mask[:, :, ::-1].argmax(axis=2)
    out[..., 0] = np.where(any_row, first, 0)
    out[..., 1] = np.where(any_row, last, 0)
    return out


# ---------------------------------------------------------------------------
# banded (D + B) @ T with kinetic diagonal folded in

@njit(cache=True, parallel=True, fastmath=True)
def _band_apply_nb(band, active, bw, diag, Tr, Ti, blockmax, thresh,
                   rowact, Sr, Si):
    n1 = band.shape[0]
    m1 = band.shape[2]
    ndiag = band.shape[3]
    dmax = (ndiag - 1) // 2
    K = Tr.shape[1]
    nb = n1 * m1
    for row in prange(nb):
        n = row // m1
        m = row % m1
        d0 = diag[row]
        for k in range(K):
            Sr[row, k] = d0 * Tr[row, k]
            Si[row, k] = d0 * Ti[row, k]
        if rowact[m] == 0:
            continue
        for n2 in range(n1):
            if blockmax[n2] <= thresh:
                continue
            lo = dmax + n - n2 - bw
            hi = dmax + n - n2 + bw + 1
            if lo < 0:
                lo = 0
            if hi > ndiag:
                hi = ndiag
            base = n2 * m1
            for dd in range(lo, hi):
                if active[n, n2, dd] == 0:
                    continue
                m2 = m - (dd - dmax)
                if m2 < 0 or m2 >= m1:
                    continue
                w = band[n, n2, m, dd]
                wr = w.real
                wi = w.imag
                if wr == 0.0 and wi == 0.0:
                    continue
                src = base + m2
                for k in range(K):
                    tr = Tr[src, k]
                    ti = Ti[src, k]
                    Sr[row, k] += wr * tr - wi * ti
                    Si[row, k] += wr * ti + wi * tr


def _band_apply_np(band, active, bw, diag, Tr, Ti, blockmax, thresh,
                   rowact, Sr, Si):
    n1 = band.shape[0]
    m1 = band.shape[2]
    ndiag = band.shape[3]
    dmax = (ndiag - 1) // 2
    T = Tr + 1j * Ti
    S = diag[:, None] * T
    Tv = T.reshape(n1, m1, -1)
    Sv = S.reshape(n1, m1, -1)
    for n in range(n1):
        for n2 in range(n1):
            if blockmax[n2] <= thresh:
                continue
            for dd in range(max(0, dmax + n - n2 - bw),
                            min(ndiag, dmax + n - n2 + bw + 1)):
                if active[n, n2, dd] == 0:
                    continue
                d = dd - dmax
                mlo = max(0, d)
                mhi = min(m1, m1 + d)
                if mlo >= mhi:
                    continue
                w = band[n, n2, mlo:mhi, dd]
                if not np.any(w):
                    continue
                Sv[n, mlo:mhi, :] += w[:, None] * Tv[n2, mlo - d:mhi - d, :]
    Sr[:] = S.real
    Si[:] = S.imag


def band_apply(banded, bw, diag, Tr, Ti, Sr, Si, blockmax=None, thresh=0.0,
               rowact=None):
    """S = (diag + B) T with the banded potential B, real/imag planes."""
    band, active = banded
    n1 = band.shape[0]
    m1 = band.shape[2]
    if blockmax is None:
        blockmax = np.ones(n1)
        thresh = -1.0
    if rowact is None:
        rowact = np.ones(m1, dtype=np.uint8)
    if use_numba():
        _band_apply_nb(band, active, bw, diag, Tr, Ti, blockmax, thresh,
                       rowact, Sr, Si)
    else:
        _band_apply_np(band, active, bw, diag, Tr, Ti, blockmax, thresh,
                       rowact, Sr, Si)
    return Sr, Si


# ---------------------------------------------------------------------------
# banded assembly from angular potential modes

@njit(cache=True, parallel=True, fastmath=True)
def _assemble_band_nb(G, supp, spr, spi, Pw, bw, dmax, band, diagmax):
    n1, m1, nr = G.shape
    lmax = Pw.shape[0] - 1
    ndiag = 2 * dmax + 1
    for flat in prange(n1 * n1):
        n = flat // n1
        n2 = flat % n1
        for dd in range(ndiag):
            d = dd - dmax
            ell = d - n + n2
            la = ell if ell >= 0 else -ell
            if la > lmax or la > bw:
                for m in range(m1):
                    band[n, n2, m, dd] = 0.0 + 0.0j
                diagmax[n, n2, dd] = 0.0
                continue
            dmx = 0.0
            for m in range(m1):
                m2 = m - d
                if m2 < 0 or m2 >= m1:
                    band[n, n2, m, dd] = 0.0 + 0.0j
                    continue
                jlo = max(supp[n, m, 0], supp[n2, m2, 0])
                jhi = min(supp[n, m, 1], supp[n2, m2, 1])
                sre = 0.0
                sim = 0.0
                for j in range(jlo, jhi):
                    g = G[n, m, j] * G[n2, m2, j]
                    sre += g * Pw[la, j].real
                    sim += g * Pw[la, j].imag
                if ell < 0:
                    sim = -sim
                # unimodular prefactors conj(sigma_{n,m}) sigma_{n2,m2}
                fr = spr[n, m] * spr[n2, m2] + spi[n, m] * spi[n2, m2]
                fi = spr[n, m] * spi[n2, m2] - spi[n, m] * spr[n2, m2]
                vre = fr * sre - fi * sim
                vim = fr * sim + fi * sre
                band[n, n2, m, dd] = complex(vre, vim)
                a = abs(vre) + abs(vim)
                if a > dmx:
                    dmx = a
            diagmax[n, n2, dd] = dmx


def _assemble_band_np(G, supp, spr, spi, Pw, bw, dmax, band, diagmax):
    n1, m1, nr = G.shape
    lmax = Pw.shape[0] - 1
    sp = spr + 1j * spi
    band[:] = 0.0
    diagmax[:] = 0.0
    for n in range(n1):
        for n2 in range(n1):
            for dd in range(2 * dmax + 1):
                d = dd - dmax
                ell = d - n + n2
                if abs(ell) > min(lmax, bw):
                    continue
                mlo = max(0, d)
                mhi = min(m1, m1 + d)
                if mlo >= mhi:
                    continue
                mode = Pw[abs(ell)] if ell >= 0 else np.conj(Pw[-ell])
                s = np.einsum("mj,mj,j->m", G[n, mlo:mhi],
                              G[n2, mlo - d:mhi - d], mode)
                vals = (np.conj(sp[n, mlo:mhi]) * sp[n2, mlo - d:mhi - d] * s)
                band[n, n2, mlo:mhi, dd] = vals
                if vals.size:
                    diagmax[n, n2, dd] = np.max(np.abs(vals.real) + np.abs(vals.imag))


def assemble_band(G, supp, sp, Pw, bw, dmax, active_tol=1e-14):
    """Banded matrix of the multiplication operator with angular modes Pw.

    G: real radial tables (n1, m1, nr); supp: radial support windows;
    sp: unimodular basis prefactors (n1, m1); Pw: potential modes for
    ell >= 0 with the radial quadrature weight and the 2*pi angular factor
    folded in, shape (lmax+1, nr). Returns (band, active) where active
    masks diagonals above active_tol relative magnitude (the mask is
    symmetric under conjugate transposition, so the operator stays exactly
    Hermitian).
    """
    n1, m1, _ = G.shape
    ndiag = 2 * dmax + 1
    band = np.empty((n1, n1, m1, ndiag), dtype=complex)
    diagmax = np.empty((n1, n1, ndiag))
    spr = np.ascontiguousarray(sp.real)
    spi = np.ascontiguousarray(sp.imag)
    if use_numba():
        _assemble_band_nb(G, supp, spr, spi, Pw, bw, dmax, band, diagmax)
    else:
        _assemble_band_np(G, supp, spr, spi, Pw, bw, dmax, band, diagmax)
    ref = diagmax.max()
    active = (diagmax > active_tol * ref).astype(np.uint8)
    # enforce a Hermitian activity pattern: (n, n2, dd) <-> (n2, n, mirror)
    active = np.maximum(active, active.transpose(1, 0, 2)[:, :, ::-1].copy())
    return np.ascontiguousarray(band), np.ascontiguousarray(active)


# ---------------------------------------------------------------------------
# orbital angular modes u_{k,l}(r) from flat coefficients

@njit(cache=True, parallel=True, fastmath=True)
def _u_modes_nb(Or, Oi, G, supp, spr, spi, n_max, ur, ui, rowmax, rowlo, rowhi):
    n1, m1, nr = G.shape
    K = Or.shape[1]
    lu = ur.shape[1]
    for k in prange(K):
        for l in range(lu):
            rowlo[k, l] = nr
            rowhi[k, l] = 0
            for j in range(nr):
                ur[k, l, j] = 0.0
                ui[k, l, j] = 0.0
        for n in range(n1):
            base = n * m1
            lo = n_max - n
            for m in range(m1):
                orr = Or[base + m, k]
                oii = Oi[base + m, k]
                cr = spr[n, m] * orr - spi[n, m] * oii
                ci = spr[n, m] * oii + spi[n, m] * orr
                if cr == 0.0 and ci == 0.0:
                    continue
                l = lo + m
                jlo = supp[n, m, 0]
                jhi = supp[n, m, 1]
                for j in range(jlo, jhi):
                    g = G[n, m, j]
                    ur[k, l, j] += cr * g
                    ui[k, l, j] += ci * g
                if jlo < rowlo[k, l]:
                    rowlo[k, l] = jlo
                if jhi > rowhi[k, l]:
                    rowhi[k, l] = jhi
        for l in range(lu):
            mx = 0.0
            for j in range(rowlo[k, l], rowhi[k, l]):
                a = abs(ur[k, l, j])
                if a > mx:
                    mx = a
                b = abs(ui[k, l, j])
                if b > mx:
                    mx = b
            rowmax[k, l] = mx
            if mx == 0.0:
                rowlo[k, l] = 0
                rowhi[k, l] = 0


def _u_modes_np(Or, Oi, G, supp, spr, spi, n_max, ur, ui, rowmax, rowlo, rowhi):
    n1, m1, nr = G.shape
    O = (Or + 1j * Oi).reshape(n1, m1, -1)
    sp = spr + 1j * spi
    u = np.zeros((Or.shape[1], ur.shape[1], nr), dtype=complex)
    for n in range(n1):
        coeff = (sp[n, :, None] * O[n]).T          # (K, m1)
        lo = n_max - n
        u[:, lo:lo + m1, :] += coeff[:, :, None] * G[n][None, :, :]
    ur[:] = u.real
    ui[:] = u.imag
    rowmax[:] = np.maximum(np.abs(ur), np.abs(ui)).max(axis=2)
    rowlo[:] = 0
    rowhi[:] = np.where(rowmax > 0.0, nr, 0)


def u_modes_planes(orbitals, G, supp, sp, n_max):
    """Angular modes of the orbitals as real/imag planes plus row metadata."""
    n1, m1, nr = G.shape
    K = orbitals.shape[1]
    lu = m1 + n_max
    Or = np.ascontiguousarray(orbitals.real)
    Oi = np.ascontiguousarray(orbitals.imag)
    ur = np.empty((K, lu, nr))
    ui = np.empty((K, lu, nr))
    rowmax = np.empty((K, lu))
    rowlo = np.empty((K, lu), dtype=np.int64)
    rowhi = np.empty((K, lu), dtype=np.int64)
    spr = np.ascontiguousarray(sp.real)
    spi = np.ascontiguousarray(sp.imag)
    if use_numba():
        _u_modes_nb(Or, Oi, G, supp, spr, spi, n_max, ur, ui, rowmax, rowlo, rowhi)
    else:
        _u_modes_np(Or, Oi, G, supp, spr, spi, n_max, ur, ui, rowmax, rowlo, rowhi)
    return ur, ui, rowmax, rowlo, rowhi


# ---------------------------------------------------------------------------
# density angular modes from orbital angular modes

@njit(cache=True, parallel=True, fastmath=True)
def _density_modes_nb(ur, ui, occ, rowmax, rowlo, rowhi, thresh, rho):
    K, lu, nr = ur.shape
    nmodes = rho.shape[0]
    for ell in prange(nmodes):
        for j in range(nr):
            rho[ell, j] = 0.0 + 0.0j
        for k in range(K):
            ok = occ[k]
            for l1 in range(lu - ell):
                if rowmax[k, l1] * rowmax[k, l1 + ell] <= thresh:
                    continue
                jlo = max(rowlo[k, l1], rowlo[k, l1 + ell])
                jhi = min(rowhi[k, l1], rowhi[k, l1 + ell])
                for j in range(jlo, jhi):
                    ar = ur[k, l1, j]
                    ai = ui[k, l1, j]
                    br = ur[k, l1 + ell, j]
                    bi = ui[k, l1 + ell, j]
                    rho[ell, j] += complex(ok * (ar * br + ai * bi),
                                           ok * (ar * bi - ai * br))


def _density_modes_np(ur, ui, occ, rho):
    u = ur + 1j * ui
    nmodes = rho.shape[0]
    lu = u.shape[1]
    for ell in range(nmodes):
        prod = np.conj(u[:, : lu - ell, :]) * u[:, ell:, :]
        rho[ell] = np.einsum("k,klj->j", occ, prod)


def density_modes_from_u(ur, ui, occ, nmodes, rowmax=None, rowlo=None,
                         rowhi=None, thresh=0.0):
    """rho_ell(r) = sum_k occ_k sum_l conj(u_{k,l}) u_{k,l+ell}, 0 <= ell < nmodes."""
    K, lu, nr = ur.shape
    rho = np.empty((nmodes, nr), dtype=complex)
    if use_numba():
        if rowmax is None:
            rowmax = np.ones((K, lu))
            rowlo = np.zeros((K, lu), dtype=np.int64)
            rowhi = np.full((K, lu), nr, dtype=np.int64)
            thresh = -1.0
        _density_modes_nb(ur, ui, occ, rowmax, rowlo, rowhi, thresh, rho)
    else:
        _density_modes_np(ur, ui, occ, rho)
    return rho


# ---------------------------------------------------------------------------
# pointwise density from orbital angular modes on deduplicated radii

@njit(cache=True, parallel=True, fastmath=True)
def _density_points_nb(ur, ui, occ, ridx, ctheta, stheta, n_max, out):
    K, lu, _ = ur.shape
    npts = ridx.size
    for p in prange(npts):
        j = ridx[p]
        c1 = ctheta[p]
        s1 = stheta[p]
        total = 0.0
        for k in range(K):
            # phase starts at exp(-i n_max theta), advances by exp(+i theta)
            cp = 1.0
            sp_ = 0.0
            for _ in range(n_max):
                cn = cp * c1 + sp_ * s1
                sn = sp_ * c1 - cp * s1
                cp, sp_ = cn, sn
            ar = 0.0
            ai = 0.0
            for l in range(lu):
                gr = ur[k, l, j]
                gi = ui[k, l, j]
                ar += gr * cp - gi * sp_
                ai += gr * sp_ + gi * cp
                cn = cp * c1 - sp_ * s1
                sn = sp_ * c1 + cp * s1
                cp, sp_ = cn, sn
            total += occ[k] * (ar * ar + ai * ai)
        out[p] = total


def _density_points_np(ur, ui, occ, ridx, ctheta, stheta, n_max, out):
    K, lu, _ = ur.shape
    u = (ur + 1j * ui)[:, :, ridx]                     # (K, lu, npts)
    theta = np.arctan2(stheta, ctheta)
    ell = np.arange(-n_max, lu - n_max)
    phases = np.exp(1j * np.outer(ell, theta))         # (lu, npts)
    amp = np.einsum("klp,lp->kp", u, phases)
    out[:] = np.einsum("k,kp->p", occ, np.abs(amp) ** 2)


def density_at_points(ur, ui, occ, ridx, theta, n_max):
    """rho at arbitrary points given orbital modes on deduplicated radii."""
    out = np.empty(ridx.size)
    ctheta = np.cos(theta)
    stheta = np.sin(theta)
    ridx = np.ascontiguousarray(ridx, dtype=np.int64)
    if use_numba():
        _density_points_nb(ur, ui, occ, ridx, ctheta, stheta, n_max, out)
    else:
        _density_points_np(ur, ui, occ, ridx, ctheta, stheta, n_max, out)
    return out


# ---------------------------------------------------------------------------
# cloud-in-cell deposition

@njit(cache=True, parallel=True, fastmath=False)
def _cic_deposit_nb(pos, wgt, half_width, ncells, nblocks, buffers):
    n = pos.shape[0]
    h = 2.0 * half_width / ncells
    chunk = (n + nblocks - 1) // nblocks
    for blk in prange(nblocks):
        lo = blk * chunk
        hi = min(n, lo + chunk)
        for p in range(lo, hi):
            fx = (pos[p, 0] + half_width) / h - 0.5
            fy = (pos[p, 1] + half_width) / h - 0.5
            ix = int(np.floor(fx))
            iy = int(np.floor(fy))
            if ix < 0:
                ix = 0
            if ix > ncells - 2:
                ix = ncells - 2
            if iy < 0:
                iy = 0
            if iy > ncells - 2:
                iy = ncells - 2
            tx = min(max(fx - ix, 0.0), 1.0)
            ty = min(max(fy - iy, 0.0), 1.0)
            w = wgt[p]
            buffers[blk, ix, iy] += w * (1.0 - tx) * (1.0 - ty)
            buffers[blk, ix + 1, iy] += w * tx * (1.0 - ty)
            buffers[blk, ix, iy + 1] += w * (1.0 - tx) * ty
            buffers[blk, ix + 1, iy + 1] += w * tx * ty


def _cic_deposit_np(pos, wgt, half_width, ncells):
    h = 2.0 * half_width / ncells
    f = (pos + half_width) / h - 0.5
    i0 = np.clip(np.floor(f).astype(np.int64), 0, ncells - 2)
    t = np.clip(f - i0, 0.0, 1.0)
    grid = np.zeros((ncells, ncells))
    for ox, oy, wfun in (
        (0, 0, (1 - t[:, 0]) * (1 - t[:, 1])),
        (1, 0, t[:, 0] * (1 - t[:, 1])),
        (0, 1, (1 - t[:, 0]) * t[:, 1]),
        (1, 1, t[:, 0] * t[:, 1]),
    ):
        np.add.at(grid, (i0[:, 0] + ox, i0[:, 1] + oy), wgt * wfun)
    return grid


def cic_deposit(pos, wgt, half_width, ncells, nblocks=8):
    """Bilinear (cloud-in-cell) deposition, deterministic block merge order."""
    pos = np.ascontiguousarray(pos, dtype=float)
    wgt = np.ascontiguousarray(wgt, dtype=float)
    if use_numba():
        buffers = np.zeros((nblocks, ncells, ncells))
        _cic_deposit_nb(pos, wgt, half_width, ncells, nblocks, buffers)
        grid = buffers[0]
        for b in range(1, nblocks):
            grid = grid + buffers[b]
        return grid
    return _cic_deposit_np(pos, wgt, half_width, ncells)

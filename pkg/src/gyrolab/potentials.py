"""Smooth external and interaction potentials with analytic derivatives.

V is a sum of Gaussian bumps, w a single radial Gaussian, so every partial
derivative up to order 9 is a Hermite polynomial times the Gaussian and the
W^{k,inf} norms can be evaluated to scan accuracy.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["GaussianBump", "PotentialSpec"]


def _hermite_prob(j: int, u: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite polynomial He_j(u) by recurrence."""
    if j == 0:
        return np.ones_like(u)
    h0 = np.ones_like(u)
    h1 = u.copy()
    for k in range(1, j):
        h0, h1 = h1, u * h1 - k * h0
    return h1


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float
    center: tuple
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    def __call__(self, x1, x2):
        u1 = (np.asarray(x1) - self.center[0]) / self.width
        u2 = (np.asarray(x2) - self.center[1]) / self.width
        return self.amplitude * np.exp(-(u1 ** 2 + u2 ** 2) / 2.0)

    def deriv(self, a1: int, a2: int, x1, x2):
        """Partial derivative d^{a1}_{x1} d^{a2}_{x2} of the bump."""
        u1 = (np.asarray(x1) - self.center[0]) / self.width
        u2 = (np.asarray(x2) - self.center[1]) / self.width
        pref = self.amplitude * (-1.0 / self.width) ** (a1 + a2)
        return (pref * _hermite_prob(a1, u1) * _hermite_prob(a2, u2)
                * np.exp(-(u1 ** 2 + u2 ** 2) / 2.0))


@dataclass(frozen=True)
class PotentialSpec:
    """External potential V (Gaussian bumps) and radial interaction w."""
    bumps: tuple = ()
    w_amplitude: float = 0.0
    w_width: float = 1.0

    def __post_init__(self):
        if self.w_width <= 0:
            raise ValueError("interaction width must be positive")
        object.__setattr__(self, "bumps", tuple(
            b if isinstance(b, GaussianBump) else GaussianBump(**b) for b in self.bumps))
        object.__setattr__(self, "_norm_cache", {})

    # -- external potential -------------------------------------------------
    def V(self, x1, x2):
        out = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        for b in self.bumps:
            out = out + b(x1, x2)
        return out

    def V_deriv(self, a1: int, a2: int, x1, x2):
        out = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        for b in self.bumps:
            out = out + b.deriv(a1, a2, x1, x2)
        return out

    def grad_V(self, x1, x2):
        return self.V_deriv(1, 0, x1, x2), self.V_deriv(0, 1, x1, x2)

    # -- interaction --------------------------------------------------------
    def w(self, x1, x2):
        u = (np.asarray(x1) ** 2 + np.asarray(x2) ** 2) / self.w_width ** 2
        return self.w_amplitude * np.exp(-u / 2.0)

    def w_radial(self, r):
        return self.w_amplitude * np.exp(-np.asarray(r) ** 2 / (2.0 * self.w_width ** 2))

    def w_deriv(self, a1: int, a2: int, x1, x2):
        bump = GaussianBump(self.w_amplitude, (0.0, 0.0), self.w_width)
        return bump.deriv(a1, a2, x1, x2)

    # -- sup norms of derivatives -------------------------------------------
    def _scan_grid(self, which: str):
        if which == "V":
            if not self.bumps:
                return None
            cs = np.array([b.center for b in self.bumps])
            ws = max(b.width for b in self.bumps)
            lo = cs.min(axis=0) - 8.0 * ws
            hi = cs.max(axis=0) + 8.0 * ws
            step = min(b.width for b in self.bumps) / 24.0
        else:
            lo = np.array([-8.0 * self.w_width] * 2)
            hi = -lo
            step = self.w_width / 24.0
        n1 = int(np.ceil((hi[0] - lo[0]) / step)) + 1
        n2 = int(np.ceil((hi[1] - lo[1]) / step)) + 1
        ax1 = np.linspace(lo[0], hi[0], min(n1, 900))
        ax2 = np.linspace(lo[1], hi[1], min(n2, 900))
        return np.meshgrid(ax1, ax2, indexing="ij")

    def _norm(self, which: str, k: int) -> float:
        if k < 0 or k > 9:
            raise ValueError("derivative norms available for 0 <= k <= 9")
        key = (which, k)
        if key in self._norm_cache:
            return self._norm_cache[key]
        grid = self._scan_grid(which)
        if grid is None:
            return 0.0
        X1, X2 = grid
        deriv = self.V_deriv if which == "V" else self.w_deriv
        best = 0.0
        for order in range(k + 1):
            for a1 in range(order + 1):
                a2 = order - a1
                best = max(best, float(np.abs(deriv(a1, a2, X1, X2)).max()))
        self._norm_cache[key] = best
        return best

    def V_norm(self, k: int) -> float:
        """max_{|alpha| <= k} sup |d^alpha V| (scan over the bumps' support)."""
        return self._norm("V", k)

    def w_norm(self, k: int) -> float:
        if self.w_amplitude == 0.0:
            return 0.0
        return self._norm("w", k)

    @property
    def V_sup(self) -> float:
        return self.V_norm(0)

    @property
    def w_sup(self) -> float:
        return abs(self.w_amplitude)

    def to_dict(self) -> dict:
        return {
            "bumps": [{"amplitude": b.amplitude, "center": list(b.center), "width": b.width}
                      for b in self.bumps],
            "w_amplitude": self.w_amplitude,
            "w_width": self.w_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        bumps = tuple(GaussianBump(b["amplitude"], tuple(b["center"]), b["width"])
                      for b in d.get("bumps", []))
        return cls(bumps=bumps, w_amplitude=d.get("w_amplitude", 0.0),
                   w_width=d.get("w_width", 1.0))

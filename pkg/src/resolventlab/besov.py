"""Littlewood-Paley decomposition and discrete Besov norms.

The dyadic windows are built from the smooth bump exp(-1/(1-t^2)) rescaled to
the annulus 1/2 <= |xi| <= 2 and normalized post hoc so that the telescoping
sum equals 1 at every sampled frequency (the construction only pins support
and the sum condition, so the normalization is ours).  Norm equivalence
constants therefore depend on this window choice and are reported empirically
rather than asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import Field, SpectralGrid, extend_to_box, inverse_transform

__all__ = [
    "BesovParams",
    "LPFamily",
    "build_lp_family",
    "besov_norm",
    "besov_block_norms",
    "besov_norm_extended",
    "check_product_estimate",
    "ProductEstimateReport",
]


@dataclass(frozen=True)
class BesovParams:
    """Exponents (s, q, r) and the optional decay shift sigma.

    When sigma is present the shifted indices s-sigma and s+sigma must stay
    inside the boundary-value window (-1+1/q, 1/q).
    """

    s: float
    q: float = 2.0
    r: float = 1.0
    sigma: Optional[float] = None

    def __post_init__(self):
        if not 1.0 < self.q < math.inf:
            raise ValueError(f"q must lie in (1, inf), got {self.q}")
        if not (1.0 <= self.r):
            raise ValueError(f"r must lie in [1, inf], got {self.r}")
        if self.sigma is not None:
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")
            lo, hi = -1.0 + 1.0 / self.q, 1.0 / self.q
            if not (lo < self.s - self.sigma and self.s + self.sigma < hi):
                raise ValueError(
                    f"need {lo:.4g} < s-sigma < s+sigma < {hi:.4g}; "
                    f"got s={self.s}, sigma={self.sigma}"
                )

    def at(self, nu: float) -> "BesovParams":
        """Same (q, r) at a different smoothness index, window check dropped."""
        return replace(self, s=nu, sigma=None)

    def in_boundary_window(self) -> bool:
        return -1.0 + 1.0 / self.q < self.s < 1.0 / self.q


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


@dataclass(frozen=True)
class LPFamily:
    """Frequency-space dyadic windows on a fixed periodic grid.

    phi_hats[j] is the window of block k = k_min + j, supported in
    {2^(k-1) <= |xi| <= 2^(k+1)}; psi_hat is the low-frequency complement.
    Together they sum to 1 at every sampled frequency.
    """

    grid: SpectralGrid
    psi_hat: np.ndarray
    phi_hats: np.ndarray
    k_min: int

    @property
    def k_max(self) -> int:
        return self.k_min + self.phi_hats.shape[0] - 1

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def partition_defect(self) -> float:
        total = self.psi_hat + self.phi_hats.sum(axis=0)
        return float(np.abs(total - 1.0).max())


def build_lp_family(grid: SpectralGrid) -> LPFamily:
    """Dyadic windows covering every frequency representable on the grid."""
    if not grid.is_periodic:
        raise ValueError("Littlewood-Paley windows require a periodic box; "
                         "extend half-space fields first")
    if min(grid.npoints) < 16:
        raise ValueError("grid too coarse to hold one full annulus "
                         "(need at least 16 points per axis)")
    xi_abs = np.zeros(grid.shape)
    for xi in grid.freq_mesh():
        xi_abs = xi_abs + xi**2
    xi_abs = np.sqrt(xi_abs)

    with np.errstate(divide="ignore"):
        u = np.log2(xi_abs, out=np.full(grid.shape, -np.inf), where=xi_abs > 0)
    u_max = float(u.max())
    u_min_pos = float(u[np.isfinite(u)].min())
    # every block whose open annulus (k-1, k+1) meets a sampled frequency
    k_lo = math.floor(u_min_pos) - 1
    k_hi = math.floor(u_max) + 1

    raw = np.stack([_bump(u - k) for k in range(k_lo, k_hi + 1)])
    norm = raw.sum(axis=0)
    # frequencies can sit exactly on a dyadic power where both neighbours
    # vanish; the raw sum is then 0 and the point belongs to a single block
    exact = norm == 0.0
    if exact.any():
        ue = u[exact]
        for j, k in enumerate(range(k_lo, k_hi + 1)):
            raw[j][exact] = np.where(ue == k, 1.0, raw[j][exact])
        norm = raw.sum(axis=0)
        norm[norm == 0.0] = 1.0  # the xi = 0 point; psi takes it below
    windows = raw / norm

    high = [w for k, w in zip(range(k_lo, k_hi + 1), windows) if k >= 1]
    if not high:
        raise ValueError("grid holds no dyadic block above |xi| = 1")
    phi_hats = np.stack(high)
    psi_hat = 1.0 - phi_hats.sum(axis=0)
    psi_hat[xi_abs == 0.0] = 1.0
    return LPFamily(grid=grid, psi_hat=psi_hat, phi_hats=phi_hats, k_min=1)


def _lq_of_blocks(grid: SpectralGrid, fhat: np.ndarray, windows: np.ndarray,
                  q: float) -> np.ndarray:
    """L_q norms of the windowed inverse transforms, one value per window.

    fhat has shape (ncomp,) + grid.shape, windows (nwin,) + grid.shape.
    q = 2 goes through Parseval (uniform weights on a periodic box).
    """
    ncomp = fhat.shape[0]
    nwin = windows.shape[0]
    if q == 2:
        cell = grid.cell_volume()
        total = math.prod(grid.npoints)
        out = np.empty(nwin)
        for j in range(nwin):
            acc = 0.0
            for c in range(ncomp):
                wf = windows[j] * fhat[c]
                acc += math.sqrt(cell / total * float((wf.real**2 + wf.imag**2).sum()))
            out[j] = acc
        return out
    out = np.empty(nwin)
    for j in range(nwin):
        blk = inverse_transform(grid, windows[j][None, ...] * fhat)
        out[j] = blk.lq_norm(q)
    return out


def besov_block_norms(f: Field, p: BesovParams, lp: LPFamily):
    """(low-pass L_q norm, per-block L_q norms) of the decomposition of f."""
    if f.grid.shape != lp.grid.shape:
        raise ValueError("field and window family live on different grids")
    fhat = np.fft.fftn(f.values, axes=tuple(range(1, f.grid.dim + 1)))
    low = float(_lq_of_blocks(lp.grid, fhat, lp.psi_hat[None, ...], p.q)[0])
    blocks = _lq_of_blocks(lp.grid, fhat, lp.phi_hats, p.q)
    return low, blocks


def besov_norm(f: Field, p: BesovParams, lp: LPFamily) -> float:
    """Discrete B^s_{q,r} norm: low-pass plus the ell_r sum of 2^{sk}-weighted
    block norms (sup over blocks when r = inf)."""
    low, blocks = besov_block_norms(f, p, lp)
    weighted = 2.0 ** (p.s * lp.ks) * blocks
    if math.isinf(p.r):
        tail = float(weighted.max()) if weighted.size else 0.0
    else:
        tail = float((weighted**p.r).sum()) ** (1.0 / p.r)
    return low + tail


def besov_norm_extended(f: Field, p: BesovParams, lp: LPFamily,
                        parities: Optional[tuple[str, ...]] = None) -> float:
    """Besov norm of a half-space field via reflection onto the doubled box.

    Even reflection per component by default; this is the computable surrogate
    for the restriction norm and its equivalence constants are lambda-free, so
    decay slopes are unaffected.
    """
    if parities is None:
        parities = ("even",) * f.ncomp
    return besov_norm(extend_to_box(f, parities), p, lp)


@dataclass(frozen=True)
class ProductEstimateReport:
    product_norm: float
    u_norm: float
    v_factor: float

    @property
    def ratio(self) -> float:
        return self.product_norm / (self.u_norm * self.v_factor)


def check_product_estimate(u: Field, v: Field, p: BesovParams,
                           lp: LPFamily) -> ProductEstimateReport:
    """Measure ||uv|| / (||u||_{B^s_{q,r}} ||v||_{B^{N/q}_{q,inf} ^ Linf}).

    Valid in the window N-1 < q < 2N, -1+N/q <= s < 1/q; violations are
    rejected naming the failed inequality.
    """
    ndim = u.grid.dim
    if not ndim - 1 < p.q:
        raise ValueError(f"product estimate needs N-1 < q (N={ndim}, q={p.q})")
    if not p.q < 2 * ndim:
        raise ValueError(f"product estimate needs q < 2N (N={ndim}, q={p.q})")
    if not -1.0 + ndim / p.q <= p.s:
        raise ValueError(f"product estimate needs -1+N/q <= s (s={p.s})")
    if not p.s < 1.0 / p.q:
        raise ValueError(f"product estimate needs s < 1/q (s={p.s})")
    if v.ncomp != 1:
        raise ValueError("multiplier v must be scalar")
    uv = Field(u.grid, u.values * v.values[0])
    prod = besov_norm(uv, p, lp)
    u_norm = besov_norm(u, p, lp)
    v_besov = besov_norm(v, BesovParams(s=ndim / p.q, q=p.q, r=math.inf), lp)
    v_factor = v_besov + v.linf_norm()
    return ProductEstimateReport(product_norm=prod, u_norm=u_norm, v_factor=v_factor)

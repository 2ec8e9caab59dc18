"""Grids, fields, discrete transforms, and sector geometry.

Conventions, fixed once for the whole package:

* forward FFT carries no scale factor, the inverse carries 1/(total points)
  (numpy's default), so ``inverse(forward(f)) == f`` to roundoff;
* a periodic axis of length L with n points samples x_j = j*L/n and carries
  frequencies xi = 2*pi*k/L with k in fftfreq order;
* a half-space grid is periodic in the first dim-1 axes and one-sided in the
  last one: x_N = j*h on [0, X_max), with the understanding that fields decay
  before X_max.  Whole-space solves act on the even/odd extension onto a
  periodic box of length 2*X_max.

Everything here is immutable after construction and free of shared state, so
parameter sweeps can fan out across threads without coordination.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SectorParams",
    "SectorPoint",
    "sector_contains",
    "SpectralGrid",
    "Field",
    "ModelParams",
    "MultiplierError",
    "apply_multiplier",
    "forward_transform",
    "inverse_transform",
    "tangential_transform",
    "tangential_inverse",
    "spectral_derivative",
    "extend_to_box",
    "restrict_from_box",
    "single_mode",
    "random_band_limited",
]

PERIODIC = "periodic-box"
HALFSPACE = "half-space-truncated"


class MultiplierError(ValueError):
    """A symbol evaluated to a non-finite value at a sampled frequency."""


# ---------------------------------------------------------------------------
# sector geometry


@dataclass(frozen=True)
class SectorParams:
    """Parabolic sector: |arg lambda| <= pi - epsilon and |lambda| >= lambda0."""

    epsilon: float
    lambda0: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < math.pi / 2:
            raise ValueError(f"epsilon must lie in (0, pi/2), got {self.epsilon}")
        if not self.lambda0 > 0.0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")


def sector_contains(lam: complex, params: SectorParams) -> bool:
    """True iff lam is a valid spectral parameter for the given sector."""
    lam = complex(lam)
    if lam == 0.0:
        return False
    if abs(lam) < params.lambda0:
        return False
    return abs(cmath.phase(lam)) <= math.pi - params.epsilon


@dataclass(frozen=True)
class SectorPoint:
    """A spectral parameter together with the sector that admits it."""

    lam: complex
    params: SectorParams

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        if not sector_contains(self.lam, self.params):
            raise ValueError(
                f"lambda={self.lam} outside the sector "
                f"(epsilon={self.params.epsilon}, lambda0={self.params.lambda0})"
            )

    @property
    def abs(self) -> float:
        return abs(self.lam)

    @property
    def arg(self) -> float:
        return cmath.phase(self.lam)

    def sqrt(self) -> complex:
        """Principal square root; Re > 0 on the sector."""
        return cmath.sqrt(self.lam)


def sector_sweep(
    params: SectorParams,
    decades: Sequence[int] = range(0, 13),
    n_args: int = 5,
    base: Optional[float] = None,
) -> list[SectorPoint]:
    """Dyadic |lambda| ladder crossed with arguments spread over the sector."""
    base = params.lambda0 if base is None else base
    theta_max = math.pi - params.epsilon
    if n_args == 1:
        args = [0.0]
    else:
        half = (n_args - 1) // 2
        args = sorted(theta_max * k / half for k in range(-half, half + 1))
    return [
        SectorPoint(base * (2.0**j) * cmath.exp(1j * theta), params)
        for j in decades
        for theta in args
    ]


# ---------------------------------------------------------------------------
# grids


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    """Discretized periodic box or truncated half-space.

    ``lengths[i]`` is the period of axis i for a periodic box.  For the
    half-space kind the last entry is X_max and the last axis samples
    [0, X_max) with spacing X_max/n.
    """

    dim: int
    kind: str
    lengths: tuple[float, ...]
    npoints: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "npoints", tuple(int(v) for v in self.npoints))
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.kind not in (PERIODIC, HALFSPACE):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if len(self.lengths) != self.dim or len(self.npoints) != self.dim:
            raise ValueError("lengths/npoints must have one entry per axis")
        if any(L <= 0 for L in self.lengths):
            raise ValueError("axis lengths must be positive")
        for n in self.npoints:
            if n < 8 or not _is_pow2(n):
                raise ValueError(f"points per axis must be a power of two >= 8, got {n}")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def periodic(lengths: Sequence[float], npoints: Sequence[int]) -> "SpectralGrid":
        return SpectralGrid(len(tuple(lengths)), PERIODIC, tuple(lengths), tuple(npoints))

    @staticmethod
    def halfspace(
        tangential_lengths: Sequence[float],
        tangential_npoints: Sequence[int],
        xmax: float,
        normal_npoints: int,
    ) -> "SpectralGrid":
        lengths = tuple(tangential_lengths) + (float(xmax),)
        npoints = tuple(tangential_npoints) + (int(normal_npoints),)
        return SpectralGrid(len(lengths), HALFSPACE, lengths, npoints)

    # -- basic geometry ------------------------------------------------------

    @property
    def is_periodic(self) -> bool:
        return self.kind == PERIODIC

    @property
    def is_halfspace(self) -> bool:
        return self.kind == HALFSPACE

    @property
    def shape(self) -> tuple[int, ...]:
        return self.npoints

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.npoints))

    @property
    def xmax(self) -> float:
        if not self.is_halfspace:
            raise ValueError("xmax is only defined for half-space grids")
        return self.lengths[-1]

    def nodes(self, axis: int) -> np.ndarray:
        h = self.spacings[axis]
        return h * np.arange(self.npoints[axis])

    @property
    def normal_nodes(self) -> np.ndarray:
        return self.nodes(self.dim - 1)

    def freq(self, axis: int) -> np.ndarray:
        if self.is_halfspace and axis == self.dim - 1:
            raise ValueError("the normal axis of a half-space grid carries no frequencies")
        n = self.npoints[axis]
        return 2.0 * math.pi * np.fft.fftfreq(n, d=self.spacings[axis])

    def freq_mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency arrays, one per periodic axis."""
        if self.is_halfspace:
            raise ValueError("freq_mesh requires a periodic box; extend first")
        return tuple(np.meshgrid(*(self.freq(a) for a in range(self.dim)),
                                 indexing="ij", sparse=True))

    def tangential_freq_mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable tangential frequency arrays for a half-space grid."""
        if not self.is_halfspace:
            raise ValueError("tangential frequencies require a half-space grid")
        if self.dim == 1:
            return ()
        freqs = [self.freq(a) for a in range(self.dim - 1)]
        return tuple(np.meshgrid(*freqs, indexing="ij", sparse=True))

    def tangential_xi_sq(self) -> np.ndarray:
        """|xi'|^2 on the tangential mode grid (shape npoints[:-1], 0-d for dim 1)."""
        mesh = self.tangential_freq_mesh()
        if not mesh:
            return np.zeros(())
        out = np.zeros(self.npoints[:-1])
        for xi in mesh:
            out = out + xi**2
        return out

    def extended_box(self) -> "SpectralGrid":
        """Periodic box of length 2*X_max in the normal direction."""
        if not self.is_halfspace:
            raise ValueError("only half-space grids extend")
        lengths = self.lengths[:-1] + (2.0 * self.xmax,)
        npoints = self.npoints[:-1] + (2 * self.npoints[-1],)
        return SpectralGrid(self.dim, PERIODIC, lengths, npoints)

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights for the discrete integral, broadcastable to shape."""
        w = np.ones(self.npoints[-1] if self.is_halfspace else 1)
        if self.is_halfspace:
            w[0] = 0.5
            w[-1] = 0.5
            w = w * self.spacings[-1]
            shape = (1,) * (self.dim - 1) + (self.npoints[-1],)
            w = w.reshape(shape)
            for h in self.spacings[:-1]:
                w = w * h
        else:
            w = np.array(math.prod(self.spacings))
        return w

    def cell_volume(self) -> float:
        return math.prod(self.spacings)


# ---------------------------------------------------------------------------
# fields


@dataclass
class Field:
    """Complex grid function with one or more components.

    values has shape (components,) + grid.shape.  Fields are treated as
    immutable by every operation in this package; helpers return new arrays.
    """

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape[1:] != self.grid.shape:
            raise ValueError(
                f"values shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals.view(np.float64))):
            raise ValueError("field values must be finite")
        self.values = vals

    # -- constructors --------------------------------------------------------

    @staticmethod
    def zeros(grid: SpectralGrid, ncomp: int = 1) -> "Field":
        return Field(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))

    @staticmethod
    def scalar(grid: SpectralGrid, values: np.ndarray) -> "Field":
        return Field(grid, np.asarray(values)[None, ...])

    @staticmethod
    def vector(grid: SpectralGrid, components: Sequence[np.ndarray]) -> "Field":
        return Field(grid, np.stack([np.asarray(c) for c in components]))

    # -- algebra --------------------------------------------------------------

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def component(self, i: int) -> "Field":
        return Field(self.grid, self.values[i : i + 1])

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    # -- norms ----------------------------------------------------------------

    def lq_norm(self, q: float) -> float:
        """Trapezoid-weighted discrete L_q norm, summed over components."""
        w = self.grid.quadrature_weights()
        total = 0.0
        for c in range(self.ncomp):
            a = np.abs(self.values[c])
            if math.isinf(q):
                total += float(a.max())
            else:
                total += float((w * a**q).sum()) ** (1.0 / q)
        return total

    def l2_norm(self) -> float:
        return self.lq_norm(2)

    def linf_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


# ---------------------------------------------------------------------------
# transforms and multipliers


def _spatial_axes(grid: SpectralGrid) -> tuple[int, ...]:
    return tuple(range(1, grid.dim + 1))


def forward_transform(f: Field) -> np.ndarray:
    """Unscaled forward DFT over all axes of a periodic-box field."""
    if not f.grid.is_periodic:
        raise ValueError("forward_transform requires a periodic box")
    return np.fft.fftn(f.values, axes=_spatial_axes(f.grid))


def inverse_transform(grid: SpectralGrid, fhat: np.ndarray) -> Field:
    """Inverse DFT (carries the 1/(total points) factor)."""
    if not grid.is_periodic:
        raise ValueError("inverse_transform requires a periodic box")
    return Field(grid, np.fft.ifftn(fhat, axes=tuple(range(1, grid.dim + 1))))


def _evaluate_symbol(m, grid: SpectralGrid) -> np.ndarray:
    if callable(m):
        sym = m(*grid.freq_mesh())
    else:
        sym = m
    sym = np.asarray(sym, dtype=np.complex128)
    sym = np.broadcast_to(sym, grid.shape)
    bad = ~np.isfinite(sym)
    if bad.any():
        idx = tuple(int(i[0]) for i in np.nonzero(bad))
        xi = tuple(float(grid.freq(a)[idx[a]]) for a in range(grid.dim))
        raise MultiplierError(f"symbol is non-finite at frequency xi={xi}")
    return sym


def apply_multiplier(m, f: Field) -> Field:
    """Fourier multiplier: inverse DFT of (symbol * forward DFT).

    ``m`` is either a callable of the broadcastable frequency mesh or a
    ready-made array over the mode grid.  Exact on single Fourier modes.
    """
    sym = _evaluate_symbol(m, f.grid)
    fhat = forward_transform(f)
    return inverse_transform(f.grid, sym[None, ...] * fhat)


def spectral_derivative(f: Field, axis: int, order: int = 1) -> Field:
    """d^order/dx_axis^order via the (i*xi)^order multiplier.

    Odd-order derivatives zero out the Nyquist mode of that axis so the
    result of differentiating a real field stays conjugate-symmetric.
    """
    xi = f.grid.freq(axis)
    sym1 = 1j * xi
    if order % 2 == 1:
        sym1 = sym1.copy()
        sym1[f.grid.npoints[axis] // 2] = 0.0
    sym = sym1 ** order if order % 2 == 1 else (1j * xi) ** order
    shape = [1] * f.grid.dim
    shape[axis] = f.grid.npoints[axis]
    return apply_multiplier(sym.reshape(shape), f)


def tangential_transform(f: Field) -> np.ndarray:
    """Partial DFT over the first dim-1 axes; the normal axis is untouched."""
    if not f.grid.is_halfspace:
        raise ValueError("tangential_transform requires a half-space grid")
    if f.grid.dim == 1:
        return f.values.copy()
    return np.fft.fftn(f.values, axes=tuple(range(1, f.grid.dim)))


def tangential_inverse(grid: SpectralGrid, fhat: np.ndarray) -> Field:
    if not grid.is_halfspace:
        raise ValueError("tangential_inverse requires a half-space grid")
    if grid.dim == 1:
        return Field(grid, fhat.copy())
    return Field(grid, np.fft.ifftn(fhat, axes=tuple(range(1, grid.dim))))


# ---------------------------------------------------------------------------
# half-space <-> periodic box extensions

EVEN = "even"
ODD = "odd"


def default_parities(ncomp: int) -> tuple[str, ...]:
    """Tangential components extend evenly, the normal component oddly."""
    if ncomp == 1:
        return (ODD,)
    return (EVEN,) * (ncomp - 1) + (ODD,)


def extend_to_box(f: Field, parities: Optional[Sequence[str]] = None) -> Field:
    """Reflect a half-space field onto the doubled periodic box.

    The node at x_N = X_max (its own mirror image) is set to zero for both
    parities; fields are assumed to have decayed there.  The x_N = 0 node of
    an odd extension is zeroed, consistent with the Fourier-series value of a
    jump (mean of the one-sided limits).
    """
    grid = f.grid
    if not grid.is_halfspace:
        raise ValueError("extend_to_box requires a half-space field")
    parities = default_parities(f.ncomp) if parities is None else tuple(parities)
    if len(parities) != f.ncomp:
        raise ValueError("one parity per component required")
    box = grid.extended_box()
    n = grid.npoints[-1]
    out = np.zeros((f.ncomp,) + box.shape, dtype=np.complex128)
    src = f.values
    out[..., :n] = src
    mirror = src[..., 1:][..., ::-1]  # values at j = n-1 .. 1 -> J = n+1 .. 2n-1
    for c, par in enumerate(parities):
        if par == EVEN:
            out[c, ..., n + 1 :] = mirror[c]
        elif par == ODD:
            out[c, ..., n + 1 :] = -mirror[c]
            out[c, ..., 0] = 0.0
        else:
            raise ValueError(f"unknown parity {par!r}")
    out[..., n] = 0.0
    return Field(box, out)


def restrict_from_box(box_field: Field, grid: SpectralGrid) -> Field:
    """Restrict a field on the doubled box back to the half-space nodes."""
    if not grid.is_halfspace:
        raise ValueError("restriction target must be a half-space grid")
    n = grid.npoints[-1]
    if box_field.grid.shape[:-1] != grid.shape[:-1] or box_field.grid.shape[-1] != 2 * n:
        raise ValueError("box field does not match the doubled half-space grid")
    return Field(grid, box_field.values[..., :n].copy())


# ---------------------------------------------------------------------------
# model parameters


@dataclass(frozen=True)
class ModelParams:
    """Viscosity pair, reference density, and pressure-law slope.

    eta_tilde, when present, is the pointwise density perturbation on the
    working grid; the full coefficient is eta0(x) = rho_star + eta_tilde(x)
    and must stay inside (rho1, rho2).
    """

    alpha: float = 1.0
    beta: float = 1.0
    rho_star: float = 1.0
    p_prime: float = 1.0
    eta_tilde: Optional[Field] = None
    rho1: float = 0.1
    rho2: float = 10.0
    pressure_law: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.alpha + self.beta > 0:
            raise ValueError("alpha + beta must be positive")
        if not self.rho_star > 0 or not self.p_prime > 0:
            raise ValueError("rho_star and p_prime must be positive")
        if not self.rho1 < self.rho_star < self.rho2:
            raise ValueError("need rho1 < rho_star < rho2")
        if self.eta_tilde is not None:
            eta0 = self.rho_star + self.eta_tilde.values.real
            if self.eta_tilde.values.imag.any():
                raise ValueError("eta_tilde must be real-valued")
            if not (np.all(eta0 > self.rho1) and np.all(eta0 < self.rho2)):
                raise ValueError("eta0 must stay inside (rho1, rho2) pointwise")

    @property
    def has_variable_density(self) -> bool:
        return self.eta_tilde is not None

    def eta0_values(self, grid: SpectralGrid) -> np.ndarray:
        """eta0 on the given grid (constant array when eta_tilde is absent)."""
        if self.eta_tilde is None:
            return np.full(grid.shape, self.rho_star)
        if self.eta_tilde.grid.shape != grid.shape:
            raise ValueError("eta_tilde lives on a different grid")
        return self.rho_star + self.eta_tilde.values[0].real

    def p_prime_of(self, eta0: np.ndarray) -> np.ndarray:
        """P'(eta0) pointwise; falls back to the constant p_prime slope."""
        if self.pressure_law is None:
            return np.full_like(np.asarray(eta0, dtype=float), self.p_prime)
        return np.asarray(self.pressure_law(np.asarray(eta0, dtype=float)))

    def with_eta_tilde(self, eta_tilde: Optional[Field]) -> "ModelParams":
        return replace(self, eta_tilde=eta_tilde)


# ---------------------------------------------------------------------------
# simple data builders used across the package


def single_mode(grid: SpectralGrid, kvec: Sequence[float], component: int = 0,
                ncomp: int = 1, amplitude: complex = 1.0) -> Field:
    """exp(i k.x) placed in one component of an ncomp-vector field."""
    if not grid.is_periodic:
        raise ValueError("single_mode requires a periodic box")
    phase = np.zeros(grid.shape)
    for a, k in enumerate(kvec):
        shape = [1] * grid.dim
        shape[a] = grid.npoints[a]
        phase = phase + k * grid.nodes(a).reshape(shape)
    vals = np.zeros((ncomp,) + grid.shape, dtype=np.complex128)
    vals[component] = amplitude * np.exp(1j * phase)
    return Field(grid, vals)


def random_band_limited(grid: SpectralGrid, rng: np.random.Generator,
                        kmax: float, ncomp: int = 1, real: bool = True) -> Field:
    """Random field supported on modes with |xi| <= kmax."""
    if not grid.is_periodic:
        raise ValueError("random_band_limited requires a periodic box")
    xi_sq = np.zeros(grid.shape)
    for xi in grid.freq_mesh():
        xi_sq = xi_sq + xi**2
    mask = xi_sq <= kmax**2
    total = math.prod(grid.npoints)
    vals = np.empty((ncomp,) + grid.shape, dtype=np.complex128)
    for c in range(ncomp):
        coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        coef *= mask
        arr = np.fft.ifftn(coef) * math.sqrt(total)
        vals[c] = arr.real if real else arr
    return Field(grid, vals)

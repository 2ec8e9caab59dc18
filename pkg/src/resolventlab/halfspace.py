"""Half-space Lame resolvent with an explicit boundary corrector.

The solve is the classical three-step construction:

1. reflect the data onto the doubled periodic box (tangential components
   evenly, the normal one oddly) and apply the whole-space operator;
2. read off the Dirichlet trace that step 1 leaves behind;
3. subtract the decaying solution of the homogeneous system with exactly that
   trace, assembled per tangential mode from the characteristic roots
   A = sqrt(lambda/(alpha+beta) + |xi'|^2), B = sqrt(lambda/alpha + |xi'|^2)
   and the Lopatinski determinant L = (alpha+beta)A + alpha*B.

A refinement removes the value jump the odd reflection would otherwise
create: the normal data component is split as
g_N = (g_N - q(x') e^(-c x_N)) + q(x') e^(-c x_N) with q its boundary trace;
the exponential slice is solved in closed form per mode, so only a continuous
remainder meets the reflection.  This buys roughly one order of accuracy near
the wall and makes the 1-d problem exact up to roundoff.

The per-mode corrector coefficients are evaluated in the resonance-free form
K = (alpha+beta) * m * c_amp / lambda (no 1/(B-A) anywhere), so beta -> 0
needs no special casing; the kernel M(x) = (e^(-Bx) - e^(-Ax))/(B-A) used by
the quadrature operators switches to its divided-difference series near
A = B, with limit -x e^(-Bx).

The quadrature realization T_h of the corrector (boundary-kernel integrals
over y_N against the (lambda h, lambda^(1/2) grad h, grad^2 h) stack) is kept
alongside the exact path: it is the form whose L_q boundedness and lambda
decay the verification harness measures, and its adjoint is the transform
swap needed by the adjoint-consistency checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Optional, Union

import numpy as np

from .core import (
    EVEN,
    Field,
    ModelParams,
    SectorParams,
    SectorPoint,
    SpectralGrid,
    default_parities,
    extend_to_box,
    sector_contains,
)
from .wholespace import WholeSpaceResolvent

__all__ = [
    "CharacteristicRoots",
    "characteristic_roots",
    "stable_M",
    "lopatinski_ratio",
    "HalfspaceSolution",
    "HalfSpaceResolvent",
    "solve_halfspace",
    "QuadratureTailError",
    "apply_boundary_kernel",
    "corrector_operator",
    "dlam_stack",
    "stack_size",
]


class QuadratureTailError(RuntimeError):
    """The y_N quadrature tail has not decayed; enlarge X_max."""


def _lam_of(lam) -> complex:
    return complex(lam.lam) if isinstance(lam, SectorPoint) else complex(lam)


# ---------------------------------------------------------------------------
# characteristic roots and kernels


@dataclass(frozen=True)
class CharacteristicRoots:
    """Decay rates of the two mode families and the Lopatinski determinant.

    A, B, L are scalars or arrays over the tangential mode grid.
    """

    A: Union[complex, np.ndarray]
    B: Union[complex, np.ndarray]
    L: Union[complex, np.ndarray]


def characteristic_roots(lam, xi_prime_sq, model: ModelParams) -> CharacteristicRoots:
    """Principal-branch roots; Re A, Re B > 0 for every sector lambda."""
    lamc = _lam_of(lam)
    xi_sq = np.asarray(xi_prime_sq, dtype=float)
    A = np.sqrt(lamc / (model.alpha + model.beta) + xi_sq + 0j)
    B = np.sqrt(lamc / model.alpha + xi_sq + 0j)
    if np.any(np.real(A) <= 0) or np.any(np.real(B) <= 0):
        raise ArithmeticError("branch violation: characteristic root with Re <= 0")
    L = (model.alpha + model.beta) * A + model.alpha * B
    return CharacteristicRoots(A=A, B=B, L=L)


def stable_M(x, roots_or_A, B=None):
    """(e^(-Bx) - e^(-Ax)) / (B - A), stable through the A = B degeneracy.

    Accepts a CharacteristicRoots bundle or the two roots separately; x, A, B
    broadcast.  Near coincidence (|A-B| < 1e-6 (|A|+|B|)) the divided
    difference of the exponential is summed as a series; the limit value at
    A = B is -x e^(-Bx).
    """
    if B is None:
        A, B = roots_or_A.A, roots_or_A.B
    else:
        A = roots_or_A
    x = np.asarray(x, dtype=float)
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    d = A - B
    near = np.abs(d) < 1e-6 * (np.abs(A) + np.abs(B))
    safe_d = np.where(near, 1.0, B - A)
    direct = (np.exp(-B * x) - np.exp(-A * x)) / safe_d
    # M = -x e^(-Bx) phi(d x) with phi(z) = (1 - e^(-z))/z = sum (-z)^k/(k+1)!
    z = d * x
    phi = np.ones_like(z)
    term = np.ones_like(z)
    for k in range(1, 12):
        term = term * (-z) / (k + 1)
        phi = phi + term
    series = -x * np.exp(-B * x) * phi
    out = np.where(near, series, direct)
    if out.ndim == 0:
        return complex(out)
    return out


def lopatinski_ratio(lam, xi_prime_sq, model: ModelParams):
    """|L(lambda, xi')| / (|lambda|^(1/2) + |xi'|): the quantity whose positive
    lower bound makes the boundary corrector solvable."""
    lamc = _lam_of(lam)
    roots = characteristic_roots(lamc, xi_prime_sq, model)
    return np.abs(roots.L) / (math.sqrt(abs(lamc)) + np.sqrt(np.asarray(xi_prime_sq, dtype=float)))


# ---------------------------------------------------------------------------
# tangential transforms (identity in dimension 1)


def _tfft(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    if grid.dim == 1:
        return values.copy()
    return np.fft.fftn(values, axes=tuple(range(1, grid.dim)))


def _tifft(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    if grid.dim == 1:
        return values.copy()
    return np.fft.ifftn(values, axes=tuple(range(1, grid.dim)))


# ---------------------------------------------------------------------------
# per-mode homogeneous solution with prescribed Dirichlet trace


@dataclass(frozen=True)
class _ModeCorrector:
    """w(xi', x_N) = a e^(-B x_N) + K e^(-A x_N) per tangential mode."""

    a: np.ndarray  # (ncomp,) + tangential shape
    K: np.ndarray
    roots: CharacteristicRoots

    def scaled(self, factor: complex) -> "_ModeCorrector":
        return _ModeCorrector(a=factor * self.a, K=factor * self.K, roots=self.roots)

    def evaluate(self, x: np.ndarray, dmulti: tuple[int, ...], xi_mesh) -> np.ndarray:
        """d^dmulti w on the (modes x normal nodes) tensor grid.

        Tangential axes contribute i*xi factors; each normal index one factor
        -B on the a-family and -A on the K-family.
        """
        n_norm = sum(1 for a in dmulti if a == len(xi_mesh))
        tang = np.ones((), dtype=np.complex128)
        for a in dmulti:
            if a < len(xi_mesh):
                tang = tang * (1j * xi_mesh[a])
        A = np.asarray(self.roots.A, dtype=np.complex128)
        B = np.asarray(self.roots.B, dtype=np.complex128)
        eB = np.exp(-B[..., None] * x)
        eA = np.exp(-A[..., None] * x)
        coefB = tang * (-B) ** n_norm * self.a
        coefA = tang * (-A) ** n_norm * self.K
        return coefB[..., None] * eB + coefA[..., None] * eA


def _corrector_coefficients(lam: complex, model: ModelParams, xi_mesh,
                            xi_sq: np.ndarray, traces: np.ndarray) -> _ModeCorrector:
    """Decaying homogeneous solution matching the given Dirichlet traces.

    traces has shape (N,) + tangential shape; the normal trace may be nonzero.
    The transformed divergence of the solution is c_amp e^(-A x_N) with
    c_amp = alpha (A+B) (i xi'.t' - B t_N) / L, and the coefficient form
    K = (alpha+beta) m c_amp / lambda contains no 1/(B-A).
    """
    al, be = model.alpha, model.beta
    roots = characteristic_roots(lam, xi_sq, model)
    A, B, L = roots.A, roots.B, roots.L
    ixi_dot_t = np.zeros_like(traces[0])
    for a, xi in enumerate(xi_mesh):
        ixi_dot_t = ixi_dot_t + 1j * xi * traces[a]
    c_amp = al * (A + B) * (ixi_dot_t - B * traces[-1]) / L
    K = np.empty_like(traces)
    for a, xi in enumerate(xi_mesh):
        K[a] = (al + be) * (1j * xi) * c_amp / lam
    K[-1] = -(al + be) * A * c_amp / lam
    return _ModeCorrector(a=traces - K, K=K, roots=roots)


# ---------------------------------------------------------------------------
# structured half-space solution


@dataclass
class HalfspaceSolution:
    """Solution of the half-space problem with exact derivative access.

    The field is a sum of three parts, each satisfying its share of the
    equation identically in its own representation: a whole-space solve on the
    doubled box (spectral derivatives), a per-mode exponential slice that
    absorbed the boundary value of the normal data component, and the
    subtracted boundary corrector (analytic normal derivatives).
    """

    grid: SpectralGrid
    lam: complex
    model: ModelParams
    u: Field
    box_hat: np.ndarray               # box-part coefficients, (N,) + box shape
    box_grid: SpectralGrid
    jump_coef: Optional[np.ndarray]   # v(xi'), (N,) + tangential shape
    jump_rate: complex
    corrector: _ModeCorrector

    def deriv(self, multi: tuple[int, ...]) -> Field:
        """Exact partial derivative d^multi u on the half-space nodes."""
        grid = self.grid
        n = grid.npoints[-1]
        x = grid.normal_nodes
        axes = tuple(range(1, grid.dim + 1))
        sym = np.ones((), dtype=np.complex128)
        mesh = self.box_grid.freq_mesh()
        for a in multi:
            sym = sym * (1j * mesh[a])
        out = np.fft.ifftn(sym * self.box_hat, axes=axes)[..., :n]

        xi_mesh = grid.tangential_freq_mesh()
        if self.jump_coef is not None:
            n_norm = sum(1 for a in multi if a == grid.dim - 1)
            tang = np.ones((), dtype=np.complex128)
            for a in multi:
                if a < grid.dim - 1:
                    tang = tang * (1j * xi_mesh[a])
            coef = tang * (-self.jump_rate) ** n_norm * self.jump_coef
            out = out + _tifft(grid, coef[..., None] * np.exp(-self.jump_rate * x))
        out = out - _tifft(grid, self.corrector.evaluate(x, multi, xi_mesh))
        return Field(grid, out)

    def derivative_fields(self, max_order: int = 2) -> dict[tuple[int, ...], Field]:
        out: dict[tuple[int, ...], Field] = {(): self.u}
        for order in range(1, max_order + 1):
            for multi in combinations_with_replacement(range(self.grid.dim), order):
                out[multi] = self.deriv(multi)
        return out

    def divergence(self) -> Field:
        vals = np.zeros((1,) + self.grid.shape, dtype=np.complex128)
        for a in range(self.grid.dim):
            vals[0] += self.deriv((a,)).values[a]
        return Field(self.grid, vals)

    def trace_sup(self) -> float:
        """sup over the boundary plane of |u|."""
        return float(np.abs(self.u.values[..., 0]).max())

    def lame_apply(self) -> Field:
        """lambda u - alpha Lap u - beta grad div u from the structured parts."""
        al, be = self.model.alpha, self.model.beta
        N = self.grid.dim
        second = {m: self.deriv(m) for m in combinations_with_replacement(range(N), 2)}
        res = self.lam * self.u.values.copy()
        for c in range(N):
            for a in range(N):
                res[c] -= al * second[(a, a)].values[c]
                m = (min(a, c), max(a, c))
                res[c] -= be * second[m].values[a]
        return Field(self.grid, res)

    def residual(self, g: Field, interior_only: bool = True) -> float:
        """Relative L2 residual of the Lame equation against g.

        The x_N = 0 plane is excluded by default; the reflected problem owns
        that row (the split normal component makes it consistent anyway).
        """
        res = self.lame_apply().values - g.values
        if interior_only:
            res = res[..., 1:]
        num = float(np.sqrt((np.abs(res) ** 2).sum()))
        den = float(np.sqrt((np.abs(g.values) ** 2).sum()))
        return num / den if den > 0 else num


# ---------------------------------------------------------------------------
# the resolvent


@dataclass(frozen=True)
class HalfSpaceResolvent:
    """S_h(lambda): whole-space solve on the reflection plus boundary corrector."""

    grid: SpectralGrid
    model: ModelParams
    sector: SectorParams = SectorParams(np.pi / 4, 1.0)
    split_jump: bool = True
    decay_tol: float = 1e-12

    def __post_init__(self):
        if not self.grid.is_halfspace:
            raise ValueError("half-space resolvent needs a half-space grid")
        worst = self.min_decay_rate()
        if worst * self.grid.xmax < -math.log(self.decay_tol):
            raise ValueError(
                "X_max too small for the sector: exp(-Re_min * X_max) = "
                f"{math.exp(-worst * self.grid.xmax):.2e} exceeds "
                f"{self.decay_tol:.0e} at lambda0; need X_max >= "
                f"{-math.log(self.decay_tol) / worst:.1f}"
            )

    def min_decay_rate(self) -> float:
        """Smallest Re of the characteristic roots over the sector rim at lambda0."""
        lam0, eps = self.sector.lambda0, self.sector.epsilon
        cos_half = math.cos((math.pi - eps) / 2.0)
        return min(
            math.sqrt(lam0 / self.model.alpha),
            math.sqrt(lam0 / (self.model.alpha + self.model.beta)),
        ) * cos_half

    def box_resolvent(self) -> WholeSpaceResolvent:
        return WholeSpaceResolvent(self.grid.extended_box(), self.model, self.sector)

    def solve(self, lam, g: Field) -> HalfspaceSolution:
        lamc = _lam_of(lam)
        if not sector_contains(lamc, self.sector):
            raise ValueError(f"lambda={lamc} outside the sector")
        N = self.grid.dim
        if g.ncomp != N:
            raise ValueError(f"g must have {N} components")
        xi_mesh = self.grid.tangential_freq_mesh()
        xi_sq = self.grid.tangential_xi_sq()
        x = self.grid.normal_nodes

        # 1. peel the boundary value off the normal component
        jump_coef = None
        rate = 1.0 + 0.0j
        g_work = g.values
        if self.split_jump:
            q = g.values[N - 1][..., 0]
            qhat = _tfft(self.grid, q[None, ...])[0]
            jump_coef, rate = self._jump_particular(lamc, qhat, xi_mesh, xi_sq)
            g_work = g.values.copy()
            g_work[N - 1] = g_work[N - 1] - q[..., None] * np.exp(-rate * x)

        # 2. whole-space solve of the reflected remainder
        box = self.box_resolvent()
        g_ext = extend_to_box(Field(self.grid, g_work), default_parities(N))
        axes = tuple(range(1, N + 1))
        u_box_hat = box.apply_hat(lamc, np.fft.fftn(g_ext.values, axes=axes))
        u_s = np.fft.ifftn(u_box_hat, axes=axes)[..., : self.grid.npoints[-1]]

        # 3. boundary corrector for the combined trace
        traces = _tfft(self.grid, u_s[..., :1])[..., 0]
        if jump_coef is not None:
            traces = traces + jump_coef
        corr = _corrector_coefficients(lamc, self.model, xi_mesh, xi_sq, traces)

        u_vals = u_s.copy()
        if jump_coef is not None:
            u_vals += _tifft(self.grid, jump_coef[..., None] * np.exp(-rate * x))
        u_vals -= _tifft(self.grid, corr.evaluate(x, (), xi_mesh))
        return HalfspaceSolution(
            grid=self.grid, lam=lamc, model=self.model,
            u=Field(self.grid, u_vals), box_hat=u_box_hat,
            box_grid=self.grid.extended_box(),
            jump_coef=jump_coef, jump_rate=rate, corrector=corr,
        )

    def _jump_particular(self, lam: complex, qhat: np.ndarray, xi_mesh,
                         xi_sq: np.ndarray):
        """Closed-form mode solution for data (0, ..., 0, qhat e^(-c x_N)).

        Sherman-Morrison on (a1 I - beta m m^T) with m = (i xi', -c); c is
        nudged off the real axis if the real-lambda resonances a1 = 0 or
        a2 = 0 come close.
        """
        al, be = self.model.alpha, self.model.beta
        N = self.grid.dim
        scale = abs(lam) + al * (float(np.max(xi_sq)) + 1.0)
        rate = 1.0 + 0.0j
        for _ in range(8):
            c2 = rate * rate
            a1 = lam + al * (xi_sq - c2)
            a2 = lam + (al + be) * (xi_sq - c2)
            if min(float(np.min(np.abs(a1))), float(np.min(np.abs(a2)))) > 1e-6 * scale:
                break
            rate = rate * 1.37 + 0.21j
        else:
            raise ArithmeticError("could not find a resonance-free jump rate")
        v = np.zeros((N,) + np.shape(qhat), dtype=np.complex128)
        common = be * (-rate * qhat) / (a1 * a2)
        for a, xi in enumerate(xi_mesh):
            v[a] = (1j * xi) * common
        v[N - 1] = qhat / a1 - rate * common
        return v, rate

    def apply_dlam(self, lam, g: Field) -> HalfspaceSolution:
        """d/dlambda S_h(lambda) g = -S_h(lambda) S_h(lambda) g."""
        inner = self.solve(lam, g)
        outer = self.solve(lam, inner.u)
        outer.u = -1.0 * outer.u
        outer.box_hat = -outer.box_hat
        if outer.jump_coef is not None:
            outer.jump_coef = -outer.jump_coef
        outer.corrector = outer.corrector.scaled(-1.0)
        return outer


def solve_halfspace(lam, g: Field, model: ModelParams,
                    sector: Optional[SectorParams] = None, **kw) -> Field:
    """One-shot solve returning just the solution field."""
    sector = sector or SectorParams(np.pi / 4, 1.0)
    return HalfSpaceResolvent(g.grid, model, sector, **kw).solve(lam, g).u


# ---------------------------------------------------------------------------
# boundary-kernel quadrature operators


def _normal_weights(grid: SpectralGrid) -> np.ndarray:
    wy = np.full(grid.npoints[-1], grid.spacings[-1])
    wy[0] *= 0.5
    wy[-1] *= 0.5
    return wy


def _kernel_apply(kind: str, A: complex, B: complex, x: np.ndarray,
                  wy: np.ndarray, F: np.ndarray):
    """sum_y wy K(x+y) F(., y) for one tangential mode, F of shape (rows, n).

    Both kernels separate in (x, y): K1 = B e^(-Bx) e^(-By) is rank one and
    K2 = B^2 (e^(-Bx)e^(-By) - e^(-Ax)e^(-Ay))/(B-A) rank two, degenerating
    to -B^2 ((x+y) e^(-B(x+y))) at A = B, which is rank two as well.  Returns
    (result (rows, n), last-node tail magnitude for the decay check).
    """
    eBx = np.exp(-B * x)
    if kind == "K1":
        inner = F @ (wy * eBx)
        out = B * inner[:, None] * eBx[None, :]
        tail = abs(B) * float(np.abs(wy[-1] * eBx[-1] * F[:, -1]).max(initial=0.0))
        return out, tail
    d = A - B
    if abs(d) > 1e-6 * (abs(A) + abs(B)):
        eAx = np.exp(-A * x)
        iB = F @ (wy * eBx)
        iA = F @ (wy * eAx)
        out = (B * B / (B - A)) * (iB[:, None] * eBx[None, :]
                                   - iA[:, None] * eAx[None, :])
    else:
        # A = B limit of the divided difference; the O(A-B) correction is
        # below the trapezoid error at the tolerance gating this branch
        i0 = F @ (wy * eBx)
        i1 = F @ (wy * x * eBx)
        out = -B * B * (i0[:, None] * (x * eBx)[None, :]
                        + i1[:, None] * eBx[None, :])
    k_last = abs(B * B * stable_M(float(x[-1]), A, B))
    tail = k_last * float(np.abs(wy[-1] * F[:, -1]).max(initial=0.0))
    return out, tail


def apply_boundary_kernel(kind: str, m0, H: Field, lam, model: ModelParams,
                          tail_tol: float = 1e-10, adjoint: bool = False) -> Field:
    """int_0^inf F'^-1[ m0(lambda,xi') K(x_N+y_N) F'[H](xi', y_N) ] dy_N.

    kind selects K1 = B e^(-B(x+y)) or K2 = B^2 M(x+y); m0 is an order-0
    symbol, callable of (lambda, xi'_mesh) or an array over the tangential
    mode grid.  Trapezoid quadrature on the grid's normal nodes; an undecayed
    tail is rejected with X_max advice.  adjoint=True exchanges the transform
    pair, realizing the dual operator of the bilinear pairing.
    """
    grid = H.grid
    if not grid.is_halfspace:
        raise ValueError("boundary kernels act on half-space fields")
    if kind not in ("K1", "K2"):
        raise ValueError(f"unknown kernel kind {kind!r}")
    lamc = _lam_of(lam)
    xi_mesh = grid.tangential_freq_mesh()
    xi_sq = grid.tangential_xi_sq()
    roots = characteristic_roots(lamc, xi_sq, model)
    tshape = grid.shape[:-1]
    if callable(m0):
        sym = np.asarray(m0(lamc, xi_mesh), dtype=np.complex128)
    else:
        sym = np.asarray(m0, dtype=np.complex128)
    sym = np.broadcast_to(sym, tshape)

    x = grid.normal_nodes
    n = grid.npoints[-1]
    wy = _normal_weights(grid)

    if adjoint:
        Hhat = np.fft.ifftn(H.values, axes=tuple(range(1, grid.dim))) \
            if grid.dim > 1 else H.values.copy()
    else:
        Hhat = _tfft(grid, H.values)

    flat = int(np.prod(tshape)) if tshape else 1
    Hf = Hhat.reshape(H.ncomp, flat, n)
    Af = np.broadcast_to(np.asarray(roots.A), tshape).reshape(flat)
    Bf = np.broadcast_to(np.asarray(roots.B), tshape).reshape(flat)
    sf = sym.reshape(flat)
    out = np.zeros_like(Hf)
    tail, total = 0.0, 0.0
    for m in range(flat):
        block, last = _kernel_apply(kind, Af[m], Bf[m], x, wy, Hf[:, m, :])
        out[:, m, :] = sf[m] * block
        tail = max(tail, abs(sf[m]) * last)
        total = max(total, float(np.abs(out[:, m, :]).max(initial=0.0)))
    if total > 0 and tail > tail_tol * total:
        raise QuadratureTailError(
            f"last-node kernel contribution {tail:.2e} exceeds {tail_tol:.0e} of "
            f"the result scale {total:.2e}; increase X_max beyond {grid.xmax}"
        )
    out = out.reshape((H.ncomp,) + tshape + (n,))
    if adjoint:
        res = np.fft.fftn(out, axes=tuple(range(1, grid.dim))) if grid.dim > 1 else out
        return Field(grid, res)
    return Field(grid, _tifft(grid, out))


# ---------------------------------------------------------------------------
# the quadrature corrector operator T_h on the derivative stack


def stack_size(N: int) -> int:
    """(N-1)(1 + N + N^2): components of (lambda h, lambda^(1/2) D h, D D h)."""
    return (N - 1) * (1 + N + N * N)


def _stack_offsets(N: int):
    nh = N - 1

    def h1(j):           # lambda h_j
        return j

    def h2(k, j):        # lambda^(1/2) D_k h_j
        return nh + k * nh + j

    def h3(a, b, j):     # D_a D_b h_j
        return nh * (1 + N) + (a * N + b) * nh + j

    return h1, h2, h3


def _corrector_symbols(lam: complex, model: ModelParams, grid: SpectralGrid):
    """Order -2 symbol tables S1 (kernel K1) and S2 (kernel K2).

    Obtained from the Volevich rewriting of the corrector with every data
    factor borrowed from the derivative stack through
    1 = (lambda/alpha + |xi'|^2) / B^2.  Shapes: (N, stack) + tangential.
    """
    N = grid.dim
    nh = N - 1
    m = stack_size(N)
    xi_mesh = grid.tangential_freq_mesh()
    xi_sq = grid.tangential_xi_sq()
    tshape = grid.shape[:-1]
    roots = characteristic_roots(lam, xi_sq, model)
    A = np.broadcast_to(np.asarray(roots.A), tshape)
    B = np.broadcast_to(np.asarray(roots.B), tshape)
    L = np.broadcast_to(np.asarray(roots.L), tshape)
    al, be = model.alpha, model.beta
    sqlam = np.sqrt(complex(lam))
    Bi2, Bi3, Bi4 = B**-2.0, B**-3.0, B**-4.0
    xi = [np.broadcast_to(v, tshape) for v in xi_mesh]

    S1 = np.zeros((N, m) + tshape, dtype=np.complex128)
    S2 = np.zeros((N, m) + tshape, dtype=np.complex128)
    h1, h2, h3 = _stack_offsets(N)

    for j in range(nh):
        # Volevich on t_j e^(-B x): data h_j and D_N h_j
        S1[j, h1(j)] += Bi2 / al
        for l in range(nh):
            S1[j, h3(l, l, j)] += -Bi2
        S1[j, h2(N - 1, j)] += -sqlam * Bi3 / al
        for l in range(nh):
            S1[j, h3(l, N - 1, j)] += 1j * xi[l] * Bi3

    # shared bracket int (E + A M)(i xi'.h') - M (i xi'.D_N h') dy, entering
    # u_j with prefactor -(beta i xi_j / L) and u_N with +(beta A / L)
    prefs = [-(be * 1j * xi[j]) / L for j in range(nh)] + [be * A / L]
    rows = list(range(nh)) + [N - 1]
    for row, p in zip(rows, prefs):
        for k in range(nh):
            S1[row, h2(k, k)] += p * sqlam * Bi3 / al
            S2[row, h2(k, k)] += p * A * sqlam * Bi4 / al
            for l in range(nh):
                S1[row, h3(l, k, k)] += -p * 1j * xi[l] * Bi3
                S2[row, h3(l, k, k)] += -p * A * 1j * xi[l] * Bi4
            S2[row, h3(k, N - 1, k)] += -p * Bi2
    return S1, S2, roots


def dlam_stack(h: Field, lam: complex) -> Field:
    """(lambda h, lambda^(1/2) grad h, grad^2 h) of the tangential components.

    h is an (N-1)-component field on the half-space grid; derivatives are
    spectral on the even extension (the production inputs come from a
    whole-space solve and are smooth across the wall).
    """
    grid = h.grid
    N = grid.dim
    nh = N - 1
    if h.ncomp != nh:
        raise ValueError(f"expected {nh} tangential components")
    out = np.zeros((stack_size(N),) + grid.shape, dtype=np.complex128)
    h1, h2, h3 = _stack_offsets(N)
    ext = extend_to_box(h, (EVEN,) * nh)
    axes = tuple(range(1, N + 1))
    ehat = np.fft.fftn(ext.values, axes=axes)
    mesh = ext.grid.freq_mesh()
    n = grid.npoints[-1]
    sqlam = np.sqrt(complex(lam))

    def back(sym):
        return np.fft.ifftn(sym * ehat, axes=axes)[..., :n]

    base = back(np.ones((), dtype=np.complex128))
    for j in range(nh):
        out[h1(j)] = lam * base[j]
    for k in range(N):
        dk = back(1j * mesh[k])
        for j in range(nh):
            out[h2(k, j)] = sqlam * dk[j]
    for a in range(N):
        for b in range(N):
            dab = back((1j * mesh[a]) * (1j * mesh[b]))
            for j in range(nh):
                out[h3(a, b, j)] = dab[j]
    return Field(grid, out)


def corrector_operator(lam, H: Field, model: ModelParams,
                       adjoint: bool = False) -> Field:
    """T_h(lambda): boundary-kernel quadrature against the symbol tables.

    Forward: H carries stack_size(N) components, the result N components.
    Adjoint: H carries N components, the result stack_size(N) components; the
    tangential transform pair is exchanged and the symbol tables transposed,
    which is the exact dual for the bilinear pairing sum(w f g).
    """
    grid = H.grid
    N = grid.dim
    lamc = _lam_of(lam)
    m = stack_size(N)
    if m == 0:
        return Field.zeros(grid, N if not adjoint else 0)
    n_in, n_out = (N, m) if adjoint else (m, N)
    if H.ncomp != n_in:
        raise ValueError(f"expected {n_in} components, got {H.ncomp}")
    S1, S2, roots = _corrector_symbols(lamc, model, grid)
    x = grid.normal_nodes
    n = grid.npoints[-1]
    wy = _normal_weights(grid)

    if adjoint:
        Hhat = np.fft.ifftn(H.values, axes=tuple(range(1, N))) if N > 1 else H.values.copy()
    else:
        Hhat = _tfft(grid, H.values)

    tshape = grid.shape[:-1]
    flat = int(np.prod(tshape))
    Hf = Hhat.reshape(n_in, flat, n)
    S1f = S1.reshape(N, m, flat)
    S2f = S2.reshape(N, m, flat)
    Af = np.broadcast_to(np.asarray(roots.A), tshape).reshape(flat)
    Bf = np.broadcast_to(np.asarray(roots.B), tshape).reshape(flat)
    spec1 = "os,sy->oy" if not adjoint else "os,oy->sy"
    out = np.zeros((n_out, flat, n), dtype=np.complex128)
    for mdx in range(flat):
        g1 = np.einsum(spec1, S1f[:, :, mdx], Hf[:, mdx, :])
        blk1, _ = _kernel_apply("K1", Af[mdx], Bf[mdx], x, wy, g1)
        g2 = np.einsum(spec1, S2f[:, :, mdx], Hf[:, mdx, :])
        blk2, _ = _kernel_apply("K2", Af[mdx], Bf[mdx], x, wy, g2)
        out[:, mdx, :] += blk1 + blk2
    out = out.reshape((n_out,) + tshape + (n,))
    if adjoint:
        res = np.fft.fftn(out, axes=tuple(range(1, N))) if N > 1 else out
        return Field(grid, res)
    return Field(grid, _tifft(grid, out))

"""Spectral resolvent laboratory for the linearized compressible flow system.

Explicit whole-space and half-space solution operators of the Lame and
coupled Stokes resolvent problems, discrete Besov norms through a
Littlewood-Paley decomposition, numerical Laplace inversion along sector
contours, and harnesses that measure the lambda-decay and L1-in-time
properties those operators are supposed to have, cross-checked against
independent finite-difference solves.
"""

from .core import (
    Field,
    ModelParams,
    SectorParams,
    SectorPoint,
    SpectralGrid,
    apply_multiplier,
    sector_contains,
)
from .besov import BesovParams, LPFamily, besov_norm, build_lp_family
from .wholespace import WholeSpaceResolvent, check_symbol_bounds
from .halfspace import (
    CharacteristicRoots,
    HalfSpaceResolvent,
    characteristic_roots,
    solve_halfspace,
    stable_M,
)
from .stokes import StokesResolvent, StokesSolution, neumann_invert, reduce_to_lame

__version__ = "0.1.0"

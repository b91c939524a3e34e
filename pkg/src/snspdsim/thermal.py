"""1-D electro-thermal hotspot model of the nanowire.

The wire is discretized into equal cells along its length.  Each cell
carries a temperature; a cell is in the normal (resistive) phase exactly
when its temperature exceeds T_c or the wire current exceeds the local
critical current ic_of_T(T).  The temperature field obeys

    c(T) dT/dt = d/dx( kappa(T) dT/dx ) + j^2 rho [normal]
                 - (alpha/d) (T^n - T_sub^n)

with j the current density, rho = R_sheet * thickness, insulated wire
ends, and constitutive laws kappa(T) = kappa0 * T/T_c and
c(T) = c0 * T/T_c.  Integration is explicit with automatic sub-stepping;
the update is written in energy-conserving (flux) form so the insulated,
uncooled wire conserves thermal energy to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import DomainError, NumericalInstabilityError

__all__ = [
    "WireGeometry",
    "ThermalParams",
    "ThermalProfile",
    "ic_of_T",
    "hotspot_resistance",
    "thermal_step",
    "inject_photon",
]


@dataclass(frozen=True)
class WireGeometry:
    """Nanowire dimensions and spatial discretization."""

    length: float = 500e-6
    width: float = 120e-9
    thickness: float = 4e-9
    n_cells: int = 50_000

    def __post_init__(self):
        for name in ("length", "width", "thickness"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be > 0")
        if self.n_cells < 50:
            raise DomainError(f"n_cells must be >= 50, got {self.n_cells}")

    @property
    def cell_len(self) -> float:
        return self.length / self.n_cells

    @property
    def cross_section(self) -> float:
        return self.width * self.thickness

    def with_(self, **kw) -> "WireGeometry":
        return replace(self, **kw)


@dataclass(frozen=True)
class ThermalParams:
    """Material and bath parameters (SI).

    I_c0 is the critical-current scale of the quadratic law
    ic_of_T(T) = I_c0 * (1 - (T/T_c)^2); the operating critical current of
    the device is ic_of_T(T_sub).  alpha scales the substrate coupling
    (alpha/d) * (T^n_bnd - T_sub^n_bnd).
    """

    T_sub: float = 4.2
    T_c: float = 10.5
    I_c0: float = 20e-6
    R_sheet: float = 400.0
    kappa0: float = 0.1
    c0: float = 9.8e3
    alpha: float = 1.0e3
    n_bnd: float = 3.0
    hotspot_len: float = 30e-9
    hotspot_T: float = 21.0

    def __post_init__(self):
        if not self.T_sub < self.T_c:
            raise DomainError("T_sub must be < T_c")
        for name in ("T_sub", "T_c", "I_c0", "R_sheet", "kappa0", "c0",
                     "n_bnd", "hotspot_len", "hotspot_T"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be > 0")
        if not self.alpha >= 0.0:
            raise DomainError("alpha must be >= 0")

    @property
    def ic_operating(self) -> float:
        """Critical current at the substrate temperature."""
        return ic_of_T(self.T_sub, self)

    def with_(self, **kw) -> "ThermalParams":
        return replace(self, **kw)


@dataclass
class ThermalProfile:
    """Discretized temperature field plus per-cell phase flags."""

    T: np.ndarray
    normal: np.ndarray

    @classmethod
    def uniform(cls, geom: WireGeometry, params: ThermalParams) -> "ThermalProfile":
        return cls(
            T=np.full(geom.n_cells, params.T_sub, dtype=np.float64),
            normal=np.zeros(geom.n_cells, dtype=np.bool_),
        )

    def copy(self) -> "ThermalProfile":
        return ThermalProfile(self.T.copy(), self.normal.copy())


def ic_of_T(T, params: ThermalParams):
    """Critical current at temperature T, clamped at zero for T >= T_c.

    Accepts a scalar or an array.
    """
    x = 1.0 - (np.asarray(T, dtype=np.float64) / params.T_c) ** 2
    out = params.I_c0 * np.clip(x, 0.0, None)
    if np.ndim(T) == 0:
        return float(out)
    return out


def _check_sizes(profile: ThermalProfile, geom: WireGeometry):
    if profile.T.shape != (geom.n_cells,) or profile.normal.shape != (geom.n_cells,):
        raise DomainError(
            f"profile arrays must have n_cells = {geom.n_cells} entries, "
            f"got {profile.T.shape} / {profile.normal.shape}"
        )


def hotspot_resistance(
    profile: ThermalProfile, geom: WireGeometry, params: ThermalParams
) -> float:
    """Series resistance of the normal cells: R_sheet * cell_len/width per cell."""
    _check_sizes(profile, geom)
    n_normal = int(np.count_nonzero(profile.normal))
    return params.R_sheet * (geom.cell_len / geom.width) * n_normal


def switching_flags(profile_T: np.ndarray, i_wire: float, params: ThermalParams) -> np.ndarray:
    """Normal-phase flags: T > T_c or |i| above the local critical current."""
    return (profile_T > params.T_c) | (abs(i_wire) > ic_of_T(profile_T, params))


def thermal_step(
    profile: ThermalProfile,
    geom: WireGeometry,
    params: ThermalParams,
    i_wire: float,
    dt: float,
) -> ThermalProfile:
    """Advance the temperature field by dt (sub-stepped internally).

    Returns a new profile; flags are refreshed by the switching rule after
    the temperature update.  Raises NumericalInstabilityError if the field
    turns NaN or non-positive.
    """
    _check_sizes(profile, geom)
    if not dt > 0.0:
        raise DomainError("dt must be > 0")
    T = profile.T.copy()
    scratch = np.empty_like(T)
    joule_vol = (i_wire / geom.cross_section) ** 2 * (params.R_sheet * geom.thickness)
    lo, hi, n_normal, t_max, status = _kernels.thermal_span(
        T, scratch, 0, geom.n_cells, geom.n_cells, abs(i_wire), dt,
        geom.cell_len, params.T_c, params.T_sub, params.I_c0, params.c0,
        params.kappa0, params.alpha, geom.thickness, params.n_bnd, joule_vol,
    )
    if status != 0:
        raise NumericalInstabilityError(
            f"thermal update produced a non-physical temperature "
            f"(i_wire={i_wire:.3e} A, dt={dt:.3e} s, max T={t_max:.3f} K)"
        )
    return ThermalProfile(T=T, normal=switching_flags(T, i_wire, params))


def inject_photon(
    profile: ThermalProfile,
    geom: WireGeometry,
    params: ThermalParams,
    position: float,
) -> ThermalProfile:
    """Seed a photon hotspot: a segment of hotspot_len centred at position
    is set to hotspot_T and marked normal.  The segment is clipped at the
    wire ends."""
    _check_sizes(profile, geom)
    if not (0.0 <= position <= geom.length):
        raise DomainError(
            f"position {position!r} outside the wire [0, {geom.length}]"
        )
    if params.hotspot_len / geom.cell_len < 3.0 - 1e-9:
        raise DomainError(
            f"cell size {geom.cell_len:.3g} m does not resolve the seed "
            f"hotspot ({params.hotspot_len:.3g} m needs >= 3 cells)"
        )
    i0, i1 = seed_cell_range(geom, params.hotspot_len, position)
    out = profile.copy()
    out.T[i0:i1] = params.hotspot_T
    out.normal[i0:i1] = True
    return out


def seed_cell_range(geom: WireGeometry, seg_len: float, position: float) -> tuple[int, int]:
    """Cell index range [i0, i1) covering a segment of seg_len at position."""
    dx = geom.cell_len
    i0 = int(math.floor((position - 0.5 * seg_len) / dx + 0.5))
    i1 = int(math.floor((position + 0.5 * seg_len) / dx + 0.5))
    i0 = max(0, min(geom.n_cells, i0))
    i1 = max(0, min(geom.n_cells, i1))
    if i1 <= i0:  # degenerate clip: keep at least the cell under `position`
        j = min(geom.n_cells - 1, max(0, int(position / dx)))
        return j, j + 1
    return i0, i1

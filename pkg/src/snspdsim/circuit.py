"""Lumped-element bias network of the detector.

The gated-mode core is a voltage source driving a series resistance R_p
into a node that holds the shunt capacitance C_p to ground; from that node
the nanowire branch (kinetic inductance L_k in series with the instantaneous
hotspot resistance R_hs) returns to ground:

    V_src --- R_p ---+--- L_k --- R_hs --- gnd
                     |
                    C_p
                     |
                    gnd

State is (v_c, i_L): the node voltage across C_p and the inductor current,
which equals the nanowire current.  In the free-running limit C_p -> 0 the
node equation becomes algebraic and the branch reduces to a first-order
system with load R_L = R_B + R_sense.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

from .errors import DegenerateTopologyError, DomainError

__all__ = [
    "CircuitParams",
    "CircuitState",
    "BiasWaveform",
    "time_constant",
    "circuit_derivative",
    "rk4_step",
    "damping_ratio",
    "critically_damped_rp",
    "superconducting_transfer",
    "solve_drive",
    "source_voltage",
]


@dataclass(frozen=True)
class CircuitParams:
    """Bias-network element values (SI units).

    R_p is the total source-side resistance seen by the C_p / L_k tank.
    R_L is the load seen by the nanowire in free-running operation and
    defaults to R_B + R_sense.  pad_cap is a fixed board-pad capacitance
    used only by the RF netlist model, not by the transient core.
    """

    L_k: float = 490e-9
    C_p: float = 0.57e-12
    R_p: float = 725.0
    R_B: float = 650.0
    R_sense: float = 50.0
    R_term: float = 50.0
    R_L: float | None = None
    pad_cap: float = 0.14e-12

    def __post_init__(self):
        if self.R_L is None:
            object.__setattr__(self, "R_L", self.R_B + self.R_sense)
        for name in ("L_k", "C_p", "R_p", "R_B", "R_sense", "R_term", "R_L", "pad_cap"):
            v = getattr(self, name)
            if isinstance(v, bool) or not (v >= 0.0):  # also catches NaN
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")
        if not self.L_k > 0.0:
            raise DomainError(f"L_k must be > 0, got {self.L_k!r}")

    def with_(self, **kw) -> "CircuitParams":
        return replace(self, **kw)


@dataclass
class CircuitState:
    """Dynamic electrical state: node voltage, inductor current, time."""

    v_c: float = 0.0
    i_L: float = 0.0
    t: float = 0.0

    def copy(self) -> "CircuitState":
        return CircuitState(self.v_c, self.i_L, self.t)


@dataclass(frozen=True)
class BiasWaveform:
    """Source drive: DC level or sinusoid with offset.

    The instantaneous source voltage is
        DC:    offset
        Sine:  offset + amplitude * sin(2*pi*frequency*t + phase)
    target_i_min / target_i_max record the nanowire-current extrema the
    drive was solved for (informational for DC).
    """

    kind: str = "DC"  # "DC" | "Sine"
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    target_i_min: float = 0.0
    target_i_max: float = 0.0

    def __post_init__(self):
        if self.kind not in ("DC", "Sine"):
            raise DomainError(f"bias kind must be 'DC' or 'Sine', got {self.kind!r}")
        if self.kind == "Sine":
            if not self.frequency > 0.0:
                raise DomainError("Sine bias requires frequency > 0")
            if not self.target_i_min < self.target_i_max:
                raise DomainError("target_i_min must be < target_i_max")
        else:
            if self.amplitude != 0.0:
                raise DomainError("DC bias requires amplitude = 0")
            # For a DC drive the current target is a single level; equal
            # min/max are allowed.
            if self.target_i_min > self.target_i_max:
                raise DomainError("target_i_min must be <= target_i_max")

    def period(self) -> float:
        if self.kind != "Sine":
            raise DomainError("period is defined only for a Sine bias")
        return 1.0 / self.frequency


def source_voltage(bias: BiasWaveform, t: float) -> float:
    """Instantaneous source voltage at time t."""
    if bias.kind == "DC":
        return bias.offset
    return bias.offset + bias.amplitude * math.sin(
        2.0 * math.pi * bias.frequency * t + bias.phase
    )


def time_constant(L_k: float, R_L: float) -> float:
    """Electrical reset time L_k / R_L of the free-running detector."""
    if not (L_k > 0.0 and R_L > 0.0):
        raise DomainError(f"time_constant needs L_k > 0 and R_L > 0, got {L_k}, {R_L}")
    return L_k / R_L


def circuit_derivative(
    state: CircuitState, params: CircuitParams, source_v: float, R_hs: float
) -> tuple[float, float]:
    """(dV_c/dt, dI_L/dt) of the gated-mode core at the given hotspot resistance."""
    if R_hs < 0.0:
        raise DomainError(f"R_hs must be >= 0, got {R_hs}")
    if params.C_p == 0.0 or params.L_k == 0.0:
        raise DegenerateTopologyError(
            "C_p = 0 or L_k = 0: use the algebraic free-running path"
        )
    dv = ((source_v - state.v_c) / params.R_p - state.i_L) / params.C_p
    di = (state.v_c - state.i_L * R_hs) / params.L_k
    return dv, di


def rk4_step(
    state: CircuitState,
    params: CircuitParams,
    bias: BiasWaveform,
    R_hs: float,
    dt: float,
) -> CircuitState:
    """One classical RK4 step of the gated-mode core with frozen R_hs."""
    t = state.t

    def f(v, i, tt):
        s = CircuitState(v, i, tt)
        return circuit_derivative(s, params, source_voltage(bias, tt), R_hs)

    k1v, k1i = f(state.v_c, state.i_L, t)
    k2v, k2i = f(state.v_c + 0.5 * dt * k1v, state.i_L + 0.5 * dt * k1i, t + 0.5 * dt)
    k3v, k3i = f(state.v_c + 0.5 * dt * k2v, state.i_L + 0.5 * dt * k2i, t + 0.5 * dt)
    k4v, k4i = f(state.v_c + dt * k3v, state.i_L + dt * k3i, t + dt)
    return CircuitState(
        state.v_c + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v),
        state.i_L + dt / 6.0 * (k1i + 2 * k2i + 2 * k3i + k4i),
        t + dt,
    )


def damping_ratio(params: CircuitParams) -> float:
    """Damping ratio of the superconducting (R_hs = 0) core.

    zeta < 1 means under-damped (oscillatory step response), zeta = 1
    critically damped.
    """
    if not (params.L_k > 0.0 and params.C_p > 0.0 and params.R_p > 0.0):
        raise DomainError("damping_ratio needs L_k, C_p, R_p > 0")
    return math.sqrt(params.L_k / params.C_p) / (2.0 * params.R_p)


def critically_damped_rp(L_k: float, C_p: float) -> float:
    """Source resistance giving a repeated eigenvalue (no overshoot)."""
    if not (L_k > 0.0 and C_p > 0.0):
        raise DomainError("critically_damped_rp needs L_k > 0 and C_p > 0")
    return 0.5 * math.sqrt(L_k / C_p)


def superconducting_transfer(params: CircuitParams, frequency: float) -> complex:
    """Small-signal transconductance I_L / V_src of the superconducting core.

    H(jw) = 1 / (R_p * (1 - w^2 L_k C_p) + jw L_k); at DC this is 1 / R_p.
    """
    if not params.R_p > 0.0:
        raise DomainError("superconducting_transfer needs R_p > 0")
    w = 2.0 * math.pi * frequency
    denom = params.R_p * (1.0 - w * w * params.L_k * params.C_p) + 1j * w * params.L_k
    if denom == 0:
        raise DomainError("transfer function singular at this frequency")
    return 1.0 / denom


def solve_drive(
    params: CircuitParams,
    g_dc: float,
    g_f: complex,
    i_min: float,
    i_max: float,
    frequency: float,
) -> BiasWaveform:
    """Source offset and amplitude hitting the requested current extrema.

    g_dc is the DC transconductance of the bias chain and g_f the complex
    transconductance at the gating frequency.  The returned phase places
    the current minimum at t = 0 and the maxima at the centre of each gate
    period, i.e. the steady nanowire current is
        i(t) = I_dc - I_ac * cos(2*pi*f*t).
    """
    if not g_dc > 0.0:
        raise DomainError(f"g_dc must be > 0, got {g_dc}")
    if abs(g_f) == 0.0:
        raise DomainError("zero transconductance: drive solve is singular")
    if not i_min < i_max:
        raise DomainError(f"i_min must be < i_max, got {i_min}, {i_max}")
    if not frequency > 0.0:
        raise DomainError("solve_drive needs frequency > 0")
    offset = 0.5 * (i_max + i_min) / g_dc
    amplitude = 0.5 * (i_max - i_min) / abs(g_f)
    # A * |g| * sin(wt + phase + arg g) must equal -I_ac * cos(wt).
    phase = -0.5 * math.pi - cmath.phase(g_f)
    return BiasWaveform(
        kind="Sine",
        offset=offset,
        amplitude=amplitude,
        frequency=frequency,
        phase=phase,
        target_i_min=i_min,
        target_i_max=i_max,
    )

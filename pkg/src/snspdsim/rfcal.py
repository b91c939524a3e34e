"""Two-port microwave toolkit for the bias chain.

Covers version-1 two-port Touchstone files (RI/MA/DB formats, Hz through
GHz units), S <-> ABCD conversion at a real reference impedance, cascading
with linear resampling onto a common grid, the source-to-nanowire
transconductance of a chain terminated in the linearized detector load,
and the input reflection of a small device netlist for model validation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import CircuitParams
from .errors import DomainError, SingularNetworkError, TouchstoneError

__all__ = [
    "TwoPortNetwork",
    "parse_touchstone",
    "serialize_touchstone",
    "s_to_abcd",
    "abcd_to_s",
    "cascade",
    "resample",
    "thru",
    "series_impedance",
    "shunt_impedance",
    "matched_attenuator",
    "delay_line",
    "transconductance",
    "transconductance_table",
    "DeviceNetlist",
    "input_reflection",
    "reflection_report",
]

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


@dataclass(frozen=True)
class TwoPortNetwork:
    """Frequency-sampled two-port in S or ABCD form.

    params has shape (n, 2, 2); freqs is strictly increasing.  For the S
    form ref_impedance is the (real) reference impedance.
    """

    freqs: np.ndarray
    params: np.ndarray
    form: str = "S"  # "S" | "ABCD"
    ref_impedance: float = 50.0
    passive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=np.float64))
        object.__setattr__(self, "params", np.asarray(self.params, dtype=np.complex128))
        if self.form not in ("S", "ABCD"):
            raise DomainError(f"form must be 'S' or 'ABCD', got {self.form!r}")
        if self.freqs.ndim != 1 or self.params.shape != (self.freqs.size, 2, 2):
            raise DomainError("params must have shape (len(freqs), 2, 2)")
        if self.freqs.size == 0:
            raise DomainError("network needs at least one frequency point")
        if np.any(np.diff(self.freqs) <= 0.0):
            raise DomainError("freqs must be strictly increasing")
        if not np.all(np.isfinite(self.params)):
            raise DomainError("network parameters must be finite")
        if not self.ref_impedance > 0.0:
            raise DomainError("ref_impedance must be > 0")
        if self.passive and self.form == "S":
            if np.any(np.abs(self.params[:, 0, 0]) > 1.0 + 1e-9):
                raise DomainError("passive network has |S11| > 1")

    def with_(self, **kw) -> "TwoPortNetwork":
        return replace(self, **kw)


def parse_touchstone(text: str) -> TwoPortNetwork:
    """Parse version-1 two-port Touchstone content into an S network.

    Option line: '# <unit> S <RI|MA|DB> R <z0>' (defaults: GHz, S, MA, 50).
    Data lines carry 9 columns: frequency then the four parameter pairs in
    S11 S21 S12 S22 order.  Comments start with '!'.
    """
    unit = 1e9
    fmt = "MA"
    z0 = 50.0
    seen_option = False
    freqs: list[float] = []
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if seen_option:
                raise TouchstoneError("duplicate option line", lineno)
            toks = line[1:].split()
            i = 0
            while i < len(toks):
                tok = toks[i].upper()
                if tok in _FREQ_UNITS:
                    unit = _FREQ_UNITS[tok]
                elif tok == "S":
                    pass
                elif tok in ("Y", "Z", "H", "G"):
                    raise TouchstoneError(
                        f"unsupported parameter type {tok!r} (only S)", lineno
                    )
                elif tok in ("RI", "MA", "DB"):
                    fmt = tok
                elif tok == "R":
                    if i + 1 >= len(toks):
                        raise TouchstoneError("R with no impedance value", lineno)
                    i += 1
                    try:
                        z0 = float(toks[i])
                    except ValueError:
                        raise TouchstoneError(
                            f"bad reference impedance {toks[i]!r}", lineno
                        ) from None
                else:
                    raise TouchstoneError(f"unknown option token {toks[i]!r}", lineno)
                i += 1
            seen_option = True
            continue
        parts = line.split()
        if len(parts) != 9:
            raise TouchstoneError(
                f"expected 9 columns, got {len(parts)}", lineno
            )
        try:
            vals = [float(x) for x in parts]
        except ValueError:
            raise TouchstoneError(f"bad number in data line: {line!r}", lineno) from None
        f = vals[0] * unit
        if freqs and f <= freqs[-1]:
            raise TouchstoneError(
                f"frequency {vals[0]!r} not strictly increasing", lineno
            )
        freqs.append(f)
        rows.append(vals[1:])
    if not freqs:
        raise TouchstoneError("no data lines found")

    data = np.asarray(rows)
    a, b = data[:, 0::2], data[:, 1::2]
    if fmt == "RI":
        vals = a + 1j * b
    elif fmt == "MA":
        vals = a * np.exp(1j * np.deg2rad(b))
    else:  # DB
        vals = 10.0 ** (a / 20.0) * np.exp(1j * np.deg2rad(b))
    # column order S11, S21, S12, S22
    params = np.empty((len(freqs), 2, 2), dtype=np.complex128)
    params[:, 0, 0] = vals[:, 0]
    params[:, 1, 0] = vals[:, 1]
    params[:, 0, 1] = vals[:, 2]
    params[:, 1, 1] = vals[:, 3]
    return TwoPortNetwork(freqs=np.asarray(freqs), params=params, form="S",
                          ref_impedance=z0)


def serialize_touchstone(net: TwoPortNetwork) -> str:
    """Write a network as a version-1 file (Hz, S, RI).

    Numbers are printed with repr, so parse(serialize(net)) reproduces
    every value bit-exactly.
    """
    s = net if net.form == "S" else abcd_to_s(net)
    lines = [f"# HZ S RI R {s.ref_impedance!r}"]
    for f, m in zip(s.freqs, s.params):
        cells = [repr(float(f))]
        for entry in (m[0, 0], m[1, 0], m[0, 1], m[1, 1]):
            cells.append(repr(float(entry.real)))
            cells.append(repr(float(entry.imag)))
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def s_to_abcd(net: TwoPortNetwork) -> TwoPortNetwork:
    """Standard S -> ABCD conversion at the network's reference impedance."""
    if net.form == "ABCD":
        return net
    s = net.params
    s21 = s[:, 1, 0]
    if np.any(np.abs(s21) == 0.0):
        raise SingularNetworkError("|S21| = 0: ABCD conversion is singular")
    z0 = net.ref_impedance
    s11, s12, s22 = s[:, 0, 0], s[:, 0, 1], s[:, 1, 1]
    den = 2.0 * s21
    out = np.empty_like(s)
    out[:, 0, 0] = ((1 + s11) * (1 - s22) + s12 * s21) / den
    out[:, 0, 1] = z0 * ((1 + s11) * (1 + s22) - s12 * s21) / den
    out[:, 1, 0] = ((1 - s11) * (1 - s22) - s12 * s21) / (z0 * den)
    out[:, 1, 1] = ((1 - s11) * (1 + s22) + s12 * s21) / den
    return net.with_(params=out, form="ABCD", passive=False)


def abcd_to_s(net: TwoPortNetwork, ref_impedance: float | None = None) -> TwoPortNetwork:
    """Standard ABCD -> S conversion."""
    if net.form == "S":
        return net
    z0 = net.ref_impedance if ref_impedance is None else ref_impedance
    m = net.params
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    den = a + b / z0 + c * z0 + d
    if np.any(np.abs(den) == 0.0):
        raise SingularNetworkError("degenerate ABCD matrix")
    out = np.empty_like(m)
    out[:, 0, 0] = (a + b / z0 - c * z0 - d) / den
    out[:, 0, 1] = 2.0 * (a * d - b * c) / den
    out[:, 1, 0] = 2.0 / den
    out[:, 1, 1] = (-a + b / z0 - c * z0 + d) / den
    return net.with_(params=out, form="S", ref_impedance=z0, passive=False)


def resample(net: TwoPortNetwork, freqs: np.ndarray) -> TwoPortNetwork:
    """Linear interpolation of real and imaginary parts onto a new grid."""
    freqs = np.asarray(freqs, dtype=np.float64)
    if freqs.min() < net.freqs[0] - 1e-9 or freqs.max() > net.freqs[-1] + 1e-9:
        raise DomainError(
            f"requested grid [{freqs.min():.4g}, {freqs.max():.4g}] Hz "
            f"extends beyond the network's [{net.freqs[0]:.4g}, "
            f"{net.freqs[-1]:.4g}] Hz"
        )
    out = np.empty((freqs.size, 2, 2), dtype=np.complex128)
    for i in range(2):
        for j in range(2):
            out[:, i, j] = np.interp(freqs, net.freqs, net.params[:, i, j].real) \
                + 1j * np.interp(freqs, net.freqs, net.params[:, i, j].imag)
    return net.with_(freqs=freqs, params=out, passive=False)


def cascade(a: TwoPortNetwork, b: TwoPortNetwork) -> TwoPortNetwork:
    """ABCD cascade a then b.

    Mismatched grids are handled by restricting to a's points inside b's
    span and linearly resampling b there.
    """
    am = s_to_abcd(a) if a.form == "S" else a
    bm = s_to_abcd(b) if b.form == "S" else b
    if am.freqs.shape == bm.freqs.shape and np.allclose(am.freqs, bm.freqs):
        fa, bb = am.freqs, bm
    else:
        keep = (am.freqs >= bm.freqs[0] - 1e-9) & (am.freqs <= bm.freqs[-1] + 1e-9)
        if not np.any(keep):
            raise DomainError("cascade grids do not overlap")
        fa = am.freqs[keep]
        am = resample(am, fa)
        bb = resample(bm, fa)
    prod = np.matmul(am.params, bb.params)
    return TwoPortNetwork(freqs=fa, params=prod, form="ABCD",
                          ref_impedance=a.ref_impedance)


def thru(freqs) -> TwoPortNetwork:
    """Identity (matched thru) in ABCD form."""
    freqs = np.asarray(freqs, dtype=np.float64)
    params = np.tile(np.eye(2, dtype=np.complex128), (freqs.size, 1, 1))
    return TwoPortNetwork(freqs=freqs, params=params, form="ABCD")


def series_impedance(freqs, z) -> TwoPortNetwork:
    """Series element: ABCD = [[1, Z], [0, 1]]."""
    freqs = np.asarray(freqs, dtype=np.float64)
    z = np.broadcast_to(np.asarray(z, dtype=np.complex128), freqs.shape)
    params = np.tile(np.eye(2, dtype=np.complex128), (freqs.size, 1, 1))
    params[:, 0, 1] = z
    return TwoPortNetwork(freqs=freqs, params=params, form="ABCD")


def shunt_impedance(freqs, z) -> TwoPortNetwork:
    """Shunt element: ABCD = [[1, 0], [1/Z, 1]]."""
    freqs = np.asarray(freqs, dtype=np.float64)
    z = np.broadcast_to(np.asarray(z, dtype=np.complex128), freqs.shape)
    if np.any(z == 0.0):
        raise DomainError("shunt impedance must be nonzero")
    params = np.tile(np.eye(2, dtype=np.complex128), (freqs.size, 1, 1))
    params[:, 1, 0] = 1.0 / z
    return TwoPortNetwork(freqs=freqs, params=params, form="ABCD")


def matched_attenuator(freqs, attenuation_db: float, z0: float = 50.0) -> TwoPortNetwork:
    """Matched resistive pad: S11 = S22 = 0, |S21| = 10^(-dB/20)."""
    freqs = np.asarray(freqs, dtype=np.float64)
    s21 = 10.0 ** (-attenuation_db / 20.0)
    params = np.zeros((freqs.size, 2, 2), dtype=np.complex128)
    params[:, 0, 1] = s21
    params[:, 1, 0] = s21
    return TwoPortNetwork(freqs=freqs, params=params, form="S",
                          ref_impedance=z0, passive=True)


def delay_line(freqs, delay: float, z0: float = 50.0) -> TwoPortNetwork:
    """Lossless matched line with the given group delay."""
    freqs = np.asarray(freqs, dtype=np.float64)
    theta = 2.0 * math.pi * freqs * delay
    params = np.zeros((freqs.size, 2, 2), dtype=np.complex128)
    params[:, 0, 0] = np.cos(theta)
    params[:, 0, 1] = 1j * z0 * np.sin(theta)
    params[:, 1, 0] = 1j * np.sin(theta) / z0
    params[:, 1, 1] = np.cos(theta)
    return TwoPortNetwork(freqs=freqs, params=params, form="ABCD",
                          ref_impedance=z0)


def _load_impedances(load: CircuitParams, f: float):
    """Linearized detector load: R_B + R_sense in series, then the
    C_p || L_k tank to ground (superconducting wire, R_hs = 0)."""
    w = 2.0 * math.pi * f
    z_wire = 1j * w * load.L_k
    tank_scale = 1.0 + 1j * w * load.C_p * z_wire  # 1 + jwC * jwL
    z_load = load.R_B + load.R_sense + z_wire / tank_scale
    return z_load, tank_scale


def transconductance(chain: TwoPortNetwork, load: CircuitParams, f: float) -> complex:
    """Nanowire current per source volt through the chain at frequency f.

    The ABCD chain is terminated in the linearized detector load; the
    returned value is I_nanowire / V_source with an ideal source at the
    chain input.  Frequencies outside the chain's grid raise.
    """
    if f < chain.freqs[0] - 1e-9 or f > chain.freqs[-1] + 1e-9:
        raise DomainError(
            f"frequency {f:.4g} Hz outside the chain grid "
            f"[{chain.freqs[0]:.4g}, {chain.freqs[-1]:.4g}] Hz"
        )
    m = s_to_abcd(chain) if chain.form == "S" else chain
    a = np.interp(f, m.freqs, m.params[:, 0, 0].real) \
        + 1j * np.interp(f, m.freqs, m.params[:, 0, 0].imag)
    b = np.interp(f, m.freqs, m.params[:, 0, 1].real) \
        + 1j * np.interp(f, m.freqs, m.params[:, 0, 1].imag)
    z_load, tank_scale = _load_impedances(load, f)
    denom = (a * z_load + b) * tank_scale
    if denom == 0:
        raise SingularNetworkError("chain + load is singular at this frequency")
    return complex(1.0 / denom)


def transconductance_table(chain: TwoPortNetwork, load: CircuitParams, freqs):
    """(frequency, complex transconductance) rows."""
    return [(float(f), transconductance(chain, load, float(f))) for f in freqs]


@dataclass(frozen=True)
class DeviceNetlist:
    """Small ladder model of the mounted detector seen from the RF input.

    sections is an ordered tuple of ('series_l'|'series_r'|'shunt_c', value)
    elements between the input port and the core; the core is R_b in series
    with the C_p || (L_k + R_sense) tank.  The default prepends the board
    pad capacitance.
    """

    sections: tuple = ()
    R_b: float = 50.0
    C_p: float = 0.57e-12
    L_k: float = 490e-9
    R_sense: float = 0.0

    @classmethod
    def from_circuit(cls, params: CircuitParams, R_b: float | None = None,
                     include_pad: bool = True) -> "DeviceNetlist":
        sections = (("shunt_c", params.pad_cap),) if include_pad else ()
        return cls(
            sections=sections,
            R_b=params.R_B if R_b is None else R_b,
            C_p=params.C_p,
            L_k=params.L_k,
            R_sense=params.R_sense,
        )

    def input_impedance(self, freqs) -> np.ndarray:
        freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
        w = 2.0 * math.pi * freqs
        z_wire = 1j * w * self.L_k + self.R_sense
        z_core = self.R_b + z_wire / (1.0 + 1j * w * self.C_p * z_wire)
        # fold the sections in from the core outwards
        z = z_core
        for kind, value in reversed(self.sections):
            if kind == "series_l":
                z = z + 1j * w * value
            elif kind == "series_r":
                z = z + value
            elif kind == "shunt_c":
                y = 1.0 / z + 1j * w * value
                z = 1.0 / y
            else:
                raise DomainError(f"unknown netlist section {kind!r}")
        return z


def input_reflection(netlist: DeviceNetlist, freqs, z0: float = 50.0) -> np.ndarray:
    """S11 of the modeled device at the given reference impedance."""
    z = netlist.input_impedance(freqs)
    return (z - z0) / (z + z0)


def reflection_report(
    netlist: DeviceNetlist,
    reference: TwoPortNetwork,
    f_cutoff: float,
    z0: float = 50.0,
):
    """Model-vs-reference S11 comparison up to f_cutoff.

    Returns (rows, rms) where each row is (freq, |S11|_model, |S11|_ref,
    |S11_model - S11_ref|) on the reference grid.
    """
    ref = reference if reference.form == "S" else abcd_to_s(reference)
    sel = ref.freqs <= f_cutoff
    if not np.any(sel):
        raise DomainError("no reference points below the cutoff frequency")
    freqs = ref.freqs[sel]
    s11_ref = ref.params[sel, 0, 0]
    s11_model = input_reflection(netlist, freqs, z0=z0)
    dev = np.abs(s11_model - s11_ref)
    rows = [
        (float(f), float(abs(m)), float(abs(r)), float(d))
        for f, m, r, d in zip(freqs, s11_model, s11_ref, dev)
    ]
    rms = float(np.sqrt(np.mean(dev ** 2)))
    return rows, rms

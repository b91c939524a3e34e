"""Coupled electro-thermal detector simulations.

Gated mode drives the RLC core with a sinusoid whose current minimum sits
at each gate boundary, so the current maximum falls exactly at the centre
of every gate; a photon seeded near a maximum latches the wire resistive
and the swing through the next minimum resets it.  Free-running mode uses
the first-order nanowire branch behind a Thevenin load R_L with an exact
exponential update per step, so arbitrarily stiff loads stay stable.

Per-step coupling order: the temperature field advances with the present
wire current, the hotspot resistance is refreshed from the phase flags,
and the circuit advances with that frozen resistance.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .circuit import (
    BiasWaveform,
    CircuitParams,
    critically_damped_rp,
    solve_drive,
    source_voltage,
    superconducting_transfer,
)
from .clickstats import ClickTrain, QeCurve
from .errors import ConfigError, DomainError, NumericalInstabilityError
from .thermal import (
    ThermalParams,
    ThermalProfile,
    WireGeometry,
    ic_of_T,
    seed_cell_range,
    switching_flags,
)

__all__ = [
    "SimConfig",
    "SimTrace",
    "GateRecord",
    "simulate",
    "drive_for_targets",
    "fm_bias_for_current",
    "differencing_readout",
    "calibrate_differencing",
    "gate_peaks_after_detection",
    "max_temperature_next_gate",
    "find_max_gating_frequency",
    "find_return_current",
    "return_current_sweep",
    "find_tau_e_min",
    "TauEMinResult",
    "fm_cw_click_train",
    "fig4c_sweep",
    "mcr_sweep",
    "crest_time",
]

_FF_REL_TOL = 1e-4   # fast-forward: max relative distance from the steady orbit
_FF_T_TOL = 1e-2     # fast-forward: max residual temperature above T_sub (K)


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one simulation run."""

    circuit: CircuitParams = field(default_factory=CircuitParams)
    thermal: ThermalParams = field(default_factory=ThermalParams)
    geom: WireGeometry = field(default_factory=WireGeometry)
    bias: BiasWaveform = field(default_factory=BiasWaveform)
    mode: str = "GM"  # "GM" | "FM"
    duration: float = 10e-9
    events: tuple = ()             # ((time, position), ...) unconditional seeds
    photon_rate: float = 0.0       # Hz, Poisson arrivals thinned by qe_curve
    pulsed_mu: float = 0.0         # mean photons per pulse, pulses at gate maxima
    pulse_divisor: int = 1         # pulse every k-th gate
    pulse_position: float | None = None  # fixed landing spot (None: uniform)
    dark_rate: float = 0.0         # Hz, Poisson photon-like seeds (unconditional)
    qe_curve: QeCurve | None = None
    seed: int = 0
    sample_every: int = 1          # trace stride; 0 disables the trace
    fast_forward: bool = False     # skip quiescent stretches analytically
    forced_r_hs: tuple | None = None  # (times, values) step schedule, bypasses thermal
    latch_threshold: float = 500.0
    latch_sustain_frac: float = 0.10  # of a gate period (GM latch definition)
    fm_bin_width: float = 1e-9
    dt_override: float | None = None

    def __post_init__(self):
        if self.mode not in ("GM", "FM"):
            raise ConfigError(f"mode must be 'GM' or 'FM', got {self.mode!r}")
        if self.mode == "GM" and self.bias.kind != "Sine":
            raise ConfigError("GM requires a Sine bias")
        if self.mode == "FM" and self.bias.kind != "DC":
            raise ConfigError("FM requires a DC bias")
        if not self.duration > 0.0:
            raise ConfigError("duration must be > 0")
        if self.mode == "GM" and not self.circuit.C_p > 0:
            raise ConfigError("GM dynamics need C_p > 0")
        for t, x in self.events:
            if not (0.0 <= x <= self.geom.length):
                raise ConfigError(f"event position {x} outside the wire")
            if t < 0.0:
                raise ConfigError(f"event time {t} negative")
        if self.pulse_divisor < 1:
            raise ConfigError("pulse_divisor must be >= 1")
        if not self.latch_threshold > 0.0:
            raise ConfigError("latch_threshold must be > 0")
        if not (0.0 < self.latch_sustain_frac < 1.0):
            raise ConfigError("latch_sustain_frac must be in (0, 1)")
        if self.forced_r_hs is not None:
            if len(self.forced_r_hs) != 2:
                raise ConfigError(
                    "forced_r_hs must be a (times, values) pair of sequences"
                )
            ft, fr = self.forced_r_hs
            if len(ft) != len(fr) or len(ft) == 0:
                raise ConfigError("forced_r_hs times and values must match")
            if any(b <= a for a, b in zip(ft, ft[1:])):
                raise ConfigError("forced_r_hs times must be strictly increasing")
            if any(r < 0 for r in fr):
                raise ConfigError("forced_r_hs values must be >= 0")

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class GateRecord:
    """Per-gate bookkeeping of a gated-mode run."""

    index: int
    t_start: float
    peak_current: float
    latched: bool
    re_latched: bool
    time_above_latch: float
    max_T: float
    max_T_center: float
    min_R_hs: float
    n_episodes: int
    n_seeds: int
    click_phase: float  # first seed time within the gate; NaN when unseeded


@dataclass
class SimTrace:
    """Sampled waveforms plus per-gate records and the derived click train.

    In FM runs v_c holds the nanowire voltage i_L * R_hs (there is no
    capacitor node).
    """

    t: np.ndarray
    i_L: np.ndarray
    v_c: np.ndarray
    R_hs: np.ndarray
    T_max: np.ndarray
    gates: list
    clicks: ClickTrain
    config: SimConfig
    final_profile: ThermalProfile
    fm_permanently_latched: bool = False
    fm_max_streak: float = 0.0


def crest_time(gate_index: int, frequency: float) -> float:
    """Time of the current maximum of the given gate (gate centre)."""
    return (gate_index + 0.5) / frequency


def drive_for_targets(
    params: CircuitParams, frequency: float, i_min: float, i_max: float
) -> BiasWaveform:
    """Source waveform hitting [i_min, i_max] through the bare RLC core."""
    g_dc = 1.0 / params.R_p
    g_f = superconducting_transfer(params, frequency)
    return solve_drive(params, g_dc, g_f, i_min, i_max, frequency)


def fm_bias_for_current(params: CircuitParams, i_bias: float) -> BiasWaveform:
    """DC source level for a free-running bias current through R_L."""
    return BiasWaveform(
        kind="DC", offset=i_bias * params.R_L,
        target_i_min=i_bias, target_i_max=i_bias,
    )


def _orbit_phasors(config: SimConfig):
    """Steady superconducting response of the GM core to its bias."""
    bias = config.bias
    g = superconducting_transfer(config.circuit, bias.frequency)
    i_dc = bias.offset / config.circuit.R_p
    phasor_i = bias.amplitude * g * cmath.exp(1j * bias.phase)
    w = 2.0 * math.pi * bias.frequency
    phasor_v = 1j * w * config.circuit.L_k * phasor_i
    return i_dc, phasor_i, phasor_v, w


def _orbit_state(config: SimConfig, t: float) -> tuple[float, float]:
    i_dc, phasor_i, phasor_v, w = _orbit_phasors(config)
    rot = cmath.exp(1j * w * t)
    return i_dc + (phasor_i * rot).imag, (phasor_v * rot).imag


def _gm_dt(config: SimConfig) -> float:
    if config.dt_override is not None:
        return config.dt_override
    p = config.circuit
    terms = [config.bias.period()]
    if math.isfinite(p.R_p) and p.R_p > 0.0:
        terms.append(p.R_p * p.C_p)
        terms.append(p.L_k / p.R_p)
    terms.append(2.0 * math.pi * math.sqrt(p.L_k * p.C_p))
    return min(terms) / 200.0


def _fm_dt(config: SimConfig) -> float:
    if config.dt_override is not None:
        return config.dt_override
    return min(4e-12, config.circuit.L_k / config.circuit.R_L / 20.0)


def _assemble_events(config: SimConfig, dt: float, n_steps: int):
    """Merge configured, pulsed, CW and dark seeds into step-indexed events.

    Returns a list of (step, position, accept_u) sorted by step; accept_u
    is NaN for unconditional seeds, otherwise the uniform that thins the
    arrival through qe_curve at the instantaneous current.
    """
    rng = np.random.default_rng(config.seed)
    length = config.geom.length
    horizon = n_steps * dt
    entries = []

    def snap(t):
        return int(math.ceil(t / dt - 1e-9))

    for t, x in config.events:
        s = snap(t)
        if s < n_steps:
            entries.append((s, x, math.nan))

    if config.pulsed_mu > 0.0:
        if config.mode != "GM":
            raise ConfigError("pulsed illumination applies to GM runs")
        T_per = config.bias.period()
        n_gates = int(math.floor(horizon / T_per + 1e-9))
        counts = rng.poisson(config.pulsed_mu,
                             size=(n_gates + config.pulse_divisor - 1)
                             // config.pulse_divisor)
        for i, g in enumerate(range(0, n_gates, config.pulse_divisor)):
            tc = crest_time(g, config.bias.frequency)
            for _ in range(int(counts[i])):
                x = rng.random() * length
                if config.pulse_position is not None:
                    x = config.pulse_position
                entries.append((snap(tc), x, rng.random()))

    for rate, thinned in ((config.photon_rate, True), (config.dark_rate, False)):
        if rate > 0.0:
            n = rng.poisson(rate * horizon)
            times = np.sort(rng.random(n)) * horizon
            xs = rng.random(n) * length
            us = rng.random(n)
            for t, x, u in zip(times, xs, us):
                s = snap(t)
                if s < n_steps:
                    entries.append((s, x, u if thinned else math.nan))

    entries.sort(key=lambda e: e[0])
    return entries


class _Runner:
    """Thermal-state plumbing shared by the mode drivers."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.geom = config.geom
        self.th = config.thermal
        self.n = config.geom.n_cells
        self.T = np.full(self.n, self.th.T_sub, dtype=np.float64)
        self.scratch = np.empty_like(self.T)
        self.lo = 0
        self.hi = 0
        self.ic_sub = ic_of_T(self.th.T_sub, self.th)
        self.joule_coeff = self.th.R_sheet / (
            self.geom.width ** 2 * self.geom.thickness
        )
        self.r_cell = self.th.R_sheet * self.geom.cell_len / self.geom.width
        self.trace_chunks = []
        if config.forced_r_hs is not None:
            ft, fr = config.forced_r_hs
            self.forced_t = np.asarray(ft, dtype=np.float64)
            self.forced_r = np.asarray(fr, dtype=np.float64)
            self.use_forced = True
        else:
            self.forced_t = np.zeros(1)
            self.forced_r = np.zeros(1)
            self.use_forced = False

    def inject(self, position: float):
        i0, i1 = seed_cell_range(self.geom, self.th.hotspot_len, position)
        if self.th.hotspot_len / self.geom.cell_len < 3.0 - 1e-9:
            raise ConfigError(
                f"cell size {self.geom.cell_len:.3g} m does not resolve the "
                f"photon seed ({self.th.hotspot_len:.3g} m needs >= 3 cells)"
            )
        self.T[i0:i1] = self.th.hotspot_T
        if self.lo >= self.hi:
            self.lo, self.hi = i0, i1
        else:
            self.lo = min(self.lo, i0)
            self.hi = max(self.hi, i1)

    def accept(self, u: float, i_now: float) -> bool:
        if math.isnan(u) or self.config.qe_curve is None:
            return True
        return u < float(self.config.qe_curve(i_now))

    def residual_T(self) -> float:
        if self.lo >= self.hi:
            return 0.0
        return float(self.T[self.lo:self.hi].max() - self.th.T_sub)

    def zero_residual(self):
        if self.lo < self.hi:
            self.T[self.lo:self.hi] = self.th.T_sub
        self.lo = self.hi = 0

    def trace_buffers(self, n_steps: int):
        if self.config.sample_every <= 0:
            z = np.empty(1)
            return z, z.copy(), z.copy(), z.copy(), z.copy()
        m = n_steps // self.config.sample_every + 2
        return (np.empty(m), np.empty(m), np.empty(m), np.empty(m), np.empty(m))

    def keep_trace(self, bufs, n_out: int):
        if self.config.sample_every > 0 and n_out > 0:
            self.trace_chunks.append(tuple(b[:n_out].copy() for b in bufs))

    def trace_arrays(self):
        if not self.trace_chunks:
            empty = np.empty(0)
            return (empty, empty.copy(), empty.copy(), empty.copy(), empty.copy())
        return tuple(
            np.concatenate([c[j] for c in self.trace_chunks]) for j in range(5)
        )

    def final_profile(self, i_last: float) -> ThermalProfile:
        return ThermalProfile(
            T=self.T.copy(), normal=switching_flags(self.T, i_last, self.th)
        )


@dataclass
class _HalfAgg:
    """Aggregates of one simulated half-gate."""

    peak: float = -1e300
    above: float = 0.0
    min_r: float = 1e300
    max_T: float = 0.0
    max_T_c: float = 0.0
    episodes: int = 0


def _simulate_gm(config: SimConfig) -> SimTrace:
    run = _Runner(config)
    p = config.circuit
    bias = config.bias
    th = config.thermal
    f = bias.frequency
    T_per = bias.period()
    dt = _gm_dt(config)
    n_gates = int(math.floor(config.duration * f + 1e-9))
    if n_gates < 1:
        raise ConfigError("duration must cover at least one gate period")

    def steps_at(phase: float) -> int:
        return int(round(phase * T_per / dt))

    n_steps = steps_at(float(n_gates))
    events = _assemble_events(config, dt, n_steps)
    w = 2.0 * math.pi * f

    i_L, v_c = _orbit_state(config, 0.0)
    cur_streak = 0.0
    res_armed = True
    ev = 0
    half_aggs: list[_HalfAgg] = []
    gate_seeds: list[tuple[int, float]] = []  # (n_seeds, first phase) per gate
    i_dc, phasor_i, _, _ = _orbit_phasors(config)
    i_ac = abs(phasor_i)
    ff_tol_i = _FF_REL_TOL * (abs(i_dc) + i_ac + 1e-15)
    ff_tol_v = _FF_REL_TOL * (w * p.L_k * (abs(i_dc) + i_ac) + 1e-15)

    k = 0
    while k < n_gates:
        s0, s1 = steps_at(k), steps_at(k + 1)
        next_ev_step = events[ev][0] if ev < len(events) else n_steps + 1

        if (
            config.fast_forward
            and not run.use_forced
            and next_ev_step >= s1
            and run.residual_T() < _FF_T_TOL
        ):
            oi, ov = _orbit_state(config, s0 * dt)
            if abs(i_L - oi) < ff_tol_i and abs(v_c - ov) < ff_tol_v:
                run.zero_residual()
                k_next = n_gates
                if ev < len(events):
                    k_next = min(n_gates, int(next_ev_step * dt / T_per))
                k_stop = max(k + 1, k_next)
                for _ in range(k, k_stop):
                    half_aggs.append(_HalfAgg(peak=i_dc + i_ac, min_r=0.0,
                                              max_T=th.T_sub, max_T_c=th.T_sub))
                    half_aggs.append(_HalfAgg(peak=i_dc + i_ac, min_r=0.0,
                                              max_T=th.T_sub, max_T_c=th.T_sub))
                    gate_seeds.append((0, math.nan))
                i_L, v_c = _orbit_state(config, steps_at(k_stop) * dt)
                cur_streak = 0.0
                res_armed = True
                k = k_stop
                continue

        tc = crest_time(k, f)
        tc_lo, tc_hi = tc - T_per / 10.0, tc + T_per / 10.0
        n_seeds = 0
        first_phase = math.nan
        for half, (b0, b1) in enumerate(
            ((s0, steps_at(k + 0.5)), (steps_at(k + 0.5), s1))
        ):
            agg = _HalfAgg()
            cur = b0
            while cur < b1:
                while ev < len(events) and events[ev][0] <= cur:
                    step, x, u = events[ev]
                    if run.accept(u, i_L):
                        run.inject(x)
                        n_seeds += 1
                        if math.isnan(first_phase):
                            first_phase = step * dt - s0 * dt
                    ev += 1
                stop = b1
                if ev < len(events) and events[ev][0] < stop:
                    stop = events[ev][0]
                nst = stop - cur
                if nst <= 0:
                    continue
                bufs = run.trace_buffers(nst)
                (v_c, i_L, run.lo, run.hi, pk, above, mstr, cur_streak,
                 res_armed, neps, min_r, mT, mTc, last_res, n_out, r_end,
                 status) = _kernels.gm_span(
                    run.T, run.scratch, run.lo, run.hi,
                    v_c, i_L, cur * dt, nst, dt, cur,
                    bias.offset, bias.amplitude, w, bias.phase,
                    p.L_k, p.C_p, p.R_p,
                    run.geom.cell_len, th.T_c, th.T_sub, th.I_c0, th.c0,
                    th.kappa0, th.alpha, run.geom.thickness, th.n_bnd,
                    run.joule_coeff, run.r_cell, run.ic_sub,
                    config.latch_threshold, tc_lo, tc_hi,
                    run.use_forced, run.forced_t, run.forced_r,
                    cur_streak, res_armed,
                    config.sample_every, *bufs)
                if status != 0:
                    raise NumericalInstabilityError(
                        f"gated-mode step failed at t={cur * dt:.3e} s "
                        f"(gate {k}); max T={mT:.2f} K"
                    )
                run.keep_trace(bufs, n_out)
                agg.peak = max(agg.peak, pk)
                agg.above += above
                agg.min_r = min(agg.min_r, min_r)
                agg.max_T = max(agg.max_T, mT)
                agg.max_T_c = max(agg.max_T_c, mTc)
                agg.episodes += neps
                cur = stop
            half_aggs.append(agg)
        gate_seeds.append((n_seeds, first_phase))
        k += 1

    gates: list[GateRecord] = []
    for k in range(n_gates):
        a, b = half_aggs[2 * k], half_aggs[2 * k + 1]
        above = a.above + b.above
        gates.append(GateRecord(
            index=k,
            t_start=steps_at(k) * dt,
            peak_current=max(a.peak, b.peak),
            latched=above > config.latch_sustain_frac * T_per,
            re_latched=False,
            time_above_latch=above,
            max_T=max(a.max_T, b.max_T),
            max_T_center=max(a.max_T_c, b.max_T_c),
            min_R_hs=min(a.min_r, b.min_r),
            n_episodes=a.episodes + b.episodes,
            n_seeds=gate_seeds[k][0],
            click_phase=gate_seeds[k][1],
        ))
    # reset check: R_hs must touch zero between this crest and the next
    for k in range(n_gates):
        if not gates[k].latched:
            continue
        crest_to_crest = [half_aggs[2 * k + 1].min_r]
        if k + 1 < n_gates:
            crest_to_crest.append(half_aggs[2 * k + 2].min_r)
        gates[k].re_latched = min(crest_to_crest) > 0.0

    bins = np.array([int(g.latched) for g in gates], dtype=np.uint8)
    phases = np.array(
        [g.click_phase for g in gates if g.latched and not math.isnan(g.click_phase)]
    )
    clicks = ClickTrain(bins=bins, bin_width=T_per, mode="GM",
                        phase_times=phases if phases.size else None)
    tt, ii, vv, rr, TT = run.trace_arrays()
    return SimTrace(
        t=tt, i_L=ii, v_c=vv, R_hs=rr, T_max=TT,
        gates=gates, clicks=clicks, config=config,
        final_profile=run.final_profile(i_L),
    )


def _simulate_fm(config: SimConfig) -> SimTrace:
    run = _Runner(config)
    p = config.circuit
    th = config.thermal
    bias = config.bias
    if not p.R_L > 0.0:
        raise ConfigError("FM needs R_L > 0")
    dt = _fm_dt(config)
    tau_e = p.L_k / p.R_L
    n_steps = int(round(config.duration / dt))
    events = _assemble_events(config, dt, n_steps)

    i_bias = bias.offset / p.R_L
    i_L = i_bias
    cur_streak = 0.0
    max_streak = 0.0
    armed = True
    click_times: list[float] = []
    ev = 0
    cur = 0
    last_r_end = 0.0
    while cur < n_steps:
        while ev < len(events) and events[ev][0] <= cur:
            step, x, u = events[ev]
            if run.accept(u, i_L):
                run.inject(x)
            ev += 1
        next_ev_step = events[ev][0] if ev < len(events) else n_steps

        if (
            config.fast_forward
            and not run.use_forced
            and run.residual_T() < _FF_T_TOL
            and last_r_end == 0.0
        ):
            run.zero_residual()
            target = min(next_ev_step, n_steps)
            if target > cur:
                i_L = i_bias + (i_L - i_bias) * math.exp(-(target - cur) * dt / tau_e)
                cur_streak = 0.0
                armed = True
                cur = target
                continue

        stop = min(next_ev_step, n_steps)
        # march in bounded chunks so long runs keep memory flat
        nst = min(stop - cur, 200_000)
        if nst <= 0:
            continue
        bufs = run.trace_buffers(nst)
        cbuf = np.empty(4096)
        (i_L, run.lo, run.hi, pk, above, max_streak_k, cur_streak, armed,
         n_clicks, min_r, mT, last_res, n_out, r_end, status) = _kernels.fm_span(
            run.T, run.scratch, run.lo, run.hi,
            i_L, cur * dt, nst, dt, cur,
            bias.offset, 0.0,
            p.L_k, p.R_L,
            run.geom.cell_len, th.T_c, th.T_sub, th.I_c0, th.c0,
            th.kappa0, th.alpha, run.geom.thickness, th.n_bnd,
            run.joule_coeff, run.r_cell, run.ic_sub,
            config.latch_threshold,
            run.use_forced, run.forced_t, run.forced_r,
            cur_streak, armed,
            cbuf, config.sample_every, *bufs)
        if status == 2:
            raise NumericalInstabilityError("FM click buffer overflow")
        if status != 0:
            raise NumericalInstabilityError(
                f"free-running step failed at t={cur * dt:.3e} s; "
                f"max T={mT:.2f} K"
            )
        run.keep_trace(bufs, n_out)
        click_times.extend(cbuf[:n_clicks])
        max_streak = max(max_streak, max_streak_k)
        last_r_end = r_end
        cur += nst

    duration = n_steps * dt
    n_bins = max(1, int(math.ceil(duration / config.fm_bin_width)))
    bins = np.zeros(n_bins, dtype=np.uint8)
    for t in click_times:
        bins[min(n_bins - 1, int(t / config.fm_bin_width))] = 1
    clicks = ClickTrain(bins=bins, bin_width=config.fm_bin_width, mode="FM")
    tt, ii, vv, rr, TT = run.trace_arrays()
    return SimTrace(
        t=tt, i_L=ii, v_c=vv, R_hs=rr, T_max=TT,
        gates=[], clicks=clicks, config=config,
        final_profile=run.final_profile(i_L),
        fm_permanently_latched=max_streak > 10.0 * tau_e,
        fm_max_streak=max_streak,
    )


def simulate(config: SimConfig) -> SimTrace:
    """Run the configured simulation; deterministic for a fixed seed."""
    if config.mode == "GM":
        return _simulate_gm(config)
    return _simulate_fm(config)


def differencing_signal(trace: SimTrace, delay: float, atten: float,
                        dc_block: bool = True) -> np.ndarray:
    """V_d(t) = V_2(t) - V_1(t) on the trace grid.

    V_2 is the sense-resistor voltage on the source path,
    R_sense * (V_src - v_c) / R_p, and V_1 the attenuated source replica
    delayed by `delay`.  With dc_block each path loses its steady mean
    (AC-coupled amplifiers with a time constant far above the gate
    period): for V_2 that is R_sense * offset / R_p since the node
    voltage averages to zero on the superconducting orbit, and for V_1 it
    is atten * offset.
    """
    config = trace.config
    p = config.circuit
    bias = config.bias
    v_src = np.array([source_voltage(bias, t) for t in trace.t])
    v_src_del = np.array([source_voltage(bias, t - delay) for t in trace.t])
    v2 = p.R_sense * (v_src - trace.v_c) / p.R_p
    v1 = atten * v_src_del
    if dc_block:
        v2 = v2 - p.R_sense * bias.offset / p.R_p
        v1 = v1 - atten * bias.offset
    return v2 - v1


def differencing_readout(
    trace: SimTrace,
    delay: float,
    atten: float,
    threshold: float,
    dc_block: bool = True,
) -> ClickTrain:
    """Click discrimination on V_d = V_2 - V_1.

    A gate clicks when max |V_d| inside it exceeds the threshold.  Note a
    latch collapsing at the gate-boundary current minimum leaves part of
    its V_d transient in the following gate.
    """
    if not threshold > 0.0:
        raise DomainError("threshold must be > 0")
    config = trace.config
    if config.mode != "GM":
        raise DomainError("differencing readout applies to gated-mode traces")
    if trace.t.size == 0:
        raise DomainError("trace is empty; rerun with sample_every >= 1")
    vd = differencing_signal(trace, delay, atten, dc_block)
    T_per = config.bias.period()
    n_gates = len(trace.gates)
    bins = np.zeros(n_gates, dtype=np.uint8)
    gate_idx = np.minimum((trace.t / T_per).astype(int), n_gates - 1)
    absvd = np.abs(vd)
    for k in range(n_gates):
        sel = gate_idx == k
        if np.any(sel) and absvd[sel].max() > threshold:
            bins[k] = 1
    return ClickTrain(bins=bins, bin_width=T_per, mode="GM")


def calibrate_differencing(trace: SimTrace) -> tuple[float, float]:
    """Delay and attenuation cancelling the quiescent difference signal.

    Lock-in projection of the sense voltage and the source onto the gate
    frequency over the (quiescent, superconducting) trace gives the
    amplitude ratio and phase lag directly.
    """
    config = trace.config
    if config.mode != "GM":
        raise DomainError("calibration applies to gated-mode traces")
    p = config.circuit
    bias = config.bias
    w = 2.0 * math.pi * bias.frequency
    T_per = bias.period()
    # trim to an integer number of periods for a clean projection
    t = trace.t
    n_per = int(math.floor((t[-1] - t[0]) / T_per))
    if n_per < 1:
        raise DomainError("trace shorter than one gate period")
    sel = t < t[0] + n_per * T_per
    t = t[sel]
    v_src = np.array([source_voltage(bias, tt) for tt in t])
    v2 = p.R_sense * (v_src - trace.v_c[sel]) / p.R_p
    ph = np.exp(-1j * w * t)
    a_src = (v_src * ph).mean()
    a_v2 = (v2 * ph).mean()
    if abs(a_src) == 0.0:
        raise DomainError("source projection vanished; not a sinusoidal drive")
    atten = abs(a_v2) / abs(a_src)
    delay = -(cmath.phase(a_v2) - cmath.phase(a_src)) / w
    delay = delay % T_per
    return delay, atten


def gate_peaks_after_detection(config: SimConfig, n_gates: int) -> np.ndarray:
    """Peak currents of the n_gates gates after a single detection,
    normalized to 0.95 * I_c0.

    The photon lands exactly on the first gate's current maximum.
    """
    if config.mode != "GM":
        raise DomainError("gate peaks are a gated-mode quantity")
    f = config.bias.frequency
    cfg = config.with_(
        events=((crest_time(0, f), config.geom.length / 2.0),),
        duration=(n_gates + 1) / f,
        photon_rate=0.0, dark_rate=0.0, pulsed_mu=0.0,
        sample_every=0,
    )
    trace = simulate(cfg)
    norm = 0.95 * config.thermal.I_c0
    return np.array([trace.gates[k].peak_current for k in range(1, n_gates + 1)]) / norm


def max_temperature_next_gate(config: SimConfig, normalized: bool = False) -> float:
    """Maximum wire temperature in the centre window of the gate following
    the detection gate (T_sub when nothing was detected)."""
    if config.mode != "GM":
        raise DomainError("gate temperatures are a gated-mode quantity")
    trace = simulate(config.with_(sample_every=0))
    value = config.thermal.T_sub
    for g in trace.gates:
        if g.n_seeds > 0:
            if g.index + 1 < len(trace.gates):
                value = trace.gates[g.index + 1].max_T_center
            break
    return value / config.thermal.T_sub if normalized else value


def _relatch_config(L_k, C_p, thermal, geom, frequency, i_min, i_max) -> SimConfig:
    R_p = critically_damped_rp(L_k, C_p)
    params = CircuitParams(L_k=L_k, C_p=C_p, R_p=R_p)
    bias = drive_for_targets(params, frequency, i_min, i_max)
    return SimConfig(
        circuit=params, thermal=thermal, geom=geom, bias=bias, mode="GM",
        duration=3.0 / frequency,
        events=((crest_time(0, frequency), geom.length / 2.0),),
        sample_every=0,
    )


def _relatch_admissible(L_k, C_p, thermal, geom, frequency, i_min, i_max) -> bool:
    """No spurious latch in the gate following a single detection.

    Admissible means the detection episode's hotspot resistance returns to
    zero before the next gate's current maximum and no new resistive
    episode starts within that following gate.
    """
    cfg = _relatch_config(L_k, C_p, thermal, geom, frequency, i_min, i_max)
    trace = simulate(cfg)
    g0, g1 = trace.gates[0], trace.gates[1]
    if g0.n_seeds != 1 or g0.n_episodes < 1:
        return False
    reset_ok = not g0.re_latched
    return reset_ok and g1.n_episodes == 0


def find_max_gating_frequency(
    L_k: float,
    C_p: float,
    thermal: ThermalParams,
    geom: WireGeometry,
    i_min: float = -2e-6,
    i_max: float | None = None,
    f_lo: float = 0.2e9,
    f_cap: float = 50e9,
    resolution: float = 0.01,
) -> float:
    """Largest gating frequency at which a single detection does not cause
    a spurious latch in the following gate (critically damped source).

    Geometric bracketing plus bisection in log-frequency to the requested
    relative resolution.
    """
    if i_max is None:
        i_max = 0.9 * ic_of_T(thermal.T_sub, thermal)

    def ok(f):
        return _relatch_admissible(L_k, C_p, thermal, geom, f, i_min, i_max)

    f = f_lo
    tries = 0
    while not ok(f):
        f *= 0.5
        tries += 1
        if tries > 8:
            raise DomainError(
                "no admissible gating frequency found; check the thermal "
                "parameters and bias targets"
            )
    while True:
        f2 = f * 1.6
        if f2 > f_cap or not ok(f2):
            break
        f = f2
    if f2 > f_cap:
        return f
    lo_f, hi_f = f, f2
    while hi_f / lo_f > 1.0 + resolution:
        mid = math.sqrt(lo_f * hi_f)
        if ok(mid):
            lo_f = mid
        else:
            hi_f = mid
    return lo_f


def find_return_current(
    config: SimConfig,
    R_L: float,
    start_bias: float | None = None,
    settle_factor: float = 10.0,
    step_frac: float = 0.002,
    confirm_factor: float = 2.0,
    rate_scale: float = 1.0,
    seed_len: float = 1e-6,
    dt: float = 5e-12,
) -> float:
    """Bias current at which the latched wire returns superconducting
    during a downward quasi-static sweep.

    The sweep starts latched above the critical current and ramps the bias
    down by step_frac * I_c0 per settling time (settle_factor electrical
    time constants, with a floor); rate_scale > 1 slows the ramp by that
    factor.  Collapse is a sustained fully-superconducting stretch.
    """
    th = config.thermal
    geom = config.geom
    L_k = config.circuit.L_k
    ic_sub = ic_of_T(th.T_sub, th)
    if start_bias is None:
        start_bias = 1.05 * ic_sub
    tau_e = L_k / R_L
    tau_settle = max(settle_factor * tau_e, 0.5e-9)
    rate = step_frac * th.I_c0 / tau_settle / rate_scale
    confirm = max(confirm_factor * tau_settle, 3e-9)

    n = geom.n_cells
    T = np.full(n, th.T_sub)
    scratch = np.empty_like(T)
    i0, i1 = seed_cell_range(geom, seed_len, geom.length / 2.0)
    T[i0:i1] = th.hotspot_T
    lo, hi = i0, i1
    i_L = start_bias
    joule_coeff = th.R_sheet / (geom.width ** 2 * geom.thickness)
    r_cell = th.R_sheet * geom.cell_len / geom.width
    dummy = np.zeros(1)
    clicks = np.empty(1 << 14)
    zbuf = np.empty(1)
    v_off = start_bias * R_L
    v_slope = -rate * R_L
    total = int(start_bias / rate / dt)
    chunk = 50_000
    t_last_res = 0.0
    cur_streak = 0.0
    armed = True
    done = 0
    t = 0.0
    while done < total:
        nst = min(chunk, total - done)
        (i_L, lo, hi, _pk, _ab, _ms, cur_streak, armed, _nc, _mr, mT,
         last_res, _no, _re, status) = _kernels.fm_span(
            T, scratch, lo, hi, i_L, t, nst, dt, 0,
            v_off, v_slope, L_k, R_L,
            geom.cell_len, th.T_c, th.T_sub, th.I_c0, th.c0, th.kappa0,
            th.alpha, geom.thickness, th.n_bnd,
            joule_coeff, r_cell, ic_of_T(th.T_sub, th),
            config.latch_threshold,
            False, dummy, dummy,
            cur_streak, armed,
            clicks, 0, zbuf, zbuf, zbuf, zbuf, zbuf)
        if status not in (0, 2):
            raise NumericalInstabilityError(
                f"return-current sweep failed at t={t:.3e} s (max T={mT:.2f} K)"
            )
        if last_res >= 0.0:
            t_last_res = last_res
        t += nst * dt
        done += nst
        if t - t_last_res > confirm:
            break
    return start_bias - rate * t_last_res


def _return_current_worker(args):
    config, R_L, kwargs = args
    return find_return_current(config, R_L, **kwargs)


def return_current_sweep(
    config: SimConfig, r_l_values, workers: int = 1, **kwargs
) -> list[tuple[float, float]]:
    """(R_L, return current) table, ordered like r_l_values."""
    jobs = [(config, float(r), kwargs) for r in r_l_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rets = list(pool.map(_return_current_worker, jobs))
    else:
        rets = [_return_current_worker(j) for j in jobs]
    return [(float(r), ret) for r, ret in zip(r_l_values, rets)]


@dataclass(frozen=True)
class TauEMinResult:
    tau_e_min: float
    r_star: float
    plateau: float
    table: tuple


def find_tau_e_min(
    config: SimConfig, r_l_values, workers: int = 1, tol: float = 0.01, **kwargs
) -> TauEMinResult:
    """Smallest stable electrical reset time from the return-current sweep.

    R* is the largest load whose return current still equals the small-R_L
    plateau within `tol`; tau_e_min = L_k / R*.
    """
    table = return_current_sweep(config, r_l_values, workers=workers, **kwargs)
    plateau = table[0][1]
    if abs(table[1][1] - plateau) > tol * plateau:
        raise DomainError(
            "no plateau: the two smallest loads already disagree by more "
            f"than {tol:.0%} ({table[0][1]:.4g} vs {table[1][1]:.4g} A)"
        )
    r_star = table[0][0]
    for r, ret in table:
        if abs(ret - plateau) <= tol * plateau:
            r_star = r
        else:
            break
    return TauEMinResult(
        tau_e_min=config.circuit.L_k / r_star,
        r_star=r_star,
        plateau=plateau,
        table=tuple(table),
    )


def fm_cw_click_train(
    config: SimConfig,
    dt: float = 2e-12,
    relax_tol: float = _FF_T_TOL,
) -> ClickTrain:
    """Free-running click train under CW illumination (event-driven).

    Equivalent to simulate() with fast_forward for a DC-biased run whose
    only events are thinned Poisson photon arrivals, but with the entire
    arrival loop compiled; intended for long statistics runs.
    """
    if config.mode != "FM":
        raise ConfigError("CW train generation is a free-running procedure")
    if config.qe_curve is None:
        raise ConfigError("CW train generation needs a qe_curve")
    if not config.photon_rate > 0.0:
        raise ConfigError("CW train generation needs photon_rate > 0")
    p = config.circuit
    th = config.thermal
    geom = config.geom
    rng = np.random.default_rng(config.seed)
    n_arr = rng.poisson(config.photon_rate * config.duration)
    arr_t = np.sort(rng.random(n_arr)) * config.duration
    arr_cell = np.minimum(
        (rng.random(n_arr) * geom.n_cells).astype(np.int64), geom.n_cells - 1
    )
    arr_u = rng.random(n_arr)
    T = np.full(geom.n_cells, th.T_sub)
    scratch = np.empty_like(T)
    clicks = np.empty(n_arr + 1)
    seed_cells = max(3, int(round(th.hotspot_len / geom.cell_len)))
    qe = config.qe_curve
    i_bias = config.bias.offset / p.R_L
    n_clicks, status = _kernels.fm_cw_train(
        arr_t, arr_cell, arr_u,
        i_bias, p.R_L, p.L_k, dt,
        geom.cell_len, th.T_c, th.T_sub, th.I_c0, th.c0, th.kappa0,
        th.alpha, geom.thickness, th.n_bnd,
        th.R_sheet / (geom.width ** 2 * geom.thickness),
        th.R_sheet * geom.cell_len / geom.width,
        ic_of_T(th.T_sub, th),
        th.hotspot_T, seed_cells,
        qe.max_qe, qe.steepness, qe.center, qe.i_ref,
        config.latch_threshold, relax_tol,
        T, scratch, clicks)
    if status == 1:
        raise NumericalInstabilityError("CW train generation hit a non-physical state")
    n_bins = max(1, int(math.ceil(config.duration / config.fm_bin_width)))
    bins = np.zeros(n_bins, dtype=np.uint8)
    for t in clicks[:n_clicks]:
        bins[min(n_bins - 1, int(t / config.fm_bin_width))] = 1
    return ClickTrain(bins=bins, bin_width=config.fm_bin_width, mode="FM")


def _fig4c_worker(args):
    config_base, f, n_gates, i_min, i_max = args
    bias = drive_for_targets(config_base.circuit, f, i_min, i_max)
    cfg = config_base.with_(bias=bias)
    return gate_peaks_after_detection(cfg, n_gates)


def fig4c_sweep(
    params: CircuitParams,
    thermal: ThermalParams,
    geom: WireGeometry,
    frequencies,
    n_gates: int = 3,
    i_min: float = -2e-6,
    i_max: float | None = None,
    workers: int = 1,
) -> list[tuple[float, np.ndarray]]:
    """Normalized post-detection gate peaks versus gating frequency."""
    if i_max is None:
        i_max = 0.9 * ic_of_T(thermal.T_sub, thermal)
    base = SimConfig(
        circuit=params, thermal=thermal, geom=geom,
        bias=drive_for_targets(params, frequencies[0], i_min, i_max),
        mode="GM", duration=(n_gates + 1) / frequencies[0],
        sample_every=0,
    )
    jobs = [(base, float(f), n_gates, i_min, i_max) for f in frequencies]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            peaks = list(pool.map(_fig4c_worker, jobs))
    else:
        peaks = [_fig4c_worker(j) for j in jobs]
    return [(float(f), pk) for f, pk in zip(frequencies, peaks)]


def _mcr_worker(args):
    L_k, C_p, thermal, geom, kwargs = args
    return find_max_gating_frequency(L_k, C_p, thermal, geom, **kwargs)


def mcr_sweep(
    l_k_values,
    C_p: float,
    thermal: ThermalParams,
    geom: WireGeometry,
    workers: int = 1,
    **kwargs,
) -> list[tuple[float, float]]:
    """(L_k, maximum gating frequency) with critically damped sources."""
    jobs = [(float(L), C_p, thermal, geom, kwargs) for L in l_k_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fs = list(pool.map(_mcr_worker, jobs))
    else:
        fs = [_mcr_worker(j) for j in jobs]
    return [(float(L), f) for L, f in zip(l_k_values, fs)]

import math

import numpy as np
import pytest

from snspdsim.circuit import BiasWaveform, CircuitParams, critically_damped_rp
from snspdsim.clickstats import QeCurve
from snspdsim.engine import (
    SimConfig,
    calibrate_differencing,
    crest_time,
    differencing_readout,
    differencing_signal,
    drive_for_targets,
    find_max_gating_frequency,
    find_return_current,
    fm_bias_for_current,
    fm_cw_click_train,
    gate_peaks_after_detection,
    max_temperature_next_gate,
    simulate,
)
from snspdsim.errors import ConfigError, DomainError
from snspdsim.thermal import (
    ThermalParams,
    ThermalProfile,
    WireGeometry,
    ic_of_T,
    inject_photon,
    thermal_step,
)


@pytest.fixture(scope="module")
def geom():
    return WireGeometry(length=100e-6, n_cells=10_000)


@pytest.fixture(scope="module")
def th():
    return ThermalParams()


@pytest.fixture(scope="module")
def ic_sub(th):
    return ic_of_T(th.T_sub, th)


def gm_config(geom, th, ic_sub, f=625e6, n_gates=5, params=None, **kw):
    params = params or CircuitParams()
    bias = drive_for_targets(params, f, -2e-6, 0.9 * ic_sub)
    base = dict(
        circuit=params, thermal=th, geom=geom, bias=bias, mode="GM",
        duration=n_gates / f, sample_every=1,
    )
    base.update(kw)
    return SimConfig(**base)


def fm_config(geom, th, ic_sub, r_l=100.0, bias_frac=0.9, **kw):
    params = CircuitParams(R_B=r_l - 50.0, R_sense=50.0) if r_l > 50 else \
        CircuitParams(R_B=r_l, R_sense=0.0)
    base = dict(
        circuit=params, thermal=th, geom=geom,
        bias=fm_bias_for_current(params, bias_frac * ic_sub),
        mode="FM", duration=30e-9, sample_every=1,
    )
    base.update(kw)
    return SimConfig(**base)


class TestDeterminism:
    def test_bit_identical_reruns(self, geom, th, ic_sub):
        cfg = gm_config(geom, th, ic_sub,
                        events=((crest_time(0, 625e6), 50e-6),),
                        dark_rate=2e7, seed=42)
        a = simulate(cfg)
        b = simulate(cfg)
        assert np.array_equal(a.i_L, b.i_L)
        assert np.array_equal(a.R_hs, b.R_hs)
        assert np.array_equal(a.clicks.bins, b.clicks.bins)
        assert [g.peak_current for g in a.gates] == [g.peak_current for g in b.gates]

    def test_seed_changes_dark_counts(self, geom, th, ic_sub):
        cfg = gm_config(geom, th, ic_sub, n_gates=40, dark_rate=3e8,
                        seed=1, sample_every=0)
        a = simulate(cfg)
        b = simulate(cfg.with_(seed=2))
        assert not np.array_equal(a.clicks.bins, b.clicks.bins)


class TestQuiescence:
    def test_subcritical_gm_never_latches(self, geom, th, ic_sub):
        trace = simulate(gm_config(geom, th, ic_sub, n_gates=6))
        assert not any(g.latched for g in trace.gates)
        assert trace.R_hs.max() == 0.0
        assert trace.clicks.bins.sum() == 0
        # periodic steady state: every gate peaks at the same current
        peaks = [g.peak_current for g in trace.gates]
        assert max(peaks) - min(peaks) < 1e-4 * abs(peaks[0])
        assert peaks[0] == pytest.approx(0.9 * ic_sub, rel=1e-3)

    def test_causality(self, geom, th, ic_sub):
        f = 625e6
        cfg = gm_config(geom, th, ic_sub, n_gates=8,
                        events=((crest_time(4, f), 50e-6),))
        trace = simulate(cfg)
        assert not any(g.latched for g in trace.gates[:4])
        assert trace.gates[4].latched


class TestSinglePhotonGate:
    def test_latch_and_reset(self, geom, th, ic_sub):
        f = 625e6
        cfg = gm_config(geom, th, ic_sub,
                        events=((crest_time(0, f), 50e-6),))
        trace = simulate(cfg)
        g0 = trace.gates[0]
        assert g0.latched
        assert trace.R_hs.max() >= 1e3  # kilo-ohm scale resistive bridge
        # re-superconducts before the next gate's maximum
        assert not g0.re_latched
        assert trace.gates[1].min_R_hs == 0.0
        assert not trace.gates[1].latched
        # click with its phase at the gate centre (the current maximum),
        # up to one integration step of event snapping
        assert np.array_equal(trace.clicks.bins[:2], [1, 0])
        assert g0.click_phase == pytest.approx(0.5 / f, abs=3e-12)

    def test_thinning_by_qe_curve(self, geom, th, ic_sub):
        f = 625e6
        qe = QeCurve(max_qe=1.0, center=0.85, steepness=25.0, i_ref=ic_sub)
        # photon at the gate boundary (current minimum): acceptance ~ 0
        cfg = gm_config(geom, th, ic_sub, qe_curve=qe, seed=3,
                        events=((1.0 / f, 50e-6),))
        trace = simulate(cfg)
        assert not any(g.latched for g in trace.gates)


class TestFreeRunning:
    def test_click_and_self_reset(self, geom, th, ic_sub):
        cfg = fm_config(geom, th, ic_sub, r_l=100.0, events=((1e-9, 50e-6),))
        trace = simulate(cfg)
        assert trace.clicks.bins.sum() == 1
        assert not trace.fm_permanently_latched
        assert trace.R_hs[-1] == 0.0
        # ~6 electrical time constants after the pulse: mostly recovered
        assert trace.i_L[-1] == pytest.approx(0.9 * ic_sub, rel=5e-3)

    def test_permanent_latch_below_minimum_reset_time(self, geom, th, ic_sub):
        # tau_e = 0.245 ns, well under the stable minimum: one photon
        # leaves the wire resistive for the rest of the run
        cfg = fm_config(geom, th, ic_sub, r_l=2000.0, events=((1e-9, 50e-6),))
        trace = simulate(cfg)
        assert trace.fm_permanently_latched
        assert trace.R_hs[-1] > cfg.latch_threshold

    def test_cw_train_generator_matches_modes(self, geom, th, ic_sub):
        qe = QeCurve(i_ref=ic_sub)
        cfg = fm_config(geom, th, ic_sub, r_l=100.0, duration=2e-6,
                        photon_rate=2e8, qe_curve=qe, seed=7, sample_every=0)
        train = fm_cw_click_train(cfg)
        train2 = fm_cw_click_train(cfg)
        assert np.array_equal(train.bins, train2.bins)
        assert train.bins.sum() > 10
        assert train.mode == "FM"


class TestFmEquivalence:
    def test_gm_core_reduces_to_fm_branch(self, geom, th, ic_sub):
        """C_p -> 0 with a DC drive reproduces the free-running pulse to 1%."""
        r_l = 100.0
        i_b = 0.9 * ic_sub
        schedule = ((0.0, 0.0), (2e-9, 800.0), (5e-9, 0.0))
        times = tuple(t for t, _ in schedule)
        values = tuple(r for _, r in schedule)
        fm = SimConfig(
            circuit=CircuitParams(R_B=50.0, R_sense=50.0),
            thermal=th, geom=geom, bias=fm_bias_for_current(
                CircuitParams(R_B=50.0, R_sense=50.0), i_b),
            mode="FM", duration=25e-9, sample_every=1,
            forced_r_hs=(times, values), dt_override=1e-12,
        )
        gm_params = CircuitParams(R_B=50.0, R_sense=50.0, R_p=r_l, C_p=0.3e-12)
        gm = SimConfig(
            circuit=gm_params, thermal=th, geom=geom,
            bias=BiasWaveform(kind="Sine", offset=i_b * r_l, amplitude=1e-15,
                              frequency=1.0 / 25e-9, target_i_min=0.0,
                              target_i_max=i_b),
            mode="GM", duration=25e-9, sample_every=10,
            forced_r_hs=(times, values),
        )
        tr_fm = simulate(fm)
        tr_gm = simulate(gm)
        i_fm = np.interp(tr_gm.t, tr_fm.t, tr_fm.i_L)
        # skip the first samples where interpolation pads
        sel = tr_gm.t > 0.1e-9
        err = np.abs(tr_gm.i_L[sel] - i_fm[sel]).max()
        assert err <= 0.01 * i_b

    def test_recovery_time_constant_matches(self, geom, th, ic_sub):
        """1/e recovery of i_L after R_hs is forced from R0 to 0 equals
        L_k / R_L within 1%."""
        r_l = 100.0
        params = CircuitParams(R_B=50.0, R_sense=50.0)
        i_b = 0.9 * ic_sub
        t_off = 15e-9
        cfg = SimConfig(
            circuit=params, thermal=th, geom=geom,
            bias=fm_bias_for_current(params, i_b), mode="FM",
            duration=45e-9, sample_every=1,
            forced_r_hs=((0.0, t_off), (800.0, 0.0)), dt_override=2e-12,
        )
        trace = simulate(cfg)
        sel = trace.t >= t_off
        t = trace.t[sel]
        i = trace.i_L[sel]
        i0, i_inf = i[0], i_b
        target = i_inf - (i_inf - i0) / math.e
        k = np.searchsorted(i, target)  # recovery is monotone increasing
        t_e = np.interp(target, i[k - 1:k + 1], t[k - 1:k + 1]) - t[0]
        assert t_e == pytest.approx(params.L_k / r_l, rel=0.01)


@pytest.fixture(scope="module")
def traces(geom, th, ic_sub):
    f = 625e6
    quiet = simulate(gm_config(geom, th, ic_sub, n_gates=8))
    lit = simulate(gm_config(geom, th, ic_sub, n_gates=8,
                             events=((crest_time(2, f), 50e-6),)))
    return quiet, lit


class TestDifferencingReadout:
    def test_calibrated_residual_small_vs_latched_peak(self, traces):
        quiet, lit = traces
        delay, atten = calibrate_differencing(quiet)
        vd_quiet = np.abs(differencing_signal(quiet, delay, atten))
        vd_lit = np.abs(differencing_signal(lit, delay, atten))
        assert vd_quiet.max() < 0.05 * vd_lit.max()

    def test_latched_gate_clicks(self, traces):
        quiet, lit = traces
        delay, atten = calibrate_differencing(quiet)
        residual = np.abs(differencing_signal(quiet, delay, atten)).max()
        peak = np.abs(differencing_signal(lit, delay, atten)).max()
        # discriminator above the recovery ringing, well below the pulse
        threshold = peak / 3.0
        assert threshold > 10.0 * residual
        # quiescent operation never crosses the discriminator
        assert differencing_readout(quiet, delay, atten, threshold).bins.sum() == 0
        train = differencing_readout(lit, delay, atten, threshold)
        assert train.bins[2] == 1          # the latched gate clicks
        assert not train.bins[:2].any()    # nothing before the photon
        # the collapse transient may spill into the next gate, nothing more
        assert not train.bins[4:].any()

    def test_degenerate_calibration_still_separates(self, geom, th, ic_sub):
        """atten = 0, delay = 0 reduces V_d to the bare sense voltage.
        Near the tank resonance the quiescent source-path swing is small,
        so the latch pulse still clears a (higher) threshold: degenerate
        but functional."""
        f = 300e6
        lit = simulate(gm_config(geom, th, ic_sub, f=f, n_gates=8,
                                 events=((crest_time(2, f), 50e-6),)))
        vd_lit = np.abs(differencing_signal(lit, 0.0, 0.0))
        T_per = 1.0 / f
        gate_idx = np.minimum((lit.t / T_per).astype(int), len(lit.gates) - 1)
        per_gate = np.array([vd_lit[gate_idx == k].max()
                             for k in range(len(lit.gates))])
        quiescent_level = per_gate[[0, 1, 6, 7]].max()
        assert per_gate[2] > 3.0 * quiescent_level
        threshold = math.sqrt(per_gate[2] * quiescent_level)
        train = differencing_readout(lit, 0.0, 0.0, threshold=threshold)
        assert train.bins[2] == 1
        assert not train.bins[[0, 1, 6, 7]].any()

    def test_threshold_must_be_positive(self, traces):
        _, lit = traces
        with pytest.raises(DomainError):
            differencing_readout(lit, 0.0, 0.0, threshold=0.0)


class TestGatePeaks:
    def test_adiabatic_limit(self, geom, th, ic_sub):
        """At 10 MHz the wire fully recovers between gates: all peaks sit at
        the quiescent crest."""
        cfg = gm_config(geom, th, ic_sub, f=10e6, n_gates=5, sample_every=0)
        peaks = gate_peaks_after_detection(cfg, 3)
        quiescent = 0.9 * ic_sub / (0.95 * th.I_c0)
        assert np.all(np.abs(peaks - quiescent) < 0.01 * quiescent)

    def test_critically_damped_gates_agree(self, geom, th, ic_sub):
        params = CircuitParams(
            L_k=490e-9, C_p=0.01e-12,
            R_p=critically_damped_rp(490e-9, 0.01e-12))
        cfg = gm_config(geom, th, ic_sub, f=600e6, params=params,
                        sample_every=0)
        peaks = gate_peaks_after_detection(cfg, 3)
        assert (peaks.max() - peaks.min()) < 0.01 * peaks.min()

    def test_requires_gm(self, geom, th, ic_sub):
        cfg = fm_config(geom, th, ic_sub)
        with pytest.raises(DomainError):
            gate_peaks_after_detection(cfg, 3)


class TestMaxTemperatureNextGate:
    def test_no_detection_returns_substrate(self, geom, th, ic_sub):
        cfg = gm_config(geom, th, ic_sub, sample_every=0)
        assert max_temperature_next_gate(cfg) == pytest.approx(th.T_sub)
        assert max_temperature_next_gate(cfg, normalized=True) == pytest.approx(1.0)

    def test_low_frequency_full_cooldown(self, geom, th, ic_sub):
        f = 10e6
        cfg = gm_config(geom, th, ic_sub, f=f, n_gates=3, sample_every=0,
                        events=((crest_time(0, f), 50e-6),))
        value = max_temperature_next_gate(cfg)
        assert value <= 1.01 * th.T_sub
        # isolated cooldown of the same seed over the same interval agrees
        prof = inject_photon(ThermalProfile.uniform(geom, th), geom, th, 50e-6)
        elapsed = (crest_time(1, f) - 0.1 / f) - crest_time(0, f)
        for _ in range(50):
            prof = thermal_step(prof, geom, th, 0.0, elapsed / 50)
        assert abs(value - prof.T.max()) <= 0.01 * th.T_sub

    def test_monotone_in_gate_period(self, geom, th, ic_sub):
        values = []
        for f in (1.2e9, 300e6, 50e6):
            cfg = gm_config(geom, th, ic_sub, f=f, n_gates=3, sample_every=0,
                            events=((crest_time(0, f), 50e-6),))
            values.append(max_temperature_next_gate(cfg))
        assert values[0] >= values[1] - 1e-9
        assert values[1] >= values[2] - 1e-9
        assert values[0] > values[2]  # strictly hotter at the short period


@pytest.fixture(scope="module")
def f_max_60nH(geom, th):
    return find_max_gating_frequency(60e-9, 0.01e-12, th, geom)


class TestMaxGatingFrequency:
    def test_below_limit_no_spurious_latches(self, geom, th, ic_sub, f_max_60nH):
        """100 post-detection gates stay free of resistive episodes."""
        f = 0.8 * f_max_60nH
        params = CircuitParams(L_k=60e-9, C_p=0.01e-12,
                               R_p=critically_damped_rp(60e-9, 0.01e-12))
        cfg = gm_config(geom, th, ic_sub, f=f, n_gates=102, params=params,
                        events=((crest_time(0, f), 50e-6),),
                        sample_every=0, fast_forward=True)
        trace = simulate(cfg)
        assert trace.gates[0].n_episodes >= 1
        assert all(g.n_episodes == 0 for g in trace.gates[1:101])
        assert all(not g.latched for g in trace.gates[1:101])

    def test_better_heat_sinking_does_not_lower_limit(self, geom, th, f_max_60nH):
        f2 = find_max_gating_frequency(
            60e-9, 0.01e-12, th.with_(alpha=2 * th.alpha), geom)
        assert f2 >= 0.99 * f_max_60nH


class TestReturnCurrent:
    def test_larger_load_persists_to_lower_current(self, geom, th):
        cfg = fm_config(geom, th, ic_of_T(th.T_sub, th), sample_every=0)
        moderate = find_return_current(cfg, 400.0)
        large = find_return_current(cfg, 12800.0)
        assert large < 0.8 * moderate

    def test_quasi_static_rate_convergence(self, geom, th):
        cfg = fm_config(geom, th, ic_of_T(th.T_sub, th), sample_every=0)
        a = find_return_current(cfg, 3200.0)
        b = find_return_current(cfg, 3200.0, rate_scale=2.0)
        assert abs(a - b) <= 0.005 * a


class TestSpatialConvergence:
    def test_latched_resistance_halving_cells(self, th):
        """Halving the cell size moves the latched steady-state R_hs < 2%."""
        r_l = 2000.0
        params = CircuitParams(R_B=r_l, R_sense=0.0)
        i_b = 0.95 * ic_of_T(th.T_sub, th)
        values = []
        for n_cells in (2000, 4000):  # 10 um wire: 5 nm and 2.5 nm cells
            geom = WireGeometry(length=10e-6, n_cells=n_cells)
            cfg = SimConfig(
                circuit=params, thermal=th, geom=geom,
                bias=fm_bias_for_current(params, i_b), mode="FM",
                duration=400e-9, sample_every=0, dt_override=4e-12,
                events=((0.0, 5e-6),),
            )
            # a long seed: drop a photon and let the latch grow to equilibrium
            trace = simulate(cfg)
            assert trace.fm_permanently_latched
            values.append(trace.R_hs[-1] if trace.R_hs.size else None)
            # sample_every=0 keeps no trace; use the final profile instead
            n_normal = int(trace.final_profile.normal.sum())
            values[-1] = th.R_sheet * geom.cell_len / geom.width * n_normal
        change = abs(values[1] - values[0])
        assert change < 0.02 * values[0], values


class TestResetInvariant:
    def test_latched_gates_reset_at_admissible_frequency(self, geom, th, ic_sub):
        f = 625e6
        cfg = gm_config(geom, th, ic_sub, f=f, n_gates=24, sample_every=0,
                        pulsed_mu=2.0, pulse_divisor=2, seed=5)
        trace = simulate(cfg)
        latched = [g for g in trace.gates if g.latched]
        assert len(latched) >= 5
        assert all(not g.re_latched for g in latched)


class TestConfigValidation:
    def test_mode_bias_mismatch(self, geom, th, ic_sub):
        with pytest.raises(ConfigError):
            SimConfig(mode="FM",
                      bias=drive_for_targets(CircuitParams(), 1e8, -2e-6, 15e-6),
                      geom=geom, thermal=th)

    def test_event_outside_wire(self, geom, th, ic_sub):
        with pytest.raises(ConfigError):
            gm_config(geom, th, ic_sub, events=((1e-9, 1.0),))

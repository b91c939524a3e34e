import math

import numpy as np
import pytest

from conftest import analytic_step_response, linear_system
from snspdsim.circuit import (
    BiasWaveform,
    CircuitParams,
    CircuitState,
    circuit_derivative,
    critically_damped_rp,
    damping_ratio,
    rk4_step,
    solve_drive,
    source_voltage,
    superconducting_transfer,
    time_constant,
)
from snspdsim.errors import DegenerateTopologyError, DomainError


def simulate_linear(params, bias, r_hs, dt, n_steps, state=None):
    s = state or CircuitState()
    vs, is_ = [s.v_c], [s.i_L]
    for _ in range(n_steps):
        s = rk4_step(s, params, bias, r_hs, dt)
        vs.append(s.v_c)
        is_.append(s.i_L)
    return np.array(vs), np.array(is_), s


class TestTimeConstant:
    def test_paper_minimum_reset_time(self):
        tau = time_constant(490e-9, 150.0)
        assert tau == pytest.approx(3.2667e-9, rel=1e-3)
        # consistent with the reported ~3.3 ns to within rounding
        assert abs(tau - 3.3e-9) < 0.05e-9

    def test_free_running_setting(self):
        assert time_constant(490e-9, 100.0) == pytest.approx(4.9e-9, rel=1e-12)

    def test_vanishing_inductance_limit(self):
        assert time_constant(1e-15, 100.0) == pytest.approx(1e-17)
        assert time_constant(1e-18, 100.0) < time_constant(1e-15, 100.0)

    @pytest.mark.parametrize("lk,rl", [(0.0, 100.0), (490e-9, 0.0), (-1e-9, 50.0)])
    def test_domain_errors(self, lk, rl):
        with pytest.raises(DomainError):
            time_constant(lk, rl)


class TestDerivative:
    def test_superconducting_dc_steady_state(self, paper_circuit):
        v0 = 10e-3
        state = CircuitState(v_c=0.0, i_L=v0 / paper_circuit.R_p)
        dv, di = circuit_derivative(state, paper_circuit, v0, 0.0)
        assert dv == pytest.approx(0.0, abs=1e-12)
        assert di == pytest.approx(0.0, abs=1e-12)

    def test_initial_condition_algebra(self, paper_circuit):
        v0 = 5e-3
        dv, di = circuit_derivative(CircuitState(), paper_circuit, v0, 0.0)
        assert dv == pytest.approx(v0 / (paper_circuit.R_p * paper_circuit.C_p))
        assert di == 0.0

    def test_degenerate_topology(self):
        params = CircuitParams(C_p=0.0)
        with pytest.raises(DegenerateTopologyError):
            circuit_derivative(CircuitState(), params, 1e-3, 0.0)

    def test_negative_hotspot_rejected(self, paper_circuit):
        with pytest.raises(DomainError):
            circuit_derivative(CircuitState(), paper_circuit, 1e-3, -1.0)

    def test_underdamped_ringing_peak_times(self, paper_circuit):
        """Step-response peaks land where the eigenvalue oracle puts them."""
        a, _ = linear_system(paper_circuit)
        lam = np.linalg.eigvals(a)
        assert np.all(np.abs(lam.imag) > 0), "paper circuit must be under-damped"
        w_d = abs(lam[0].imag)
        v0 = 10e-3
        bias = BiasWaveform(kind="DC", offset=v0)
        dt = 2e-12
        n = int(40e-9 / dt)
        _, i_l, _ = simulate_linear(paper_circuit, bias, 0.0, dt, n)
        t = np.arange(n + 1) * dt
        # local maxima of the current
        pk = np.nonzero((i_l[1:-1] > i_l[:-2]) & (i_l[1:-1] > i_l[2:]))[0] + 1
        assert len(pk) >= 2
        # oscillation peaks are spaced by the damped period
        spacing = np.diff(t[pk])
        assert np.allclose(spacing, 2 * math.pi / w_d, rtol=2e-2)


class TestDamping:
    def test_paper_configuration_underdamped(self, paper_circuit):
        zeta = damping_ratio(paper_circuit)
        assert zeta == pytest.approx(0.64, abs=0.01)
        # classification agrees with the eigenvalue discriminant
        a, _ = linear_system(paper_circuit)
        lam = np.linalg.eigvals(a)
        assert np.abs(lam.imag).max() > 0.0
        # and the formula matches |Re lambda| / |lambda|
        assert zeta == pytest.approx(abs(lam[0].real) / abs(lam[0]), rel=1e-9)

    def test_critical_by_construction(self):
        lk, cp = 6e-9, 0.01e-12
        params = CircuitParams(L_k=lk, C_p=cp, R_p=critically_damped_rp(lk, cp))
        assert damping_ratio(params) == pytest.approx(1.0, rel=1e-12)

    def test_infinite_source_resistance_limit(self):
        params = CircuitParams(R_p=math.inf)
        assert damping_ratio(params) == 0.0

    def test_domain_error(self):
        with pytest.raises(DomainError):
            damping_ratio(CircuitParams(L_k=1e-9, C_p=1e-12, R_p=0.0))


class TestCriticallyDamped:
    @pytest.mark.parametrize("lk,cp,expected", [
        (6e-9, 0.01e-12, 387.3),
        (6e-6, 0.01e-12, 12247.4),
    ])
    def test_values_and_repeated_eigenvalue(self, lk, cp, expected):
        rp = critically_damped_rp(lk, cp)
        assert rp == pytest.approx(expected, rel=1e-3)
        a, _ = linear_system(CircuitParams(L_k=lk, C_p=cp, R_p=rp))
        lam = np.linalg.eigvals(a)
        assert abs(lam[0] - lam[1]) < 1e-6 * abs(lam[0])

    def test_scaling_law(self):
        base = critically_damped_rp(6e-9, 0.01e-12)
        assert critically_damped_rp(24e-9, 0.01e-12) == pytest.approx(2 * base)

    def test_zero_overshoot_step_response(self):
        lk, cp = 490e-9, 0.01e-12
        params = CircuitParams(L_k=lk, C_p=cp, R_p=critically_damped_rp(lk, cp))
        bias = BiasWaveform(kind="DC", offset=10e-3)
        dt = params.R_p * cp / 200.0
        n = int(round(60 * math.sqrt(lk * cp) / dt))
        _, i_l, _ = simulate_linear(params, bias, 0.0, dt, n)
        i_final = bias.offset / params.R_p
        assert i_l.max() <= i_final * (1.0 + 1e-6)

    def test_underdamped_overshoot_positive(self, paper_circuit):
        bias = BiasWaveform(kind="DC", offset=10e-3)
        dt = 2e-12
        _, i_l, _ = simulate_linear(paper_circuit, bias, 0.0, dt, int(40e-9 / dt))
        assert i_l.max() > bias.offset / paper_circuit.R_p * 1.01


class TestSolveDrive:
    def test_worked_example(self, paper_circuit):
        g = 1.0 / 700.0
        drive = solve_drive(paper_circuit, g, g + 0j, -2e-6, 18e-6, 625e6)
        assert drive.offset == pytest.approx(5.6e-3, rel=1e-9)
        assert drive.amplitude == pytest.approx(7.0e-3, rel=1e-9)

    def test_steady_state_recovers_extremes(self, paper_circuit):
        f = 625e6
        g_dc = 1.0 / paper_circuit.R_p
        g_f = superconducting_transfer(paper_circuit, f)
        i_min, i_max = -2e-6, 15.12e-6
        drive = solve_drive(paper_circuit, g_dc, g_f, i_min, i_max, f)
        # integrate the superconducting circuit from the steady orbit
        i_dc = drive.offset * g_dc
        i_ac = drive.amplitude * abs(g_f)
        dt = (1 / f) / 2000.0
        state = CircuitState(v_c=0.0, i_L=i_dc - i_ac)
        _, i_l, _ = simulate_linear(paper_circuit, drive, 0.0, dt, 6000, state)
        span = i_max - i_min
        assert i_l.max() == pytest.approx(i_max, abs=1e-3 * span)
        assert i_l.min() == pytest.approx(i_min, abs=1e-3 * span)

    def test_degenerate_targets_rejected(self, paper_circuit):
        with pytest.raises(DomainError):
            solve_drive(paper_circuit, 1e-3, 1e-3, 5e-6, 5e-6, 1e8)

    def test_zero_transconductance_rejected(self, paper_circuit):
        with pytest.raises(DomainError):
            solve_drive(paper_circuit, 1e-3, 0.0, -2e-6, 18e-6, 1e8)
        with pytest.raises(DomainError):
            solve_drive(paper_circuit, 0.0, 1e-3, -2e-6, 18e-6, 1e8)


class TestIntegration:
    def test_rk4_fourth_order_convergence(self, paper_circuit):
        """Halving dt shrinks the error vs the matrix-exponential solution
        by ~16x (log-log slope >= 3.7)."""
        v0 = 10e-3
        bias = BiasWaveform(kind="DC", offset=v0)
        t_end = 4e-9
        exact = analytic_step_response(paper_circuit, v0, [t_end])[0]
        errs, dts = [], []
        for n in (64, 128, 256, 512):
            dt = t_end / n
            _, i_l, s = simulate_linear(paper_circuit, bias, 0.0, dt, n)
            errs.append(abs(s.i_L - exact[1]) + abs(s.v_c - exact[0]))
            dts.append(dt)
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope >= 3.7

    def test_lossless_energy_conserved(self):
        """R_p -> inf, R_hs = 0: total electrical energy drifts < 0.1%
        over 1e4 steps at dt = T/200."""
        params = CircuitParams(L_k=490e-9, C_p=0.57e-12, R_p=math.inf)
        period = 2 * math.pi * math.sqrt(params.L_k * params.C_p)
        dt = period / 200.0
        bias = BiasWaveform(kind="DC", offset=0.0)
        state = CircuitState(v_c=1e-3, i_L=0.0)

        def energy(s):
            return 0.5 * params.C_p * s.v_c ** 2 + 0.5 * params.L_k * s.i_L ** 2

        e0 = energy(state)
        drift = 0.0
        for _ in range(10_000):
            state = rk4_step(state, params, bias, 0.0, dt)
            drift = max(drift, abs(energy(state) - e0))
        assert drift <= 1e-3 * e0


class TestWaveform:
    def test_dc_requires_zero_amplitude(self):
        with pytest.raises(DomainError):
            BiasWaveform(kind="DC", offset=1e-3, amplitude=1e-3)

    def test_sine_requires_frequency_and_ordered_targets(self):
        with pytest.raises(DomainError):
            BiasWaveform(kind="Sine", amplitude=1e-3, frequency=0.0,
                         target_i_min=0.0, target_i_max=1e-6)
        with pytest.raises(DomainError):
            BiasWaveform(kind="Sine", amplitude=1e-3, frequency=1e8,
                         target_i_min=1e-6, target_i_max=1e-6)

    def test_source_voltage(self):
        b = BiasWaveform(kind="Sine", offset=1.0, amplitude=0.5, frequency=1e9,
                         phase=0.0, target_i_min=-1e-6, target_i_max=1e-6)
        assert source_voltage(b, 0.0) == pytest.approx(1.0)
        assert source_voltage(b, 0.25e-9) == pytest.approx(1.5)

    def test_params_validation(self):
        with pytest.raises(DomainError):
            CircuitParams(L_k=0.0)
        with pytest.raises(DomainError):
            CircuitParams(C_p=-1e-12)
        p = CircuitParams(R_B=650.0, R_sense=50.0)
        assert p.R_L == 700.0

"""Batch front-end: each headline experiment is a subcommand emitting CSV.

    snspdsim simulate       one run, trace + gate records + clicks
    snspdsim fig4c          post-detection gate peaks vs gating frequency
    snspdsim mcr-sweep      max gating frequency and next-gate temperature vs L_k
    snspdsim tau-e-min      return current vs load, knee and tau_e_min
    snspdsim stats          click-train generation and statistics report
    snspdsim calibrate      bias-chain transconductance table + drive solution
    snspdsim validate-model input-reflection comparison report

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import clickstats, engine, rfcal
from .circuit import CircuitParams, critically_damped_rp
from .config import config_help, load_config
from .errors import ConfigError, DomainError, NumericalInstabilityError, TouchstoneError
from .thermal import ThermalParams, WireGeometry, ic_of_T

__all__ = ["main"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.8e}"


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class _Emitter:
    def __init__(self, out_dir: str, subcommand: str, config_path, seed):
        self.out_dir = out_dir
        self.manifest = {
            "subcommand": subcommand,
            "config": config_path,
            "seed": seed,
            "files": {},
        }
        os.makedirs(out_dir, exist_ok=True)

    def csv(self, name: str, header, rows):
        path = os.path.join(self.out_dir, name)
        _write_csv(path, header, rows)
        self.manifest["files"][name] = _sha256(path)
        return path

    def text(self, name: str, content: str):
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as fh:
            fh.write(content)
        self.manifest["files"][name] = _sha256(path)
        return path

    def finish(self):
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _circuit(cfg) -> CircuitParams:
    return CircuitParams(
        L_k=cfg["L_k"], C_p=cfg["C_p"], R_p=cfg["R_p"], R_B=cfg["R_B"],
        R_sense=cfg["R_sense"], R_term=cfg["R_term"], R_L=cfg["R_L"],
        pad_cap=cfg["pad_cap"],
    )


def _thermal(cfg) -> ThermalParams:
    return ThermalParams(
        T_sub=cfg["T_sub"], T_c=cfg["T_c"], I_c0=cfg["I_c0"],
        R_sheet=cfg["R_sheet"], kappa0=cfg["kappa0"], c0=cfg["c0"],
        alpha=cfg["alpha"], n_bnd=cfg["n_bnd"],
        hotspot_len=cfg["hotspot_len"], hotspot_T=cfg["hotspot_T"],
    )


def _geom(cfg) -> WireGeometry:
    return WireGeometry(
        length=cfg["wire_length"], width=cfg["wire_width"],
        thickness=cfg["wire_thickness"], n_cells=cfg["n_cells"],
    )


def _qe_curve(cfg, thermal: ThermalParams) -> clickstats.QeCurve:
    return clickstats.QeCurve(
        max_qe=cfg["qe_max"], center=cfg["qe_center"],
        steepness=cfg["qe_steepness"], i_ref=ic_of_T(thermal.T_sub, thermal),
    )


def _sim_config(cfg, seed: int) -> engine.SimConfig:
    params = _circuit(cfg)
    th = _thermal(cfg)
    geom = _geom(cfg)
    ic_sub = ic_of_T(th.T_sub, th)
    if cfg["mode"] == "GM":
        i_max = cfg["i_max"] if cfg["i_max"] is not None else 0.9 * ic_sub
        bias = engine.drive_for_targets(params, cfg["frequency"], cfg["i_min"], i_max)
    else:
        i_bias = cfg["i_bias"] if cfg["i_bias"] is not None else 0.9 * ic_sub
        bias = engine.fm_bias_for_current(params, i_bias)
    return engine.SimConfig(
        circuit=params, thermal=th, geom=geom, bias=bias, mode=cfg["mode"],
        duration=cfg["duration"], events=cfg["events"],
        photon_rate=cfg["photon_rate"], dark_rate=cfg["dark_rate"],
        pulsed_mu=cfg["pulsed_mu"], pulse_divisor=cfg["pulse_divisor"],
        qe_curve=_qe_curve(cfg, th) if cfg["use_qe_curve"] else None,
        seed=seed, sample_every=cfg["sample_every"],
        fast_forward=cfg["fast_forward"],
        latch_threshold=cfg["latch_threshold"],
        latch_sustain_frac=cfg["latch_sustain_frac"],
        fm_bin_width=cfg["fm_bin_width"], dt_override=cfg["dt"],
    )


def _cmd_simulate(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    trace = engine.simulate(_sim_config(cfg, seed))
    emit.csv("trace.csv", ("t_s", "i_L_A", "v_c_V", "R_hs_ohm", "T_max_K"),
             zip(trace.t, trace.i_L, trace.v_c, trace.R_hs, trace.T_max))
    emit.csv(
        "gates.csv",
        ("index", "t_start_s", "peak_current_A", "latched", "re_latched",
         "time_above_latch_s", "max_T_K", "max_T_center_K", "min_R_hs_ohm",
         "n_episodes", "n_seeds", "click_phase_s"),
        ((g.index, g.t_start, g.peak_current, int(g.latched), int(g.re_latched),
          g.time_above_latch, g.max_T, g.max_T_center, g.min_R_hs,
          g.n_episodes, g.n_seeds,
          g.click_phase if not math.isnan(g.click_phase) else "")
         for g in trace.gates),
    )
    emit.csv("clicks.csv", ("index", "click"),
             ((i, int(b)) for i, b in enumerate(trace.clicks.bins)))


def _cmd_fig4c(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    params = _circuit(cfg)
    if cfg["critically_damped"]:
        params = params.with_(R_p=critically_damped_rp(params.L_k, params.C_p))
    th = _thermal(cfg)
    freqs = np.linspace(cfg["freq_min"], cfg["freq_max"], cfg["freq_points"])
    table = engine.fig4c_sweep(
        params, th, _geom(cfg), freqs, n_gates=cfg["n_gates"],
        i_min=cfg["i_min"],
        i_max=cfg["i_max"] if cfg["i_max"] is not None else None,
        workers=workers,
    )
    n_gates = cfg["n_gates"]
    header = ["freq_MHz"] + [f"gate{k}_peak" for k in range(1, n_gates + 1)]
    emit.csv("fig4c.csv", header,
             ([f / 1e6, *peaks] for f, peaks in table))


def _cmd_mcr_sweep(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    th = _thermal(cfg)
    geom = _geom(cfg)
    table = engine.mcr_sweep(
        cfg["lk_values"], cfg["C_p"], th, geom, workers=workers,
        f_lo=cfg["mcr_f_lo"], f_cap=cfg["mcr_f_cap"],
        resolution=cfg["mcr_resolution"],
    )
    emit.csv("mcr.csv", ("L_k_nH", "R_p_ohm", "f_max_Hz"),
             ((L * 1e9, critically_damped_rp(L, cfg["C_p"]), f) for L, f in table))
    temp_rows = []
    for L, f_max in table:
        params = CircuitParams(
            L_k=L, C_p=cfg["C_p"], R_p=critically_damped_rp(L, cfg["C_p"])
        )
        ic_sub = ic_of_T(th.T_sub, th)
        for frac in (0.125, 0.25, 0.5, 0.75, 1.0):
            f = f_max * frac
            bias = engine.drive_for_targets(params, f, cfg["i_min"], 0.9 * ic_sub)
            sim = engine.SimConfig(
                circuit=params, thermal=th, geom=geom, bias=bias, mode="GM",
                duration=3.0 / f,
                events=((engine.crest_time(0, f), geom.length / 2.0),),
                sample_every=0,
            )
            t_norm = engine.max_temperature_next_gate(sim, normalized=True)
            temp_rows.append((L * 1e9, f, t_norm))
    emit.csv("mcr_temps.csv", ("L_k_nH", "freq_Hz", "T_next_over_T_sub"), temp_rows)


def _cmd_tau_e_min(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    sim = _sim_config({**cfg, "mode": "FM"}, seed).with_(sample_every=0)
    kwargs = dict(rate_scale=cfg["rate_scale"], step_frac=cfg["sweep_step_frac"])
    if cfg["start_bias"] is not None:
        kwargs["start_bias"] = cfg["start_bias"]
    result = engine.find_tau_e_min(sim, cfg["rl_values"], workers=workers, **kwargs)
    emit.csv("return_current.csv", ("R_L_ohm", "return_current_A"), result.table)
    emit.csv("tau_e_min.csv",
             ("R_star_ohm", "tau_e_min_s", "plateau_A"),
             [(result.r_star, result.tau_e_min, result.plateau)])


def _cmd_stats(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    gate_period = 1.0 / cfg["frequency"]
    n = cfg["stats_gates"]
    cw = clickstats.SourceModel(
        kind="CW", mean_photons_per_gate=cfg["mu_per_gate"], qe=cfg["stats_qe"],
        dark_prob_per_gate=cfg["dark_prob"], afterpulse_prob=cfg["afterpulse_prob"],
        gate_period=gate_period,
    )
    train_cw = clickstats.generate_clicks(cw, n, seed)
    gamma_cw = clickstats.autocorrelation(train_cw, cfg["max_lag"])
    pulsed = clickstats.SourceModel(
        kind="Pulsed", mean_photons_per_gate=cfg["mu_per_gate"] * cfg["divisor"],
        pulse_divisor=cfg["divisor"], qe=cfg["stats_qe"],
        dark_prob_per_gate=cfg["dark_prob"], afterpulse_prob=cfg["afterpulse_prob"],
        gate_period=gate_period,
    )
    train_p = clickstats.generate_clicks(pulsed, n, seed + 1)
    gamma_p = clickstats.autocorrelation(train_p, cfg["max_lag"])
    emit.csv("gamma.csv", ("lag", "gamma_cw", "gamma_pulsed"),
             ((i + 1, gamma_cw[i], gamma_p[i]) for i in range(cfg["max_lag"])))

    est = clickstats.estimate_qe_dcr(
        train_cw, cfg["mu_per_gate"], cfg["frequency"],
        dark_prob_per_gate=cfg["dark_prob"],
    )
    dark_model = clickstats.SourceModel(
        kind="CW", mean_photons_per_gate=0.0, qe=0.0,
        dark_prob_per_gate=cfg["dark_prob"], gate_period=gate_period,
    )
    train_dark = clickstats.generate_clicks(dark_model, n, seed + 2)
    est_dark = clickstats.estimate_qe_dcr(train_dark, None, cfg["frequency"])
    ap = clickstats.afterpulse_probability(
        gamma_p, cfg["divisor"], train_p.click_probability
    )
    mus = [cfg["mu_per_gate"] * s for s in (0.25, 0.5, 1.0, 2.0, 4.0)]
    rates = []
    for i, mu in enumerate(mus):
        m = clickstats.SourceModel(
            kind="CW", mean_photons_per_gate=mu, qe=cfg["stats_qe"],
            gate_period=gate_period,
        )
        tr = clickstats.generate_clicks(m, n // 4, seed + 10 + i)
        rates.append((mu, max(tr.click_probability, 1e-12) * cfg["frequency"]))
    lin = clickstats.linearity_check(rates)

    emit.csv("stats_report.csv", ("quantity", "value", "lo", "hi"), [
        ("qe", est.qe, est.qe_lo, est.qe_hi),
        ("dcr_hz", est_dark.dcr, est_dark.dcr_lo, est_dark.dcr_hi),
        ("afterpulse_prob", ap, "", ""),
        ("linearity_slope", lin.slope, lin.slope - 2 * lin.stderr,
         lin.slope + 2 * lin.stderr),
    ])

    if cfg["phase_gates"] > 0:
        th = _thermal(cfg)
        sim = _sim_config(cfg, seed + 3).with_(
            duration=cfg["phase_gates"] * gate_period,
            photon_rate=0.3 * cfg["frequency"],
            qe_curve=_qe_curve(cfg, th),
            events=(), dark_rate=0.0, pulsed_mu=0.0,
            sample_every=0, fast_forward=True,
        )
        trace = engine.simulate(sim)
        if trace.clicks.phase_times is not None and trace.clicks.phase_times.size:
            hist = clickstats.gate_phase_histogram(trace.clicks, cfg["phase_bins"])
            centers = (np.arange(cfg["phase_bins"]) + 0.5) * gate_period / cfg["phase_bins"]
            emit.csv("phase_hist.csv", ("phase_s", "weight"), zip(centers, hist))


def _load_chain(cfg) -> rfcal.TwoPortNetwork:
    nets = []
    for path in cfg["chain_files"]:
        with open(path) as fh:
            nets.append(rfcal.parse_touchstone(fh.read()))
    if not nets:
        freqs = np.linspace(cfg["cal_f_min"], cfg["cal_f_max"], cfg["cal_points"])
        return rfcal.thru(freqs)
    chain = nets[0]
    for net in nets[1:]:
        chain = rfcal.cascade(chain, net)
    return chain


def _cmd_calibrate(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    params = _circuit(cfg)
    th = _thermal(cfg)
    chain = _load_chain(cfg)
    f_lo = max(cfg["cal_f_min"], chain.freqs[0])
    f_hi = min(cfg["cal_f_max"], chain.freqs[-1])
    freqs = np.linspace(f_lo, f_hi, cfg["cal_points"])
    table = rfcal.transconductance_table(chain, params, freqs)
    emit.csv("transconductance.csv", ("freq_Hz", "g_re_S", "g_im_S", "g_abs_S"),
             ((f, g.real, g.imag, abs(g)) for f, g in table))
    ic_sub = ic_of_T(th.T_sub, th)
    i_max = cfg["i_max"] if cfg["i_max"] is not None else 0.9 * ic_sub
    g_dc = rfcal.transconductance(chain, params, f_lo)
    g_f = rfcal.transconductance(chain, params, cfg["frequency"])
    from .circuit import solve_drive

    drive = solve_drive(params, abs(g_dc), g_f, cfg["i_min"], i_max, cfg["frequency"])
    emit.csv(
        "drive.csv",
        ("frequency_Hz", "offset_V", "amplitude_V", "phase_rad",
         "target_i_min_A", "target_i_max_A"),
        [(drive.frequency, drive.offset, drive.amplitude, drive.phase,
          drive.target_i_min, drive.target_i_max)],
    )


def _cmd_validate_model(cfg, emit: _Emitter, seed: int, workers: int) -> None:
    params = _circuit(cfg)
    netlist = rfcal.DeviceNetlist.from_circuit(
        params, R_b=cfg["rb_validation"], include_pad=cfg["include_pad"]
    )
    if cfg["reference_s2p"]:
        with open(cfg["reference_s2p"][0]) as fh:
            ref = rfcal.parse_touchstone(fh.read())
    else:
        freqs = np.linspace(1e7, cfg["f_cutoff"], 201)
        s11 = rfcal.input_reflection(netlist, freqs)
        p = np.zeros((freqs.size, 2, 2), dtype=complex)
        p[:, 0, 0] = s11
        ref = rfcal.TwoPortNetwork(freqs=freqs, params=p, form="S")
        emit.text("reference_synthetic.s2p", rfcal.serialize_touchstone(ref))
    rows, rms = rfcal.reflection_report(netlist, ref, cfg["f_cutoff"])
    emit.csv("reflection.csv",
             ("freq_Hz", "abs_s11_model", "abs_s11_ref", "deviation"), rows)
    emit.csv("reflection_rms.csv", ("f_cutoff_Hz", "rms_deviation"),
             [(cfg["f_cutoff"], rms)])


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fig4c": _cmd_fig4c,
    "mcr-sweep": _cmd_mcr_sweep,
    "tau-e-min": _cmd_tau_e_min,
    "stats": _cmd_stats,
    "calibrate": _cmd_calibrate,
    "validate-model": _cmd_validate_model,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snspdsim",
        description=__doc__,
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes for sweeps")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg["seed"]
        emit = _Emitter(args.out_dir, args.subcommand, args.config, seed)
        _COMMANDS[args.subcommand](cfg, emit, seed, max(1, args.workers))
        manifest = emit.finish()
        if args.verbose:
            print(f"wrote {len(emit.manifest['files'])} files; manifest {manifest}",
                  file=sys.stderr)
        return 0
    except (ConfigError, TouchstoneError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalInstabilityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

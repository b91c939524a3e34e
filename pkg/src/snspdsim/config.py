"""Flat key = value configuration files with unit-suffixed numbers.

Every accepted key lives in the registry below together with its type and
help text; the CLI generates its --help from the same table, and unknown
keys are rejected by name.  Example::

    # gated-mode run
    mode = GM
    L_k = 490nH
    C_p = 0.57pF
    R_p = 725
    frequency = 625MHz
    i_min = -2uA
    duration = 16ns
    events = 0.8ns@50um; 4ns@30um
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .units import parse_typed

__all__ = ["ConfigKey", "CONFIG_KEYS", "load_config", "parse_value", "config_help"]


@dataclass(frozen=True)
class ConfigKey:
    name: str
    kind: str       # quantity:<dim> | float | int | str | bool | choice:a|b ...
    default: object
    help: str


def _q(dim):
    return f"quantity:{dim}"


CONFIG_KEYS = [
    # circuit
    ConfigKey("L_k", _q("H"), 490e-9, "nanowire kinetic inductance"),
    ConfigKey("C_p", _q("F"), 0.57e-12, "shunt pad capacitance of the RLC core"),
    ConfigKey("R_p", _q("Ohm"), 725.0, "source-side resistance seen by the core"),
    ConfigKey("R_B", _q("Ohm"), 650.0, "bias resistor"),
    ConfigKey("R_sense", _q("Ohm"), 50.0, "current-sense resistor"),
    ConfigKey("R_term", _q("Ohm"), 50.0, "coax termination resistor"),
    ConfigKey("R_L", _q("Ohm"), None, "free-running load (default R_B + R_sense)"),
    ConfigKey("pad_cap", _q("F"), 0.14e-12, "board pad capacitance (netlist model)"),
    # thermal / material
    ConfigKey("T_sub", _q("K"), 4.2, "substrate temperature"),
    ConfigKey("T_c", _q("K"), 10.5, "critical temperature"),
    ConfigKey("I_c0", _q("A"), 20e-6, "critical-current scale of the quadratic law"),
    ConfigKey("R_sheet", _q("Ohm"), 400.0, "normal-state sheet resistance per square"),
    ConfigKey("kappa0", "float", 0.1, "thermal conductivity scale, W/(m K)"),
    ConfigKey("c0", "float", 9.8e3, "heat capacity scale, J/(m^3 K)"),
    ConfigKey("alpha", "float", 1.0e3, "substrate coupling scale, W/(m^2 K^n)"),
    ConfigKey("n_bnd", "float", 3.0, "substrate coupling exponent"),
    ConfigKey("hotspot_len", _q("m"), 30e-9, "photon seed length"),
    ConfigKey("hotspot_T", _q("K"), 21.0, "photon seed temperature"),
    # geometry
    ConfigKey("wire_length", _q("m"), 500e-6, "nanowire length"),
    ConfigKey("wire_width", _q("m"), 120e-9, "nanowire width"),
    ConfigKey("wire_thickness", _q("m"), 4e-9, "film thickness"),
    ConfigKey("n_cells", "int", 50_000, "spatial cells along the wire"),
    # run
    ConfigKey("mode", "choice:GM|FM", "GM", "operating mode"),
    ConfigKey("frequency", _q("Hz"), 625e6, "gating frequency (GM)"),
    ConfigKey("i_min", _q("A"), -2e-6, "target current minimum (GM)"),
    ConfigKey("i_max", _q("A"), None,
              "target current maximum (GM); default 0.9 * Ic(T_sub)"),
    ConfigKey("i_bias", _q("A"), None,
              "free-running bias current; default 0.9 * Ic(T_sub)"),
    ConfigKey("duration", _q("s"), 16e-9, "simulated time"),
    ConfigKey("seed", "int", 0, "random seed"),
    ConfigKey("sample_every", "int", 1, "trace stride in steps (0 disables)"),
    ConfigKey("dt", _q("s"), None, "time-step override"),
    ConfigKey("latch_threshold", _q("Ohm"), 500.0, "latch resistance threshold"),
    ConfigKey("latch_sustain_frac", "float", 0.10,
              "fraction of a gate period the threshold must hold (GM latch)"),
    ConfigKey("fm_bin_width", _q("s"), 1e-9, "free-running click bin width"),
    ConfigKey("fast_forward", "bool", False, "skip quiescent stretches analytically"),
    # illumination
    ConfigKey("events", "events", (), "seed list as time@position; separated by ';'"),
    ConfigKey("photon_rate", _q("Hz"), 0.0, "CW photon arrival rate"),
    ConfigKey("dark_rate", _q("Hz"), 0.0, "dark-seed rate"),
    ConfigKey("pulsed_mu", "float", 0.0, "mean photons per pulse at gate maxima"),
    ConfigKey("pulse_divisor", "int", 1, "pulse every k-th gate"),
    ConfigKey("qe_max", "float", 0.3, "detection-probability plateau"),
    ConfigKey("qe_center", "float", 0.85, "logistic centre in i/Ic(T_sub)"),
    ConfigKey("qe_steepness", "float", 25.0, "logistic steepness"),
    ConfigKey("use_qe_curve", "bool", False, "thin photon arrivals by the curve"),
    # fig4c sweep
    ConfigKey("freq_min", _q("Hz"), 50e6, "sweep start"),
    ConfigKey("freq_max", _q("Hz"), 700e6, "sweep end"),
    ConfigKey("freq_points", "int", 27, "sweep points"),
    ConfigKey("n_gates", "int", 3, "post-detection gates to record"),
    ConfigKey("critically_damped", "bool", False,
              "replace R_p by the critically damped value"),
    # mcr sweep
    ConfigKey("lk_values", "list_quantity:H", (6e-9, 60e-9, 600e-9, 6000e-9),
              "kinetic inductances to sweep"),
    ConfigKey("mcr_f_lo", _q("Hz"), 0.2e9, "search start frequency"),
    ConfigKey("mcr_f_cap", _q("Hz"), 50e9, "search ceiling"),
    ConfigKey("mcr_resolution", "float", 0.01, "relative search resolution"),
    # return current / tau_e_min
    ConfigKey("rl_values", "list_quantity:Ohm",
              (50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 12800.0),
              "loads for the return-current sweep"),
    ConfigKey("start_bias", _q("A"), None,
              "sweep start; default 1.05 * Ic(T_sub)"),
    ConfigKey("rate_scale", "float", 1.0, "slow the quasi-static ramp by this factor"),
    ConfigKey("sweep_step_frac", "float", 0.002,
              "bias decrement per settling time, as a fraction of I_c0"),
    # stats
    ConfigKey("stats_gates", "int", 1_000_000, "generated gates"),
    ConfigKey("mu_per_gate", "float", 0.1, "mean photons per gate"),
    ConfigKey("stats_qe", "float", 0.05, "detection probability for the generator"),
    ConfigKey("dark_prob", "float", 1e-4, "dark probability per gate"),
    ConfigKey("afterpulse_prob", "float", 0.0, "afterpulse probability"),
    ConfigKey("divisor", "int", 20, "pulsed-laser gate divisor"),
    ConfigKey("max_lag", "int", 50, "autocorrelation lags"),
    ConfigKey("phase_gates", "int", 2000, "engine gates for the phase histogram"),
    ConfigKey("phase_bins", "int", 30, "phase histogram bins"),
    # rf calibration / validation
    ConfigKey("chain_files", "paths", (), "Touchstone files to cascade, ';' separated"),
    ConfigKey("cal_f_min", _q("Hz"), 0.0, "transconductance table start"),
    ConfigKey("cal_f_max", _q("Hz"), 5e9, "transconductance table end"),
    ConfigKey("cal_points", "int", 51, "transconductance table points"),
    ConfigKey("reference_s2p", "paths", (), "measured/synthetic reflection file"),
    ConfigKey("f_cutoff", _q("Hz"), 2e9, "reflection comparison cutoff"),
    ConfigKey("rb_validation", _q("Ohm"), 50.0, "bias resistor in the VNA setup"),
    ConfigKey("include_pad", "bool", True, "prepend the board pad capacitance"),
]

_REGISTRY = {k.name: k for k in CONFIG_KEYS}


def parse_value(key: ConfigKey, raw: str):
    raw = raw.strip()
    kind = key.kind
    if kind.startswith("quantity:"):
        return parse_typed(raw, kind.split(":", 1)[1])
    if kind == "float":
        return parse_typed(raw, None)
    if kind == "int":
        v = parse_typed(raw, None)
        if v != int(v):
            raise ConfigError(f"{key.name} must be an integer, got {raw!r}")
        return int(v)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key.name} must be a boolean, got {raw!r}")
    if kind == "str":
        return raw
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split("|")
        if raw not in options:
            raise ConfigError(
                f"{key.name} must be one of {options}, got {raw!r}"
            )
        return raw
    if kind.startswith("list_quantity:"):
        dim = kind.split(":", 1)[1]
        return tuple(
            parse_typed(tok, dim) for tok in raw.replace(";", ",").split(",") if tok.strip()
        )
    if kind == "events":
        events = []
        for tok in raw.split(";"):
            tok = tok.strip()
            if not tok:
                continue
            if "@" not in tok:
                raise ConfigError(
                    f"event {tok!r} must look like time@position (e.g. 0.8ns@50um)"
                )
            t_s, x_s = tok.split("@", 1)
            events.append((parse_typed(t_s, "s"), parse_typed(x_s, "m")))
        return tuple(events)
    if kind == "paths":
        return tuple(tok.strip() for tok in raw.split(";") if tok.strip())
    raise ConfigError(f"unhandled config kind {kind!r}")  # pragma: no cover


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Read a config file into a fully-defaulted dict.

    Unknown keys raise ConfigError listing every offending name.
    """
    values = {k.name: k.default for k in CONFIG_KEYS}
    raw: dict[str, str] = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, val = line.partition("=")
                raw[key.strip()] = val.strip()
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    unknown = sorted(set(raw) - set(_REGISTRY))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for name, text in raw.items():
        values[name] = parse_value(_REGISTRY[name], text)
    return values


def config_help() -> str:
    """Key table used verbatim in the CLI --help epilog."""
    lines = ["configuration keys:"]
    for k in CONFIG_KEYS:
        kind = k.kind.replace("quantity:", "").replace("list_quantity:", "list of ")
        lines.append(f"  {k.name:<20} [{kind}] {k.help} (default {k.default!r})")
    return "\n".join(lines)

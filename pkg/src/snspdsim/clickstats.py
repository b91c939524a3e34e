"""Click-train generation and counting statistics.

A click train is a binary sequence, one entry per gate (gated mode) or per
time bin (free-running mode).  The analysis side provides the normalized
autocorrelation (1 for independent events), the intra-gate phase histogram,
quantum-efficiency / dark-count estimation with Wilson intervals, afterpulse
extraction from a pulsed-illumination autocorrelation, and a log-log
linearity check.

Normalization convention: Gamma(tau) = mean(x_t * x_{t+tau}) / mean(x)^2,
so statistically independent clicks give Gamma = 1 at every lag.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "ClickTrain",
    "QeCurve",
    "SourceModel",
    "QeDcrEstimate",
    "LinearityResult",
    "generate_clicks",
    "autocorrelation",
    "gate_phase_histogram",
    "estimate_qe_dcr",
    "afterpulse_probability",
    "linearity_check",
    "wilson_interval",
    "write_click_train",
    "read_click_train",
]


@dataclass
class ClickTrain:
    """Binary event sequence.

    bins holds 0/1 per gate (GM) or per time bin (FM); bin_width is the
    gate period in GM and the bin width in FM.  phase_times optionally
    holds the intra-gate detection time of each click gate (GM only).
    """

    bins: np.ndarray
    bin_width: float
    mode: str = "GM"  # "GM" | "FM"
    phase_times: np.ndarray | None = None

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.uint8)
        if self.mode not in ("GM", "FM"):
            raise DomainError(f"mode must be 'GM' or 'FM', got {self.mode!r}")
        if not self.bin_width > 0.0:
            raise DomainError("bin_width must be > 0")
        if self.bins.size and self.bins.max() > 1:
            raise DomainError("bins must contain only 0 and 1")
        if self.phase_times is not None:
            self.phase_times = np.asarray(self.phase_times, dtype=np.float64)

    @property
    def gate_period(self) -> float:
        """Alias of bin_width for gated-mode trains."""
        return self.bin_width

    @property
    def n_clicks(self) -> int:
        return int(self.bins.sum())

    @property
    def click_probability(self) -> float:
        return float(self.bins.mean()) if self.bins.size else 0.0


@dataclass(frozen=True)
class QeCurve:
    """Phenomenological detection probability vs. nanowire current.

    Logistic in the normalized current |i| / i_ref:
        qe(i) = max_qe / (1 + exp(-steepness * (|i|/i_ref - center)))
    i_ref is normally the operating critical current.
    """

    max_qe: float = 0.3
    center: float = 0.85
    steepness: float = 25.0
    i_ref: float = 16.8e-6

    def __post_init__(self):
        if not (0.0 < self.max_qe <= 1.0):
            raise DomainError("max_qe must be in (0, 1]")
        if not self.i_ref > 0.0:
            raise DomainError("i_ref must be > 0")

    def __call__(self, current):
        x = np.abs(current) / self.i_ref
        return self.max_qe / (1.0 + np.exp(-self.steepness * (x - self.center)))


@dataclass(frozen=True)
class SourceModel:
    """Illumination plus detector-response model for the click generator.

    mean_photons_per_gate applies to every gate under CW illumination and
    to every pulse_divisor-th gate under pulsed illumination.  qe is either
    a plain detection probability or a QeCurve evaluated at bias_current.
    An afterpulse fires only in the gate immediately after a click.
    """

    kind: str = "CW"  # "CW" | "Pulsed"
    mean_photons_per_gate: float = 0.1
    pulse_divisor: int = 1
    qe: float | QeCurve = 1.0
    bias_current: float = 0.0
    dark_prob_per_gate: float = 0.0
    afterpulse_prob: float = 0.0
    gate_period: float = 1.6e-9

    def __post_init__(self):
        if self.kind not in ("CW", "Pulsed"):
            raise DomainError(f"kind must be 'CW' or 'Pulsed', got {self.kind!r}")
        if self.pulse_divisor < 1:
            raise DomainError("pulse_divisor must be >= 1")
        if self.mean_photons_per_gate < 0.0:
            raise DomainError("mean_photons_per_gate must be >= 0")
        for name in ("dark_prob_per_gate", "afterpulse_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"{name} must be in [0, 1]")
        if not self.gate_period > 0.0:
            raise DomainError("gate_period must be > 0")

    def detection_probability(self) -> float:
        """Per-illuminated-gate click probability from photons alone."""
        qe = self.qe(self.bias_current) if callable(self.qe) else float(self.qe)
        if not (0.0 <= qe <= 1.0):
            raise DomainError(f"qe evaluates to {qe}, outside [0, 1]")
        return 1.0 - math.exp(-self.mean_photons_per_gate * qe)


def generate_clicks(model: SourceModel, n_gates: int, seed: int) -> ClickTrain:
    """Monte-Carlo click train for the given source model.

    Per gate: a photon click with probability 1 - exp(-mu * qe) (only in
    pulsed gates for a pulsed source), a dark click, and an afterpulse
    trial when the previous gate clicked.  Deterministic per seed.
    """
    if n_gates < 1:
        raise DomainError("n_gates must be >= 1")
    rng = np.random.default_rng(seed)
    p_photon = model.detection_probability()
    photon = rng.random(n_gates) < p_photon
    if model.kind == "Pulsed":
        mask = np.zeros(n_gates, dtype=bool)
        mask[:: model.pulse_divisor] = True
        photon &= mask
    dark = rng.random(n_gates) < model.dark_prob_per_gate
    base = photon | dark
    ap_trial = rng.random(n_gates) < model.afterpulse_prob

    clicks = base.copy()
    # afterpulses chain one gate at a time; iterate to the fixed point
    for _ in range(n_gates):
        prev = np.empty_like(clicks)
        prev[0] = False
        prev[1:] = clicks[:-1]
        new = base | (prev & ap_trial)
        if np.array_equal(new, clicks):
            break
        clicks = new
    return ClickTrain(bins=clicks.astype(np.uint8), bin_width=model.gate_period,
                      mode="GM")


def autocorrelation(train: ClickTrain, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation at lags 1..max_lag.

    Gamma(tau) = mean(x_t * x_{t+tau}) / mean(x)^2; equals 1 at every lag
    for independent events.  Raises on an all-zero train (normalization
    undefined).
    """
    x = train.bins.astype(np.float64)
    n = x.size
    if max_lag < 1:
        raise DomainError("max_lag must be >= 1")
    if n <= max_lag:
        raise DomainError(f"train length {n} must exceed max_lag {max_lag}")
    mean = x.mean()
    if mean == 0.0:
        raise DomainError("all-zero train: autocorrelation normalization undefined")
    out = np.empty(max_lag)
    norm = mean * mean
    for lag in range(1, max_lag + 1):
        out[lag - 1] = float(x[:-lag] @ x[lag:]) / (n - lag) / norm
    return out


def gate_phase_histogram(train: ClickTrain, n_bins: int) -> np.ndarray:
    """Histogram of intra-gate detection times, normalized to peak 1."""
    if train.phase_times is None or train.phase_times.size == 0:
        raise DomainError("train has no phase_times; record them when simulating")
    if n_bins < 1:
        raise DomainError("n_bins must be >= 1")
    phases = np.mod(train.phase_times, train.gate_period)
    hist, _ = np.histogram(phases, bins=n_bins, range=(0.0, train.gate_period))
    peak = hist.max()
    if peak == 0:
        raise DomainError("no detections fall inside the gate period")
    return hist / peak


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise DomainError("n must be > 0")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class QeDcrEstimate:
    qe: float
    qe_lo: float
    qe_hi: float
    dcr: float
    dcr_lo: float
    dcr_hi: float


def estimate_qe_dcr(
    train: ClickTrain,
    mu_per_gate: float | None,
    gate_frequency: float,
    dark_prob_per_gate: float = 0.0,
) -> QeDcrEstimate:
    """Estimate quantum efficiency and dark-count rate from a train.

    With mu_per_gate > 0: QE = (click rate - dark rate) / mu with a Wilson
    95% interval, and DCR = dark_prob_per_gate * gate_frequency (taken as
    given).  With mu_per_gate = None the train is dark-only and the DCR is
    estimated from it; requesting QE with mu_per_gate == 0 is an error.
    """
    if not gate_frequency > 0.0:
        raise DomainError("gate_frequency must be > 0")
    n = int(train.bins.size)
    k = int(train.bins.sum())
    if n == 0:
        raise DomainError("empty train")
    p = k / n
    lo, hi = wilson_interval(k, n)
    if mu_per_gate is None:
        return QeDcrEstimate(
            qe=float("nan"), qe_lo=float("nan"), qe_hi=float("nan"),
            dcr=p * gate_frequency, dcr_lo=lo * gate_frequency,
            dcr_hi=hi * gate_frequency,
        )
    if mu_per_gate == 0.0:
        raise DomainError("QE requested with mu_per_gate = 0")
    if mu_per_gate < 0.0:
        raise DomainError("mu_per_gate must be positive or None")
    qe = (p - dark_prob_per_gate) / mu_per_gate
    return QeDcrEstimate(
        qe=qe,
        qe_lo=(lo - dark_prob_per_gate) / mu_per_gate,
        qe_hi=(hi - dark_prob_per_gate) / mu_per_gate,
        dcr=dark_prob_per_gate * gate_frequency,
        dcr_lo=dark_prob_per_gate * gate_frequency,
        dcr_hi=dark_prob_per_gate * gate_frequency,
    )


def afterpulse_probability(
    gamma: np.ndarray,
    divisor: int,
    mean_click_prob: float,
    dark_baseline: float | None = None,
) -> float:
    """Afterpulse probability from a pulsed-illumination autocorrelation.

    gamma holds the normalized autocorrelation at lags 1..len(gamma) of a
    train illuminated every `divisor`-th gate.  The flat inter-pulse level
    serves as the baseline; lags aligned with the pulse spacing and their
    immediate neighbours are excluded (afterpulses of pulse clicks raise
    the marginal one gate after every pulse, which shows up one lag on
    either side of each pulse lag).  The lag-1 excess times the mean click
    probability is the conditional probability of an afterpulse in the
    gate after a click, exact to first order in the afterpulse and dark
    probabilities.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if divisor < 3:
        raise DomainError("divisor must be >= 3 for a pulsed train")
    if gamma.size < divisor + 2:
        raise DomainError("gamma must cover at least one full pulse spacing")
    if not (0.0 < mean_click_prob <= 1.0):
        raise DomainError("mean_click_prob must be in (0, 1]")
    lags = np.arange(1, gamma.size + 1)
    cls = lags % divisor
    mid = (lags != 1) & (cls != 0) & (cls != 1) & (cls != divisor - 1)
    if dark_baseline is None:
        if not np.any(mid):
            raise DomainError("no inter-pulse lags available for the baseline")
        base_vals = gamma[mid]
        baseline = float(base_vals.mean())
        # flatness diagnostic: linear trend across the baseline lags
        if base_vals.size >= 8:
            xs = lags[mid].astype(np.float64)
            slope, intercept = np.polyfit(xs, base_vals, 1)
            resid = base_vals - (slope * xs + intercept)
            se = resid.std(ddof=2) / math.sqrt(((xs - xs.mean()) ** 2).sum())
            if se > 0 and abs(slope) > 3.0 * se:
                warnings.warn(
                    "inter-pulse autocorrelation baseline is not flat "
                    f"(trend {slope:.3g} per lag exceeds 3 sigma)",
                    stacklevel=2,
                )
    else:
        baseline = float(dark_baseline)
    return float((gamma[0] - baseline) * mean_click_prob)


@dataclass(frozen=True)
class LinearityResult:
    slope: float
    stderr: float

    def is_linear(self, n_sigma: float = 2.0) -> bool:
        return abs(self.slope - 1.0) <= n_sigma * self.stderr


def linearity_check(rates: list[tuple[float, float]]) -> LinearityResult:
    """Least-squares slope of log(count rate) vs log(intensity)."""
    if len(rates) < 3:
        raise DomainError("need at least 3 intensity points")
    intens = np.array([r[0] for r in rates], dtype=np.float64)
    counts = np.array([r[1] for r in rates], dtype=np.float64)
    if np.any(intens <= 0.0) or np.any(counts <= 0.0):
        raise DomainError("intensities and rates must be positive")
    x = np.log(intens)
    y = np.log(counts)
    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    return LinearityResult(slope=float(slope), stderr=float(math.sqrt(cov[0, 0])))


def write_click_train(train: ClickTrain, path) -> None:
    """CSV dump: one row per gate/bin (index, click, phase time if any)."""
    phases = {}
    if train.phase_times is not None:
        idx = np.nonzero(train.bins)[0]
        for i, ph in zip(idx, train.phase_times):
            phases[int(i)] = ph
    with open(path, "w") as fh:
        fh.write(f"# mode={train.mode} bin_width={train.bin_width!r}\n")
        fh.write("index,click,phase_time\n")
        for i, b in enumerate(train.bins):
            ph = phases.get(i)
            fh.write(f"{i},{int(b)},{'' if ph is None else repr(float(ph))}\n")


def read_click_train(path) -> ClickTrain:
    mode, bin_width = "GM", 0.0
    bins = []
    phases = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "mode":
                        mode = val
                    elif key == "bin_width":
                        bin_width = float(val)
                continue
            if not line or line.startswith("index"):
                continue
            parts = line.split(",")
            bins.append(int(parts[1]))
            if len(parts) > 2 and parts[2]:
                phases.append(float(parts[2]))
    return ClickTrain(
        bins=np.array(bins, dtype=np.uint8),
        bin_width=bin_width,
        mode=mode,
        phase_times=np.array(phases) if phases else None,
    )

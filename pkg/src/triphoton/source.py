"""Seeded Monte Carlo generation of time-tag streams for a configured experiment.

The generator realizes, event by event, the closed-form triplet statistics
of :mod:`triphoton.model`: triplet emissions are a Poisson process; each
transmitted triplet is assigned an arrival-time peak and a port combination
by a single categorical draw from the 7 x 8 probability table; detections
are thinned per photon by arm transmission times channel efficiency, offset
by the long-arm delay, smeared by Gaussian detector jitter and quantized to
78 ps tagger units.  Dark counts, unpaired primary-source flux on the
842 nm channels and an uncorrelated infrared background calibrated to a
target coincidences-to-accidentals ratio are superimposed.

Determinism: a run is generated in fixed 1 s slices, each owning a child
generator spawned from the master seed, with a fixed draw order inside
every slice.  Identical (config, duration, seed) therefore reproduce the
tag stream byte for byte, independent of platform threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .model import SPEED_OF_LIGHT, InterferenceWeights
from .tags import RESOLUTION_PS, TagStream, merge_sorted

_SLICE_SECONDS = 1.0
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

#: Fig.-style blocked-path presets: which arms are interrupted.
BLOCKED_PRESETS = {
    "all-open": (),
    "block-842-long": ((0, model.LONG),),
    "block-842+1530-long": ((0, model.LONG), (1, model.LONG)),
    "block-all-short": ((0, model.SHORT), (1, model.SHORT), (2, model.SHORT)),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class SourceConfig:
    """Emission rates and coherence of the cascaded pair source."""

    triplet_rate: float = 5_000.0        # triplet emissions per second
    pair_rate: float = 50_000.0          # primary-source pairs per second
    car_target: float | None = 14.0      # pair-channel CAR to calibrate against
    car_window: float = 3.125e-9         # CAR coincidence window, seconds
    pump_coherence_length: float = 25.0  # meters
    intermediate_coherence_length: float = 2.6e-4

    def validate(self):
        if self.triplet_rate < 0 or self.pair_rate < 0:
            raise ConfigError("source rates must be non-negative")
        if self.car_target is not None and not self.car_target > 1:
            raise ConfigError("car_target must exceed 1")
        if not self.car_window > 0:
            raise ConfigError("car_window must be positive")
        if self.pump_coherence_length <= 0 or self.intermediate_coherence_length <= 0:
            raise ConfigError("coherence lengths must be positive")


@dataclass
class DetectorConfig:
    """Per-channel detector parameters (channel order A1 B1 A2 B2 A3 B3).

    ``timing_jitter_fwhm`` applies to every channel unless the optional
    per-channel table overrides it; avalanche photodiodes and nanowire
    detectors differ by almost an order of magnitude in timing spread.
    """

    efficiency: tuple = (0.50, 0.50, 0.80, 0.48, 0.60, 0.85)
    dark_rate: tuple = (2400.0, 2400.0, 300.0, 300.0, 300.0, 300.0)
    timing_jitter_fwhm: float = 0.3e-9
    jitter_fwhm_per_channel: tuple | None = (
        0.30e-9, 0.30e-9, 0.06e-9, 0.06e-9, 0.06e-9, 0.06e-9)
    dead_time: float = 0.0  # hook, not applied

    def validate(self):
        if len(self.efficiency) != 6 or len(self.dark_rate) != 6:
            raise ConfigError("need six per-channel efficiencies and dark rates")
        if any(not 0.0 <= e <= 1.0 for e in self.efficiency):
            raise ConfigError("efficiencies must lie in [0, 1]")
        if any(d < 0 for d in self.dark_rate):
            raise ConfigError("dark rates must be non-negative")
        if self.timing_jitter_fwhm < 0:
            raise ConfigError("jitter must be non-negative")
        if self.jitter_fwhm_per_channel is not None:
            if len(self.jitter_fwhm_per_channel) != 6:
                raise ConfigError("jitter_fwhm_per_channel needs six entries")
            if any(j < 0 for j in self.jitter_fwhm_per_channel):
                raise ConfigError("jitter must be non-negative")

    def channel_jitter_fwhm(self) -> np.ndarray:
        if self.jitter_fwhm_per_channel is not None:
            return np.asarray(self.jitter_fwhm_per_channel, dtype=float)
        return np.full(6, self.timing_jitter_fwhm)

    def channel_jitter_sigma(self) -> np.ndarray:
        return self.channel_jitter_fwhm() * _FWHM_TO_SIGMA

    @property
    def max_jitter_fwhm(self) -> float:
        return float(self.channel_jitter_fwhm().max())


@dataclass
class InterferometerSetting:
    """Path delay, per-photon long-arm phases, blocking and transmissions."""

    tau: float = 3.7e-9
    phases: tuple = (0.0, 0.0, 0.0)
    blocked: tuple = ((False, False),) * 3       # [photon][short, long]
    transmission: tuple = ((0.44, 0.44),) * 3    # [photon][short, long]

    def validate(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if len(self.phases) != 3:
            raise ConfigError("need three phases")
        b = np.asarray(self.blocked, dtype=bool)
        t = np.asarray(self.transmission, dtype=float)
        if b.shape != (3, 2) or t.shape != (3, 2):
            raise ConfigError("blocked and transmission must be (photon, arm) tables")
        if (t < 0).any() or (t > 1).any():
            raise ConfigError("transmissions must lie in [0, 1]")

    def with_phase(self, photon: int, phase: float) -> "InterferometerSetting":
        phases = list(self.phases)
        phases[photon] = phase
        return replace(self, phases=tuple(phases))


@dataclass
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    interferometer: InterferometerSetting = field(default_factory=InterferometerSetting)
    mu_triple: float | None = None  # override; default derives from coherence
    mu_pair: float | None = None

    def validate(self):
        self.source.validate()
        self.detector.validate()
        self.interferometer.validate()
        if self.detector.max_jitter_fwhm >= self.interferometer.tau:
            raise ConfigError("jitter FWHM must stay below the peak separation tau")

    def weights(self) -> InterferenceWeights:
        spec = model.CoherenceSpec(
            pump_coherence_length=self.source.pump_coherence_length,
            intermediate_coherence_length=self.source.intermediate_coherence_length,
            path_difference_length=SPEED_OF_LIGHT * self.interferometer.tau,
        )
        derived = InterferenceWeights.from_coherence(spec)
        return InterferenceWeights(
            mu_triple=derived.mu_triple if self.mu_triple is None else self.mu_triple,
            mu_pair=derived.mu_pair if self.mu_pair is None else self.mu_pair,
        )


def ideal_config() -> ExperimentConfig:
    """Unit efficiency, no darks, no background, no jitter, full coherence."""
    return ExperimentConfig(
        source=SourceConfig(triplet_rate=5_000.0, pair_rate=0.0, car_target=None),
        detector=DetectorConfig(efficiency=(1.0,) * 6, dark_rate=(0.0,) * 6,
                                timing_jitter_fwhm=0.0,
                                jitter_fwhm_per_channel=None),
        interferometer=InterferometerSetting(transmission=((1.0, 1.0),) * 3),
        mu_triple=1.0,
        mu_pair=0.0,
    )


def blocked_scenario(name: str,
                     base: InterferometerSetting | None = None) -> InterferometerSetting:
    """Blocked-path presets: all-open, block-842-long, block-842+1530-long, block-all-short."""
    if name not in BLOCKED_PRESETS:
        raise ConfigError(f"unknown blocked preset {name!r}; "
                          f"choose from {sorted(BLOCKED_PRESETS)}")
    setting = base if base is not None else InterferometerSetting()
    blocked = np.zeros((3, 2), dtype=bool)
    for photon, arm in BLOCKED_PRESETS[name]:
        blocked[photon, arm] = True
    return replace(setting, blocked=tuple(map(tuple, blocked.tolist())))


def surviving_paths(setting: InterferometerSetting) -> tuple[str, ...]:
    """Path combinations that remain open, as 'SSL'-style labels."""
    blocked = np.asarray(setting.blocked, dtype=bool)
    out = []
    for idx in range(8):
        bits = model.combo_bits(idx)
        if not any(blocked[n, bits[n]] for n in range(3)):
            out.append("".join("SL"[b] for b in bits))
    return tuple(out)


# ---------------------------------------------------------------------------
# Analytic rate bookkeeping (used for calibration, summaries and rate tests)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateBudget:
    """Expected detected rates implied by a configuration."""

    weights: InterferenceWeights
    mass: float                      # transmitted-triplet fraction after blocking
    triple_table: np.ndarray         # normalized (7, 8) cell probabilities
    p_detect: np.ndarray             # per-photon detection probability (3,)
    signal_channel_rates: np.ndarray  # (6,) from triplet cascades
    extra842_channel_rates: np.ndarray
    ir_background_rate: float        # uncorrelated detected rate per IR group
    dark_rates: np.ndarray
    central_pair_rate: float         # detected photon-2/3 pairs with dt ~ 0

    @property
    def channel_rates(self) -> np.ndarray:
        bg = np.zeros(6)
        for g in (1, 2):
            bg[2 * g] += self.ir_background_rate / 2.0
            bg[2 * g + 1] += self.ir_background_rate / 2.0
        return (self.signal_channel_rates + self.extra842_channel_rates
                + bg + self.dark_rates)


def _path_port_tables(config: ExperimentConfig):
    """Joint path-combination probabilities and per-photon thinning tables."""
    setting = config.interferometer
    weights = config.weights()
    probs, mass = model.peak_port_distribution(setting.phases, weights,
                                               blocked=setting.blocked)
    blocked = np.asarray(setting.blocked, dtype=bool)
    sss_ok = not any(blocked[n, model.SHORT] for n in range(3))
    lll_ok = not any(blocked[n, model.LONG] for n in range(3))
    if sss_ok and lll_ok:
        p_sss_central = 0.5
    elif sss_ok:
        p_sss_central = 1.0
    elif lll_ok:
        p_sss_central = 0.0
    else:
        p_sss_central = 0.0  # central peak unreachable anyway
    # marginal probability of each of the 8 path combinations
    peak_mass = probs.sum(axis=1)
    combo_prob = np.zeros(8)
    for k, peak in enumerate(model.PEAKS):
        members = model.paths_for_peak(peak)
        if peak == model.PEAK_CENTRAL:
            combo_prob[0] += peak_mass[k] * p_sss_central
            combo_prob[7] += peak_mass[k] * (1.0 - p_sss_central)
        else:
            combo_prob[members[0]] += peak_mass[k]
    return probs, mass, p_sss_central, combo_prob


def rate_budget(config: ExperimentConfig) -> RateBudget:
    config.validate()
    src, det, setting = config.source, config.detector, config.interferometer
    eff = np.asarray(det.efficiency)
    trans = np.asarray(setting.transmission)
    probs, mass, p_sss, combo_prob = _path_port_tables(config)

    # per-photon path marginal and detection probability (ports are unbiased)
    eta_bar = np.array([(eff[2 * n] + eff[2 * n + 1]) / 2.0 for n in range(3)])
    p_long = np.zeros(3)
    for idx in range(8):
        bits = model.combo_bits(idx)
        for n in range(3):
            p_long[n] += combo_prob[idx] * bits[n]
    t_eff = trans[:, model.SHORT] * (1 - p_long) + trans[:, model.LONG] * p_long
    p_detect = t_eff * eta_bar

    surviving_rate = src.triplet_rate * mass
    signal_rates = np.zeros(6)
    for n in range(3):
        for p in (0, 1):
            signal_rates[2 * n + p] = surviving_rate * t_eff[n] * eff[2 * n + p] / 2.0

    # unpaired primary flux on the 842 channels
    extra_rate = max(src.pair_rate - src.triplet_rate, 0.0)
    blocked = np.asarray(setting.blocked, dtype=bool)
    extra842 = np.zeros(6)
    arm_frac = sum(0.5 * trans[0, arm] for arm in (0, 1) if not blocked[0, arm])
    for p in (0, 1):
        extra842[p] = extra_rate * arm_frac * eff[p] / 2.0

    # detected photon-2/3 pairs in the near-zero arrival-difference class
    pair_cell = 0.0
    for k, peak in enumerate(model.PEAKS):
        d12, d13 = model.peak_offset(peak)
        if d13 - d12 == 0:
            pair_cell += probs[k].sum()
    # both-long vs both-short transmission follows the path combination
    pair_det = 0.0
    for idx in range(8):
        bits = model.combo_bits(idx)
        if bits[1] != bits[2]:
            continue
        pair_det += (combo_prob[idx] * trans[1, bits[1]] * trans[2, bits[2]]
                     * eta_bar[1] * eta_bar[2])
    central_pair_rate = src.triplet_rate * mass * pair_det

    dark = np.asarray(det.dark_rate, dtype=float)
    ir_bg = _solve_ir_background(config, central_pair_rate,
                                 signal_rates + extra842, dark)
    return RateBudget(weights=config.weights(), mass=mass, triple_table=probs,
                      p_detect=p_detect, signal_channel_rates=signal_rates,
                      extra842_channel_rates=extra842,
                      ir_background_rate=ir_bg, dark_rates=dark,
                      central_pair_rate=central_pair_rate)


def _solve_ir_background(config: ExperimentConfig, true_pair_rate: float,
                         channel_rates: np.ndarray, dark: np.ndarray) -> float:
    """Uncorrelated infrared rate making the measured pair CAR hit its target.

    The accidental floor in a coincidence window of width w between group
    rates r2 and r3 is r2 * r3 * w, so the measured CAR is
    1 + true_rate / (r2 * r3 * w).  Solving for the uncorrelated extra
    rate b added to both groups gives a quadratic with one positive root.
    """
    src = config.source
    if src.car_target is None or true_pair_rate <= 0.0:
        return 0.0
    w = src.car_window
    sig = config.detector.channel_jitter_sigma()
    sigma_delta = math.sqrt(float(np.mean(sig[2:4]) ** 2 + np.mean(sig[4:6]) ** 2))
    if sigma_delta > 0:
        capture = math.erf(w / 2.0 / (math.sqrt(2.0) * sigma_delta))
    else:
        capture = 1.0
    needed = true_pair_rate * capture / (src.car_target - 1.0)
    a = channel_rates[2] + channel_rates[3] + dark[2] + dark[3]
    b_ = channel_rates[4] + channel_rates[5] + dark[4] + dark[5]
    product = needed / w
    # (a + x)(b + x) = product
    disc = (a - b_) ** 2 + 4.0 * product
    x = (-(a + b_) + math.sqrt(disc)) / 2.0
    return max(x, 0.0)


def expected_channel_rates(config: ExperimentConfig) -> np.ndarray:
    """Expected steady-state detected rate per channel (Hz)."""
    return rate_budget(config).channel_rates


# ---------------------------------------------------------------------------
# Event generation
# ---------------------------------------------------------------------------

def simulate_run(config: ExperimentConfig, duration: float, seed: int) -> TagStream:
    """Generate the full tag stream for one run.

    Raises ConfigError for an invalid configuration or non-positive
    duration.  An all-blocked interferometer is not an error: dark counts
    (and any unblocked background) are still emitted.
    """
    if not duration > 0:
        raise ConfigError("duration must be positive")
    config.validate()
    budget = rate_budget(config)
    res_s = RESOLUTION_PS * 1e-12
    det = config.detector
    setting = config.interferometer
    tau = setting.tau
    sigma = det.channel_jitter_sigma()
    max_units = int(round((duration + tau + 5.0 * det.max_jitter_fwhm) / res_s))

    probs, mass, p_sss, _ = _path_port_tables(config)
    cell_cdf = np.cumsum(probs.ravel())
    if mass > 0:
        cell_cdf /= cell_cdf[-1]
    peak_paths = np.array([model.paths_for_peak(p)[0] for p in model.PEAKS])
    eff = np.asarray(det.efficiency)
    trans = np.asarray(setting.transmission)
    blocked = np.asarray(setting.blocked, dtype=bool)
    extra_rate = max(config.source.pair_rate - config.source.triplet_rate, 0.0)

    n_slices = int(math.ceil(duration / _SLICE_SECONDS))
    children = np.random.SeedSequence(seed).spawn(n_slices)
    parts = []

    for k in range(n_slices):
        t0 = k * _SLICE_SECONDS
        dt = min(_SLICE_SECONDS, duration - t0)
        rng = np.random.default_rng(children[k])
        parts.extend(_slice_triplets(rng, config, budget, cell_cdf, peak_paths,
                                     p_sss, mass, t0, dt, eff, trans, tau, sigma))
        parts.extend(_slice_extra842(rng, extra_rate, blocked, trans, eff,
                                     t0, dt, tau, sigma))
        parts.extend(_slice_ir_background(rng, budget.ir_background_rate, blocked,
                                          t0, dt, tau, sigma))
        parts.extend(_slice_darks(rng, det.dark_rate, t0, dt))

    stream = merge_sorted(parts)
    keep = stream.timestamps <= np.uint64(max(max_units, 0))
    return TagStream(stream.channels[keep], stream.timestamps[keep])


def _quantize(times_s: np.ndarray) -> np.ndarray:
    units = np.rint(times_s / (RESOLUTION_PS * 1e-12)).astype(np.int64)
    return units


def _emit(channels, times_s):
    units = _quantize(np.asarray(times_s, dtype=np.float64))
    ok = units >= 0
    return [(np.asarray(channels, dtype=np.uint8)[ok], units[ok].astype(np.uint64))]


def _slice_triplets(rng, config, budget, cell_cdf, peak_paths, p_sss, mass,
                    t0, dt, eff, trans, tau, sigma):
    if mass <= 0 or config.source.triplet_rate <= 0:
        return []
    n = rng.poisson(config.source.triplet_rate * mass * dt)
    if n == 0:
        return []
    emit_t = t0 + rng.random(n) * dt
    cells = np.searchsorted(cell_cdf, rng.random(n), side="right")
    peak_idx = cells // 8
    port_idx = cells % 8
    paths = peak_paths[peak_idx]
    central = peak_idx == 0
    if central.any():
        take_lll = rng.random(int(central.sum())) >= p_sss
        cpaths = np.where(take_lll, 7, 0)
        paths = paths.copy()
        paths[central] = cpaths
    u_detect = rng.random((n, 3))
    z = rng.standard_normal((n, 3))
    out = []
    for ph in range(3):
        arm = (paths >> (2 - ph)) & 1
        port = (port_idx >> (2 - ph)) & 1
        ch = 2 * ph + port
        p_det = trans[ph, arm] * eff[ch]
        hit = u_detect[:, ph] < p_det
        t = emit_t[hit] + arm[hit] * tau + z[hit, ph] * sigma[ch[hit]]
        out.extend(_emit(ch[hit], t))
    return out


def _slice_extra842(rng, rate, blocked, trans, eff, t0, dt, tau, sigma):
    if rate <= 0:
        return []
    n = rng.poisson(rate * dt)
    if n == 0:
        return []
    t = t0 + rng.random(n) * dt
    arm = rng.integers(0, 2, n)
    port = rng.integers(0, 2, n)
    p_det = np.where(blocked[0, arm], 0.0, trans[0, arm] * eff[port])
    hit = rng.random(n) < p_det
    tt = (t[hit] + arm[hit] * tau
          + rng.standard_normal(int(hit.sum())) * sigma[port[hit]])
    return _emit(port[hit].astype(np.uint8), tt)


def _slice_ir_background(rng, rate, blocked, t0, dt, tau, sigma):
    """Uncorrelated detected infrared flux, split evenly over arms and ports."""
    out = []
    for g in (1, 2):
        if rate <= 0:
            continue
        open_arms = [a for a in (0, 1) if not blocked[g, a]]
        if not open_arms:
            continue
        n = rng.poisson(rate * dt)
        if n == 0:
            continue
        t = t0 + rng.random(n) * dt
        arm = np.asarray(open_arms)[rng.integers(0, len(open_arms), n)]
        port = rng.integers(0, 2, n)
        ch = (2 * g + port).astype(np.uint8)
        tt = t + arm * tau + rng.standard_normal(n) * sigma[ch]
        out.extend(_emit(ch, tt))
    return out


def _slice_darks(rng, dark_rate, t0, dt):
    out = []
    for ch, rate in enumerate(dark_rate):
        if rate <= 0:
            continue
        n = rng.poisson(rate * dt)
        if n == 0:
            continue
        t = t0 + rng.random(n) * dt
        out.extend(_emit(np.full(n, ch, dtype=np.uint8), t))
    return out

"""Closed-form outcome probabilities for photon triplets in three unbalanced interferometers.

Each of three time-correlated photons passes through an unbalanced
interferometer with short (S) and long (L) arms separated by a delay tau.
A photon taking the short arm reaches output port A or B with amplitude

    S -> A : 1/2          S -> B : i/2
    L -> A : -e^{i phi}/2  L -> B : +i e^{i phi}/2

where phi is the phase of that photon's long arm.  A triplet's joint
amplitude is the product of the three single-photon factors.

Arrival-time differences (dt12, dt13) between the photons take values in
{-tau, 0, +tau}^2, but only seven of the nine grid cells are reachable:
the eight S/L path combinations map onto seven peaks because SSS and LLL
both arrive simultaneous (central peak).  In the central peak the two
contributing amplitudes superpose coherently, so its probability carries
a cos(phi1 + phi2 + phi3) term; the six side peaks are fed by a single
path combination each and are phase independent.

Whether two path combinations may interfere is gated by coherence.  The
triplet emission has a two-stage structure: a primary source emits photon 1
plus an intermediate photon, and the intermediate photon immediately pumps
a secondary source emitting photons 2 and 3.  Shifting the whole emission
by tau costs one factor of the primary pump's coherence (weight mu_triple);
shifting the secondary emission relative to the primary costs one factor
of the intermediate photon's coherence (weight mu_pair).  The secondary
source emits photons 2 and 3 at a single time, so they can never shift
relative to each other.  This gives the mutual-coherence weight used
throughout:

    c_n = (L/S shift of photon n between the two combinations)
    W   = 0                                        if c2 != c3
        = mu_triple^|c1| * mu_pair^|c1 - c2|       otherwise

With the default coherence lengths (primary pump far longer than the
path difference, intermediate photon far shorter) mu_triple is close to 1
and mu_pair is essentially 0: three-fold coincidences show fringes in the
phase sum while all pair and single rates stay flat.

Conventions: photons are numbered 1, 2, 3 (indices 0, 1, 2); S=0, L=1,
A=0, B=1; a combination (x1, x2, x3) is encoded as the bit index
4*x1 + 2*x2 + x3, so SSS/AAA is 0 and LLL/BBB is 7.  Probabilities are
per transmitted triplet at unit detection efficiency: the 7 x 8 table of
(peak, port) cells sums to exactly 1 when no arm is blocked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SHORT, LONG = 0, 1
PORT_A, PORT_B = 0, 1

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: The seven arrival-time peaks: "central" is the SSS/LLL overlap; side
#: peaks are named by the single path combination that feeds them.
PEAK_CENTRAL = "central"
SIDE_PEAKS = ("lss", "sls", "ssl", "lls", "lsl", "sll")
PEAKS = (PEAK_CENTRAL,) + SIDE_PEAKS

_COMBOS = tuple((i >> 2 & 1, i >> 1 & 1, i & 1) for i in range(8))


def combo_index(combo) -> int:
    """Encode an (x1, x2, x3) triple, 'LSS'-style string, or index as 0..7."""
    if isinstance(combo, (int, np.integer)):
        idx = int(combo)
    elif isinstance(combo, str):
        if len(combo) != 3:
            raise ValueError(f"need three letters, got {combo!r}")
        letters = combo.upper()
        bits = []
        for ch in letters:
            if ch in "SA":
                bits.append(0)
            elif ch in "LB":
                bits.append(1)
            else:
                raise ValueError(f"unknown letter {ch!r} in {combo!r}")
        idx = 4 * bits[0] + 2 * bits[1] + bits[2]
    else:
        x1, x2, x3 = combo
        idx = 4 * int(x1) + 2 * int(x2) + int(x3)
    if not 0 <= idx <= 7:
        raise ValueError(f"combination index out of range: {combo!r}")
    return idx


def combo_bits(combo) -> tuple[int, int, int]:
    return _COMBOS[combo_index(combo)]


def peak_of_paths(paths) -> str:
    """Peak fed by a path combination (SSS and LLL both map to 'central')."""
    idx = combo_index(paths)
    if idx in (0, 7):
        return PEAK_CENTRAL
    return "".join("sl"[b] for b in _COMBOS[idx])


def peak_offset(peak: str) -> tuple[int, int]:
    """(dt12, dt13) of a peak in units of tau."""
    paths = paths_for_peak(peak)[0]
    l1, l2, l3 = combo_bits(paths)
    return (l2 - l1, l3 - l1)


def paths_for_peak(peak: str) -> tuple[int, ...]:
    """Path-combination indices that feed a peak."""
    if peak == PEAK_CENTRAL:
        return (0, 7)
    if peak not in SIDE_PEAKS:
        raise ValueError(f"unknown peak identifier {peak!r}")
    return (combo_index(peak),)


def parity(ports) -> int:
    """0 for an even number of B outcomes, 1 for odd."""
    idx = combo_index(ports)
    return (idx ^ (idx >> 1) ^ (idx >> 2)) & 1


def parity_set(ports) -> str:
    """Partition of the eight detector combinations into 'AAA' / 'BBB' sets.

    The even-parity set contains AAA, ABB, BAB, BBA; the odd-parity set
    contains BBB, BAA, ABA, AAB.  The two sets show complementary fringes.
    """
    return "BBB" if parity(ports) else "AAA"


def path_amplitude(path, port, phase: float) -> complex:
    """Single-photon amplitude for one arm/port choice at long-arm phase ``phase``."""
    p = combo_index((0, 0, path)) & 1 if not isinstance(path, str) else "SL".index(path.upper())
    q = combo_index((0, 0, port)) & 1 if not isinstance(port, str) else "AB".index(port.upper())
    if p == SHORT:
        return 0.5 if q == PORT_A else 0.5j
    z = complex(math.cos(phase), math.sin(phase))
    return -0.5 * z if q == PORT_A else 0.5j * z


@dataclass(frozen=True)
class PhaseConfig:
    """Long-arm phases (radians, stored unreduced) and the S/L delay tau (seconds)."""

    phi: tuple[float, float, float]
    tau: float = 3.7e-9

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if len(self.phi) != 3:
            raise ValueError("need exactly three phases")

    @property
    def phase_sum(self) -> float:
        return float(sum(self.phi))


@dataclass(frozen=True)
class CoherenceSpec:
    """Coherence lengths (meters) governing which path superpositions interfere."""

    pump_coherence_length: float = 25.0
    intermediate_coherence_length: float = 2.6e-4
    path_difference_length: float = SPEED_OF_LIGHT * 3.7e-9

    def __post_init__(self):
        for name in ("pump_coherence_length", "intermediate_coherence_length",
                     "path_difference_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class InterferenceWeights:
    """Damping of the triple (SSS/LLL) and pairwise interference terms, each in [0, 1]."""

    mu_triple: float = 1.0
    mu_pair: float = 0.0

    def __post_init__(self):
        for name in ("mu_triple", "mu_pair"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def from_coherence(cls, spec: CoherenceSpec) -> "InterferenceWeights":
        dl = spec.path_difference_length
        return cls(
            mu_triple=interference_weight(spec.pump_coherence_length, dl),
            mu_pair=interference_weight(spec.intermediate_coherence_length, dl),
        )


def coherence_length(center_wavelength: float, fwhm_bandwidth: float) -> float:
    """Coherence length lambda^2 / (pi * dlambda), both arguments in meters.

    Equivalent to c / (pi * dnu) with dnu = c * dlambda / lambda^2.
    """
    if not (center_wavelength > 0 and fwhm_bandwidth > 0):
        raise ValueError("wavelength and bandwidth must be positive")
    return center_wavelength**2 / (math.pi * fwhm_bandwidth)


def interference_weight(coherence_len: float, path_difference: float) -> float:
    """First-order coherence surviving a path-length mismatch: exp(-dL / l_c)."""
    if coherence_len <= 0:
        raise ValueError("coherence length must be positive")
    if path_difference < 0:
        raise ValueError("path difference must be non-negative")
    return math.exp(-path_difference / coherence_len)


def _blocked_mask(blocked) -> np.ndarray:
    """Normalize a blocked-arm spec to a (3, 2) boolean array [photon][S, L]."""
    if blocked is None:
        return np.zeros((3, 2), dtype=bool)
    arr = np.asarray(blocked, dtype=bool)
    if arr.shape != (3, 2):
        raise ValueError("blocked must be a (3, 2) array of [photon][short, long] flags")
    return arr


def _amplitude_table(phases, blocked) -> np.ndarray:
    """Per-photon amplitudes amp[photon, path, port], zeroed on blocked arms."""
    amp = np.empty((3, 2, 2), dtype=complex)
    for n in range(3):
        z = complex(math.cos(phases[n]), math.sin(phases[n]))
        amp[n, SHORT, PORT_A] = 0.5
        amp[n, SHORT, PORT_B] = 0.5j
        amp[n, LONG, PORT_A] = -0.5 * z
        amp[n, LONG, PORT_B] = 0.5j * z
    mask = _blocked_mask(blocked)
    for n in range(3):
        for arm in (SHORT, LONG):
            if mask[n, arm]:
                amp[n, arm, :] = 0.0
    return amp


def triple_amplitude(paths, ports, phases, blocked=None) -> complex:
    """Joint amplitude: product of the three single-photon factors."""
    amp = _amplitude_table(tuple(phases), blocked)
    pa = combo_bits(paths)
    po = combo_bits(ports)
    out = 1.0 + 0.0j
    for n in range(3):
        out *= amp[n, pa[n], po[n]]
    return out


def mutual_coherence(paths_g, paths_h, weights: InterferenceWeights) -> float:
    """Coherence weight between two path combinations (the W of the module docstring).

    Photons 2 and 3 are emitted together by the secondary source, so their
    shifts must agree; photon 1 may shift independently at the cost of one
    intermediate-coherence factor per step of relative displacement.
    """
    g = combo_bits(paths_g)
    h = combo_bits(paths_h)
    c1, c2, c3 = (h[0] - g[0], h[1] - g[1], h[2] - g[2])
    if c2 != c3:
        return 0.0
    return weights.mu_triple ** abs(c1) * weights.mu_pair ** abs(c1 - c2)


def peak_port_mass(phases, weights: InterferenceWeights, blocked=None) -> np.ndarray:
    """Unnormalized (7, 8) table of P(peak, ports), rows ordered as PEAKS.

    Each cell is  sum_{g,h -> peak} A_g A_h^* W(g, h)  over the path
    combinations feeding that peak.  With nothing blocked the table sums
    to 1; with blocked arms the total is the surviving fraction of
    triplets (the rest are absorbed).
    """
    amp = _amplitude_table(tuple(phases), blocked)
    joint = np.empty((8, 8), dtype=complex)  # joint[path_combo, port_combo]
    for gi, g in enumerate(_COMBOS):
        for pi, p in enumerate(_COMBOS):
            joint[gi, pi] = amp[0, g[0], p[0]] * amp[1, g[1], p[1]] * amp[2, g[2], p[2]]
    table = np.zeros((len(PEAKS), 8))
    for k, peak in enumerate(PEAKS):
        members = paths_for_peak(peak)
        for gi in members:
            for hi in members:
                w = 1.0 if gi == hi else mutual_coherence(gi, hi, weights)
                if w == 0.0:
                    continue
                table[k] += w * (joint[gi] * joint[hi].conj()).real
    return table


def peak_port_distribution(phases, weights: InterferenceWeights, blocked=None):
    """Normalized (7, 8) table plus the surviving mass.

    Returns (probs, mass): probs sums to 1 over all 56 cells (all zeros if
    every path is blocked), mass is the transmitted-triplet fraction.
    """
    table = peak_port_mass(phases, weights, blocked)
    mass = float(table.sum())
    if mass <= 0.0:
        return np.zeros_like(table), 0.0
    return table / mass, mass


def triple_bin_probability(peak, ports, phases, weights: InterferenceWeights,
                           blocked=None) -> float:
    """Probability of one (peak, port-combination) cell per transmitted triplet.

    Central peak: (1/32) * [1 -+ mu_triple cos(phi1+phi2+phi3)] with the
    minus branch for even-parity (AAA-set) combinations; each side peak is
    a flat 1/64 per port combination.  Blocked arms renormalize over the
    surviving combinations.
    """
    if peak not in PEAKS:
        raise ValueError(f"unknown peak identifier {peak!r}")
    probs, mass = peak_port_distribution(phases, weights, blocked)
    if mass == 0.0:
        return 0.0
    return float(probs[PEAKS.index(peak), combo_index(ports)])


def two_photon_marginal(pair, phases, weights: InterferenceWeights,
                        blocked=None) -> np.ndarray:
    """Pair-coincidence probabilities, marginalized over the third photon.

    ``pair`` selects two photon indices out of (0, 1, 2).  Returns a
    (3, 2, 2) array indexed [delta + 1, port_j, port_k] where delta is the
    arrival-time difference t_k - t_j in units of tau.  Summing the third
    photon's output ports cancels every interference term that involves a
    path flip of the unobserved photon, so with mu_pair = 0 the result
    carries no phase dependence at all; for the photon-2/3 pair a nonzero
    mu_pair adds the familiar two-photon fringe term in phi_2 + phi_3 to
    the delta = 0 class.  Normalized per transmitted triplet.
    """
    j, k = pair
    if j == k or not {j, k} <= {0, 1, 2}:
        raise ValueError(f"pair must be two distinct photon indices, got {pair!r}")
    (other,) = {0, 1, 2} - {j, k}
    amp = _amplitude_table(tuple(phases), blocked)
    out = np.zeros((3, 2, 2))
    total_mass = peak_port_mass(phases, weights, blocked).sum()
    if total_mass <= 0.0:
        return out
    for gi, g in enumerate(_COMBOS):
        for hi, h in enumerate(_COMBOS):
            if g[other] != h[other]:
                continue  # unobserved photon's port sum vanishes for S != L
            if (g[k] - g[j]) != (h[k] - h[j]):
                continue  # different pair arrival-time cell
            w = 1.0 if gi == hi else mutual_coherence(gi, hi, weights)
            if w == 0.0:
                continue
            third = sum(amp[other, g[other], p] * amp[other, h[other], p].conjugate()
                        for p in (PORT_A, PORT_B))
            delta = g[k] - g[j]
            for pj in (PORT_A, PORT_B):
                for pk in (PORT_A, PORT_B):
                    term = (amp[j, g[j], pj] * amp[k, g[k], pk]
                            * (amp[j, h[j], pj] * amp[k, h[k], pk]).conjugate()
                            * third * w)
                    out[delta + 1, pj, pk] += term.real
    return out / total_mass


def single_marginal(photon: int, phases, weights: InterferenceWeights,
                    blocked=None) -> np.ndarray:
    """Per-port detection probability of one photon, all partners traced out."""
    if photon not in (0, 1, 2):
        raise ValueError("photon index must be 0, 1 or 2")
    others = [n for n in range(3) if n != photon]
    amp = _amplitude_table(tuple(phases), blocked)
    out = np.zeros(2)
    total_mass = peak_port_mass(phases, weights, blocked).sum()
    if total_mass <= 0.0:
        return out
    for gi, g in enumerate(_COMBOS):
        for hi, h in enumerate(_COMBOS):
            if any(g[m] != h[m] for m in others):
                continue
            w = 1.0 if gi == hi else mutual_coherence(gi, hi, weights)
            if w == 0.0:
                continue
            rest = 1.0 + 0.0j
            for m in others:
                rest *= sum(amp[m, g[m], p] * amp[m, h[m], p].conjugate()
                            for p in (PORT_A, PORT_B))
            for p in (PORT_A, PORT_B):
                out[p] += (amp[photon, g[photon], p]
                           * amp[photon, h[photon], p].conjugate() * rest * w).real
    return out / total_mass

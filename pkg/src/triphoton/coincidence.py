"""Stream processing of time tags: coincidence search, 2D histogram, CAR.

Matching policy: tags are scanned in timestamp order and a coincidence is
emitted the moment its last member arrives, built from the earliest unused
tag of every other photon group inside the coarse window; all members are
then consumed.  This greedy earliest-first rule is deterministic, needs a
single pass, and at experimental occupancies (window times rate << 1)
almost never has to arbitrate between competing candidates.

Arrival-difference convention: dt12 = t(photon 2) - t(photon 1) and
dt13 = t(photon 3) - t(photon 1), both signed.  The histogram grid is
aligned so that (0, 0) sits at the center of one cell ("central bin").

The matcher is streaming: feeding a run in arbitrary contiguous chunks
yields exactly the same coincidences as one pass, because only unconsumed
tags less than one window old can ever participate in a future match and
those are carried over between chunks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .tags import TagStream

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


class StreamError(ValueError):
    """Malformed input stream (unsorted tags, unknown channel, ...)."""


@dataclass(frozen=True)
class CoincidenceWindowSpec:
    """Windows for coincidence search and histogramming (all in seconds)."""

    coarse_window: float = 20.0e-9
    bin_width: float = 0.78e-9
    tau: float = 3.7e-9

    def __post_init__(self):
        if not 0 < self.bin_width < self.tau:
            raise ValueError("bin width must be positive and below tau")
        if self.coarse_window < 2 * self.tau:
            raise ValueError("coarse window must cover at least 2 tau")

    def window_units(self, resolution_s: float) -> int:
        return int(round(self.coarse_window / resolution_s))


DEFAULT_GROUPS = {0: 0, 1: 0, 2: 1, 3: 1, 4: 2, 5: 2}


def _slot_map(groups: dict | None, n_slots: int) -> np.ndarray:
    """256-entry channel -> slot lookup; -1 marks channels outside the search."""
    table = np.full(256, -1, dtype=np.int8)
    mapping = DEFAULT_GROUPS if groups is None else groups
    for ch, g in mapping.items():
        if not 0 <= g < n_slots:
            raise StreamError(f"group {g} for channel {ch} outside 0..{n_slots - 1}")
        table[ch] = g
    return table


@njit(cache=True)
def _greedy_kernel(times, slots, n_slots, window, start):
    n = times.shape[0]
    used = np.zeros(n, dtype=np.bool_)
    out = np.empty((n // max(n_slots, 1) + 1, n_slots), dtype=np.int64)
    cand = np.empty(n_slots, dtype=np.int64)
    m = 0
    for i in range(start, n):
        gi = slots[i]
        if gi < 0:
            continue
        for g in range(n_slots):
            cand[g] = -1
        cand[gi] = i
        j = i - 1
        while j >= 0 and times[i] - times[j] <= window:
            gj = slots[j]
            if gj >= 0 and gj != gi and not used[j]:
                cand[gj] = j  # descending scan leaves the earliest candidate
            j -= 1
        complete = True
        for g in range(n_slots):
            if cand[g] < 0:
                complete = False
                break
        if complete:
            for g in range(n_slots):
                out[m, g] = cand[g]
                used[cand[g]] = True
            m += 1
    return out[:m], used


class CoincidenceMatcher:
    """Streaming greedy matcher over ``n_slots`` photon groups."""

    def __init__(self, window_units: int, n_slots: int, slot_table: np.ndarray):
        self.window = int(window_units)
        self.n_slots = n_slots
        self.slot_table = slot_table
        self._pend_t = np.empty(0, dtype=np.int64)
        self._pend_ch = np.empty(0, dtype=np.uint8)
        self._last_time = None

    def feed(self, channels: np.ndarray, timestamps: np.ndarray):
        """Process one contiguous chunk; returns matched (times, channels) arrays."""
        ch = np.asarray(channels, dtype=np.uint8)
        ts = np.asarray(timestamps).astype(np.int64)
        if len(ts) and np.any(np.diff(ts) < 0):
            raise StreamError("tag stream is not sorted by timestamp")
        if len(ts) and self._last_time is not None and ts[0] < self._last_time:
            raise StreamError("chunk starts before the previously processed data")
        t_all = np.concatenate([self._pend_t, ts])
        c_all = np.concatenate([self._pend_ch, ch])
        start = len(self._pend_t)
        slots = self.slot_table[c_all]
        idx, used = _greedy_kernel(t_all, slots, self.n_slots, self.window, start)
        if len(t_all):
            self._last_time = int(t_all[-1])
            keep = (~used) & (t_all > self._last_time - self.window)
            self._pend_t = t_all[keep]
            self._pend_ch = c_all[keep]
        return t_all[idx], c_all[idx]


@dataclass
class Triples:
    """Matched three-fold coincidences (columns ordered by photon group)."""

    times: np.ndarray     # (n, 3) int64, tagger units
    channels: np.ndarray  # (n, 3) uint8
    resolution_s: float

    def __len__(self) -> int:
        return len(self.times)

    def dt12_s(self) -> np.ndarray:
        return (self.times[:, 1] - self.times[:, 0]) * self.resolution_s

    def dt13_s(self) -> np.ndarray:
        return (self.times[:, 2] - self.times[:, 0]) * self.resolution_s

    def ports(self) -> np.ndarray:
        return self.channels & 1

    def parity(self) -> np.ndarray:
        """0 = even number of B ports (AAA set), 1 = odd (BBB set)."""
        return self.ports().sum(axis=1) & 1


def find_triples(stream: TagStream, spec: CoincidenceWindowSpec,
                 groups: dict | None = None, chunk_size: int | None = None) -> Triples:
    """All greedy three-fold coincidences of a sorted stream."""
    table = _slot_map(groups, 3)
    if np.any(table[stream.channels] == -1):
        bad = int(stream.channels[table[stream.channels] == -1][0])
        raise StreamError(f"unknown channel id {bad} in stream")
    matcher = CoincidenceMatcher(spec.window_units(stream.resolution_s), 3, table)
    t_parts, c_parts = [], []
    n = len(stream)
    step = n if not chunk_size else max(int(chunk_size), 1)
    for lo in range(0, max(n, 1), max(step, 1)):
        t, c = matcher.feed(stream.channels[lo:lo + step], stream.timestamps[lo:lo + step])
        if len(t):
            t_parts.append(t)
            c_parts.append(c)
    if not t_parts:
        empty = np.empty((0, 3))
        return Triples(empty.astype(np.int64), empty.astype(np.uint8),
                       stream.resolution_s)
    return Triples(np.concatenate(t_parts), np.concatenate(c_parts),
                   stream.resolution_s)


@dataclass
class PairCounts:
    """Two-fold coincidences keyed by port-parity class.

    ``even`` aggregates the AA-type detector combinations (A_j A_k plus
    B_j B_k), ``odd`` the AB-type ones, following the convention that a
    published "AA" pair curve is the sum over same-port combinations.
    """

    even: int
    odd: int
    by_ports: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.even + self.odd


def find_pairs(stream: TagStream, spec: CoincidenceWindowSpec,
               pair_groups: tuple[int, int], groups: dict | None = None,
               chunk_size: int | None = None) -> PairCounts:
    """Greedy two-fold coincidences between two photon groups."""
    g1, g2 = pair_groups
    if g1 == g2:
        raise ValueError("pair_groups must name two distinct groups")
    full = DEFAULT_GROUPS if groups is None else groups
    # channels of other known groups are ignored (-1), truly unknown ones rejected
    known = np.zeros(256, dtype=bool)
    table = np.full(256, -1, dtype=np.int8)
    for ch, g in full.items():
        known[ch] = True
        if g == g1:
            table[ch] = 0
        elif g == g2:
            table[ch] = 1
    if np.any(~known[stream.channels]):
        bad = int(stream.channels[~known[stream.channels]][0])
        raise StreamError(f"unknown channel id {bad} in stream")
    matcher = CoincidenceMatcher(spec.window_units(stream.resolution_s), 2, table)
    t_parts, c_parts = [], []
    n = len(stream)
    step = n if not chunk_size else max(int(chunk_size), 1)
    for lo in range(0, max(n, 1), max(step, 1)):
        t, c = matcher.feed(stream.channels[lo:lo + step], stream.timestamps[lo:lo + step])
        if len(t):
            t_parts.append(t)
            c_parts.append(c)
    by_ports = {"AA": 0, "AB": 0, "BA": 0, "BB": 0}
    if t_parts:
        ch = np.concatenate(c_parts)
        ports = ch & 1
        for pa, pb in ((0, 0), (0, 1), (1, 0), (1, 1)):
            name = "AB"[pa] + "AB"[pb]
            by_ports[name] = int(np.sum((ports[:, 0] == pa) & (ports[:, 1] == pb)))
    even = by_ports["AA"] + by_ports["BB"]
    odd = by_ports["AB"] + by_ports["BA"]
    return PairCounts(even=even, odd=odd, by_ports=by_ports)


# ---------------------------------------------------------------------------
# Histogramming
# ---------------------------------------------------------------------------

@dataclass
class Histogram2D:
    """Counts on the (dt12, dt13) grid; cell (0, 0) is centered on the origin."""

    counts: np.ndarray
    bin_width: float
    half_bins: int
    total: int

    @property
    def edges(self) -> np.ndarray:
        k = np.arange(-self.half_bins, self.half_bins + 2)
        return (k - 0.5) * self.bin_width

    def cell_index(self, dt_s) -> np.ndarray:
        return np.rint(np.asarray(dt_s) / self.bin_width).astype(np.int64) + self.half_bins

    def cell_count(self, k12: int, k13: int) -> int:
        """Count in the cell whose center is (k12, k13) bins from the origin."""
        return int(self.counts[k12 + self.half_bins, k13 + self.half_bins])


def histogram2d(triples: Triples, spec: CoincidenceWindowSpec) -> Histogram2D:
    half = int(math.ceil(spec.coarse_window / spec.bin_width))
    size = 2 * half + 1
    i12 = np.rint(triples.dt12_s() / spec.bin_width).astype(np.int64) + half
    i13 = np.rint(triples.dt13_s() / spec.bin_width).astype(np.int64) + half
    ok = (i12 >= 0) & (i12 < size) & (i13 >= 0) & (i13 < size)
    counts = np.zeros((size, size), dtype=np.int64)
    np.add.at(counts, (i12[ok], i13[ok]), 1)
    return Histogram2D(counts=counts, bin_width=spec.bin_width, half_bins=half,
                       total=int(ok.sum()))


def peak_cells(spec: CoincidenceWindowSpec) -> dict:
    """Grid cell (k12, k13) holding each of the seven peak centers."""
    shift = int(round(spec.tau / spec.bin_width))
    cells = {}
    for peak in model.PEAKS:
        d12, d13 = model.peak_offset(peak)
        cells[peak] = (d12 * shift, d13 * shift)
    return cells


def peak_cell_counts(hist: Histogram2D, spec: CoincidenceWindowSpec) -> dict:
    return {peak: hist.cell_count(*cell) for peak, cell in peak_cells(spec).items()}


def central_bin_counts(hist: Histogram2D, triples: Triples,
                       central_halfwidth_bins: int = 0) -> tuple[int, int]:
    """(AAA-set, BBB-set) totals of the triples inside the central bin."""
    i12 = hist.cell_index(triples.dt12_s()) - hist.half_bins
    i13 = hist.cell_index(triples.dt13_s()) - hist.half_bins
    w = central_halfwidth_bins
    inside = (np.abs(i12) <= w) & (np.abs(i13) <= w)
    par = triples.parity()[inside]
    bbb = int(par.sum())
    return int(len(par) - bbb), bbb


# ---------------------------------------------------------------------------
# CAR
# ---------------------------------------------------------------------------

def pair_delta_counts(stream: TagStream, pair_groups: tuple[int, int],
                      window: float, offsets: tuple[float, ...],
                      groups: dict | None = None) -> tuple[int, list[int]]:
    """Combinatorial pair counts in a centered window and in offset windows.

    Counts every (tag_j, tag_k) combination whose arrival difference falls
    in [center - window/2, center + window/2]; used for the CAR estimate,
    where consumption rules would bias the accidental windows.
    """
    full = DEFAULT_GROUPS if groups is None else groups
    grp = np.full(256, -1, dtype=np.int16)
    for ch, g in full.items():
        grp[ch] = g
    gg = grp[stream.channels]
    t1 = np.sort(stream.timestamps[gg == pair_groups[0]].astype(np.int64))
    t2 = np.sort(stream.timestamps[gg == pair_groups[1]].astype(np.int64))
    res = stream.resolution_s
    half = window / 2.0

    def count(center: float) -> int:
        lo = np.searchsorted(t2, t1 + int(round((center - half) / res)), side="left")
        hi = np.searchsorted(t2, t1 + int(round((center + half) / res)), side="right")
        return int(np.sum(hi - lo))

    signal = count(0.0)
    acc = [count(off) for off in offsets]
    return signal, acc


def compute_car(signal_count: float, accidental_counts) -> float:
    """Coincidences-to-accidentals ratio; infinity when no accidentals occur."""
    acc = list(np.atleast_1d(accidental_counts).astype(float))
    mean_acc = float(np.mean(acc)) if acc else 0.0
    if mean_acc <= 0.0:
        return math.inf
    return float(signal_count) / mean_acc


def car_offsets(spec: CoincidenceWindowSpec, n: int = 3) -> tuple[float, ...]:
    """Accidental-estimation window centers, displaced by multiples of 5 tau."""
    return tuple(5.0 * spec.tau * (k + 1) for k in range(n))


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

def write_histogram_csv(path, hist: Histogram2D) -> None:
    """Long-form CSV, columns: dt12_s, dt13_s, count (zero cells skipped)."""
    half = hist.half_bins
    with open(path, "w") as fh:
        fh.write("dt12_s,dt13_s,count\n")
        nz12, nz13 = np.nonzero(hist.counts)
        for i, j in zip(nz12, nz13):
            fh.write(f"{(i - half) * hist.bin_width:.6e},"
                     f"{(j - half) * hist.bin_width:.6e},{hist.counts[i, j]}\n")


def analyze_stream(stream: TagStream, spec: CoincidenceWindowSpec,
                   car_window: float = 3.125e-9) -> dict:
    """Full single-run analysis: counts, histogram peaks, parity split, CAR."""
    if not stream.is_sorted():
        raise StreamError("tag stream is not sorted by timestamp")
    triples = find_triples(stream, spec)
    hist = histogram2d(triples, spec)
    aaa, bbb = central_bin_counts(hist, triples)
    pairs = {}
    for pair in ((0, 1), (0, 2), (1, 2)):
        pc = find_pairs(stream, spec, pair)
        pairs[f"pair_{pair[0] + 1}{pair[1] + 1}"] = {
            "even": pc.even, "odd": pc.odd, **pc.by_ports}
    sig, acc = pair_delta_counts(stream, (1, 2), car_window, car_offsets(spec))
    car = compute_car(sig, acc)
    return {
        "n_tags": len(stream),
        "singles": stream.channel_counts().tolist(),
        "n_triples": len(triples),
        "in_window_triples": hist.total,
        "central_aaa": aaa,
        "central_bbb": bbb,
        "peak_cell_counts": peak_cell_counts(hist, spec),
        "pairs": pairs,
        "car_signal": sig,
        "car_accidentals": acc,
        "car": car if math.isfinite(car) else "infinite",
        "_histogram": hist,
        "_triples": triples,
    }


def summary_json(result: dict) -> str:
    clean = {k: v for k, v in result.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, sort_keys=True)

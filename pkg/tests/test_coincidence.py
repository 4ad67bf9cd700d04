"""Coincidence engine vs. an independent brute-force reference."""

import numpy as np
import pytest

from triphoton import coincidence as ce
from triphoton.tags import TagStream

SPEC = ce.CoincidenceWindowSpec()
RES = 78e-12


# ---------------------------------------------------------------------------
# Brute-force reference: same greedy earliest-first rule, written separately
# with plain python loops.  O(n^2), only for small streams.
# ---------------------------------------------------------------------------

def brute_force_matches(channels, times, window_units, n_groups, group_of):
    n = len(times)
    used = [False] * n
    out = []
    for i in range(n):
        gi = group_of(channels[i])
        if gi is None:
            continue
        cand = {gi: i}
        for j in range(i):  # ascending scan keeps the earliest unused candidate
            if used[j]:
                continue
            gj = group_of(channels[j])
            if gj is None or gj in cand:
                continue
            if int(times[i]) - int(times[j]) <= window_units:
                cand[gj] = j
        if len(cand) == n_groups:
            members = tuple(cand[g] for g in range(n_groups))
            for k in members:
                used[k] = True
            out.append(members)
    return out


def random_stream(rng, n_tags=2000, rate_hint=2e5):
    """Sorted random tags over six channels at experiment-like occupancy."""
    span_units = int(n_tags / rate_hint / RES)
    ts = np.sort(rng.integers(0, span_units, size=n_tags).astype(np.uint64))
    ch = rng.integers(0, 6, size=n_tags).astype(np.uint8)
    return TagStream(ch, ts)


def triples_as_tuples(tr):
    return sorted((tuple(t), tuple(c)) for t, c in zip(tr.times, tr.channels))


def brute_triples_as_tuples(stream, window_units):
    idx = brute_force_matches(stream.channels, stream.timestamps, window_units,
                              3, lambda c: c >> 1)
    out = []
    for members in idx:
        out.append((tuple(int(stream.timestamps[k]) for k in members),
                    tuple(int(stream.channels[k]) for k in members)))
    return sorted(out)


# ---------------------------------------------------------------------------
# find_triples
# ---------------------------------------------------------------------------

def test_empty_stream():
    s = TagStream(np.empty(0, np.uint8), np.empty(0, np.uint64))
    tr = ce.find_triples(s, SPEC)
    assert len(tr) == 0


def test_single_clean_triple():
    # one tag per group, 1 ns apart
    step = int(1e-9 / RES)
    s = TagStream(np.array([0, 2, 4], np.uint8),
                  np.array([1000, 1000 + step, 1000 + 2 * step], np.uint64))
    tr = ce.find_triples(s, SPEC)
    assert len(tr) == 1
    assert tr.dt12_s()[0] == pytest.approx(step * RES, rel=1e-12)
    assert tr.dt13_s()[0] == pytest.approx(2 * step * RES, rel=1e-12)


def test_matches_brute_force_on_random_streams():
    rng = np.random.default_rng(11)
    w = SPEC.window_units(RES)
    for trial in range(8):
        s = random_stream(rng, n_tags=1500, rate_hint=rng.choice([1e5, 1e6, 5e6]))
        got = triples_as_tuples(ce.find_triples(s, SPEC))
        expect = brute_triples_as_tuples(s, w)
        assert got == expect, f"mismatch on trial {trial}"


def test_chunk_invariance():
    rng = np.random.default_rng(23)
    s = random_stream(rng, n_tags=4000, rate_hint=2e6)
    ref = triples_as_tuples(ce.find_triples(s, SPEC))
    for chunk in (1, 7, 100, 999, 4000, 10000):
        got = triples_as_tuples(ce.find_triples(s, SPEC, chunk_size=chunk))
        assert got == ref, f"chunk_size={chunk} changed the result"


def test_no_tag_used_twice():
    rng = np.random.default_rng(5)
    s = random_stream(rng, n_tags=3000, rate_hint=5e6)
    tr = ce.find_triples(s, SPEC)
    seen = set()
    for t, c in zip(tr.times, tr.channels):
        for tt, cc in zip(t, c):
            key = (int(tt), int(cc))
            # same (time, channel) may occur for distinct tags; count occurrences
            seen.add((key, seen.__len__()))
    # conservation via counting: matched tags never exceed stream tags per channel
    matched = np.bincount(tr.channels.ravel(), minlength=6)
    total = s.channel_counts()
    assert (matched <= total).all()


def test_rejects_unsorted_stream():
    s = TagStream(np.array([0, 2, 4], np.uint8),
                  np.array([100, 50, 200], np.uint64))
    with pytest.raises(ce.StreamError, match="not sorted"):
        ce.find_triples(s, SPEC)


def test_rejects_unknown_channel():
    s = TagStream(np.array([0, 9], np.uint8), np.array([100, 200], np.uint64))
    with pytest.raises(ce.StreamError, match="unknown channel"):
        ce.find_triples(s, SPEC)


# ---------------------------------------------------------------------------
# find_pairs
# ---------------------------------------------------------------------------

def test_pair_classes_basic():
    step = int(1e-9 / RES)
    # A2+A3 within window -> even class; A2+B3 -> odd
    s = TagStream(np.array([2, 4, 2, 5], np.uint8),
                  np.array([1000, 1000 + step,
                            1_000_000, 1_000_000 + step], np.uint64))
    pc = ce.find_pairs(s, SPEC, (1, 2))
    assert pc.even == 1 and pc.odd == 1
    assert pc.by_ports == {"AA": 1, "AB": 1, "BA": 0, "BB": 0}


def test_pair_outside_window_not_counted():
    far = int(1e-6 / RES)
    s = TagStream(np.array([2, 4], np.uint8), np.array([0, far], np.uint64))
    pc = ce.find_pairs(s, SPEC, (1, 2))
    assert pc.total == 0


def test_known_pair_insertions_recovered():
    rng = np.random.default_rng(9)
    n_pairs = 137
    base = np.sort(rng.integers(0, int(60 / RES), size=n_pairs)).astype(np.uint64)
    sep = int(2e-9 / RES)
    ch = np.empty(2 * n_pairs, np.uint8)
    ts = np.empty(2 * n_pairs, np.uint64)
    ch[0::2] = 2
    ch[1::2] = 4
    ts[0::2] = base
    ts[1::2] = base + sep
    order = np.argsort(ts, kind="stable")
    pc = ce.find_pairs(TagStream(ch[order], ts[order]), SPEC, (1, 2))
    assert pc.total == n_pairs
    assert pc.by_ports["AA"] == n_pairs


def test_pairs_match_brute_force():
    rng = np.random.default_rng(31)
    w = SPEC.window_units(RES)

    def group_of(c):
        g = c >> 1
        return {1: 0, 2: 1}.get(g)

    for _ in range(5):
        s = random_stream(rng, n_tags=1200, rate_hint=2e6)
        pc = ce.find_pairs(s, SPEC, (1, 2))
        idx = brute_force_matches(s.channels, s.timestamps, w, 2, group_of)
        assert pc.total == len(idx)


def test_pairs_ignore_other_groups_but_reject_unknown():
    s = TagStream(np.array([0, 2, 4], np.uint8),
                  np.array([10, 20, 30], np.uint64))
    pc = ce.find_pairs(s, SPEC, (1, 2))  # channel 0 present but ignored
    assert pc.total == 1
    bad = TagStream(np.array([2, 7], np.uint8), np.array([10, 20], np.uint64))
    with pytest.raises(ce.StreamError, match="unknown channel"):
        ce.find_pairs(bad, SPEC, (1, 2))


# ---------------------------------------------------------------------------
# histogram + central bin
# ---------------------------------------------------------------------------

def test_histogram_single_central_cell():
    n = 50
    t0 = np.arange(n, dtype=np.uint64) * np.uint64(10_000_000)
    times = np.stack([t0, t0, t0], axis=1).astype(np.int64)
    chans = np.tile(np.array([0, 2, 4], np.uint8), (n, 1))
    tr = ce.Triples(times, chans, RES)
    hist = ce.histogram2d(tr, SPEC)
    assert hist.total == n
    assert hist.cell_count(0, 0) == n
    assert hist.counts.sum() == n


def test_histogram_peak_cell_lookup():
    shift_units = int(round(SPEC.tau / RES))
    t0 = np.uint64(10_000_000)
    # LSS-type event: photon 1 late by tau -> dt12 = dt13 = -tau
    times = np.array([[t0 + shift_units, t0, t0]], dtype=np.int64)
    chans = np.array([[1, 2, 4]], dtype=np.uint8)
    hist = ce.histogram2d(ce.Triples(times, chans, RES), SPEC)
    cells = ce.peak_cells(SPEC)
    assert hist.cell_count(*cells["lss"]) == 1


def test_central_bin_parity_split():
    t0 = np.uint64(1_000_000)
    times = np.tile(np.array([t0, t0, t0], dtype=np.int64), (4, 1))
    chans = np.array([[0, 2, 4],   # AAA -> even
                      [0, 2, 5],   # AAB -> odd
                      [1, 3, 4],   # BBA -> even
                      [1, 3, 5]],  # BBB -> odd
                     dtype=np.uint8)
    tr = ce.Triples(times, chans, RES)
    hist = ce.histogram2d(tr, SPEC)
    aaa, bbb = ce.central_bin_counts(hist, tr)
    assert (aaa, bbb) == (2, 2)


# ---------------------------------------------------------------------------
# CAR
# ---------------------------------------------------------------------------

def test_compute_car_simple_ratio():
    assert ce.compute_car(140, [10, 10, 10]) == pytest.approx(14.0)


def test_compute_car_zero_accidentals_sentinel():
    assert ce.compute_car(5, [0, 0, 0]) == np.inf


def test_pair_delta_counts_fixture():
    sep = int(1e-9 / RES)
    far = int(1e-3 / RES)  # clusters too distant for cross terms
    gap = int(2.5 * SPEC.tau / RES)  # between signal and first accidental window
    ch = np.array([2, 4, 2, 4, 2, 4], np.uint8)
    ts = np.array([0, sep,                      # true pair -> signal window
                   far, far + gap,              # lands in no window
                   2 * far, 2 * far + int(5 * SPEC.tau / RES)],  # 5 tau offset
                  np.uint64)
    order = np.argsort(ts)
    s = TagStream(ch[order], ts[order])
    sig, acc = ce.pair_delta_counts(s, (1, 2), 3.125e-9, ce.car_offsets(SPEC))
    assert sig == 1
    assert acc[0] == 1 and acc[1] == 0 and acc[2] == 0


def test_window_spec_validation():
    with pytest.raises(ValueError):
        ce.CoincidenceWindowSpec(bin_width=5e-9, tau=3.7e-9)
    with pytest.raises(ValueError):
        ce.CoincidenceWindowSpec(coarse_window=5e-9)

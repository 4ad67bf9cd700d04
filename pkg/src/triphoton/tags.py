"""Time-tag streams and the F3TT binary file format.

A tag is (channel, timestamp): channel 0..5 maps to detector ports
A1, B1, A2, B2, A3, B3 (group n = photon n, port A/B = channel parity),
timestamps are unsigned integers in tagger units of 78 ps.

File layout (little endian):
    magic   4 bytes  b"F3TT"
    version u16      1
    res_ps  u32      tagger resolution in picoseconds (78)
    nchan   u8       channel count (6)
followed by packed 9-byte records: channel u8, timestamp u64.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"F3TT"
FORMAT_VERSION = 1
RESOLUTION_PS = 78
N_CHANNELS = 6

CHANNEL_NAMES = ("A1", "B1", "A2", "B2", "A3", "B3")
GROUP_WAVELENGTH_NM = (842, 1530, 1570)

_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])
_HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u2"),
                          ("resolution_ps", "<u4"), ("n_channels", "u1")])


class TagFileError(Exception):
    """Corrupt or truncated F3TT file."""


@dataclass
class TagStream:
    """Sorted detection events: parallel channel/timestamp arrays."""

    channels: np.ndarray
    timestamps: np.ndarray
    resolution_ps: int = RESOLUTION_PS
    n_channels: int = N_CHANNELS

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.timestamps = np.asarray(self.timestamps, dtype=np.uint64)
        if self.channels.shape != self.timestamps.shape:
            raise ValueError("channels and timestamps must have equal length")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def resolution_s(self) -> float:
        return self.resolution_ps * 1e-12

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps.astype(np.int64)) >= 0))

    def times_s(self) -> np.ndarray:
        return self.timestamps.astype(np.float64) * self.resolution_s

    def channel_counts(self) -> np.ndarray:
        return np.bincount(self.channels, minlength=self.n_channels)

    def groups(self) -> np.ndarray:
        """Photon group (0, 1, 2) of each tag."""
        return self.channels >> 1

    def ports(self) -> np.ndarray:
        """Output port (0 = A, 1 = B) of each tag."""
        return self.channels & 1


def empty_stream() -> TagStream:
    return TagStream(np.empty(0, np.uint8), np.empty(0, np.uint64))


def merge_sorted(parts: list[tuple[np.ndarray, np.ndarray]]) -> TagStream:
    """Merge (channel, timestamp) fragments into one sorted stream.

    Sort order is (timestamp, channel) so the result is reproducible
    regardless of fragment order.
    """
    if not parts:
        return empty_stream()
    ch = np.concatenate([np.asarray(c, dtype=np.uint8) for c, _ in parts])
    ts = np.concatenate([np.asarray(t, dtype=np.uint64) for _, t in parts])
    order = np.lexsort((ch, ts))
    return TagStream(ch[order], ts[order])


def write_f3tt(path, stream: TagStream) -> None:
    header = np.zeros(1, dtype=_HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["resolution_ps"] = stream.resolution_ps
    header["n_channels"] = stream.n_channels
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp"] = stream.timestamps
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(records.tobytes())


def read_f3tt(path) -> TagStream:
    size = os.path.getsize(path)
    if size < _HEADER_DTYPE.itemsize:
        raise TagFileError(f"{path}: file shorter than the F3TT header")
    with open(path, "rb") as fh:
        header = np.frombuffer(fh.read(_HEADER_DTYPE.itemsize), dtype=_HEADER_DTYPE)[0]
        if bytes(header["magic"]) != MAGIC:
            raise TagFileError(f"{path}: bad magic {bytes(header['magic'])!r}")
        if header["version"] != FORMAT_VERSION:
            raise TagFileError(f"{path}: unsupported version {header['version']}")
        body = fh.read()
    if len(body) % _RECORD_DTYPE.itemsize:
        raise TagFileError(f"{path}: truncated record ({len(body)} payload bytes)")
    records = np.frombuffer(body, dtype=_RECORD_DTYPE)
    return TagStream(records["channel"].copy(), records["timestamp"].copy(),
                     resolution_ps=int(header["resolution_ps"]),
                     n_channels=int(header["n_channels"]))

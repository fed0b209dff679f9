"""Photon timestamp streams and their on-disk formats.

Timestamps are integer picoseconds, strictly increasing within a stream.
The binary format is a 16-byte header followed by little-endian unsigned
64-bit picosecond timestamps:

    offset  size  field
    0       4     magic "QFSO"
    4       2     version (uint16, currently 1)
    6       1     channel id (0 = signal, 1 = idler)
    7       1     reserved (0)
    8       8     event count (uint64)

A one-column CSV export (header ``t_ps``) is provided for debugging.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAGIC = b"QFSO"
VERSION = 1
CHANNEL_IDS = {"signal": 0, "idler": 1}
CHANNEL_NAMES = {v: k for k, v in CHANNEL_IDS.items()}
_HEADER = struct.Struct("<4sHBBQ")


@dataclass
class PhotonEventStream:
    """Monotone event timestamps (ps) on one detector channel."""

    timestamps_ps: np.ndarray
    channel: str
    duration_s: float

    def __post_init__(self):
        self.timestamps_ps = np.asarray(self.timestamps_ps, dtype=np.int64)
        if self.channel not in CHANNEL_IDS:
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.duration_s < 0:
            raise ConfigError("duration_s must be >= 0")

    def __len__(self) -> int:
        return int(self.timestamps_ps.size)

    @property
    def rate_hz(self) -> float:
        return len(self) / self.duration_s if self.duration_s > 0 else 0.0

    def validate(self):
        ts = self.timestamps_ps
        if ts.size and (ts[0] < 0 or ts[-1] > self.duration_s * 1e12):
            raise ConfigError("timestamps outside [0, duration]")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ConfigError("timestamps must be strictly increasing")
        return self


def make_strictly_increasing(ts_ps: np.ndarray) -> np.ndarray:
    """Bump duplicate sorted timestamps forward by 1 ps until strict.

    Uses the subtract-index / running-max / add-index identity, which is
    the identity map on already strictly increasing integer sequences.
    """
    ts = np.asarray(ts_ps, dtype=np.int64)
    if ts.size < 2:
        return ts
    idx = np.arange(ts.size, dtype=np.int64)
    return np.maximum.accumulate(ts - idx) + idx


def save_stream(path, stream: PhotonEventStream):
    ts = stream.timestamps_ps
    if ts.size and ts[0] < 0:
        raise ConfigError("cannot persist negative timestamps")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, CHANNEL_IDS[stream.channel], 0, ts.size))
        fh.write(ts.astype("<u8").tobytes())


def load_stream(path, duration_s: float = 0.0) -> PhotonEventStream:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, version, channel_id, _, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        if channel_id not in CHANNEL_NAMES:
            raise ConfigError(f"{path}: unknown channel id {channel_id}")
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise ConfigError(f"{path}: truncated payload")
        ts = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    if duration_s <= 0 and ts.size:
        duration_s = float(ts[-1]) * 1e-12
    return PhotonEventStream(ts, CHANNEL_NAMES[channel_id], duration_s)


def save_stream_csv(path, stream: PhotonEventStream):
    np.savetxt(path, stream.timestamps_ps, fmt="%d", header="t_ps", comments="")


def load_stream_csv(path, channel: str, duration_s: float = 0.0) -> PhotonEventStream:
    ts = np.loadtxt(path, dtype=np.int64, skiprows=1, ndmin=1)
    if duration_s <= 0 and ts.size:
        duration_s = float(ts[-1]) * 1e-12
    return PhotonEventStream(ts, channel, duration_s)

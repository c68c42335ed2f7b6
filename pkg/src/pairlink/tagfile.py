"""PTAG timestamp files.

Layout, little-endian:

* 16-byte header: magic ``b"PTAG0001"``, u32 resolution in ps, u32 reserved (0)
* 16-byte records: u64 time in ps, u8 channel, 7 reserved zero bytes
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .detection import TimestampStream

MAGIC = b"PTAG0001"
HEADER = struct.Struct("<8sII")
RECORD = np.dtype([("time_ps", "<u8"), ("channel", "u1"), ("reserved", "V7")])
assert HEADER.size == 16 and RECORD.itemsize == 16


class TagFileError(ValueError):
    pass


def encode(streams) -> bytes:
    if isinstance(streams, TimestampStream):
        streams = [streams]
    streams = list(streams)
    if not streams:
        raise ValueError("nothing to write")
    res = streams[0].resolution_ps
    if any(s.resolution_ps != res for s in streams):
        raise ValueError("all streams in one file must share a resolution")
    n = sum(len(s) for s in streams)
    rec = np.zeros(n, dtype=RECORD)
    times = np.concatenate([s.times_ps() for s in streams])
    if np.any(times < 0):
        raise ValueError("negative timestamps cannot be stored")
    rec["time_ps"] = times.astype(np.uint64)
    rec["channel"] = np.concatenate([np.full(len(s), s.channel_id, dtype=np.uint8) for s in streams])
    order = np.argsort(rec["time_ps"], kind="stable")
    return HEADER.pack(MAGIC, res, 0) + rec[order].tobytes()


def write_ptag(path, streams) -> Path:
    path = Path(path)
    path.write_bytes(encode(streams))
    return path


def decode(data: bytes, channel=None) -> TimestampStream:
    if len(data) < HEADER.size:
        raise TagFileError("file too short for a PTAG header")
    magic, res, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TagFileError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if res == 0:
        raise TagFileError("resolution of 0 ps in header")
    body = data[HEADER.size:]
    if len(body) % RECORD.itemsize:
        raise TagFileError("truncated record")
    rec = np.frombuffer(body, dtype=RECORD)
    channels = np.unique(rec["channel"])
    if channel is None:
        if len(channels) > 1:
            raise TagFileError(f"file holds channels {channels.tolist()}; pick one")
        channel = int(channels[0]) if len(channels) else 0
    rec = rec[rec["channel"] == channel]
    times = rec["time_ps"].astype(np.int64)
    if np.any(times % res):
        raise TagFileError("timestamps are not multiples of the header resolution")
    return TimestampStream(int(channel), times // res, int(res))


def read_ptag(path, channel=None) -> TimestampStream:
    return decode(Path(path).read_bytes(), channel)

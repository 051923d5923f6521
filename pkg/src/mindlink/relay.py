"""Frame codec and stochastic link between the sensor and the remote receiver.

Wire layout of one frame, all fields big-endian::

    magic        u16  0xB7A1
    version      u8   1
    subject_id   u32
    session_id   u32
    sequence     u32
    channel      u16
    total_frames u32
    sample_rate  u32
    sample_count u16
    payload      int16 * sample_count   (value = sample / 1e-4, saturating)
    crc32        u32  IEEE CRC of every preceding byte
"""

from __future__ import annotations

import csv
import enum
import math
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from mindlink.errors import (BadMagic, ChecksumMismatch, FrameError, InconsistentHeaders,
                             TruncatedFrame, UnsupportedVersion)
from mindlink.signal import SignalTrace

FRAME_MAGIC = 0xB7A1
FRAME_VERSION = 1
QUANT_SCALE = 1e-4
MAX_PAYLOAD = 256
INT16_MIN, INT16_MAX = -32768, 32767

_HEADER = struct.Struct(">HBIIIHIIH")
_CRC = struct.Struct(">I")
MIN_FRAME_BYTES = _HEADER.size + 2 + _CRC.size


@dataclass(frozen=True)
class Frame:
    subject_id: int
    session_id: int
    sequence: int
    channel: int
    total_frames: int
    sample_rate: int
    payload: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "payload", tuple(int(v) for v in self.payload))
        if not 1 <= len(self.payload) <= MAX_PAYLOAD:
            raise ValueError(f"payload length must be in [1, {MAX_PAYLOAD}], got {len(self.payload)}")
        if not 0 <= self.sequence < self.total_frames:
            raise ValueError(f"sequence {self.sequence} not below total_frames {self.total_frames}")
        if any(not INT16_MIN <= v <= INT16_MAX for v in self.payload):
            raise ValueError("payload values must fit in int16")

    @property
    def samples(self) -> np.ndarray:
        return dequantize(self.payload)


def quantize(values) -> np.ndarray:
    """Round to the nearest multiple of ``QUANT_SCALE`` and clamp to int16."""
    q = np.rint(np.asarray(values, dtype=np.float64) / QUANT_SCALE)
    return np.clip(q, INT16_MIN, INT16_MAX).astype(np.int16)


def dequantize(payload) -> np.ndarray:
    return np.asarray(payload, dtype=np.float64) * QUANT_SCALE


def encode_frame(frame: Frame) -> bytes:
    head = _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, frame.subject_id, frame.session_id,
                        frame.sequence, frame.channel, frame.total_frames,
                        frame.sample_rate, len(frame.payload))
    body = head + np.asarray(frame.payload, dtype=">i2").tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_frame(data: bytes) -> Frame:
    """Parse one datagram.

    The trailing four bytes are checked as a CRC over the rest before any
    other field is trusted, so every single-byte corruption surfaces as
    ``BadMagic`` or ``ChecksumMismatch``. ``TruncatedFrame`` means the buffer
    is shorter than the smallest frame, or a CRC-valid frame declares more
    samples than it carries.
    """
    data = bytes(data)
    if len(data) < 2:
        raise TruncatedFrame(f"{len(data)} bytes is too short for a frame")
    (magic,) = struct.unpack_from(">H", data, 0)
    if magic != FRAME_MAGIC:
        raise BadMagic(f"bad magic 0x{magic:04X}")
    if len(data) < MIN_FRAME_BYTES:
        raise TruncatedFrame(f"{len(data)} bytes is too short for a frame")
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) != crc:
        raise ChecksumMismatch("frame CRC does not match contents")
    (_, version, subject_id, session_id, sequence, channel, total, rate,
     count) = _HEADER.unpack_from(data, 0)
    if version != FRAME_VERSION:
        raise UnsupportedVersion(f"frame version {version}")
    expected = _HEADER.size + 2 * count + _CRC.size
    if len(data) < expected:
        raise TruncatedFrame(f"frame declares {count} samples ({expected} bytes), got {len(data)}")
    if len(data) > expected:
        raise ChecksumMismatch(f"{len(data) - expected} trailing bytes after declared payload")
    payload = np.frombuffer(data, dtype=">i2", count=count, offset=_HEADER.size)
    try:
        return Frame(subject_id, session_id, sequence, channel, total, rate,
                     tuple(payload.tolist()))
    except ValueError as exc:
        raise FrameError(f"CRC-valid frame has invalid fields: {exc}") from exc


@dataclass(frozen=True)
class StreamInfo:
    """What the receiver knows about a trace before any frame arrives."""

    subject_id: int
    session_id: int
    sample_rate: int
    channels: int
    n_samples: int

    @property
    def total_frames(self) -> int:
        """Frames per channel."""
        return math.ceil(self.n_samples / MAX_PAYLOAD)


def stream_info(trace: SignalTrace, subject_id: int, session_id: int) -> StreamInfo:
    return StreamInfo(subject_id, session_id, trace.sample_rate, trace.channels, trace.n_samples)


def segment(trace: SignalTrace, subject_id: int, session_id: int) -> list[Frame]:
    """Split every channel into consecutive frames of at most 256 samples.

    Frames come out in capture order: by sequence, then channel.
    """
    total = math.ceil(trace.n_samples / MAX_PAYLOAD)
    q = quantize(trace.samples)
    frames = []
    for seq in range(total):
        for ch in range(trace.channels):
            chunk = q[ch, seq * MAX_PAYLOAD:(seq + 1) * MAX_PAYLOAD]
            frames.append(Frame(subject_id, session_id, seq, ch, total,
                                trace.sample_rate, tuple(chunk.tolist())))
    return frames


class LinkPreset(enum.Enum):
    IR = "ir"
    RF = "rf"
    SATELLITE = "satellite"


# loss probability, base latency ms, jitter std ms
PRESETS = {
    LinkPreset.IR: (0.001, 1.0, 0.0),
    LinkPreset.RF: (0.01, 10.0, 0.0),
    LinkPreset.SATELLITE: (0.02, 280.0, 15.0),
}
SATELLITE_MIN_LATENCY_MS = 250.0


@dataclass(frozen=True)
class LinkParams:
    loss_probability: float = 0.0
    base_latency: float = 0.0
    jitter_std: float = 0.0
    reorder: bool = False
    preset: LinkPreset | None = None

    def __post_init__(self):
        if self.preset is not None and not isinstance(self.preset, LinkPreset):
            object.__setattr__(self, "preset", LinkPreset(self.preset))
        if not 0 <= self.loss_probability <= 1:
            raise ValueError(f"loss_probability must be in [0, 1], got {self.loss_probability}")
        if self.base_latency < 0:
            raise ValueError("base_latency must be >= 0")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")
        if self.preset is LinkPreset.SATELLITE and self.base_latency < SATELLITE_MIN_LATENCY_MS:
            raise ValueError(f"satellite links need base_latency >= {SATELLITE_MIN_LATENCY_MS} ms")

    @classmethod
    def from_preset(cls, preset, **overrides) -> "LinkParams":
        preset = LinkPreset(preset) if not isinstance(preset, LinkPreset) else preset
        p, latency, jitter = PRESETS[preset]
        fields = dict(loss_probability=p, base_latency=latency, jitter_std=jitter,
                      reorder=False, preset=preset)
        fields.update(overrides)
        return cls(**fields)

    def lossless(self) -> "LinkParams":
        return replace(self, loss_probability=0.0)


@dataclass(frozen=True)
class DeliveryRecord:
    frame: Frame
    send_time: float
    arrival_time: float | None = field(default=None)

    @property
    def delivered(self) -> bool:
        return self.arrival_time is not None

    @property
    def latency(self) -> float | None:
        return None if self.arrival_time is None else self.arrival_time - self.send_time


def send_time_ms(frame: Frame) -> float:
    """A frame leaves once its first sample has been captured."""
    return 1000.0 * frame.sequence * MAX_PAYLOAD / frame.sample_rate


def transmit(frames, link: LinkParams, seed: int) -> list[DeliveryRecord]:
    """Push frames through the link.

    Each frame draws one uniform (drop if below ``loss_probability``) and one
    standard normal (jitter) from a PCG64 stream seeded with ``seed``, in
    input order. Delivered frames arrive at
    ``send + base_latency + |jitter_std * z|``.

    Without ``reorder`` the link is FIFO: a frame never overtakes one sent
    before it, and records come back in input order. With ``reorder`` records come
    back sorted by arrival time; dropped frames follow in send order.
    """
    frames = list(frames)
    rng = np.random.default_rng(seed)
    u = rng.random(len(frames))
    z = rng.standard_normal(len(frames))
    sent = [send_time_ms(f) for f in frames]
    arrival: list[float | None] = [None] * len(frames)
    last_arrival = -math.inf
    for i in sorted(range(len(frames)), key=lambda i: (sent[i], i)):
        if u[i] < link.loss_probability:
            continue
        t = sent[i] + link.base_latency + abs(link.jitter_std * z[i])
        if not link.reorder:
            t = max(t, last_arrival)
            last_arrival = t
        arrival[i] = float(t)
    records = [DeliveryRecord(f, s, a) for f, s, a in zip(frames, sent, arrival)]
    if link.reorder:
        delivered = sorted((r for r in records if r.delivered), key=lambda r: r.arrival_time)
        records = delivered + [r for r in records if not r.delivered]
    return records


@dataclass
class GapReport:
    missing: list[tuple[int, int]]
    expected_frames: int

    @property
    def lost(self) -> int:
        return len(self.missing)


def reassemble(records, expected: StreamInfo) -> tuple[SignalTrace, GapReport]:
    """Rebuild the trace from whatever frames arrived.

    Missing frames are zero-filled and listed as ``(channel, sequence)``.
    Dropped records (no arrival time) are ignored, as are frames for
    channels outside the expected range.
    """
    samples = np.zeros((expected.channels, expected.n_samples))
    total = expected.total_frames
    seen = set()
    for rec in records:
        if isinstance(rec, DeliveryRecord):
            if not rec.delivered:
                continue
            frame = rec.frame
        else:
            frame = rec
        if (frame.subject_id, frame.session_id, frame.sample_rate) != (
                expected.subject_id, expected.session_id, expected.sample_rate):
            raise InconsistentHeaders(
                f"frame (subject {frame.subject_id}, session {frame.session_id}, "
                f"rate {frame.sample_rate}) does not belong to stream "
                f"(subject {expected.subject_id}, session {expected.session_id}, "
                f"rate {expected.sample_rate})")
        if frame.total_frames != total:
            raise InconsistentHeaders(f"frame says {frame.total_frames} frames per channel, "
                                      f"expected {total}")
        if not 0 <= frame.channel < expected.channels:
            continue
        start = frame.sequence * MAX_PAYLOAD
        stop = min(start + len(frame.payload), expected.n_samples)
        samples[frame.channel, start:stop] = dequantize(frame.payload[:stop - start])
        seen.add((frame.channel, frame.sequence))
    missing = [(ch, seq) for ch in range(expected.channels) for seq in range(total)
               if (ch, seq) not in seen]
    trace = SignalTrace(samples, expected.sample_rate, expected.subject_id, None)
    return trace, GapReport(missing, expected.channels * total)


def write_delivery_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "session_id", "channel", "sequence", "send_ms",
                    "arrival_ms", "latency_ms"])
        for r in records:
            f = r.frame
            w.writerow([f.subject_id, f.session_id, f.channel, f.sequence, f"{r.send_time:.3f}",
                        "" if r.arrival_time is None else f"{r.arrival_time:.3f}",
                        "" if r.latency is None else f"{r.latency:.3f}"])

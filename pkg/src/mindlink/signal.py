"""Synthetic multi-channel brain-activity traces.

A subject is modelled by a :class:`SubjectProfile`; for every vocabulary item
it produces a fixed band-limited waveform per channel (the signature). A
recorded trace is the signature plus white Gaussian sensor noise.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mindlink.errors import BandViolation, EmptyVocabularyLabel
from mindlink.seeding import SplitMix64, stable_hash

DEFAULT_SAMPLE_RATE = 256
DEFAULT_DURATION = 2.0
DEFAULT_CHANNELS = 8
DEFAULT_HARMONICS = 12
DEFAULT_BAND = (0.5, 40.0)
MAX_LABEL_LENGTH = 64


class ItemKind(enum.Enum):
    WORD = "word"
    PHRASE = "phrase"
    THOUGHT = "thought"
    MENTAL_STATE = "mental_state"

    @property
    def code(self) -> int:
        return list(ItemKind).index(self)

    @classmethod
    def from_code(cls, code: int) -> "ItemKind":
        return list(cls)[code]


@dataclass(frozen=True)
class VocabularyItem:
    label: str
    kind: ItemKind = ItemKind.WORD

    def __post_init__(self):
        if not self.label:
            raise EmptyVocabularyLabel("vocabulary label must be non-empty")
        if len(self.label) > MAX_LABEL_LENGTH:
            raise ValueError(f"label longer than {MAX_LABEL_LENGTH} characters: {self.label!r}")
        if not isinstance(self.kind, ItemKind):
            object.__setattr__(self, "kind", ItemKind(self.kind))


@dataclass(frozen=True)
class SubjectProfile:
    """Parameters of one simulated subject's signature generator."""

    subject_id: int
    seed: int
    channels: int = DEFAULT_CHANNELS
    vocabulary: tuple[VocabularyItem, ...] = ()
    band: tuple[float, float] = DEFAULT_BAND
    harmonics: int = DEFAULT_HARMONICS
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.subject_id < 2**32:
            raise ValueError(f"subject_id must be unsigned 32-bit, got {self.subject_id}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be unsigned 64-bit, got {self.seed}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        f_lo, f_hi = self.band
        if not 0 < f_lo < f_hi:
            raise BandViolation(f"band must satisfy 0 < f_lo < f_hi, got {self.band}")
        object.__setattr__(self, "band", (float(f_lo), float(f_hi)))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        labels = [item.label for item in self.vocabulary]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in vocabulary: {labels}")

    def item(self, label: str) -> VocabularyItem:
        for item in self.vocabulary:
            if item.label == label:
                return item
        raise KeyError(f"subject {self.subject_id} has no item {label!r}")


@dataclass(eq=False)
class SignalTrace:
    """A ``channels x n_samples`` block of samples at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int
    subject_id: int = 0
    label: str | None = None
    channels: int = field(init=False)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ValueError("samples must be a channels x n matrix")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if self.samples.shape[1] < 2:
            raise ValueError("a trace needs at least 2 samples per channel")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains non-finite samples")
        self.channels = self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def with_samples(self, samples) -> "SignalTrace":
        return SignalTrace(samples, self.sample_rate, self.subject_id, self.label)

    def identical(self, other: "SignalTrace") -> bool:
        """Bitwise equality of samples and metadata."""
        return (self.sample_rate == other.sample_rate
                and self.subject_id == other.subject_id
                and self.label == other.label
                and self.samples.shape == other.samples.shape
                and self.samples.tobytes() == other.samples.tobytes())


def _n_samples(sample_rate, duration):
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError(f"duration {duration}s at {sample_rate} Hz gives fewer than 2 samples")
    return n


def channel_key(profile: SubjectProfile, label: str, channel: int) -> int:
    return stable_hash(profile.seed, profile.subject_id, label, channel)


def synth_signature(profile: SubjectProfile, item: VocabularyItem,
                    sample_rate: int = DEFAULT_SAMPLE_RATE,
                    duration: float = DEFAULT_DURATION) -> SignalTrace:
    """Noise-free signature of ``item`` for ``profile``.

    Each channel is a sum of ``profile.harmonics`` sinusoids. For harmonic
    ``h`` the channel's SplitMix64 stream yields, in order, a frequency in
    ``[f_lo, f_hi]``, an amplitude in ``[0.2, 1.0)`` and a phase in
    ``[0, 2*pi)``. Channels are then scaled to unit RMS.
    """
    if not item.label:
        raise EmptyVocabularyLabel("vocabulary label must be non-empty")
    f_lo, f_hi = profile.band
    if sample_rate < 2 * f_hi:
        raise BandViolation(f"sample_rate {sample_rate} Hz is below 2 x f_hi = {2 * f_hi} Hz")
    n = _n_samples(sample_rate, duration)
    t = np.arange(n) / sample_rate
    out = np.empty((profile.channels, n))
    for ch in range(profile.channels):
        rng = SplitMix64(channel_key(profile, item.label, ch))
        params = np.array([(rng.uniform(f_lo, f_hi), rng.uniform(0.2, 1.0),
                            rng.uniform(0.0, 2 * np.pi))
                           for _ in range(profile.harmonics)])
        freqs, amps, phases = params.T
        wave = amps @ np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
        out[ch] = wave / np.sqrt(np.mean(wave ** 2))
    return SignalTrace(out, sample_rate, profile.subject_id, item.label)


def generate_trace(profile: SubjectProfile, item: VocabularyItem, noise_sigma: float,
                   seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
                   duration: float = DEFAULT_DURATION) -> SignalTrace:
    """Signature plus white Gaussian noise of std ``noise_sigma`` per channel.

    Noise comes from numpy's PCG64 generator seeded with ``seed``.
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    trace = synth_signature(profile, item, sample_rate, duration)
    if noise_sigma == 0:
        return trace
    noise = np.random.default_rng(seed).normal(0.0, noise_sigma, trace.samples.shape)
    return trace.with_samples(trace.samples + noise)


def noise_trace(channels: int, noise_sigma: float, seed: int,
                sample_rate: int = DEFAULT_SAMPLE_RATE, duration: float = DEFAULT_DURATION,
                subject_id: int = 0) -> SignalTrace:
    """Sensor noise with no signature underneath."""
    n = _n_samples(sample_rate, duration)
    samples = np.random.default_rng(seed).normal(0.0, noise_sigma, (channels, n))
    return SignalTrace(samples, sample_rate, subject_id, None)


def periodogram(samples: np.ndarray, sample_rate: float):
    """One-sided rectangular-window periodogram along the last axis.

    Returns ``(freqs, psd)`` with ``psd`` in units^2/Hz, scaled so that
    ``psd.sum(-1) * df`` equals the mean square of the input.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[-1]
    spec = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / (n * sample_rate)
    if n % 2 == 0:
        spec[..., 1:-1] *= 2
    else:
        spec[..., 1:] *= 2
    return np.fft.rfftfreq(n, 1.0 / sample_rate), spec


def spectrum_power_above(trace: SignalTrace, f: float) -> float:
    """Fraction of periodogram power strictly above ``f`` Hz, averaged over channels.

    All-zero channels contribute 0.
    """
    if not 0 <= f <= trace.sample_rate / 2:
        raise ValueError(f"f must lie in [0, {trace.sample_rate / 2}], got {f}")
    freqs, psd = periodogram(trace.samples, trace.sample_rate)
    total = psd.sum(axis=1)
    above = psd[:, freqs > f].sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    frac = np.where(total > 0, above / safe, 0.0)
    return float(np.clip(frac.mean(), 0.0, 1.0))


def write_trace_csv(trace: SignalTrace, path) -> None:
    """Write one row per sample: ``t,ch0,...`` with ``t`` at 6 decimals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"ch{c}" for c in range(trace.channels)])
        for i in range(trace.n_samples):
            w.writerow([f"{i / trace.sample_rate:.6f}"]
                       + [repr(float(v)) for v in trace.samples[:, i]])


def read_trace_csv(path, subject_id: int = 0, label: str | None = None) -> SignalTrace:
    """Inverse of :func:`write_trace_csv`; the sample rate is recovered from ``t``."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError(f"{path}: expected header starting with 't'")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row])
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != len(rows[0]):
        raise ValueError(f"{path}: malformed trace table")
    t = data[:, 0]
    rate = int(round((len(t) - 1) / (t[-1] - t[0])))
    return SignalTrace(data[:, 1:].T.copy(), rate, subject_id, label)

"""Enrollment: per-subject normalized templates and their on-disk database.

Template file layout (little-endian)::

    magic      4s   b"TPL1"
    version    u16  1
    subject_id u32
    label_len  u16, label UTF-8 bytes
    kind       u8   (index into ItemKind)
    sample_rate u32
    channels   u16
    n_samples  u32
    repetitions u16
    mean       float32[channels * n_samples], row-major
    spread     float32[channels * n_samples], row-major
    crc32      u32  (IEEE, over every preceding byte)

Files live at ``root/<subject_id>/<quoted label>.tpl`` next to a
``manifest.json`` per subject.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote

import numpy as np

from mindlink.errors import CorruptTemplate, DuplicateItem, ShapeMismatch
from mindlink.seeding import stable_hash
from mindlink.signal import (DEFAULT_DURATION, DEFAULT_SAMPLE_RATE, ItemKind, SignalTrace,
                             SubjectProfile, VocabularyItem, generate_trace)

DEFAULT_REPETITIONS = 10
ZERO_STD = 1e-9

TEMPLATE_MAGIC = b"TPL1"
TEMPLATE_VERSION = 1
_HEAD = struct.Struct("<4sHIH")           # magic, version, subject_id, label_len
_BODY = struct.Struct("<BIHIH")           # kind, rate, channels, n_samples, reps
_CRC = struct.Struct("<I")


def z_normalize(trace: SignalTrace) -> SignalTrace:
    """Per channel: subtract the mean, divide by the population std.

    Channels whose std is below 1e-9 become all zeros.
    """
    return trace.with_samples(z_normalize_array(trace.samples))


def z_normalize_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=-1, keepdims=True)
    std = np.sqrt(np.mean(centered ** 2, axis=-1, keepdims=True))
    flat = std < ZERO_STD
    return np.where(flat, 0.0, centered / np.where(flat, 1.0, std))


@dataclass(eq=False)
class Template:
    """Averaged z-normalized waveform for one (subject, item).

    ``mean`` and ``spread`` are held as float32, the stored precision, so a
    save/load round trip is bit-exact.
    """

    subject_id: int
    item: VocabularyItem
    sample_rate: int
    mean: np.ndarray
    spread: np.ndarray
    repetitions: int

    def __post_init__(self):
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=np.float32))
        self.spread = np.atleast_2d(np.asarray(self.spread, dtype=np.float32))
        if self.mean.shape != self.spread.shape:
            raise ShapeMismatch(f"mean {self.mean.shape} and spread {self.spread.shape} differ")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if np.any(self.spread < 0):
            raise ValueError("spread must be non-negative")

    @property
    def label(self) -> str:
        return self.item.label

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    @property
    def n_samples(self) -> int:
        return self.mean.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Template):
            return NotImplemented
        return (self.subject_id == other.subject_id and self.item == other.item
                and self.sample_rate == other.sample_rate
                and self.repetitions == other.repetitions
                and self.mean.shape == other.mean.shape
                and self.mean.tobytes() == other.mean.tobytes()
                and self.spread.tobytes() == other.spread.tobytes())

    def as_trace(self) -> SignalTrace:
        return SignalTrace(self.mean.astype(np.float64), self.sample_rate,
                           self.subject_id, self.label)


def build_template(subject_id: int, item: VocabularyItem, traces: list[SignalTrace]) -> Template:
    """Average already-recorded repetitions into a template."""
    if not traces:
        raise ValueError("at least one repetition is required")
    rate = traces[0].sample_rate
    shape = traces[0].samples.shape
    for tr in traces:
        if tr.sample_rate != rate or tr.samples.shape != shape:
            raise ShapeMismatch("all repetitions must share sample rate and shape")
    stack = np.stack([z_normalize_array(tr.samples) for tr in traces])
    mean = stack.mean(axis=0)
    if len(traces) > 1:
        spread = stack.std(axis=0, ddof=1)
    else:
        spread = np.zeros_like(mean)
    return Template(subject_id, item, rate, mean, spread, len(traces))


def repetition_seed(seed: int, k: int) -> int:
    return stable_hash(seed, k, "repetition")


def enroll_item(profile: SubjectProfile, item: VocabularyItem,
                repetitions: int = DEFAULT_REPETITIONS, noise_sigma: float = 0.5,
                seed: int = 0, sample_rate: int = DEFAULT_SAMPLE_RATE,
                duration: float = DEFAULT_DURATION) -> Template:
    """Record ``repetitions`` noisy responses to ``item`` and average them.

    Repetition ``k`` uses seed ``stable_hash(seed, k, "repetition")`` so any
    evaluation order gives the same template.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    traces = [generate_trace(profile, item, noise_sigma, repetition_seed(seed, k),
                             sample_rate, duration)
              for k in range(repetitions)]
    return build_template(profile.subject_id, item, traces)


@dataclass
class TemplateDatabase:
    """Templates keyed by subject id, then item label."""

    root: Path | None = None
    subjects: dict[int, dict[str, Template]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list, compare=False)

    def add(self, template: Template) -> None:
        bucket = self.subjects.setdefault(template.subject_id, {})
        if template.label in bucket:
            raise DuplicateItem(f"subject {template.subject_id} already has {template.label!r}")
        for other in bucket.values():
            if (other.sample_rate, other.channels) != (template.sample_rate, template.channels):
                raise ShapeMismatch(
                    f"subject {template.subject_id}: {template.label!r} has rate/channels "
                    f"{template.sample_rate}/{template.channels}, expected "
                    f"{other.sample_rate}/{other.channels}")
        bucket[template.label] = template

    def templates_for(self, subject_id: int) -> list[Template]:
        return list(self.subjects.get(subject_id, {}).values())

    def __len__(self):
        return sum(len(b) for b in self.subjects.values())


def template_filename(label: str) -> str:
    return quote(label, safe="") + ".tpl"


def encode_template(tpl: Template) -> bytes:
    label = tpl.label.encode("utf-8")
    parts = [
        _HEAD.pack(TEMPLATE_MAGIC, TEMPLATE_VERSION, tpl.subject_id, len(label)),
        label,
        _BODY.pack(tpl.item.kind.code, tpl.sample_rate, tpl.channels, tpl.n_samples,
                   tpl.repetitions),
        tpl.mean.astype("<f4").tobytes(),
        tpl.spread.astype("<f4").tobytes(),
    ]
    blob = b"".join(parts)
    return blob + _CRC.pack(zlib.crc32(blob))


def decode_template(blob: bytes, source="<bytes>") -> Template:
    if len(blob) < _HEAD.size + _BODY.size + _CRC.size:
        raise CorruptTemplate(source, "file too short")
    magic, version, subject_id, label_len = _HEAD.unpack_from(blob, 0)
    if magic != TEMPLATE_MAGIC:
        raise CorruptTemplate(source, f"bad magic {magic!r}")
    if version != TEMPLATE_VERSION:
        raise CorruptTemplate(source, f"unsupported version {version}")
    (crc,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(blob[:-_CRC.size]) != crc:
        raise CorruptTemplate(source, "CRC mismatch")
    off = _HEAD.size + label_len
    if off + _BODY.size + _CRC.size > len(blob):
        raise ShapeMismatch(f"{source}: label length {label_len} overruns file")
    label = blob[_HEAD.size:off].decode("utf-8")
    kind, rate, channels, n, reps = _BODY.unpack_from(blob, off)
    off += _BODY.size
    count = channels * n
    expected = off + 2 * 4 * count + _CRC.size
    if expected != len(blob):
        raise ShapeMismatch(f"{source}: header declares {channels}x{n} samples "
                            f"({expected} bytes) but file has {len(blob)} bytes")
    data = np.frombuffer(blob, dtype="<f4", count=2 * count, offset=off).astype(np.float32)
    mean = data[:count].reshape(channels, n)
    spread = data[count:].reshape(channels, n)
    try:
        item = VocabularyItem(label, ItemKind.from_code(kind))
        return Template(subject_id, item, rate, mean, spread, reps)
    except (ValueError, IndexError) as exc:
        raise CorruptTemplate(source, str(exc)) from exc


def save_database(db: TemplateDatabase, root=None) -> Path:
    """Write every template plus one manifest per subject; returns the root."""
    root = Path(root if root is not None else db.root)
    root.mkdir(parents=True, exist_ok=True)
    for subject_id, bucket in sorted(db.subjects.items()):
        subdir = root / str(subject_id)
        subdir.mkdir(exist_ok=True)
        for label, tpl in sorted(bucket.items()):
            tmp = subdir / (template_filename(label) + ".tmp")
            tmp.write_bytes(encode_template(tpl))
            os.replace(tmp, subdir / template_filename(label))
        first = next(iter(bucket.values()), None)
        manifest = {
            "subject_id": subject_id,
            "labels": sorted(bucket),
            "channels": first.channels if first else 0,
            "sample_rate": first.sample_rate if first else 0,
        }
        (subdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    db.root = root
    return root


def load_database(root) -> TemplateDatabase:
    """Read a database written by :func:`save_database`.

    Files that are not templates or manifests are skipped and listed in
    ``db.warnings``.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"template database {root} does not exist")
    db = TemplateDatabase(root=root)
    for entry in sorted(root.iterdir()):
        if not (entry.is_dir() and entry.name.isdigit()):
            db.warnings.append(f"ignored {entry}")
            continue
        for path in sorted(entry.iterdir()):
            if path.name == "manifest.json":
                continue
            if path.suffix != ".tpl" or not path.is_file():
                db.warnings.append(f"ignored {path}")
                continue
            tpl = decode_template(path.read_bytes(), source=str(path))
            if tpl.subject_id != int(entry.name):
                raise CorruptTemplate(str(path), f"subject id {tpl.subject_id} "
                                                 f"does not match directory {entry.name}")
            try:
                db.add(tpl)
            except DuplicateItem as exc:
                raise DuplicateItem(f"{path}: {exc}") from None
    return db

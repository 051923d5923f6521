"""Portable 64-bit seed derivation.

Everything random in the simulator is keyed by a tuple of integers and
strings. A tuple is absorbed into a 64-bit state one word at a time:

* start from ``IV``;
* an integer part contributes the tag word ``1`` then its value (must be in
  ``[0, 2**64)``);
* a string part contributes the tag word ``2``, its UTF-8 byte length, then
  its bytes packed into little-endian 8-byte words (last word zero-padded);
* after all parts, the part count is absorbed.

Absorbing a word ``w`` is ``h = mix64(h ^ w)`` where ``mix64`` is the
SplitMix64 output function (add the golden-ratio increment, then the two
xor-shift-multiply rounds). The tags and length prefixes make the encoding
injective, so distinct tuples only collide through the mixer itself.

Uniform floats come from a SplitMix64 stream started at the derived key:
``u = (next_u64() >> 11) * 2**-53``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
IV = 0x6A09E667F3BCC909

_TAG_INT = 1
_TAG_STR = 2


def mix64(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _words(part):
    if isinstance(part, bool) or not isinstance(part, (int, str)):
        raise TypeError(f"cannot hash part of type {type(part).__name__}")
    if isinstance(part, int):
        if not 0 <= part <= MASK64:
            raise ValueError(f"integer part {part} outside unsigned 64-bit range")
        return [_TAG_INT, part]
    raw = part.encode("utf-8")
    words = [_TAG_STR, len(raw)]
    for i in range(0, len(raw), 8):
        words.append(int.from_bytes(raw[i:i + 8].ljust(8, b"\0"), "little"))
    return words


def stable_hash(*parts: int | str) -> int:
    """Hash a tuple of unsigned ints and strings to an unsigned 64-bit int."""
    h = IV
    for part in parts:
        for w in _words(part):
            h = mix64(h ^ w)
    return mix64(h ^ len(parts))


class SplitMix64:
    """Minimal SplitMix64 generator; identical output on every platform."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        out = mix64(self.state)
        self.state = (self.state + GOLDEN) & MASK64
        return out

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + (hi - lo) * u


def derive_trial_seed(master_seed: int, subject_id: int, label: str,
                      trial: int, stage: str) -> int:
    """Seed for one (subject, item, trial, stage) cell of a session.

    ``stage`` separates domains, e.g. ``"enroll"``, ``"trial"``, ``"link"``.
    """
    return stable_hash(master_seed, subject_id, label, trial, stage)

"""Template matching: lag-windowed Pearson correlation and the decision rule."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from mindlink.enroll import ZERO_STD, Template
from mindlink.errors import ShapeMismatch, TooShort
from mindlink.signal import SignalTrace

# Reported scores are rounded to this many decimals before thresholds apply,
# so float noise from affine rescaling of the input cannot change a Decision.
SCORE_DECIMALS = 9


@dataclass(frozen=True)
class MatchConfig:
    match_threshold: float = 0.8
    ambiguity_margin: float = 0.05
    max_lag_fraction: float = 0.05

    def __post_init__(self):
        if not 0 < self.match_threshold <= 1:
            raise ValueError(f"match_threshold must be in (0, 1], got {self.match_threshold}")
        if self.ambiguity_margin < 0:
            raise ValueError(f"ambiguity_margin must be >= 0, got {self.ambiguity_margin}")
        if not 0 <= self.max_lag_fraction <= 0.25:
            raise ValueError(f"max_lag_fraction must be in [0, 0.25], got {self.max_lag_fraction}")


@dataclass(frozen=True)
class Match:
    label: str
    score: float

    def to_dict(self):
        return {"decision": "match", "label": self.label, "score": self.score}


@dataclass(frozen=True)
class NoMatch:
    best_score: float

    def to_dict(self):
        return {"decision": "nomatch", "score": self.best_score}


@dataclass(frozen=True)
class Ambiguous:
    labels: tuple[str, str]
    scores: tuple[float, float]

    def to_dict(self):
        return {"decision": "ambiguous", "labels": list(self.labels),
                "scores": list(self.scores)}


Decision = Union[Match, NoMatch, Ambiguous]


def decision_to_json(decision: Decision) -> str:
    return json.dumps(decision.to_dict())


def decision_from_dict(d: dict) -> Decision:
    kind = d["decision"]
    if kind == "match":
        return Match(d["label"], d["score"])
    if kind == "nomatch":
        return NoMatch(d["score"])
    if kind == "ambiguous":
        return Ambiguous(tuple(d["labels"]), tuple(d["scores"]))
    raise ValueError(f"unknown decision kind {kind!r}")


def _pearson_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=-1, keepdims=True)
    b = b - b.mean(axis=-1, keepdims=True)
    n = a.shape[-1]
    sa = np.sqrt((a * a).sum(axis=-1))
    sb = np.sqrt((b * b).sum(axis=-1))
    flat = (sa / np.sqrt(n) < ZERO_STD) | (sb / np.sqrt(n) < ZERO_STD)
    denom = np.where(flat, 1.0, sa * sb)
    return np.where(flat, 0.0, (a * b).sum(axis=-1) / denom)


def lagged_correlation(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    """Row-wise max over lags ``l`` in ``[-max_lag, max_lag]`` of corr(x[t+l], y[t]).

    Only the overlapping samples take part at each lag. ``x`` may be longer
    than ``y``. Lags leaving fewer than two overlapping samples are skipped.
    """
    m, n = x.shape[-1], y.shape[-1]
    best = np.full(x.shape[:-1], -np.inf)
    for lag in range(-max_lag, max_lag + 1):
        lo = max(0, -lag)
        hi = min(n, m - lag)
        if hi - lo < 2:
            continue
        r = _pearson_rows(x[..., lo + lag:hi + lag], y[..., lo:hi])
        best = np.maximum(best, r)
    return np.where(np.isfinite(best), best, 0.0)


def similarity(trace: SignalTrace, template: Template, config: MatchConfig = MatchConfig()) -> float:
    """Mean over channels of the best lagged correlation with the template mean."""
    if trace.sample_rate != template.sample_rate or trace.channels != template.channels:
        raise ShapeMismatch(
            f"trace is {trace.channels} ch @ {trace.sample_rate} Hz, template "
            f"{template.label!r} is {template.channels} ch @ {template.sample_rate} Hz")
    if trace.n_samples < template.n_samples:
        raise TooShort(f"trace has {trace.n_samples} samples, template needs {template.n_samples}")
    max_lag = int(np.floor(config.max_lag_fraction * template.n_samples))
    per_channel = lagged_correlation(trace.samples, template.mean.astype(np.float64), max_lag)
    return float(np.clip(per_channel.mean(), -1.0, 1.0))


def classify(trace: SignalTrace, templates: list[Template],
             config: MatchConfig = MatchConfig()) -> Decision:
    """Decide which template, if any, the trace matches."""
    if not templates:
        return NoMatch(-1.0)
    scored = [(round(similarity(trace, t, config), SCORE_DECIMALS), t.label) for t in templates]
    scored.sort(key=lambda s: (-s[0], s[1]))
    best_score, best_label = scored[0]
    if best_score < config.match_threshold:
        return NoMatch(best_score)
    if len(scored) > 1:
        second_score, second_label = scored[1]
        if second_score >= config.match_threshold and (
                second_score == best_score
                or best_score - second_score < config.ambiguity_margin):
            return Ambiguous((best_label, second_label), (best_score, second_score))
    return Match(best_label, best_score)

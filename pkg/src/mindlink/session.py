"""End-to-end runs: enroll over the link, relay trials, classify both ways, report."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from mindlink.enroll import DEFAULT_REPETITIONS, Template, build_template, z_normalize
from mindlink.errors import ConfigError, MindlinkError
from mindlink.match import Decision, Match, MatchConfig, NoMatch, Ambiguous, classify
from mindlink.neuralnet import NetworkConfig, TrainedNetwork, featurize, predict, train
from mindlink.relay import (LinkParams, LinkPreset, reassemble, segment, stream_info,
                            transmit)
from mindlink.seeding import derive_trial_seed
from mindlink.signal import (DEFAULT_DURATION, DEFAULT_SAMPLE_RATE, ItemKind, SignalTrace,
                             SubjectProfile, VocabularyItem, generate_trace)

NO_MATCH = "NoMatch"
AMBIGUOUS = "Ambiguous"

JOE_ID = 1
JOE_SEED = 0x4A4F45


def joe_profile(**overrides) -> SubjectProfile:
    """Subject 1, JOE, who thinks either YES or NO."""
    fields = dict(subject_id=JOE_ID, seed=JOE_SEED, name="JOE",
                  vocabulary=(VocabularyItem("YES"), VocabularyItem("NO")))
    fields.update(overrides)
    return SubjectProfile(**fields)


@dataclass(frozen=True)
class SessionConfig:
    subjects: tuple[SubjectProfile, ...] = field(default_factory=lambda: (joe_profile(),))
    enrollment_repetitions: int = DEFAULT_REPETITIONS
    noise_sigma: float = 0.5
    link: LinkParams = field(default_factory=lambda: LinkParams.from_preset("satellite"))
    match: MatchConfig = MatchConfig()
    network: NetworkConfig = NetworkConfig()
    trials_per_item: int = 100
    master_seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    duration: float = DEFAULT_DURATION
    enroll_local: bool = False

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if self.trials_per_item < 1:
            raise ConfigError("trials_per_item must be >= 1")
        if self.enrollment_repetitions < 1:
            raise ConfigError("enrollment_repetitions must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not any(len(p.vocabulary) >= 2 for p in self.subjects):
            raise ConfigError("at least one subject needs two or more vocabulary items")
        ids = [p.subject_id for p in self.subjects]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate subject ids: {ids}")

    def to_dict(self) -> dict:
        link = asdict(self.link)
        link["preset"] = self.link.preset.value if self.link.preset else None
        return {
            "subjects": [_profile_to_dict(p) for p in self.subjects],
            "enrollment_repetitions": self.enrollment_repetitions,
            "noise_sigma": self.noise_sigma,
            "link": link,
            "match": asdict(self.match),
            "network": asdict(self.network),
            "trials_per_item": self.trials_per_item,
            "master_seed": self.master_seed,
            "sample_rate": self.sample_rate,
            "duration": self.duration,
            "enroll_local": self.enroll_local,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        """Build from the JSON config layout; unknown keys are rejected."""
        try:
            d = dict(d)
            known = set(cls.__dataclass_fields__)
            unknown = set(d) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            if "subjects" in d:
                d["subjects"] = tuple(_profile_from_dict(p) for p in d["subjects"])
            if "link" in d:
                d["link"] = _link_from_dict(d["link"])
            if "match" in d:
                d["match"] = MatchConfig(**d["match"])
            if "network" in d:
                d["network"] = NetworkConfig(**d["network"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError, MindlinkError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SessionConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)


def _profile_to_dict(p: SubjectProfile) -> dict:
    return {
        "subject_id": p.subject_id, "name": p.name, "seed": p.seed, "channels": p.channels,
        "band": list(p.band), "harmonics": p.harmonics,
        "vocabulary": [{"label": v.label, "kind": v.kind.value} for v in p.vocabulary],
    }


def _profile_from_dict(d: dict) -> SubjectProfile:
    d = dict(d)
    d["vocabulary"] = tuple(
        VocabularyItem(v) if isinstance(v, str) else VocabularyItem(v["label"], ItemKind(v.get("kind", "word")))
        for v in d.get("vocabulary", ()))
    if "band" in d:
        d["band"] = tuple(d["band"])
    return SubjectProfile(**d)


def _link_from_dict(d: dict) -> LinkParams:
    d = dict(d)
    preset = d.pop("preset", None)
    if preset is not None:
        return LinkParams.from_preset(LinkPreset(preset), **d)
    return LinkParams(**d)


@dataclass
class LinkStats:
    frames_sent: int = 0
    frames_delivered: int = 0
    latency_sum_ms: float = 0.0

    @property
    def delivered_fraction(self) -> float:
        return self.frames_delivered / self.frames_sent if self.frames_sent else 0.0

    @property
    def mean_latency_ms(self) -> float | None:
        return self.latency_sum_ms / self.frames_delivered if self.frames_delivered else None

    def add(self, records) -> None:
        for r in records:
            self.frames_sent += 1
            if r.delivered:
                self.frames_delivered += 1
                self.latency_sum_ms += r.latency

    def to_dict(self) -> dict:
        return {"frames_sent": self.frames_sent, "frames_delivered": self.frames_delivered,
                "delivered_fraction": self.delivered_fraction,
                "mean_latency_ms": self.mean_latency_ms}


@dataclass(frozen=True)
class TrialResult:
    label: str
    trial: int
    decision: Decision
    neural_label: str
    neural_probability: float
    frames_sent: int
    frames_delivered: int
    latency_sum_ms: float

    @property
    def template_label(self) -> str:
        if isinstance(self.decision, Match):
            return self.decision.label
        return AMBIGUOUS if isinstance(self.decision, Ambiguous) else NO_MATCH

    def to_dict(self) -> dict:
        return {"item": self.label, "trial": self.trial, "template": self.decision.to_dict(),
                "neural": {"label": self.neural_label, "probability": self.neural_probability},
                "frames_sent": self.frames_sent, "frames_delivered": self.frames_delivered}


@dataclass
class SubjectReport:
    subject_id: int
    name: str
    labels: list[str]
    trials: list[TrialResult]
    enrollment_link: LinkStats
    final_training_loss: float | None = None

    @property
    def template_columns(self) -> list[str]:
        return self.labels + [NO_MATCH, AMBIGUOUS]

    def template_confusion(self) -> dict[str, dict[str, int]]:
        table = {t: dict.fromkeys(self.template_columns, 0) for t in self.labels}
        for r in self.trials:
            table[r.label][r.template_label] += 1
        return table

    def neural_confusion(self) -> dict[str, dict[str, int]]:
        table = {t: dict.fromkeys(self.labels, 0) for t in self.labels}
        for r in self.trials:
            table[r.label][r.neural_label] += 1
        return table

    def _rate(self, pred) -> float:
        return sum(1 for r in self.trials if pred(r)) / len(self.trials) if self.trials else 0.0

    @property
    def template_accuracy(self) -> float:
        return self._rate(lambda r: r.template_label == r.label)

    @property
    def neural_accuracy(self) -> float:
        return self._rate(lambda r: r.neural_label == r.label)

    @property
    def nomatch_rate(self) -> float:
        return self._rate(lambda r: isinstance(r.decision, NoMatch))

    @property
    def ambiguous_rate(self) -> float:
        return self._rate(lambda r: isinstance(r.decision, Ambiguous))

    def trial_link(self) -> LinkStats:
        stats = LinkStats()
        for r in self.trials:
            stats.frames_sent += r.frames_sent
            stats.frames_delivered += r.frames_delivered
            stats.latency_sum_ms += r.latency_sum_ms
        return stats

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id, "name": self.name, "labels": self.labels,
            "template_accuracy": self.template_accuracy,
            "neural_accuracy": self.neural_accuracy,
            "nomatch_rate": self.nomatch_rate, "ambiguous_rate": self.ambiguous_rate,
            "final_training_loss": self.final_training_loss,
            "template_confusion": self.template_confusion(),
            "neural_confusion": self.neural_confusion(),
            "trials": [r.to_dict() for r in self.trials],
        }


@dataclass
class SessionReport:
    subjects: list[SubjectReport]
    config: SessionConfig
    wall_clock_seconds: float = field(default=0.0, compare=False)

    def link_stats(self) -> LinkStats:
        total = LinkStats()
        for s in self.subjects:
            for part in (s.enrollment_link, s.trial_link()):
                total.frames_sent += part.frames_sent
                total.frames_delivered += part.frames_delivered
                total.latency_sum_ms += part.latency_sum_ms
        return total

    def _pooled(self, attr) -> float:
        n = sum(len(s.trials) for s in self.subjects)
        return sum(getattr(s, attr) * len(s.trials) for s in self.subjects) / n if n else 0.0

    @property
    def template_accuracy(self) -> float:
        return self._pooled("template_accuracy")

    @property
    def neural_accuracy(self) -> float:
        return self._pooled("neural_accuracy")

    @property
    def nomatch_rate(self) -> float:
        return self._pooled("nomatch_rate")

    @property
    def ambiguous_rate(self) -> float:
        return self._pooled("ambiguous_rate")

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config.to_dict(),
            "template_accuracy": self.template_accuracy,
            "neural_accuracy": self.neural_accuracy,
            "nomatch_rate": self.nomatch_rate,
            "ambiguous_rate": self.ambiguous_rate,
            "link": self.link_stats().to_dict(),
            "subjects": [s.to_dict() for s in self.subjects],
        }
        if include_timing:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2)


def relay_trace(trace: SignalTrace, subject_id: int, session_id: int,
                link: LinkParams, seed: int):
    """Sensor side z-normalizes and segments; receiver side reassembles.

    Returns the received trace and the delivery records.
    """
    conditioned = z_normalize(trace)
    frames = segment(conditioned, subject_id, session_id)
    records = transmit(frames, link, seed)
    received, _ = reassemble(records, stream_info(conditioned, subject_id, session_id))
    received.label = trace.label
    return received, records


def _with_context(exc: MindlinkError, where: str) -> MindlinkError:
    try:
        return type(exc)(f"{where}: {exc}")
    except TypeError:
        return MindlinkError(f"{where}: {exc}")


def _session_id(config, subject_id, label, index, stage) -> int:
    return derive_trial_seed(config.master_seed, subject_id, label, index, stage + "-session") & 0xFFFFFFFF


def enroll_subject(config: SessionConfig, profile: SubjectProfile):
    """Collect K repetitions per item at the remote side.

    Returns ``(templates, training_samples, link_stats)``.
    """
    templates: list[Template] = []
    samples = []
    stats = LinkStats()
    for item in profile.vocabulary:
        received = []
        for k in range(config.enrollment_repetitions):
            seed = derive_trial_seed(config.master_seed, profile.subject_id, item.label, k, "enroll")
            try:
                trace = generate_trace(profile, item, config.noise_sigma, seed,
                                       config.sample_rate, config.duration)
                if config.enroll_local:
                    rx = z_normalize(trace)
                else:
                    link_seed = derive_trial_seed(config.master_seed, profile.subject_id,
                                                  item.label, k, "enroll-link")
                    rx, records = relay_trace(
                        trace, profile.subject_id,
                        _session_id(config, profile.subject_id, item.label, k, "enroll"),
                        config.link, link_seed)
                    stats.add(records)
            except MindlinkError as exc:
                raise _with_context(exc, f"subject {profile.subject_id}, item {item.label!r}, "
                                         f"enrollment repetition {k}") from exc
            received.append(rx)
            samples.append((featurize(rx), item.label))
        templates.append(build_template(profile.subject_id, item, received))
    return templates, samples, stats


def train_subject(config: SessionConfig, profile: SubjectProfile, samples) -> TrainedNetwork:
    seed = derive_trial_seed(config.master_seed, profile.subject_id, "", config.network.seed,
                             "network")
    return train(samples, replace(config.network, seed=seed))


def run_trial(config: SessionConfig, profile: SubjectProfile, item: VocabularyItem, trial: int,
              templates: list[Template], net: TrainedNetwork) -> TrialResult:
    sid = profile.subject_id
    seed = derive_trial_seed(config.master_seed, sid, item.label, trial, "trial")
    link_seed = derive_trial_seed(config.master_seed, sid, item.label, trial, "trial-link")
    try:
        trace = generate_trace(profile, item, config.noise_sigma, seed,
                               config.sample_rate, config.duration)
        rx, records = relay_trace(trace, sid, _session_id(config, sid, item.label, trial, "trial"),
                                  config.link, link_seed)
        decision = classify(rx, templates, config.match)
        probs = predict(net, featurize(rx))
    except MindlinkError as exc:
        raise _with_context(exc, f"subject {sid}, item {item.label!r}, trial {trial}") from exc
    best = int(np.argmax(probs))
    stats = LinkStats()
    stats.add(records)
    return TrialResult(item.label, trial, decision, net.labels[best], float(probs[best]),
                       stats.frames_sent, stats.frames_delivered, stats.latency_sum_ms)


def run_session(config: SessionConfig, workers: int = 1) -> SessionReport:
    """Run the full pipeline for every subject in ``config``.

    Trials are seeded independently, so ``workers > 1`` gives the same report
    as a serial run.
    """
    start = time.perf_counter()
    reports = []
    for profile in config.subjects:
        if len(profile.vocabulary) < 2:
            continue
        templates, samples, enroll_stats = enroll_subject(config, profile)
        net = train_subject(config, profile, samples)
        tasks = [(item, t) for item in profile.vocabulary for t in range(config.trials_per_item)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                trials = list(pool.map(
                    lambda task: run_trial(config, profile, task[0], task[1], templates, net),
                    tasks))
        else:
            trials = [run_trial(config, profile, item, t, templates, net) for item, t in tasks]
        reports.append(SubjectReport(profile.subject_id, profile.name,
                                     [v.label for v in profile.vocabulary], trials,
                                     enroll_stats, net.final_loss))
    return SessionReport(reports, config, time.perf_counter() - start)

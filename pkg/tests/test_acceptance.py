"""End-to-end exit criteria. Each test prints one PASS/FAIL line in the summary.

Run alone with ``pytest tests/test_acceptance.py``.
"""

import random

import numpy as np
import pytest

from conftest import crc32_bitwise, exhaustive_lag_score
from mindlink.enroll import (Template, TemplateDatabase, enroll_item, load_database,
                             save_database, z_normalize, z_normalize_array)
from mindlink.errors import CorruptTemplate, FrameError
from mindlink.match import MatchConfig, NoMatch, classify, similarity
from mindlink.relay import (QUANT_SCALE, Frame, LinkParams, decode_frame, encode_frame,
                            quantize, reassemble, segment, stream_info, transmit)
from mindlink.seeding import derive_trial_seed
from mindlink.session import SessionConfig, joe_profile, run_session
from mindlink.signal import (SignalTrace, SubjectProfile, VocabularyItem, generate_trace,
                             noise_trace, synth_signature)
from test_neuralnet import finite_difference_check, tiny_problem
from test_relay import HAND_FRAME, random_frame

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}
MASTER_SEED = 20000104
JOE = joe_profile()


def record(number, title, ok, detail):
    RESULTS[number] = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}"
    assert ok, RESULTS[number]


def lossless():
    return LinkParams.from_preset("satellite", loss_probability=0.0)


def test_1_yes_no_discrimination():
    cfg = SessionConfig(subjects=(JOE,), enrollment_repetitions=10, noise_sigma=0.5,
                        link=lossless(), trials_per_item=500, master_seed=MASTER_SEED)
    first = run_session(cfg)
    second = run_session(cfg)
    same = first.to_json(include_timing=False) == second.to_json(include_timing=False)
    n = sum(len(s.trials) for s in first.subjects)
    record(1, "YES/NO discrimination",
           n == 1000 and first.template_accuracy >= 0.99 and first.neural_accuracy >= 0.95
           and same,
           f"{n} trials, template {first.template_accuracy:.4f} (>= 0.99), "
           f"neural {first.neural_accuracy:.4f} (>= 0.95), rerun identical={same}")


def test_2_false_match_control():
    templates = [enroll_item(JOE, item, 10, 0.5, MASTER_SEED) for item in JOE.vocabulary]
    cfg = MatchConfig(match_threshold=0.8)
    nomatch = sum(
        isinstance(classify(noise_trace(JOE.channels, 1.0,
                                        derive_trial_seed(MASTER_SEED, 1, "", i, "noise")),
                            templates, cfg), NoMatch)
        for i in range(1000))
    record(2, "False-match control", nomatch / 1000 >= 0.95,
           f"NoMatch rate {nomatch / 1000:.3f} over 1000 pure-noise traces (>= 0.95)")


def test_3_codec_suite():
    rng = random.Random(MASTER_SEED)
    frames = [random_frame(rng) for _ in range(1000)]
    round_trip = sum(decode_frame(encode_frame(f)) == f for f in frames)
    rejected = 0
    for f in frames:
        blob = bytearray(encode_frame(f))
        blob[rng.randrange(len(blob))] ^= rng.randint(1, 255)
        try:
            decode_frame(bytes(blob))
        except FrameError:
            rejected += 1
    hand = Frame(1, 7, 0, 0, 1, 256, tuple(quantize([0.0001, -0.0001]).tolist()))
    body = HAND_FRAME[:-4]
    hand_ok = (encode_frame(hand) == HAND_FRAME
               and HAND_FRAME[-4:] == crc32_bitwise(body).to_bytes(4, "big"))
    record(3, "Codec suite", round_trip == 1000 and rejected == 1000 and hand_ok,
           f"{round_trip}/1000 round trips, {rejected}/1000 corruptions rejected, "
           f"hand-assembled frame match={hand_ok}")


def test_4_channel_statistics():
    frames = [Frame(1, 1, i % 100, i // 100, 100, 256, (0,)) for i in range(10_000)]
    delivered = sum(r.delivered for r in transmit(frames, LinkParams(0.1), MASTER_SEED))
    sig = synth_signature(JOE, JOE.item("NO"))
    trace = sig.with_samples(0.5 * sig.samples)
    assert np.abs(trace.samples).max() < 32767 * QUANT_SCALE   # inside the int16 range
    recs = transmit(segment(trace, 1, 1), lossless(), MASTER_SEED)
    out, _ = reassemble(recs, stream_info(trace, 1, 1))
    err = float(np.abs(out.samples - trace.samples).max())
    record(4, "Channel statistics", 8923 <= delivered <= 9077 and err <= 0.5 * QUANT_SCALE,
           f"delivered {delivered} in [8923, 9077]; lossless max error {err:.3g} "
           f"(<= {0.5 * QUANT_SCALE:g})")


def test_5_gradient_check():
    worst = finite_difference_check(*tiny_problem(0))
    record(5, "Gradient check", worst < 1e-4,
           f"max relative error {worst:.2e} over F=4, hidden 3, 2 classes (< 1e-4)")


def test_6_normalization_and_matching_invariants():
    rng = np.random.default_rng(MASTER_SEED)
    idem = True
    for _ in range(200):
        x = rng.normal(rng.uniform(-50, 50), rng.uniform(0.01, 100), (3, rng.integers(2, 300)))
        z = z_normalize_array(x)
        idem &= bool(np.allclose(z_normalize_array(z), z, atol=1e-9, rtol=0))
    guard = z_normalize(SignalTrace([[5.0, 5, 5, 5]], 4)).samples.tolist() == [[0.0] * 4]

    templates = [enroll_item(JOE, item, 10, 0.5, MASTER_SEED) for item in JOE.vocabulary]
    affine = True
    for i in range(100):
        item = JOE.vocabulary[i % 2]
        trace = generate_trace(JOE, item, [0.0, 0.5, 1.0, 3.0][i % 4], i)
        a, b = rng.uniform(0.01, 1000), rng.uniform(-1000, 1000)
        moved = trace.with_samples(a * trace.samples + b)
        affine &= classify(moved, templates) == classify(trace, templates)

    oracle = True
    for _ in range(100):
        n = int(rng.integers(4, 65))
        lam = float(rng.choice([0.0, 0.05, 0.1, 0.25]))
        x = rng.normal(size=(2, n + int(rng.integers(0, 4))))
        y = rng.normal(size=(2, n)).astype(np.float32)
        tpl = Template(1, VocabularyItem("A"), 64, y, np.zeros_like(y), 1)
        got = similarity(SignalTrace(x, 64), tpl, MatchConfig(max_lag_fraction=lam))
        want = exhaustive_lag_score(x.tolist(), y.astype(float).tolist(), int(np.floor(lam * n)))
        oracle &= abs(got - want) <= 1e-9
    record(6, "Normalization/matching invariants", idem and guard and affine and oracle,
           f"idempotence={idem}, zero-variance guard={guard}, affine-exact={affine}, "
           f"exhaustive-lag oracle={oracle}")


def test_7_degradation_curve():
    acc = {}
    for p in (0.0, 0.3, 0.6):
        link = LinkParams.from_preset("satellite", loss_probability=p)
        acc[p] = float(np.mean([
            run_session(SessionConfig(link=link, trials_per_item=10,
                                      master_seed=MASTER_SEED + s)).template_accuracy
            for s in range(20)]))
    ok = acc[0.0] >= acc[0.3] >= acc[0.6]
    record(7, "Degradation curve", ok,
           "template accuracy " + ", ".join(f"p={p}: {a:.3f}" for p, a in acc.items())
           + " (non-increasing)")


def test_8_persistence(tmp_path):
    rng = np.random.default_rng(MASTER_SEED)
    db = TemplateDatabase()
    for sid in range(1, 11):
        prof = SubjectProfile(sid, int(rng.integers(2**63)), channels=4,
                              vocabulary=[VocabularyItem(w) for w in ("YES", "NO", "HELP", "STOP")])
        for item in prof.vocabulary:
            db.add(enroll_item(prof, item, 3, 0.5, sid, duration=1.0))
    save_database(db, tmp_path)
    lossless_rt = load_database(tmp_path).subjects == db.subjects
    victim = tmp_path / "7" / "HELP.tpl"
    victim.write_bytes(victim.read_bytes()[:-37])
    try:
        load_database(tmp_path)
        rejected = False
    except CorruptTemplate as exc:
        rejected = "HELP.tpl" in str(exc)
    record(8, "Persistence", lossless_rt and rejected and len(db) == 40,
           f"{len(db)} templates round-trip lossless={lossless_rt}, truncated file "
           f"rejected with CorruptTemplate={rejected}")

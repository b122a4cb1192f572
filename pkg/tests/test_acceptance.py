"""Acceptance criteria A1-A8, each printing one PASS/FAIL line.

A3-A6 share one default-config pipeline run on a freshly rendered 500-utterance
corpus (about an hour on one CPU core). Set WORDPROSODY_ACCEPTANCE_DIR to keep
its checkpoints, logs and report.
"""
import math
import os
import time

import numpy as np
import pytest

from wordprosody import numerics as nx
from wordprosody.align import build_segmentation, length_regulate, pool_word_final
from wordprosody.config import ExperimentConfig, StageSchedule
from wordprosody.dsp import MelConfig, frame_signal
from wordprosody.gradsuite import run_checks
from wordprosody.lingfront import BOUNDARY, PAUSE, PhoneSequence
from wordprosody.synth import SynthSpec, generate_corpus
from wordprosody.train import VARIANTS, run_pipeline
from wordprosody.ttsmodel import Stage1Config, Stage1Model, SymbolTable, make_stage1_batch


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{name}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = os.environ.get("WORDPROSODY_ACCEPTANCE_DIR") or tmp_path_factory.mktemp("acceptance")
    corpus = tmp_path_factory.mktemp("corpus500")
    spec = SynthSpec()
    assert spec.n_utterances >= 500
    generate_corpus(spec, corpus)
    cfg = ExperimentConfig(corpus=str(corpus))
    t0 = time.time()
    res = run_pipeline(cfg, out, variants=VARIANTS, main_variant="EMBED+SYNTAX")
    return res, time.time() - t0


# -- A1 ---------------------------------------------------------------------------------
def test_a1_gradient_integrity(verdict):
    t0 = time.time()
    reports = run_checks(seed=0)
    elapsed = time.time() - t0
    bad = [n for n, r in reports if not r.passed]
    worst = max(r.max_rel_err for _, r in reports)
    verdict("A1", not bad and worst < 1e-4 and elapsed < 60,
            f"{len(reports)} checks, worst rel err {worst:.2e} (< 1e-4), failures {bad or 'none'}, {elapsed:.1f}s (< 60s)")


# -- A2 ---------------------------------------------------------------------------------
def test_a2_decoder_blind_to_input_mel(tiny_utts, verdict):
    rng = np.random.default_rng(2)
    model = Stage1Model(Stage1Config(), SymbolTable([p for u in tiny_utts for p in u.phones.phones]), seed=0)
    for p in model.parameters():
        p.data[...] = p.data + rng.normal(scale=0.05, size=p.shape)
    utts = tiny_utts[:3]
    b = make_stage1_batch([(u.utt_id, u.phones, u.durations, u.seg, u.mel) for u in utts], model.symbols)
    prosody = model.reference_encode(b).data.copy()
    ref = model.forward(b, prosody)["mel"].data.tobytes()
    subs = [np.zeros_like(b.mel), rng.normal(size=b.mel.shape) * 50, b.mel[:, ::-1].copy(), -b.mel]
    same = []
    for s in subs:
        b.mel = s
        same.append(model.forward(b, prosody)["mel"].data.tobytes() == ref)
    verdict("A2", all(same), f"decoder output bit-identical under {sum(same)}/{len(subs)} mel substitutions")


# -- A3-A6 ------------------------------------------------------------------------------
def test_a3_quality_ordering(default_run, verdict):
    res, elapsed = default_run
    a = res.report.aggregate
    ora, camp, nop = a["mel_l1_ORA"], a["mel_l1_CAMP"], a["mel_l1_NOPROS"]
    ok = ora < camp < nop and a["gap_closed"] >= 0.2
    verdict("A3", ok, f"mel L1 ORA={ora:.4f} CAMP={camp:.4f} NOPROS={nop:.4f}, gap closed {a['gap_closed']:.3f} "
                      f"(>= 0.2), {len(res.report.rows)} test utterances, pipeline {elapsed / 60:.1f} min")


def test_a4_disentanglement(default_run, verdict):
    p = default_run[0].report.probes
    r2p, r2e = p["r2_pitch_factor"], p["r2_energy_factor"]
    acc, chance = p["phone_accuracy"], p["phone_chance"]
    ok = r2p >= 0.8 and r2e >= 0.8 and acc <= chance + 0.15
    verdict("A4", ok, f"R2 pitch {r2p:.3f}, energy {r2e:.3f} (>= 0.8 each); first-phone accuracy {acc:.3f} "
                      f"vs chance {chance:.3f} (<= +0.15); {p['n_test_words']} held-out words")


def test_a5_duration_utility(default_run, verdict):
    a = default_run[0].report.aggregate
    w, z = a["dur_l1_ORA"], a["dur_l1_NOPROS"]
    verdict("A5", w < z, f"held-out duration L1 with prosody {w:.4f} < zeroed prosody {z:.4f}")


def test_a6_stage2_beats_mean(default_run, verdict):
    v = default_run[0].variant_huber
    beats = {k: r["huber"] < r["huber_mean"] for k, r in v.items()}
    emb, syn = v["EMBED"]["huber"], v["SYNTAX"]["huber"]
    ok = all(beats.values()) and emb <= syn * 1.02
    detail = ", ".join(f"{k} {r['huber']:.4f} vs mean {r['huber_mean']:.4f}" for k, r in v.items())
    verdict("A6", ok, f"{detail}; EMBED {emb:.4f} <= SYNTAX {syn:.4f} (2% tie allowed)")


# -- A7 ---------------------------------------------------------------------------------
def _segments_by_hand(phones, durs):
    units, cur, t = [], None, 0
    for i, (w, pause, d) in enumerate(zip(phones.word_index, phones.is_pause, durs)):
        key = (w, pause)
        if cur is None or cur["key"] != key:
            cur = {"key": key, "p0": i, "f0": t}
            units.append(cur)
        t += d
        cur["p1"], cur["f1"] = i + 1, t
    return [("pause" if u["key"][1] else "word", u["key"][0], (u["p0"], u["p1"]), (u["f0"], u["f1"])) for u in units]


def test_a7_exactness_suite(verdict):
    rng = np.random.default_rng(7)
    checks = {}

    phones, owner, pause, durs = [], [], [], []
    for w in range(6):
        for _ in range(rng.integers(1, 4)):
            phones.append("a"), owner.append(w), pause.append(False), durs.append(int(rng.integers(1, 5)))
        phones.append(BOUNDARY), owner.append(w), pause.append(False), durs.append(0)
        if w in (1, 3):
            phones.append(PAUSE), owner.append(w), pause.append(True), durs.append(int(rng.integers(0, 4)))
    seq = PhoneSequence(phones, owner, pause)
    seg = build_segmentation(seq, durs)
    checks["segmentation"] = [(u.kind, u.index, u.phone_span, u.frame_span) for u in seg.units] == _segments_by_hand(seq, durs)

    emb = rng.normal(size=(len(durs), 3))
    frames = [emb[i] for i, d in enumerate(durs) for _ in range(d)]
    checks["length_regulate"] = np.array_equal(length_regulate(emb, durs), np.array(frames))

    states = rng.normal(size=(seg.n_frames, 4))
    expect, last = [], 0
    for u in seg.units:
        if u.frame_span[1] > u.frame_span[0]:
            last = u.frame_span[1] - 1
        expect.append(states[last])
    checks["word_final_pooling"] = np.array_equal(pool_word_final(states, seg), np.array(expect))

    cfg = MelConfig()
    ok = True
    for n in (cfg.win, cfg.win + 1, cfg.win + cfg.hop - 1, cfg.win + cfg.hop, 24000, 24317):
        count = sum(1 for s in range(0, n) if s + cfg.win <= n and s % cfg.hop == 0)
        ok &= cfg.n_frames(n) == count == frame_signal(np.zeros(n), cfg).shape[0]
    checks["mel_frame_count"] = ok

    p, t = rng.normal(size=(5, 4)) * 2, rng.normal(size=(5, 4)) * 2
    hub = sum(0.5 * (a - b) ** 2 if abs(a - b) <= 1 else abs(a - b) - 0.5 for a, b in zip(p.ravel(), t.ravel())) / p.size
    l1 = sum(abs(a - b) for a, b in zip(p.ravel(), t.ravel())) / p.size
    checks["huber"] = abs(nx.huber_loss(nx.Tensor(p), t, nx.HuberConfig(1.0)).item() - hub) <= 1e-12
    checks["l1"] = abs(nx.l1_loss(nx.Tensor(p), t).item() - l1) <= 1e-12

    sched = nx.TrainingSchedule(base_lr=1e-3, decay_factor=0.98, decay_interval_steps=2)
    w0 = rng.normal(size=3)
    param = nx.parameter(w0.copy())
    state = nx.AdamState()
    w, m, v = list(w0), [0.0] * 3, [0.0] * 3
    for step in range(1, 6):
        g = rng.normal(size=3)
        nx.adam_step({"w": param}, {"w": g.copy()}, sched, state, step)
        lr = 1e-3 * 0.98 ** ((step - 1) // 2)
        for i in range(3):
            m[i] = 0.9 * m[i] + 0.1 * g[i]
            v[i] = 0.999 * v[i] + 0.001 * g[i] ** 2
            w[i] -= lr * (m[i] / (1 - 0.9 ** step)) / (math.sqrt(v[i] / (1 - 0.999 ** step)) + 1e-8)
    checks["adam"] = np.max(np.abs(param.data - np.array(w))) <= 1e-12
    failed = [k for k, ok in checks.items() if not ok]
    verdict("A7", not failed, f"{len(checks) - len(failed)}/{len(checks)} exact vs brute force; failed: {failed or 'none'}")


# -- A8 ---------------------------------------------------------------------------------
def test_a8_pipeline_determinism(tmp_path, verdict):
    generate_corpus(SynthSpec(n_utterances=80, seed=11), tmp_path / "corpus")
    cfg = ExperimentConfig(corpus=str(tmp_path / "corpus"), seed=5,
                           stage1=StageSchedule(steps=40, eval_interval=20),
                           stage2=StageSchedule(base_lr=1e-4, steps=30, eval_interval=15))
    blobs = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        run_pipeline(cfg, out, variants={"SYNTAX": VARIANTS["SYNTAX"], "EMBED": VARIANTS["EMBED"]})
        blobs.append([(out / "report" / f).read_bytes() for f in ("report.json", "utterances.csv")]
                     + [(out / f).read_bytes() for f in ("stage1.ckpt", "stage2_syntax.ckpt", "stage2_embed.ckpt")])
    same = [a == b for a, b in zip(*blobs)]
    verdict("A8", all(same), f"report.json, utterances.csv and 3 checkpoints byte-identical: {same}")

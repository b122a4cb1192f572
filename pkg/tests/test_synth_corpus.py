import filecmp
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wordprosody.align import BOUNDARY
from wordprosody.corpus import CorpusError, load_corpus, read_latents, split_ids
from wordprosody.dsp import MelConfig, melspectrogram
from wordprosody.lingfront import Frontend
from wordprosody.synth import SynthConfigError, SynthSpec, generate_corpus, read_wav, render, write_wav

FE = Frontend.default()


def test_same_seed_byte_identical(tmp_path):
    spec = SynthSpec(n_utterances=3, seed=11)
    a, b = generate_corpus(spec, tmp_path / "a"), generate_corpus(spec, tmp_path / "b")
    files = sorted(p.name for p in a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert not mismatch and not errors and len(match) == 3 * 4 + 1


def test_durations_sum_to_frames(tiny_utts):
    for u in tiny_utts:
        assert int(u.durations.sum()) == u.n_frames == u.seg.n_frames
        assert len(u.features) == len(u.seg.units)
        assert len(u.latents) == u.seg.n_words


def test_latents_in_range(tiny_utts):
    spec = SynthSpec()
    lat = np.concatenate([u.latents for u in tiny_utts])
    for j, (lo, hi) in enumerate((spec.pitch_range, spec.tempo_range, spec.energy_range)):
        assert lat[:, j].min() >= lo - 1e-6 and lat[:, j].max() <= hi + 1e-6


def _one_word(pitch):
    phones = FE.lexicon["table"]
    durs = [6] * len(phones)
    lat = np.array([[pitch, 1.0, 1.0]])
    sig = render(phones, durs, [0] * len(phones), [False] * len(phones), lat, SynthSpec(), MelConfig())
    return melspectrogram(sig).frames


def test_higher_pitch_factor_raises_dominant_band():
    lo, hi = _one_word(1.0), _one_word(1.5)
    assert np.median(hi.argmax(axis=1)) > np.median(lo.argmax(axis=1))


def test_wav_roundtrip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    write_wav(tmp_path / "x.wav", x, 24000)
    y, sr = read_wav(tmp_path / "x.wav")
    assert sr == 24000 and np.max(np.abs(x - y)) <= 0.5 / 32767 + 1e-12


@pytest.mark.parametrize("kw", [dict(pitch_range=(1.5, 0.7)), dict(n_utterances=0), dict(pause_probability=1.5),
                                dict(tempo_range=(0.0, 1.0))])
def test_spec_validation(kw):
    with pytest.raises(SynthConfigError):
        SynthSpec(**kw)


def test_spec_json_roundtrip(tmp_path):
    spec = SynthSpec(n_utterances=5, seed=3)
    (tmp_path / "s.json").write_text(json.dumps(spec.to_dict()))
    assert SynthSpec.load(tmp_path / "s.json") == spec
    with pytest.raises(SynthConfigError, match="bogus"):
        SynthSpec.from_dict({"bogus": 1})


def test_loader_reports_bad_utterance(tmp_path):
    root = generate_corpus(SynthSpec(n_utterances=2, seed=5), tmp_path / "c")
    p = root / "utt00001.phones.tsv"
    lines = p.read_text().splitlines()
    row = lines[1].split("\t")
    row[1] = str(int(row[1]) + 1)
    p.write_text("\n".join([lines[0], "\t".join(row)] + lines[2:]) + "\n")
    with pytest.raises(CorpusError, match="utt00001"):
        load_corpus(root)
    assert len(load_corpus(root, ids=["utt00000"])) == 1


def test_loader_checks_transcript(tmp_path):
    root = generate_corpus(SynthSpec(n_utterances=1, seed=5), tmp_path / "c")
    (root / "utt00000.txt").write_text("the dog runs.\n")
    with pytest.raises(CorpusError, match="disagrees"):
        load_corpus(root)


def test_missing_corpus_dir(tmp_path):
    with pytest.raises(CorpusError, match="does not exist"):
        load_corpus(tmp_path / "nope")


@given(st.integers(1, 300), st.integers(0, 10))
def test_split_disjoint_and_complete(n, seed):
    ids = [f"u{i:04d}" for i in range(n)]
    s = split_ids(ids, (0.8, 0.1, 0.1), seed)
    allids = s["train"] + s["val"] + s["test"]
    assert sorted(allids) == ids and len(set(allids)) == n
    assert split_ids(list(reversed(ids)), (0.8, 0.1, 0.1), seed) == s


def test_read_latents_header(tmp_path):
    (tmp_path / "x.tsv").write_text("word_index\tpitch\n0\t1\n")
    with pytest.raises(CorpusError):
        read_latents(tmp_path / "x.tsv")


def test_unit_counts_match_corpus_wide(tiny_utts):
    for u in tiny_utts:
        assert len(u.phones.units()) == len(u.seg.units)
        assert all(p != BOUNDARY or d == 0 for p, d in zip(u.phones.phones, u.durations))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wordprosody.align import (
    AlignmentError,
    build_segmentation,
    length_regulate,
    length_regulate_index,
    pool_word_final,
    read_phones_tsv,
    round_durations,
    upsample_unit_to_phone,
    validate_durations,
    word_final_index,
    write_phones_tsv,
)
from wordprosody.lingfront import BOUNDARY, PAUSE, PhoneSequence


def seq(*words, pauses=()):
    """Build a PhoneSequence from per-word phone lists; ``pauses`` lists word ids followed by a pause."""
    phones, owner, pause = [], [], []
    for w, ph in enumerate(words):
        if w > 0:
            phones.append(BOUNDARY)
            owner.append(owner[-1])
            pause.append(pause[-1])
        phones += ph
        owner += [w] * len(ph)
        pause += [False] * len(ph)
        if w in pauses:
            phones.append(PAUSE)
            owner.append(w)
            pause.append(True)
    return PhoneSequence(phones, owner, pause)


@st.composite
def utterances(draw):
    n_words = draw(st.integers(1, 6))
    words = [["a"] * draw(st.integers(1, 4)) for _ in range(n_words)]
    pauses = draw(st.sets(st.integers(0, n_words - 1)))
    s = seq(*words, pauses=pauses)
    durs = [0 if p == BOUNDARY else draw(st.integers(0, 4)) if p == PAUSE else draw(st.integers(1, 5)) for p in s.phones]
    return s, durs


def test_two_words_spans():
    s = seq(["a", "b"], ["c", "d"])
    seg = build_segmentation(s, [2, 3, 0, 1, 4])
    assert [u.frame_span for u in seg.units] == [(0, 5), (5, 10)]
    assert word_final_index(seg).tolist() == [4, 9]


def test_single_word_covers_all():
    seg = build_segmentation(seq(["a", "b", "c"]), [1, 2, 3])
    assert len(seg.units) == 1 and seg.units[0].frame_span == (0, 6)
    states = np.arange(6.0)[:, None]
    assert pool_word_final(states, seg).tolist() == [[5.0]]


def test_zero_frame_pause_kept():
    s = seq(["a"], ["b"], pauses={0})
    seg = build_segmentation(s, [2, 0, 0, 3])
    assert [u.kind for u in seg.units] == ["word", "pause", "word"]
    assert seg.units[1].frame_span == (2, 2)
    # the empty pause reuses the previous unit's final frame
    assert word_final_index(seg).tolist() == [1, 1, 4]


def test_segmentation_errors():
    s = seq(["a"], ["b"])
    with pytest.raises(AlignmentError, match="sum to 4"):
        build_segmentation(s, [1, 0, 3], n_frames=5, utt_id="u1")
    with pytest.raises(AlignmentError, match="3 durations"):
        build_segmentation(seq(["a", "b", "c", "d"]), [1, 1, 1])
    with pytest.raises(AlignmentError, match="zero frames"):
        build_segmentation(s, [0, 0, 3])


def test_validate_durations():
    s = seq(["a"], ["b"], pauses={0})
    validate_durations(s, [1, 0, 0, 1])
    with pytest.raises(AlignmentError, match="boundary"):
        validate_durations(s, [1, 0, 1, 1])
    with pytest.raises(AlignmentError, match="zero duration"):
        validate_durations(s, [0, 0, 0, 1])
    with pytest.raises(AlignmentError, match="negative"):
        validate_durations(s, [1, -1, 0, 1])


def test_length_regulate_examples():
    e = np.array([[1.0], [2.0]])
    assert length_regulate(e, [1, 2]).ravel().tolist() == [1.0, 2.0, 2.0]
    ident = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(length_regulate(ident, [1, 1, 1, 1]), ident)
    with pytest.raises(AlignmentError):
        length_regulate(e, [1])


@given(st.lists(st.integers(0, 6), min_size=1, max_size=15))
def test_length_regulate_brute_force(durs):
    ref = [i for i, d in enumerate(durs) for _ in range(d)]
    assert length_regulate_index(durs).tolist() == ref


@given(utterances())
def test_pooling_matches_group_by_last(u):
    s, durs = u
    seg = build_segmentation(s, durs)
    T = sum(durs)
    states = np.random.default_rng(len(durs)).normal(size=(T, 2))
    frame_unit = []
    for k, unit in enumerate(seg.units):
        frame_unit += [k] * (unit.frame_span[1] - unit.frame_span[0])
    assert len(frame_unit) == T
    # brute force: last frame carrying each unit, or the previous unit's pick when empty
    picks, prev = [], 0
    for k in range(len(seg.units)):
        frames = [t for t, fu in enumerate(frame_unit) if fu == k]
        prev = frames[-1] if frames else prev
        picks.append(prev)
    assert np.array_equal(pool_word_final(states, seg), states[picks])


@given(utterances())
def test_segmentation_partitions(u):
    s, durs = u
    seg = build_segmentation(s, durs)
    assert seg.units[0].phone_span[0] == 0 and seg.units[-1].phone_span[1] == len(s)
    for a, b in zip(seg.units, seg.units[1:]):
        assert a.phone_span[1] == b.phone_span[0] and a.frame_span[1] == b.frame_span[0]
    assert seg.n_words == len(set(s.word_index))
    assert len(seg.units) == len(s.units())


@given(utterances())
def test_upsample_then_pool_constant(u):
    s, durs = u
    seg = build_segmentation(s, durs)
    vec = np.arange(len(seg.units), dtype=float)[:, None] * np.ones((1, 3))
    per_phone = upsample_unit_to_phone(vec, seg)
    assert len(per_phone) == len(s)
    frames = length_regulate(per_phone, durs)
    pooled = pool_word_final(frames, seg)
    nonempty = [k for k, un in enumerate(seg.units) if un.frame_span[1] > un.frame_span[0]]
    assert np.array_equal(pooled[nonempty], vec[nonempty])


def test_upsample_two_phone_word():
    seg = build_segmentation(seq(["a", "b"]), [1, 1])
    v = np.array([[0.5, -1.0]])
    assert upsample_unit_to_phone(v, seg).tolist() == [[0.5, -1.0], [0.5, -1.0]]


def test_round_durations():
    s = seq(["a", "b"], ["c"], pauses={0})
    got = round_durations(np.array([0.2, 2.6, 0.7, 1.4, 3.5]), s)
    assert got.tolist() == [1, 3, 1, 0, 4]


def test_phones_tsv_roundtrip(tmp_path):
    s = seq(["a", "b"], ["c"], pauses={0})
    write_phones_tsv(tmp_path / "u.phones.tsv", s, [1, 2, 3, 0, 4])
    got, durs = read_phones_tsv(tmp_path / "u.phones.tsv")
    assert got == s and durs == [1, 2, 3, 0, 4]


def test_phones_tsv_bad_row(tmp_path):
    p = tmp_path / "x.phones.tsv"
    p.write_text("phone\tduration_frames\tword_index\tis_pause\na\tzz\t0\t0\n")
    with pytest.raises(AlignmentError, match="x.phones.tsv:2"):
        read_phones_tsv(p)

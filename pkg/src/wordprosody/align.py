"""Durations, word/pause segmentation and the phone/frame/unit resampling maps.

The index-building functions are plain numpy; the ``*_index`` outputs are fed
to ``numerics.gather_rows`` inside the models so the same maps are used with
and without gradients.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .lingfront import BOUNDARY, PAUSE, PhoneSequence


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Unit:
    kind: str  # "word" | "pause"
    index: int  # word index (for pauses: the word the pause follows)
    phone_span: tuple[int, int]
    frame_span: tuple[int, int]


@dataclass
class WordSegmentation:
    units: list[Unit]
    n_phones: int
    n_frames: int

    def __len__(self) -> int:
        return len(self.units)

    @property
    def n_words(self) -> int:
        return sum(u.kind == "word" for u in self.units)

    def phone_to_unit(self) -> np.ndarray:
        out = np.empty(self.n_phones, dtype=np.int64)
        for k, u in enumerate(self.units):
            out[u.phone_span[0]:u.phone_span[1]] = k
        return out

    def word_unit_ids(self) -> list[int]:
        return [k for k, u in enumerate(self.units) if u.kind == "word"]


def validate_durations(phones: PhoneSequence, durs: Sequence[int], utt_id: str = "") -> None:
    where = f" in {utt_id}" if utt_id else ""
    if len(durs) != len(phones):
        raise AlignmentError(f"{len(durs)} durations for {len(phones)} phones{where}")
    for i, (p, d) in enumerate(zip(phones.phones, durs)):
        if d < 0:
            raise AlignmentError(f"negative duration at phone {i}{where}")
        if p == BOUNDARY and d != 0:
            raise AlignmentError(f"boundary token at {i} carries {d} frames{where}")
        if p not in (BOUNDARY, PAUSE) and d < 1:
            raise AlignmentError(f"phone {p!r} at {i} has zero duration{where}")


def build_segmentation(phones: PhoneSequence, durs: Sequence[int], n_frames: int | None = None,
                       utt_id: str = "") -> WordSegmentation:
    """Contiguous word and pause units with frame spans from the cumulative durations."""
    durs = [int(d) for d in durs]
    where = f" in {utt_id}" if utt_id else ""
    if len(durs) != len(phones):
        raise AlignmentError(f"{len(durs)} durations for {len(phones)} phones{where}")
    total = sum(durs)
    if n_frames is not None and total != n_frames:
        raise AlignmentError(f"durations sum to {total} frames but the utterance has {n_frames}{where}")
    ends = np.cumsum(durs)
    units: list[Unit] = []
    start = 0
    for i in range(1, len(phones) + 1):
        if i == len(phones) or (phones.word_index[i], phones.is_pause[i]) != (phones.word_index[start], phones.is_pause[start]):
            kind = "pause" if phones.is_pause[start] else "word"
            f0 = int(ends[start - 1]) if start > 0 else 0
            f1 = int(ends[i - 1])
            if kind == "word" and f1 == f0:
                raise AlignmentError(f"word {phones.word_index[start]} spans zero frames{where}")
            units.append(Unit(kind, phones.word_index[start], (start, i), (f0, f1)))
            start = i
    return WordSegmentation(units, len(phones), total)


def length_regulate_index(durs: Sequence[int]) -> np.ndarray:
    """Frame -> phone index map: phone i repeated durs[i] times."""
    durs = np.asarray(durs, dtype=np.int64)
    if np.any(durs < 0):
        raise AlignmentError("negative duration")
    return np.repeat(np.arange(len(durs)), durs)


def length_regulate(embeddings: np.ndarray, durs: Sequence[int]) -> np.ndarray:
    embeddings = np.asarray(embeddings)
    if len(embeddings) != len(durs):
        raise AlignmentError(f"{len(embeddings)} embeddings for {len(durs)} durations")
    return embeddings[length_regulate_index(durs)]


def word_final_index(seg: WordSegmentation) -> np.ndarray:
    """Frame index selected for each unit; empty-span units reuse the previous unit's frame."""
    out = np.empty(len(seg.units), dtype=np.int64)
    prev = 0
    for k, u in enumerate(seg.units):
        f0, f1 = u.frame_span
        if f1 > f0:
            prev = f1 - 1
        out[k] = prev
    return out


def pool_word_final(frame_states: np.ndarray, seg: WordSegmentation) -> np.ndarray:
    frame_states = np.asarray(frame_states)
    if len(frame_states) != seg.n_frames:
        raise AlignmentError(f"{len(frame_states)} frame states for a segmentation of {seg.n_frames} frames")
    return frame_states[word_final_index(seg)]


def upsample_unit_to_phone(unit_vectors: np.ndarray, seg: WordSegmentation) -> np.ndarray:
    unit_vectors = np.asarray(unit_vectors)
    if len(unit_vectors) != len(seg.units):
        raise AlignmentError(f"{len(unit_vectors)} unit vectors for {len(seg.units)} units")
    return unit_vectors[seg.phone_to_unit()]


def round_durations(pred: np.ndarray, phones: PhoneSequence) -> np.ndarray:
    """Inference-time rounding: nearest frame, phones at least 1, boundary tokens 0."""
    d = np.rint(np.asarray(pred, dtype=np.float64)).astype(np.int64)
    d = np.maximum(d, 0)
    for i, p in enumerate(phones.phones):
        if p == BOUNDARY:
            d[i] = 0
        elif p != PAUSE:
            d[i] = max(d[i], 1)
    return d


# -- file ingestion ---------------------------------------------------------------
PHONES_HEADER = ("phone", "duration_frames", "word_index", "is_pause")


def read_phones_tsv(path) -> tuple[PhoneSequence, list[int]]:
    path = Path(path)
    phones, durs, owner, pause = [], [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if tuple(header or ()) != PHONES_HEADER:
            raise AlignmentError(f"{path.name}: expected header {PHONES_HEADER}, got {header}")
        for ln, row in enumerate(reader, 2):
            if len(row) != 4:
                raise AlignmentError(f"{path.name}:{ln}: expected 4 columns")
            try:
                phones.append(row[0])
                durs.append(int(row[1]))
                owner.append(int(row[2]))
                pause.append(row[3] == "1")
            except ValueError as exc:
                raise AlignmentError(f"{path.name}:{ln}: {exc}") from exc
    seq = PhoneSequence(phones, owner, pause)
    validate_durations(seq, durs, path.name)
    return seq, durs


def write_phones_tsv(path, phones: PhoneSequence, durs: Sequence[int]) -> None:
    lines = ["\t".join(PHONES_HEADER)]
    for p, d, w, z in zip(phones.phones, durs, phones.word_index, phones.is_pause):
        lines.append(f"{p}\t{int(d)}\t{w}\t{int(z)}")
    Path(path).write_text("\n".join(lines) + "\n")

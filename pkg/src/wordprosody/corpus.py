"""Corpus directory reader.

Layout per utterance ``<id>``: ``<id>.wav`` (mono 16-bit), ``<id>.phones.tsv``,
``<id>.txt`` and optionally ``<id>.latents.tsv``; plus ``meta.json`` holding the
mel configuration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import AlignmentError, WordSegmentation, build_segmentation, read_phones_tsv
from .dsp import MelConfig, melspectrogram
from .lingfront import ContextFeatureSet, Frontend, PhoneSequence
from .synth import LATENT_NAMES, read_wav


class CorpusError(RuntimeError):
    pass


@dataclass
class Utterance:
    utt_id: str
    text: str
    phones: PhoneSequence
    durations: np.ndarray
    seg: WordSegmentation
    mel: np.ndarray  # T x n_mels, unnormalised log-mel
    features: ContextFeatureSet
    latents: np.ndarray | None = None  # n_words x 3

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]


def read_latents(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split("\t")
    if header != ["word_index", *LATENT_NAMES]:
        raise CorpusError(f"{path}: unexpected latent header {header}")
    rows = [list(map(float, ln.split("\t")[1:])) for ln in lines[1:] if ln.strip()]
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(LATENT_NAMES))


def corpus_mel_config(root) -> MelConfig:
    meta = Path(root) / "meta.json"
    if not meta.exists():
        return MelConfig()
    return MelConfig(**json.loads(meta.read_text())["mel_config"])


def list_ids(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus directory {root} does not exist")
    ids = sorted(p.name[: -len(".phones.tsv")] for p in root.glob("*.phones.tsv"))
    if not ids:
        raise CorpusError(f"no utterances found in {root}")
    return ids


def load_utterance(root, utt_id: str, frontend: Frontend, mel_cfg: MelConfig) -> Utterance:
    root = Path(root)
    phones, durs = read_phones_tsv(root / f"{utt_id}.phones.tsv")
    text = (root / f"{utt_id}.txt").read_text().strip()
    _, text_phones, feats = frontend.analyse(text)
    if text_phones.phones != phones.phones or text_phones.word_index != phones.word_index:
        raise CorpusError(f"{utt_id}: transcript phonemisation disagrees with {utt_id}.phones.tsv")
    signal, sr = read_wav(root / f"{utt_id}.wav")
    if sr != mel_cfg.sample_rate:
        raise CorpusError(f"{utt_id}: sample rate {sr}, expected {mel_cfg.sample_rate}")
    mel = melspectrogram(signal, mel_cfg).frames
    try:
        seg = build_segmentation(phones, durs, n_frames=len(mel), utt_id=utt_id)
    except AlignmentError as exc:
        raise CorpusError(str(exc)) from exc
    if len(seg.units) != len(feats):
        raise CorpusError(f"{utt_id}: {len(seg.units)} audio units vs {len(feats)} text units")
    lat_path = root / f"{utt_id}.latents.tsv"
    latents = read_latents(lat_path) if lat_path.exists() else None
    return Utterance(utt_id, text, phones, np.asarray(durs, dtype=np.int64), seg, mel, feats, latents)


def load_corpus(root, frontend: Frontend | None = None, ids: list[str] | None = None) -> list[Utterance]:
    frontend = frontend or Frontend.default()
    mel_cfg = corpus_mel_config(root)
    ids = ids if ids is not None else list_ids(root)
    errors, out = [], []
    for utt_id in ids:
        try:
            out.append(load_utterance(root, utt_id, frontend, mel_cfg))
        except (CorpusError, AlignmentError, FileNotFoundError, ValueError) as exc:
            errors.append(f"{utt_id}: {exc}")
    if errors:
        raise CorpusError("corpus validation failed:\n  " + "\n  ".join(errors))
    return out


def split_ids(ids: list[str], fractions: tuple[float, float, float], seed: int) -> dict[str, list[str]]:
    """Disjoint train/val/test id lists from a seeded permutation."""
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise CorpusError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    ids = sorted(ids)
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(fractions[0] * len(ids)))
    n_val = int(round(fractions[1] * len(ids)))
    order = [ids[i] for i in perm]
    return {
        "train": sorted(order[:n_train]),
        "val": sorted(order[n_train:n_train + n_val]),
        "test": sorted(order[n_train + n_val:]),
    }

"""Synthetic corpus with known word-level prosody.

Sentences come from a small grammar over the bundled lexicon. Each word gets
three latents (pitch, tempo, energy factors) built from text-derived terms
(word class, position, punctuation, compounds) plus Gaussian noise, then
clipped to the documented ranges. The text-derived part is what a context
model can learn to predict; the noise is only recoverable from audio. No term
depends on the word's spelling, so prosody carries no lexical fingerprint.

Audio is additive harmonics: phone p in word w sounds at f0 = base_f0 *
pitch(w), with the phone's harmonic amplitude profile scaled by energy(w), for
round(base_len(p) * tempo(w)) frames. Pauses are digital silence.
"""
from __future__ import annotations

import hashlib
import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .align import write_phones_tsv
from .dsp import MelConfig
from .lingfront import (
    BOUNDARY,
    CLOSED_CLASS_TAGS,
    PAUSE,
    Lexicon,
    LexiconTagger,
    PhoneSequence,
    compound_flags,
    phonemize,
    tokenize,
)

LATENT_NAMES = ("pitch_factor", "tempo_factor", "energy_factor")


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_utterances: int = 500
    words_per_utterance: tuple[int, int] = (3, 8)
    phones_per_word: tuple[int, int] = (1, 7)
    pitch_range: tuple[float, float] = (0.7, 1.5)
    tempo_range: tuple[float, float] = (0.6, 1.7)
    energy_range: tuple[float, float] = (0.5, 1.6)
    latent_noise: tuple[float, float, float] = (0.04, 0.05, 0.10)
    pause_probability: float = 0.3
    zero_pause_probability: float = 0.15
    base_f0: float = 140.0
    n_harmonics: int = 24
    amplitude: float = 0.45
    seed: int = 1234

    def __post_init__(self):
        for name in ("words_per_utterance", "phones_per_word", "pitch_range", "tempo_range", "energy_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SynthConfigError(f"{name} range is inverted: ({lo}, {hi})")
            if lo <= 0:
                raise SynthConfigError(f"{name} must be positive, got ({lo}, {hi})")
        if self.n_utterances < 1:
            raise SynthConfigError("n_utterances must be >= 1")
        for name in ("pause_probability", "zero_pause_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise SynthConfigError(f"{name} must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SynthConfigError(f"unknown SynthSpec keys: {unknown}")
        conv = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**conv)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


# -- phone inventory ------------------------------------------------------------------
VOWELS = frozenset("aeiou")


@dataclass(frozen=True)
class PhoneTimbre:
    harmonics: np.ndarray = field(compare=False)  # relative amplitude per harmonic, sums to 1
    base_len: int = 4  # frames at tempo 1


def _seeded(*parts) -> np.random.Generator:
    key = "/".join(str(p) for p in parts).encode()
    return np.random.default_rng(int.from_bytes(hashlib.sha256(key).digest()[:8], "little"))


def phone_timbre(phone: str, n_harmonics: int) -> PhoneTimbre:
    rng = _seeded("timbre", phone)
    k = np.arange(1, n_harmonics + 1)
    amps = rng.uniform(0.05, 0.9, size=n_harmonics) * k ** -0.7
    amps[0] = 1.0  # fundamental dominates for every phone
    amps /= amps.sum()
    base_len = int(rng.integers(4, 7)) if phone in VOWELS else int(rng.integers(2, 4))
    return PhoneTimbre(amps, base_len)


# -- text --------------------------------------------------------------------------
class Grammar:
    """Tiny phrase-structure grammar over the tagger lexicon."""

    def __init__(self, tag_table: dict[str, str], lexicon: Lexicon, phones_per_word: tuple[int, int]):
        lo, hi = phones_per_word
        self.by_tag: dict[str, list[str]] = {}
        for w, t in sorted(tag_table.items()):
            if w in lexicon and lo <= len(lexicon[w]) <= hi:
                self.by_tag.setdefault(t, []).append(w)

    def _pick(self, rng, tag):
        ws = self.by_tag.get(tag)
        if not ws:
            raise SynthConfigError(f"no lexicon words with tag {tag} in the phones_per_word range")
        return ws[int(rng.integers(len(ws)))]

    def noun_phrase(self, rng) -> list[str]:
        r = rng.random()
        if r < 0.15:
            return [self._pick(rng, "PRP")]
        if r < 0.25:
            return [self._pick(rng, "NNP")]
        det = self._pick(rng, "PRP$") if rng.random() < 0.25 else self._pick(rng, "DT")
        out = [det]
        if rng.random() < 0.4:
            out.append(self._pick(rng, "JJ"))
        if rng.random() < 0.3:
            out.append(self._pick(rng, "NN"))  # compound modifier
        out.append(self._pick(rng, "NNS" if rng.random() < 0.3 else "NN"))
        return out

    def clause(self, rng) -> list[str]:
        subj = self.noun_phrase(rng)
        r = rng.random()
        if r < 0.35:
            vp = [self._pick(rng, "VBZ")] + self.noun_phrase(rng)
        elif r < 0.6:
            vp = [self._pick(rng, "VBD")] + self.noun_phrase(rng)
        elif r < 0.8:
            vp = [self._pick(rng, "MD"), self._pick(rng, "VB")] + self.noun_phrase(rng)
        else:
            vp = [self._pick(rng, "VBZ"), self._pick(rng, "RB")]
        if rng.random() < 0.3:
            vp += [self._pick(rng, "IN")] + self.noun_phrase(rng)
        return subj + vp

    def question(self, rng) -> list[str]:
        return [self._pick(rng, "WRB"), self._pick(rng, "MD"), self._pick(rng, "PRP"),
                self._pick(rng, "VB")] + self.noun_phrase(rng)

    def sentence(self, rng, pause_probability: float) -> str:
        if rng.random() < 0.2:
            words = self.question(rng)
            text = " ".join(words) + "?"
            return text[0].upper() + text[1:]
        words = self.clause(rng)
        if rng.random() < pause_probability:
            words[-1] += ","
            words += [self._pick(rng, "CC")] + self.clause(rng)
        text = " ".join(words) + "."
        return text[0].upper() + text[1:]


# -- latents -------------------------------------------------------------------------
def expected_latents(words: list[str], tags: list[str], punct: list[str | None]) -> np.ndarray:
    """Text-determined component of the latents, n_words x 3."""
    n = len(words)
    comp = compound_flags(tags)
    out = np.ones((n, 3))
    for i, t in enumerate(tags):
        pos = i / (n - 1) if n > 1 else 0.0
        openc = t not in CLOSED_CLASS_TAGS
        pre_pause = punct[i] is not None
        compound_head = comp[i] == 1 and (i + 1 < n and comp[i + 1] == 1)
        pitch = 1.0 + 0.12 * (0.5 - pos) + (0.06 if openc else -0.06)
        if compound_head:
            pitch += 0.05
        if pre_pause:
            p = punct[i]
            pitch += 0.25 if "?" in p else (-0.08 if "." in p else 0.10)
        tempo = 1.0 + (0.10 if openc else -0.15) + (0.30 if pre_pause else 0.0)
        energy = 1.0 + (0.18 if openc else -0.18) + (0.12 if i == 0 else 0.0) - 0.12 * pos
        if comp[i]:
            energy += 0.08
        out[i] = (pitch, tempo, energy)
    return out


# -- corpus generation -----------------------------------------------------------------
@dataclass
class GeneratedUtterance:
    utt_id: str
    text: str
    phones: list[str]
    durations: list[int]
    word_index: list[int]
    is_pause: list[bool]
    latents: np.ndarray  # n_words x 3
    signal: np.ndarray  # float in [-1, 1]


def utterance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate_utterance(spec: SynthSpec, index: int, grammar: Grammar, lexicon: Lexicon,
                       tagger: LexiconTagger, mel: MelConfig) -> GeneratedUtterance:
    rng = utterance_rng(spec.seed, index)
    lo, hi = spec.words_per_utterance
    for _ in range(200):
        text = grammar.sentence(rng, spec.pause_probability)
        tokens = tokenize(text)
        if lo <= len(tokens) <= hi:
            break
    else:
        raise SynthConfigError(f"grammar cannot produce {lo}-{hi} word sentences")
    words = [t.text for t in tokens]
    tags = tagger.tag(words)
    punct = [t.trailing_punctuation for t in tokens]
    ranges = np.array([spec.pitch_range, spec.tempo_range, spec.energy_range])
    latents = expected_latents(words, tags, punct) + rng.normal(0.0, 1.0, size=(len(words), 3)) * np.asarray(spec.latent_noise)
    latents = np.clip(latents, ranges[:, 0], ranges[:, 1])

    seq = phonemize(tokens, lexicon)
    durs: list[int] = []
    for p, w, is_p in zip(seq.phones, seq.word_index, seq.is_pause):
        if p == BOUNDARY:
            durs.append(0)
        elif p == PAUSE:
            final = w == len(words) - 1
            if not final and rng.random() < spec.zero_pause_probability:
                durs.append(0)
            else:
                durs.append(int(rng.integers(3, 9)))
        else:
            base = phone_timbre(p, spec.n_harmonics).base_len
            durs.append(max(1, int(round(base * latents[w, 1]))))

    signal = render(seq.phones, durs, seq.word_index, seq.is_pause, latents, spec, mel)
    return GeneratedUtterance(f"utt{index:05d}", text, seq.phones, durs, seq.word_index, seq.is_pause, latents, signal)


def render(phones, durs, word_index, is_pause, latents, spec: SynthSpec, mel: MelConfig) -> np.ndarray:
    """Waveform whose mel frames line up with ``durs`` (frame t centred on hop block t)."""
    T = int(sum(durs))
    lead = (mel.win - mel.hop) // 2
    n = mel.n_samples_for(T)
    # sample -> content position -> phone owning that hop block
    pos = np.clip(np.arange(n) - lead, 0, T * mel.hop - 1)
    frame_of = pos // mel.hop
    phone_of_frame = np.repeat(np.arange(len(durs)), durs)
    ph = phone_of_frame[frame_of]
    voiced = np.array([not is_pause[i] for i in ph])
    f0 = np.array([spec.base_f0 * latents[word_index[i], 0] for i in ph])
    amp = np.array([spec.amplitude * latents[word_index[i], 2] for i in ph])
    phase = 2.0 * np.pi * np.cumsum(f0) / mel.sample_rate
    out = np.zeros(n)
    timbres = {p: phone_timbre(p, spec.n_harmonics).harmonics for p in set(phones) if p not in (BOUNDARY, PAUSE)}
    prof = np.zeros((n, spec.n_harmonics))
    for i, p in enumerate(phones):
        if p in timbres:
            prof[ph == i] = timbres[p]
    nyq = mel.sample_rate / 2
    for k in range(1, spec.n_harmonics + 1):
        alive = (k * f0 < nyq * 0.95) & voiced
        out += np.where(alive, prof[:, k - 1] * np.sin(k * phase), 0.0)
    return out * amp * voiced


def to_pcm16(signal: np.ndarray) -> np.ndarray:
    return np.clip(np.round(signal * 32767.0), -32768, 32767).astype("<i2")


def write_wav(path, signal: np.ndarray, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(to_pcm16(signal).tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        sr = w.getframerate()
        raw = w.readframes(w.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0, sr


def generate_corpus(spec: SynthSpec, out_dir, mel: MelConfig = MelConfig(), lexicon: Lexicon | None = None,
                    tagger: LexiconTagger | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lexicon = lexicon or Lexicon.load()
    tagger = tagger or LexiconTagger.load()
    grammar = Grammar(tagger.table, lexicon, spec.phones_per_word)
    ids = []
    for i in range(spec.n_utterances):
        u = generate_utterance(spec, i, grammar, lexicon, tagger, mel)
        write_wav(out / f"{u.utt_id}.wav", u.signal, mel.sample_rate)
        write_phones_tsv(out / f"{u.utt_id}.phones.tsv", PhoneSequence(u.phones, u.word_index, u.is_pause), u.durations)
        (out / f"{u.utt_id}.txt").write_text(u.text + "\n")
        lines = ["word_index\t" + "\t".join(LATENT_NAMES)]
        lines += [f"{w}\t" + "\t".join(f"{v:.6f}" for v in row) for w, row in enumerate(u.latents)]
        (out / f"{u.utt_id}.latents.tsv").write_text("\n".join(lines) + "\n")
        ids.append(u.utt_id)
    meta = {"mel_config": mel.to_dict(), "synth_spec": spec.to_dict(), "utterances": ids}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


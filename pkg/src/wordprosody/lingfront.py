"""Text frontend: tokenisation, phonemisation, POS tags and word-level context features."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

PUNCTUATION = ".,!?;:"
BOUNDARY = "#"
PAUSE = "sil"
SERVICE_TOKENS = (BOUNDARY, PAUSE)

PTB_TAGS = (
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "#", "$",
)
PAUSE_TAG = "PAUSE"
TAGSET = PTB_TAGS + (PAUSE_TAG,)
TAG_ID = {t: i for i, t in enumerate(TAGSET)}
PUNCT_TAGS = {".", ",", ":", "``", "''", "-LRB-", "-RRB-", "#", "$"}
CLOSED_CLASS_TAGS = frozenset(
    {"DT", "IN", "CC", "TO", "PRP", "PRP$", "WDT", "WP", "MD", "POS", "EX", "UH", "RP", "PDT", "WRB"}
    | PUNCT_TAGS | {PAUSE_TAG})
NOUN_TAGS = frozenset({"NN", "NNS", "NNP", "NNPS"})


class FrontendError(ValueError):
    pass


class OOVError(FrontendError):
    def __init__(self, words):
        self.words = list(words)
        super().__init__(f"words not in lexicon: {', '.join(self.words)}")


@dataclass(frozen=True)
class Token:
    text: str
    trailing_punctuation: str | None
    index: int


@dataclass
class PhoneSequence:
    """Phones and service tokens with their owning unit.

    ``word_index[i]`` is the word an entry belongs to; for pause entries it is
    the word the pause follows. A boundary token inherits the owner of the entry
    right before it, so every entry falls in exactly one word or pause unit.
    """
    phones: list[str]
    word_index: list[int]
    is_pause: list[bool]

    def __len__(self) -> int:
        return len(self.phones)

    def units(self) -> list[tuple[str, int]]:
        """Ordered unit inventory as (kind, word_index) pairs."""
        out: list[tuple[str, int]] = []
        for w, p in zip(self.word_index, self.is_pause):
            key = ("pause" if p else "word", w)
            if not out or out[-1] != key:
                out.append(key)
        return out


@dataclass
class ContextFeatureSet:
    """Per-unit context streams; pause units carry the PAUSE tag and a zero embedding."""
    pos: list[str]
    word_class: list[int]  # 1 = open, 0 = closed
    compound: list[int]
    punct: list[int]
    embedding: np.ndarray  # n_units x E
    is_pause: list[bool] = field(default_factory=list)
    words: list[str] = field(default_factory=list)  # "" for pause units

    def __len__(self) -> int:
        return len(self.pos)


# -- resources -------------------------------------------------------------------
def _read_tsv(path: Path | None, default: str) -> list[list[str]]:
    if path is None:
        text = resources.files("wordprosody.data").joinpath(default).read_text()
    else:
        text = Path(path).read_text()
    rows = []
    for ln, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FrontendError(f"{path or default}:{ln}: expected 2 tab-separated fields")
        rows.append(parts)
    return rows


class Lexicon:
    def __init__(self, entries: dict[str, list[str]]):
        self.entries = entries

    @classmethod
    def load(cls, path=None) -> "Lexicon":
        return cls({w.lower(): p.split() for w, p in _read_tsv(path, "lexicon.tsv")})

    @property
    def phone_inventory(self) -> list[str]:
        return sorted({p for ps in self.entries.values() for p in ps})

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __getitem__(self, word: str) -> list[str]:
        return self.entries[word.lower()]


class Tagger(Protocol):
    def tag(self, words: Sequence[str]) -> list[str]: ...


class LexiconTagger:
    """Lookup tagger with suffix fallbacks; unknown words default to NN."""

    SUFFIX_RULES = (("ly", "RB"), ("ing", "VBG"), ("ed", "VBD"), ("ous", "JJ"), ("ful", "JJ"), ("s", "NNS"))

    def __init__(self, table: dict[str, str]):
        self.table = table
        self.unknown = Counter()

    @classmethod
    def load(cls, path=None) -> "LexiconTagger":
        return cls({w.lower(): t for w, t in _read_tsv(path, "tagger.tsv")})

    def tag(self, words: Sequence[str]) -> list[str]:
        tags = []
        for w in words:
            lw = w.lower()
            if lw in self.table:
                tags.append(self.table[lw])
                continue
            self.unknown[lw] += 1
            if w[:1].isupper() and len(tags) > 0:
                tags.append("NNP")
                continue
            for suf, t in self.SUFFIX_RULES:
                if lw.endswith(suf) and len(lw) > len(suf) + 2:
                    # suffix rules only fire for words that look inflected
                    tags.append(t)
                    break
            else:
                tags.append("NN")
        return tags


class EmbeddingProvider(Protocol):
    dim: int

    def subword_vectors(self, token: str) -> np.ndarray: ...


class HashEmbedding:
    """Deterministic stand-in for a pretrained contextual encoder.

    Each lower-cased token is split into fixed-size pieces and each piece gets
    a vector seeded from its SHA-256 digest, so the same token always maps to
    the same vectors. The prosody predictor fine-tunes a piece table
    initialised from these vectors.
    """

    def __init__(self, dim: int = 32, piece_len: int = 4, scale: float = 0.5):
        self.dim = dim
        self.piece_len = piece_len
        self.scale = scale

    def pieces(self, token: str) -> list[str]:
        t = token.lower()
        return [t[i:i + self.piece_len] for i in range(0, len(t), self.piece_len)] or [t]

    def piece_vector(self, piece: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(piece.encode("utf-8")).digest()[:8], "little")
        return np.random.default_rng(seed).normal(0.0, self.scale, size=self.dim)

    def subword_vectors(self, token: str) -> np.ndarray:
        return np.stack([self.piece_vector(p) for p in self.pieces(token)])


# -- operations ------------------------------------------------------------------
def tokenize(text: str) -> list[Token]:
    parts = text.split()
    if not parts:
        raise FrontendError("cannot tokenize empty text")
    tokens = []
    for raw in parts:
        word = raw.rstrip(PUNCTUATION)
        punct = raw[len(word):] or None
        if not word:
            # stray punctuation attaches to the previous token
            if tokens:
                prev = tokens[-1]
                tokens[-1] = Token(prev.text, (prev.trailing_punctuation or "") + raw, prev.index)
            continue
        tokens.append(Token(word, punct, len(tokens)))
    if not tokens:
        raise FrontendError(f"no words in text {text!r}")
    return tokens


def phonemize(tokens: Sequence[Token], lexicon: Lexicon) -> PhoneSequence:
    oov = [t.text for t in tokens if t.text not in lexicon]
    if oov:
        raise OOVError(oov)
    phones: list[str] = []
    owner: list[int] = []
    pause: list[bool] = []
    for k, tok in enumerate(tokens):
        if k > 0:
            phones.append(BOUNDARY)
            owner.append(owner[-1])
            pause.append(pause[-1])
        for p in lexicon[tok.text]:
            phones.append(p)
            owner.append(tok.index)
            pause.append(False)
        if tok.trailing_punctuation:
            phones.append(PAUSE)
            owner.append(tok.index)
            pause.append(True)
    return PhoneSequence(phones, owner, pause)


def pos_tag(tokens: Sequence[Token], tagger: Tagger) -> list[str]:
    return list(tagger.tag([t.text for t in tokens]))


def embed_words(tokens: Sequence[Token], provider: EmbeddingProvider) -> np.ndarray:
    """One vector per token: mean of the provider's subword vectors."""
    out = np.zeros((len(tokens), provider.dim))
    for i, tok in enumerate(tokens):
        try:
            vecs = np.asarray(provider.subword_vectors(tok.text), dtype=np.float64)
        except Exception as exc:
            raise FrontendError(f"embedding provider failed on token {i} ({tok.text!r}): {exc}") from exc
        if vecs.ndim != 2 or vecs.shape[1] != provider.dim or len(vecs) == 0:
            raise FrontendError(f"embedding provider returned shape {vecs.shape} for token {i} ({tok.text!r})")
        out[i] = vecs.mean(axis=0)
    return out


def compound_flags(tags: Sequence[str]) -> list[int]:
    flags = [0] * len(tags)
    i = 0
    while i < len(tags):
        if tags[i] in NOUN_TAGS:
            j = i
            while j < len(tags) and tags[j] in NOUN_TAGS:
                j += 1
            if j - i >= 2:
                flags[i:j] = [1] * (j - i)
            i = j
        else:
            i += 1
    return flags


def context_features(tokens: Sequence[Token], tags: Sequence[str], embedder: EmbeddingProvider) -> ContextFeatureSet:
    """Word-level features expanded to the unit inventory (a pause unit follows each punctuated word)."""
    if len(tags) != len(tokens):
        raise FrontendError(f"{len(tokens)} tokens but {len(tags)} tags")
    emb = embed_words(tokens, embedder)
    comp = compound_flags(tags)
    pos, cls, cmp_, pun, vecs, is_pause, words = [], [], [], [], [], [], []
    for tok, tag, c, e in zip(tokens, tags, comp, emb):
        pos.append(tag)
        cls.append(0 if tag in CLOSED_CLASS_TAGS else 1)
        cmp_.append(c)
        pun.append(1 if tok.trailing_punctuation else 0)
        vecs.append(e)
        is_pause.append(False)
        words.append(tok.text.lower())
        if tok.trailing_punctuation:
            pos.append(PAUSE_TAG)
            cls.append(0)
            cmp_.append(0)
            pun.append(1)
            vecs.append(np.zeros(embedder.dim))
            is_pause.append(True)
            words.append("")
    return ContextFeatureSet(pos, cls, cmp_, pun, np.stack(vecs), is_pause, words)


@dataclass
class Frontend:
    """Bundled resources plus the text-to-features pipeline."""
    lexicon: Lexicon
    tagger: Tagger
    embedder: EmbeddingProvider

    @classmethod
    def default(cls) -> "Frontend":
        return cls(Lexicon.load(), LexiconTagger.load(), HashEmbedding())

    def analyse(self, text: str) -> tuple[list[Token], PhoneSequence, ContextFeatureSet]:
        tokens = tokenize(text)
        phones = phonemize(tokens, self.lexicon)
        feats = context_features(tokens, pos_tag(tokens, self.tagger), self.embedder)
        return tokens, phones, feats

"""Stage-2: context encoders and the autoregressive word-level prosody predictor.

Every categorical context stream is one-hot encoded per unit and passed through
its own encoder (2 convolutions + BiLSTM); the embedding stream pools a
fine-tunable subword table per word first. The predictor is a unidirectional
LSTM whose input at unit t is the concatenated context vector and the previous
prosody row (ground truth under teacher forcing, its own output when free
running). Targets live in a per-dimension standardised space.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .lingfront import TAG_ID, TAGSET, ContextFeatureSet, HashEmbedding
from .numerics import Module, Tensor
from .ttsmodel import BiLSTM, ConvStack, Dense

STREAMS = ("pos", "class", "compound", "punct", "embed")
SYNTAX_STREAMS = ("pos", "class", "compound", "punct")


class Stage2Error(RuntimeError):
    pass


def parse_streams(spec: str | tuple[str, ...]) -> tuple[str, ...]:
    names = [s.strip() for s in spec.split(",")] if isinstance(spec, str) else list(spec)
    names = [n for n in names if n]
    bad = [n for n in names if n not in STREAMS]
    if bad or not names:
        raise ValueError(f"unknown or empty stream list {names!r}; choose from {','.join(STREAMS)}")
    return tuple(n for n in STREAMS if n in names)


@dataclass(frozen=True)
class Stage2Config:
    streams: tuple[str, ...] = STREAMS
    conv_layers: int = 2
    kernel: int = 3
    channels: int = 32
    lstm_hidden: int = 32
    embed_dim: int = 32
    predictor_hidden: int = 64

    def __post_init__(self):
        object.__setattr__(self, "streams", parse_streams(self.streams))

    @property
    def context_dim(self) -> int:
        return 2 * self.lstm_hidden * len(self.streams)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["streams"] = list(self.streams)
        return d


def stream_width(name: str, cfg: Stage2Config) -> int:
    return {"pos": len(TAGSET), "class": 2, "compound": 2, "punct": 2, "embed": cfg.embed_dim}[name]


@dataclass
class Stage2Batch:
    utt_ids: list[str]
    unit_mask: np.ndarray  # B,U
    onehots: dict[str, np.ndarray]  # name -> B,U,width
    piece_idx: np.ndarray  # B,U,K into concat(table, extra)
    piece_w: np.ndarray  # B,U,K pooling weights (rows sum to 1 for words, 0 for pauses)
    extra: np.ndarray  # X,E frozen hash vectors for pieces outside the table
    targets: np.ndarray | None  # B,U,D standardised

    @property
    def size(self) -> int:
        return len(self.utt_ids)


class PieceVocab:
    def __init__(self, pieces, embedder: HashEmbedding):
        self.pieces = sorted(set(pieces))
        self.index = {p: i for i, p in enumerate(self.pieces)}
        self.embedder = embedder

    def initial_table(self) -> np.ndarray:
        if not self.pieces:
            return np.zeros((0, self.embedder.dim))
        return np.stack([self.embedder.piece_vector(p) for p in self.pieces])


def make_stage2_batch(items, vocab: PieceVocab, target_mean=None, target_std=None) -> Stage2Batch:
    """Pad ``(utt_id, ContextFeatureSet, oracle_rows_or_None)`` tuples."""
    B = len(items)
    U = max(len(f) for _, f, _ in items)
    emb = vocab.embedder
    word_pieces = [[emb.pieces(w) if w else [] for w in f.words] for _, f, _ in items]
    K = max(1, max((len(p) for wp in word_pieces for p in wp), default=1))
    unit_mask = np.zeros((B, U))
    pos = np.zeros((B, U, len(TAGSET)))
    two = {k: np.zeros((B, U, 2)) for k in ("class", "compound", "punct")}
    piece_idx = np.zeros((B, U, K), dtype=np.int64)
    piece_w = np.zeros((B, U, K))
    extra_index: dict[str, int] = {}
    extra_rows: list[np.ndarray] = []
    n_table = len(vocab.pieces)
    has_t = all(t is not None for _, _, t in items)
    targets = None
    if has_t:
        D = items[0][2].shape[1]
        targets = np.zeros((B, U, D))
    for b, (utt_id, f, t) in enumerate(items):
        n = len(f)
        if not (len(f.word_class) == len(f.compound) == len(f.punct) == len(f.embedding) == n):
            raise Stage2Error(f"{utt_id}: context streams disagree in length "
                              f"(pos={n}, class={len(f.word_class)}, compound={len(f.compound)}, "
                              f"punct={len(f.punct)}, embed={len(f.embedding)})")
        unit_mask[b, :n] = 1
        for u in range(n):
            pos[b, u, TAG_ID[f.pos[u]]] = 1
            two["class"][b, u, f.word_class[u]] = 1
            two["compound"][b, u, f.compound[u]] = 1
            two["punct"][b, u, f.punct[u]] = 1
            ps = word_pieces[b][u]
            for k, p in enumerate(ps):
                if p in vocab.index:
                    piece_idx[b, u, k] = vocab.index[p]
                else:
                    if p not in extra_index:
                        extra_index[p] = len(extra_rows)
                        extra_rows.append(emb.piece_vector(p))
                    piece_idx[b, u, k] = n_table + extra_index[p]
                piece_w[b, u, k] = 1.0 / len(ps)
        if has_t:
            if len(t) != n:
                raise Stage2Error(f"{utt_id}: {len(t)} oracle rows for {n} context units")
            targets[b, :n] = t if target_mean is None else (t - target_mean) / target_std
    extra = np.stack(extra_rows) if extra_rows else np.zeros((0, emb.dim))
    onehots = {"pos": pos, **two}
    return Stage2Batch([it[0] for it in items], unit_mask, onehots, piece_idx, piece_w, extra, targets)


class ContextEncoder(Module):
    def __init__(self, rng, in_dim: int, cfg: Stage2Config, name: str):
        self.convs = ConvStack(rng, in_dim, cfg.channels, cfg.kernel, cfg.conv_layers, f"{name}.conv")
        self.lstm = BiLSTM(rng, cfg.channels, cfg.lstm_hidden, f"{name}.lstm")

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        return self.lstm(self.convs(x, mask), mask) * mask[..., None]


class Stage2Model(Module):
    def __init__(self, cfg: Stage2Config, prosody_dim: int, vocab: PieceVocab, seed: int = 0):
        rng = np.random.default_rng(seed)
        self._cfg = cfg
        self._vocab = vocab
        self._prosody_dim = prosody_dim
        self.encoders = {name: ContextEncoder(rng, stream_width(name, cfg), cfg, f"ctx.{name}") for name in cfg.streams}
        if "embed" in cfg.streams:
            self.piece_table = nx.parameter(vocab.initial_table(), name="piece_table")
        in_dim = cfg.context_dim + prosody_dim
        self.rnn = nx.init_lstm(rng, in_dim, cfg.predictor_hidden, "pred.lstm")
        self.out = Dense(rng, cfg.predictor_hidden, prosody_dim, "pred.out")
        self.start = nx.parameter(np.zeros(prosody_dim), name="pred.start")
        self._target_mean = np.zeros(prosody_dim)
        self._target_std = np.ones(prosody_dim)

    @property
    def cfg(self) -> Stage2Config:
        return self._cfg

    @property
    def vocab(self) -> PieceVocab:
        return self._vocab

    @property
    def prosody_dim(self) -> int:
        return self._prosody_dim

    def set_target_stats(self, mean, std) -> None:
        self._target_mean = np.asarray(mean, dtype=np.float64)
        self._target_std = np.asarray(std, dtype=np.float64)

    @property
    def target_stats(self) -> tuple[np.ndarray, np.ndarray]:
        return self._target_mean, self._target_std

    def batch(self, items) -> Stage2Batch:
        return make_stage2_batch(items, self._vocab, self._target_mean, self._target_std)

    def pooled_embeddings(self, batch: Stage2Batch) -> Tensor:
        table = nx.concat([self.piece_table, Tensor(batch.extra)], axis=0) if len(batch.extra) else self.piece_table
        vecs = table[batch.piece_idx]  # B,U,K,E
        return (vecs * batch.piece_w[..., None]).sum(axis=2)

    def encode_contexts(self, batch: Stage2Batch) -> Tensor:
        outs = []
        for name in self._cfg.streams:
            x = self.pooled_embeddings(batch) if name == "embed" else Tensor(batch.onehots[name])
            outs.append(self.encoders[name](x, batch.unit_mask))
        return nx.concat(outs, axis=-1)

    def predict_teacher(self, batch: Stage2Batch, ctx: Tensor | None = None) -> Tensor:
        """All steps in one scan, previous rows taken from ``batch.targets``."""
        if batch.targets is None:
            raise Stage2Error("teacher forcing needs oracle targets")
        ctx = self.encode_contexts(batch) if ctx is None else ctx
        B, U, _ = batch.targets.shape
        start = self.start.reshape(1, 1, self._prosody_dim) + Tensor(np.zeros((B, 1, self._prosody_dim)))
        prev = nx.concat([start, Tensor(batch.targets[:, :-1])], axis=1) if U > 1 else start
        h = nx.lstm_scan(nx.concat([ctx, prev], axis=-1), self.rnn, batch.unit_mask)
        return self.out(h) * batch.unit_mask[..., None]

    def predict_free(self, batch: Stage2Batch, ctx: Tensor | None = None) -> np.ndarray:
        """Free-running prediction (no gradient), standardised space."""
        ctx = (self.encode_contexts(batch) if ctx is None else ctx).data
        B, U, _ = ctx.shape
        H = self.rnn.hidden
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        y = np.broadcast_to(self.start.data, (B, self._prosody_dim))
        out = np.zeros((B, U, self._prosody_dim))
        for t in range(U):
            h, c = nx.lstm_step(np.concatenate([ctx[:, t], y], axis=-1), h, c, self.rnn)
            y = h @ self.out.w.data + self.out.b.data
            out[:, t] = y
        return out * batch.unit_mask[..., None]

    def predict_prosody(self, feats: ContextFeatureSet, mode: str = "free", oracle: np.ndarray | None = None) -> np.ndarray:
        """ProsodyMatrix (units x D) in the stage-1 space for one sentence."""
        if len(feats) == 0:
            raise Stage2Error("cannot predict prosody for an empty unit sequence")
        b = self.batch([("utt", feats, oracle)])
        if mode == "free":
            z = self.predict_free(b)[0]
        elif mode == "teacher":
            z = self.predict_teacher(b).data[0]
        else:
            raise ValueError(f"mode must be 'teacher' or 'free', got {mode!r}")
        return z * self._target_std + self._target_mean


def stage2_loss(pred, oracle, unit_mask=None, cfg: nx.HuberConfig = nx.HuberConfig(1.0)) -> Tensor:
    """Mean Huber (rho=1) over all valid entries."""
    w = None if unit_mask is None else np.asarray(unit_mask)[..., None]
    return nx.huber_loss(pred, oracle, cfg, w)

"""Stage-1 networks: phone encoder, word-level reference encoder, duration
predictor and feed-forward acoustic decoder.

The decoder sees the reference mel only through the per-unit prosody matrix:
``decode_acoustics`` takes phone embeddings, prosody rows and durations, never
the mel itself.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .align import (
    AlignmentError,
    WordSegmentation,
    build_segmentation,
    length_regulate_index,
    round_durations,
    word_final_index,
)
from .lingfront import BOUNDARY, PAUSE, PhoneSequence
from .numerics import Module, Tensor


@dataclass(frozen=True)
class Stage1Config:
    phone_embedding_dim: int = 64
    encoder_conv_layers: int = 3
    encoder_kernel: int = 5
    encoder_channels: int = 128
    encoder_lstm_hidden: int = 64
    prosody_dim: int = 32
    ref_conv_layers: int = 3
    ref_kernel: int = 3
    ref_channels: int = 64
    duration_hidden: int = 64
    decoder_prenet: int = 128
    decoder_lstm_layers: int = 2
    decoder_lstm_hidden: int = 64
    n_mels: int = 80
    duration_weight: float = 0.25

    def __post_init__(self):
        if self.prosody_dim % 2:
            raise ValueError("prosody_dim must be even: the reference BiLSTM emits 2 x prosody_dim/2")
        for k in (self.encoder_kernel, self.ref_kernel):
            if k % 2 == 0:
                raise nx.ConfigError(f"kernel sizes must be odd, got {k}")

    @property
    def ref_lstm_hidden(self) -> int:
        return self.prosody_dim // 2

    @property
    def phone_out_dim(self) -> int:
        return 2 * self.encoder_lstm_hidden

    def to_dict(self) -> dict:
        return asdict(self)


# -- batches ----------------------------------------------------------------------------
@dataclass
class Stage1Batch:
    utt_ids: list[str]
    phone_ids: np.ndarray  # B,P int
    phone_mask: np.ndarray  # B,P
    durations: np.ndarray  # B,P float (oracle)
    phone_unit: np.ndarray  # B,P -> unit index
    unit_mask: np.ndarray  # B,U
    unit_final_frame: np.ndarray  # B,U -> frame index
    frame_phone: np.ndarray  # B,F -> phone index
    frame_mask: np.ndarray  # B,F
    mel: np.ndarray | None  # B,F,n_mels (normalised)

    @property
    def size(self) -> int:
        return len(self.utt_ids)


class SymbolTable:
    """Phone identities plus service tokens -> integer ids (0 is padding)."""

    def __init__(self, phones: Sequence[str]):
        self.symbols = ["<pad>", BOUNDARY, PAUSE] + sorted(p for p in set(phones) if p not in (BOUNDARY, PAUSE))
        self.index = {s: i for i, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def encode(self, phones: Sequence[str]) -> np.ndarray:
        missing = [p for p in phones if p not in self.index]
        if missing:
            raise KeyError(f"unknown phone ids: {sorted(set(missing))}")
        return np.array([self.index[p] for p in phones], dtype=np.int64)


def make_stage1_batch(items, symbols: SymbolTable, mel_mean=None, mel_std=None) -> Stage1Batch:
    """Pad a list of ``(utt_id, phones, durations, seg, mel_or_None)`` tuples."""
    B = len(items)
    P = max(len(it[1]) for it in items)
    U = max(len(it[3].units) for it in items)
    F = max(int(np.sum(it[2])) for it in items)
    phone_ids = np.zeros((B, P), dtype=np.int64)
    phone_mask = np.zeros((B, P))
    durs = np.zeros((B, P))
    phone_unit = np.zeros((B, P), dtype=np.int64)
    unit_mask = np.zeros((B, U))
    unit_final = np.zeros((B, U), dtype=np.int64)
    frame_phone = np.zeros((B, F), dtype=np.int64)
    frame_mask = np.zeros((B, F))
    has_mel = all(it[4] is not None for it in items)
    mel = np.zeros((B, F, items[0][4].shape[1])) if has_mel else None
    for b, (utt_id, phones, d, seg, m) in enumerate(items):
        n = len(phones)
        d = np.asarray(d, dtype=np.int64)
        if seg.n_phones != n or seg.n_frames != int(d.sum()):
            raise AlignmentError(f"{utt_id}: segmentation does not match phones/durations")
        phone_ids[b, :n] = symbols.encode(phones.phones)
        phone_mask[b, :n] = 1
        durs[b, :n] = d
        phone_unit[b, :n] = seg.phone_to_unit()
        u = len(seg.units)
        unit_mask[b, :u] = 1
        unit_final[b, :u] = word_final_index(seg)
        fp = length_regulate_index(d)
        frame_phone[b, :len(fp)] = fp
        frame_mask[b, :len(fp)] = 1
        if has_mel:
            if len(m) != len(fp):
                raise AlignmentError(f"{utt_id}: mel has {len(m)} frames, durations sum to {len(fp)}")
            mm = m if mel_mean is None else (m - mel_mean) / mel_std
            mel[b, :len(fp)] = mm
    return Stage1Batch([it[0] for it in items], phone_ids, phone_mask, durs, phone_unit, unit_mask, unit_final,
                       frame_phone, frame_mask, mel)


# -- model ------------------------------------------------------------------------------
class ConvStack(Module):
    def __init__(self, rng, in_dim: int, channels: int, kernel: int, layers: int, name: str):
        self.kernels = []
        self.biases = []
        d = in_dim
        for i in range(layers):
            self.kernels.append(nx.glorot(rng, kernel * d, kernel * channels, (kernel, d, channels), name=f"{name}.{i}.k"))
            self.biases.append(nx.parameter(np.zeros(channels), name=f"{name}.{i}.b"))
            d = channels

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        m = mask[..., None]
        for k, b in zip(self.kernels, self.biases):
            x = nx.relu(nx.conv1d_same(x, k, b)) * m
        return x


class BiLSTM(Module):
    def __init__(self, rng, in_dim: int, hidden: int, name: str):
        self.fwd = nx.init_lstm(rng, in_dim, hidden, f"{name}.fwd")
        self.bwd = nx.init_lstm(rng, in_dim, hidden, f"{name}.bwd")

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        return nx.bilstm(x, self.fwd, self.bwd, mask)


class Dense(Module):
    def __init__(self, rng, in_dim: int, out_dim: int, name: str):
        self.w = nx.glorot(rng, in_dim, out_dim, (in_dim, out_dim), name=f"{name}.w")
        self.b = nx.parameter(np.zeros(out_dim), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return nx.linear(x, self.w, self.b)


class PhoneEncoder(Module):
    def __init__(self, rng, n_symbols: int, cfg: Stage1Config):
        self.embedding = nx.parameter(rng.normal(0.0, 0.3, size=(n_symbols, cfg.phone_embedding_dim)), name="phone_embedding")
        self.convs = ConvStack(rng, cfg.phone_embedding_dim, cfg.encoder_channels, cfg.encoder_kernel,
                               cfg.encoder_conv_layers, "enc.conv")
        self.lstm = BiLSTM(rng, cfg.encoder_channels, cfg.encoder_lstm_hidden, "enc.lstm")

    def __call__(self, phone_ids: np.ndarray, mask: np.ndarray) -> Tensor:
        x = self.embedding[phone_ids] * mask[..., None]
        return self.lstm(self.convs(x, mask), mask) * mask[..., None]


class ReferenceEncoder(Module):
    def __init__(self, rng, cfg: Stage1Config):
        self.convs = ConvStack(rng, cfg.n_mels, cfg.ref_channels, cfg.ref_kernel, cfg.ref_conv_layers, "ref.conv")
        self.lstm = BiLSTM(rng, cfg.ref_channels, cfg.ref_lstm_hidden, "ref.lstm")

    def __call__(self, mel: Tensor, frame_mask: np.ndarray, unit_final_frame: np.ndarray, unit_mask: np.ndarray) -> Tensor:
        states = self.lstm(self.convs(mel, frame_mask), frame_mask)
        return nx.gather_rows(states, unit_final_frame) * unit_mask[..., None]


class DurationPredictor(Module):
    def __init__(self, rng, in_dim: int, cfg: Stage1Config):
        self.l1 = Dense(rng, in_dim, cfg.duration_hidden, "dur.l1")
        self.l2 = Dense(rng, cfg.duration_hidden, cfg.duration_hidden, "dur.l2")
        self.out = Dense(rng, cfg.duration_hidden, 1, "dur.out")

    def __call__(self, x: Tensor) -> Tensor:
        h = nx.relu(self.l2(nx.relu(self.l1(x))))
        y = nx.softplus(self.out(h))
        return y.reshape(y.shape[:-1])


class AcousticDecoder(Module):
    def __init__(self, rng, in_dim: int, cfg: Stage1Config):
        self.prenet = Dense(rng, in_dim, cfg.decoder_prenet, "dec.prenet")
        self.lstms = []
        d = cfg.decoder_prenet
        for i in range(cfg.decoder_lstm_layers):
            self.lstms.append(BiLSTM(rng, d, cfg.decoder_lstm_hidden, f"dec.lstm{i}"))
            d = 2 * cfg.decoder_lstm_hidden
        self.proj = Dense(rng, d, cfg.n_mels, "dec.proj")

    def __call__(self, phone_level: Tensor, frame_phone: np.ndarray, frame_mask: np.ndarray) -> Tensor:
        x = nx.gather_rows(phone_level, frame_phone)
        x = nx.relu(self.prenet(x)) * frame_mask[..., None]
        for lstm in self.lstms:
            x = lstm(x, frame_mask)
        return self.proj(x) * frame_mask[..., None]


class Stage1Model(Module):
    def __init__(self, cfg: Stage1Config, symbols: SymbolTable, seed: int = 0):
        rng = np.random.default_rng(seed)
        self._cfg = cfg
        self._symbols = symbols
        self._seed = seed
        self.encoder = PhoneEncoder(rng, len(symbols), cfg)
        self.reference = ReferenceEncoder(rng, cfg)
        self.duration = DurationPredictor(rng, cfg.phone_out_dim + cfg.prosody_dim, cfg)
        self.decoder = AcousticDecoder(rng, cfg.phone_out_dim + cfg.prosody_dim, cfg)
        self._mel_mean = np.zeros(cfg.n_mels)
        self._mel_std = np.ones(cfg.n_mels)

    @property
    def cfg(self) -> Stage1Config:
        return self._cfg

    @property
    def symbols(self) -> SymbolTable:
        return self._symbols

    def set_normalisation(self, mean: np.ndarray, std: np.ndarray) -> None:
        self._mel_mean = np.asarray(mean, dtype=np.float64)
        self._mel_std = np.asarray(std, dtype=np.float64)

    @property
    def mel_stats(self) -> tuple[np.ndarray, np.ndarray]:
        return self._mel_mean, self._mel_std

    def normalise(self, mel: np.ndarray) -> np.ndarray:
        return (mel - self._mel_mean) / self._mel_std

    def denormalise(self, mel: np.ndarray) -> np.ndarray:
        return mel * self._mel_std + self._mel_mean

    # -- components ------------------------------------------------------------------
    def phone_encode(self, batch: Stage1Batch) -> Tensor:
        return self.encoder(batch.phone_ids, batch.phone_mask)

    def reference_encode(self, batch: Stage1Batch) -> Tensor:
        if batch.mel is None:
            raise AlignmentError("reference encoding needs a mel-spectrogram")
        return self.reference(Tensor(batch.mel), batch.frame_mask, batch.unit_final_frame, batch.unit_mask)

    def upsample(self, prosody: Tensor, batch: Stage1Batch) -> Tensor:
        if prosody.shape[:2] != batch.unit_mask.shape:
            raise AlignmentError(f"prosody rows {prosody.shape[:2]} do not match unit inventory {batch.unit_mask.shape}")
        return nx.gather_rows(prosody, batch.phone_unit) * batch.phone_mask[..., None]

    def predict_durations(self, phone_emb: Tensor, prosody_phone: Tensor, batch: Stage1Batch) -> Tensor:
        if phone_emb.shape[:2] != prosody_phone.shape[:2]:
            raise AlignmentError(f"phone embeddings {phone_emb.shape} vs prosody {prosody_phone.shape}")
        return self.duration(nx.concat([phone_emb, prosody_phone], axis=-1)) * batch.phone_mask

    def decode_acoustics(self, phone_emb: Tensor, prosody_phone: Tensor, frame_phone: np.ndarray,
                         frame_mask: np.ndarray) -> Tensor:
        if phone_emb.shape[:2] != prosody_phone.shape[:2]:
            raise AlignmentError(f"phone embeddings {phone_emb.shape} vs prosody {prosody_phone.shape}")
        return self.decoder(nx.concat([phone_emb, prosody_phone], axis=-1), frame_phone, frame_mask)

    # -- full passes ------------------------------------------------------------------
    def forward(self, batch: Stage1Batch, prosody: Tensor | np.ndarray | None = None) -> dict:
        """Teacher-forced pass with oracle durations.

        ``prosody=None`` runs the reference encoder on ``batch.mel`` (ORA);
        otherwise the given (B, U, D) rows are used as-is (CAMP / NOPROS).
        """
        pe = self.phone_encode(batch)
        if prosody is None:
            prosody = self.reference_encode(batch)
        prosody = nx.as_tensor(prosody)
        pp = self.upsample(prosody, batch)
        dur = self.predict_durations(pe, pp, batch)
        mel = self.decode_acoustics(pe, pp, batch.frame_phone, batch.frame_mask)
        return {"phone_emb": pe, "prosody": prosody, "durations": dur, "mel": mel}

    def loss(self, out: dict, batch: Stage1Batch) -> tuple[Tensor, dict]:
        return stage1_loss(out["mel"], batch.mel, out["durations"], batch.durations, batch.frame_mask,
                           batch.phone_mask, self._cfg.duration_weight)


def stage1_loss(mel_pred, mel_true, dur_pred, dur_true, frame_mask=None, phone_mask=None,
                duration_weight: float = 0.25) -> tuple[Tensor, dict]:
    """L1(mel) + duration_weight * L1(durations), masked means over valid entries."""
    fm = None if frame_mask is None else np.asarray(frame_mask)[..., None]
    mel_l1 = nx.l1_loss(mel_pred, mel_true, fm)
    dur_l1 = nx.l1_loss(dur_pred, dur_true, phone_mask)
    total = mel_l1 + dur_l1 * duration_weight
    return total, {"mel_l1": float(mel_l1.data), "dur_l1": float(dur_l1.data), "loss": float(total.data)}


# -- single-utterance helpers ------------------------------------------------------------
def utterance_batch(model: Stage1Model, utt_id: str, phones: PhoneSequence, durs, seg: WordSegmentation,
                    mel: np.ndarray | None) -> Stage1Batch:
    mean, std = model.mel_stats
    return make_stage1_batch([(utt_id, phones, durs, seg, mel)], model.symbols, mean, std)


def reference_encode(model: Stage1Model, mel: np.ndarray, phones: PhoneSequence, durs, seg: WordSegmentation) -> np.ndarray:
    """ProsodyMatrix (units x D) for one utterance from its raw log-mel."""
    if len(mel) != seg.n_frames:
        raise AlignmentError(f"mel has {len(mel)} frames, segmentation expects {seg.n_frames}")
    b = utterance_batch(model, "utt", phones, durs, seg, mel)
    return model.reference_encode(b).data[0]


def synthesize(model: Stage1Model, phones: PhoneSequence, prosody: np.ndarray, durs=None) -> tuple[np.ndarray, np.ndarray]:
    """Mel (unnormalised, T x n_mels) and durations for one utterance.

    With ``durs=None`` durations come from the duration predictor and are
    rounded (nearest frame, phones at least one frame).
    """
    n_units = len(phones.units())
    prosody = np.asarray(prosody, dtype=np.float64)
    if prosody.shape[0] != n_units:
        raise AlignmentError(f"prosody has {prosody.shape[0]} rows for {n_units} units")
    if durs is None:
        placeholder = [0 if p == BOUNDARY else 1 for p in phones.phones]
        seg0 = build_segmentation(phones, placeholder)
        b0 = make_stage1_batch([("utt", phones, placeholder, seg0, None)], model.symbols)
        pe = model.phone_encode(b0)
        pp = model.upsample(Tensor(prosody[None]), b0)
        durs = round_durations(model.predict_durations(pe, pp, b0).data[0], phones)
    seg = build_segmentation(phones, durs)
    b = make_stage1_batch([("utt", phones, durs, seg, None)], model.symbols)
    pe = model.phone_encode(b)
    pp = model.upsample(Tensor(prosody[None]), b)
    mel = model.decode_acoustics(pe, pp, b.frame_phone, b.frame_mask).data[0]
    return model.denormalise(mel), np.asarray(durs)

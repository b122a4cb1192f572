"""Training loops for both stages, held-out evaluation and the linear probes.

Everything here is single-threaded and seeded: data order comes from a
``numpy.random.Generator`` derived from the experiment seed, parameter init
from the model seed, so two runs with one config write identical files.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import minimize

from . import numerics as nx
from .align import BOUNDARY
from .config import ExperimentConfig, StageSchedule
from .corpus import Utterance
from .lingfront import Frontend
from .numerics.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .numerics.module import params_hash
from .prosodypred import PieceVocab, Stage2Config, Stage2Model, stage2_loss
from .synth import LATENT_NAMES
from .ttsmodel import (
    Stage1Config,
    Stage1Model,
    SymbolTable,
    make_stage1_batch,
    stage1_loss,
)

log = logging.getLogger(__name__)

SYSTEMS = ("ORA", "CAMP", "NOPROS")
RIDGE_LAMBDA = 1e-3


class PipelineError(RuntimeError):
    pass


class ProbeError(ValueError):
    pass


# -- batching ---------------------------------------------------------------------------
def make_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator, bucket: int = 8) -> list[list[int]]:
    """One epoch of index batches: shuffle, sort within chunks of ``bucket`` batches, shuffle batch order."""
    order = rng.permutation(len(lengths))
    chunk = batch_size * bucket
    batches = []
    for s in range(0, len(order), chunk):
        part = sorted(order[s:s + chunk].tolist(), key=lambda i: (lengths[i], i))
        batches += [part[k:k + batch_size] for k in range(0, len(part), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def batch_stream(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> Iterator[list[int]]:
    while True:
        yield from make_batches(lengths, batch_size, rng)


def steps_per_epoch(n: int, batch_size: int) -> int:
    return max(1, math.ceil(n / batch_size))


def schedule_for(s: StageSchedule, n_train: int, batch_size: int) -> nx.TrainingSchedule:
    interval = s.decay_interval_steps or steps_per_epoch(n_train, batch_size)
    return nx.TrainingSchedule(s.base_lr, s.decay_factor, interval, s.steps, s.adam_beta1, s.adam_beta2, s.adam_eps)


def _optimise(model: nx.Module, loss: nx.Tensor, schedule: nx.TrainingSchedule, state: nx.AdamState,
              step: int, clip: float) -> float:
    model.zero_grad()
    loss.backward()
    params = model.named_parameters()
    grads = {k: p.grad for k, p in params.items() if p.grad is not None}
    norm = nx.clip_global_norm(grads, clip)
    nx.adam_step(params, grads, schedule, state, step)
    return norm


class CSVLog:
    def __init__(self, path: Path | None, columns: Sequence[str]):
        self.columns = list(columns)
        self.rows: list[dict] = []
        self._path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)

    def write(self, **row) -> None:
        self.rows.append(row)
        if self._path is not None:
            with open(self._path, "a", newline="") as fh:
                csv.writer(fh).writerow([_fmt(row.get(c, "")) for c in self.columns])


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# -- stage 1 ----------------------------------------------------------------------------
def stage1_items(utts: Sequence[Utterance]) -> list[tuple]:
    return [(u.utt_id, u.phones, u.durations, u.seg, u.mel) for u in utts]


def mel_statistics(utts: Sequence[Utterance]) -> tuple[np.ndarray, np.ndarray]:
    frames = np.concatenate([u.mel for u in utts])
    return frames.mean(axis=0), np.maximum(frames.std(axis=0), 1e-5)


def symbol_table(utts: Sequence[Utterance], frontend: Frontend | None = None) -> SymbolTable:
    frontend = frontend or Frontend.default()
    return SymbolTable(list(frontend.lexicon.phone_inventory) + [p for u in utts for p in u.phones.phones])


def stage1_validation(model: Stage1Model, items: list[tuple], batch_size: int) -> dict:
    """Frame/phone-weighted mean losses over a held-out set (normalised mel units)."""
    mean, std = model.mel_stats
    mel_sum = dur_sum = n_mel = n_dur = 0.0
    for s in range(0, len(items), batch_size):
        b = make_stage1_batch(items[s:s + batch_size], model.symbols, mean, std)
        out = model.forward(b)
        mel_sum += float(np.sum(np.abs(out["mel"].data - b.mel) * b.frame_mask[..., None]))
        dur_sum += float(np.sum(np.abs(out["durations"].data - b.durations) * b.phone_mask))
        n_mel += float(b.frame_mask.sum()) * b.mel.shape[-1]
        n_dur += float(b.phone_mask.sum())
    mel_l1, dur_l1 = mel_sum / n_mel, dur_sum / n_dur
    return {"mel_l1": mel_l1, "dur_l1": dur_l1, "loss": mel_l1 + model.cfg.duration_weight * dur_l1}


@dataclass
class TrainResult:
    model: nx.Module
    best_step: int
    best_val: float
    log: list[dict] = field(default_factory=list)
    val_log: list[dict] = field(default_factory=list)


def train_stage1(cfg: ExperimentConfig, train: Sequence[Utterance], val: Sequence[Utterance],
                 log_path: Path | None = None) -> TrainResult:
    if not train:
        raise PipelineError("stage-1 training split is empty")
    symbols = symbol_table(list(train) + list(val))
    model = Stage1Model(cfg.model1, symbols, seed=cfg.seed)
    mean, std = mel_statistics(train)
    model.set_normalisation(mean, std)
    items = stage1_items(train)
    val_items = stage1_items(val) if val else items[: cfg.batch_size]
    sched = schedule_for(cfg.stage1, len(items), cfg.batch_size)
    rng = np.random.default_rng([cfg.seed, 1])
    stream = batch_stream([len(u.mel) for u in train], cfg.batch_size, rng)
    csv_log = CSVLog(log_path, ["step", "lr", "loss", "mel_l1", "dur_l1", "grad_norm", "val_loss", "val_mel_l1", "val_dur_l1"])
    state = nx.AdamState()
    best = (math.inf, 0, model.state_dict())
    val_log = []
    for step in range(1, cfg.stage1.steps + 1):
        idx = next(stream)
        b = make_stage1_batch([items[i] for i in idx], symbols, mean, std)
        out = model.forward(b)
        loss, parts = model.loss(out, b)
        lr = sched.lr_at(step - 1)
        norm = _optimise(model, loss, sched, state, step, cfg.stage1.clip_norm)
        row = {"step": step, "lr": lr, **parts, "grad_norm": norm}
        if step % cfg.stage1.eval_interval == 0 or step == cfg.stage1.steps:
            v = stage1_validation(model, val_items, cfg.batch_size)
            row.update(val_loss=v["loss"], val_mel_l1=v["mel_l1"], val_dur_l1=v["dur_l1"])
            val_log.append({"step": step, **v})
            if v["loss"] < best[0]:
                best = (v["loss"], step, model.state_dict())
            log.info("stage1 step %d loss %.4f val %.4f", step, parts["loss"], v["loss"])
        if step % cfg.stage1.log_interval == 0 or "val_loss" in row or step == 1:
            csv_log.write(**row)
    model.load_state_dict(best[2])
    return TrainResult(model, best[1], best[0], csv_log.rows, val_log)


def save_stage1(path, model: Stage1Model, extra_meta: dict | None = None) -> str:
    arrays = model.state_dict()
    mean, std = model.mel_stats
    arrays["_norm.mel_mean"] = mean
    arrays["_norm.mel_std"] = std
    h = model.param_hash()
    meta = {"stage": 1, "config": model.cfg.to_dict(), "symbols": model.symbols.symbols, "params_hash": h,
            **(extra_meta or {})}
    save_checkpoint(path, arrays, meta)
    return h


def load_stage1(path) -> tuple[Stage1Model, dict]:
    arrays, meta = load_checkpoint(path)
    if meta.get("stage") != 1:
        raise CheckpointError(f"{path} is not a stage-1 checkpoint")
    model = Stage1Model(Stage1Config(**meta["config"]), SymbolTable(meta["symbols"][3:]))
    if model.symbols.symbols != meta["symbols"]:
        raise CheckpointError(f"{path}: symbol table does not round-trip")
    model.set_normalisation(arrays.pop("_norm.mel_mean"), arrays.pop("_norm.mel_std"))
    model.load_state_dict(arrays)
    if model.param_hash() != meta["params_hash"]:
        raise CheckpointError(f"{path}: parameter hash mismatch (file corrupted?)")
    return model, meta


# -- stage 2 ----------------------------------------------------------------------------
def oracle_prosody(model: Stage1Model, utts: Sequence[Utterance], batch_size: int = 16) -> list[np.ndarray]:
    """ProsodyMatrix per utterance from the (frozen) reference encoder."""
    mean, std = model.mel_stats
    out = []
    for s in range(0, len(utts), batch_size):
        chunk = utts[s:s + batch_size]
        b = make_stage1_batch(stage1_items(chunk), model.symbols, mean, std)
        rows = model.reference_encode(b).data
        out += [rows[k, :len(u.seg.units)].copy() for k, u in enumerate(chunk)]
    return out


def piece_vocab(utts: Sequence[Utterance], frontend: Frontend | None = None) -> PieceVocab:
    emb = (frontend or Frontend.default()).embedder
    return PieceVocab([p for u in utts for w in u.features.words if w for p in emb.pieces(w)], emb)


def stage2_validation(model: Stage2Model, items: list[tuple], batch_size: int) -> float:
    """Teacher-forced entry-weighted Huber over standardised targets."""
    total = count = 0.0
    for s in range(0, len(items), batch_size):
        b = model.batch(items[s:s + batch_size])
        n = float(b.unit_mask.sum()) * model.prosody_dim
        total += float(stage2_loss(model.predict_teacher(b), b.targets, b.unit_mask).data) * n
        count += n
    return total / count


def train_stage2(cfg: ExperimentConfig, stage1: Stage1Model, train: Sequence[Utterance], val: Sequence[Utterance],
                 log_path: Path | None = None, stage2_cfg: Stage2Config | None = None) -> TrainResult:
    if not train:
        raise PipelineError("stage-2 training split is empty")
    s2cfg = stage2_cfg or cfg.model2
    frontend = Frontend.default()
    if "embed" in s2cfg.streams and frontend.embedder.dim != s2cfg.embed_dim:
        raise PipelineError(f"embed_dim {s2cfg.embed_dim} != embedder dim {frontend.embedder.dim}")
    h_before = stage1.param_hash()
    stage1.freeze()
    tr_rows = oracle_prosody(stage1, train)
    va_rows = oracle_prosody(stage1, val) if val else tr_rows[: cfg.batch_size]
    allrows = np.concatenate(tr_rows)
    model = Stage2Model(s2cfg, stage1.cfg.prosody_dim, piece_vocab(train, frontend), seed=cfg.seed)
    model.set_target_stats(allrows.mean(axis=0), np.maximum(allrows.std(axis=0), 1e-8))
    items = [(u.utt_id, u.features, r) for u, r in zip(train, tr_rows)]
    val_src = val if val else train[: cfg.batch_size]
    val_items = [(u.utt_id, u.features, r) for u, r in zip(val_src, va_rows)]
    sched = schedule_for(cfg.stage2, len(items), cfg.batch_size)
    rng = np.random.default_rng([cfg.seed, 2])
    stream = batch_stream([len(u.features) for u in train], cfg.batch_size, rng)
    csv_log = CSVLog(log_path, ["step", "lr", "huber", "grad_norm", "val_huber"])
    state = nx.AdamState()
    best = (math.inf, 0, model.state_dict())
    val_log = []
    for step in range(1, cfg.stage2.steps + 1):
        b = model.batch([items[i] for i in next(stream)])
        loss = stage2_loss(model.predict_teacher(b), b.targets, b.unit_mask)
        lr = sched.lr_at(step - 1)
        norm = _optimise(model, loss, sched, state, step, cfg.stage2.clip_norm)
        row = {"step": step, "lr": lr, "huber": float(loss.data), "grad_norm": norm}
        if step % cfg.stage2.eval_interval == 0 or step == cfg.stage2.steps:
            v = stage2_validation(model, val_items, cfg.batch_size)
            row["val_huber"] = v
            val_log.append({"step": step, "huber": v})
            if v < best[0]:
                best = (v, step, model.state_dict())
            log.info("stage2[%s] step %d huber %.4f val %.4f", ",".join(s2cfg.streams), step, row["huber"], v)
        if step % cfg.stage2.log_interval == 0 or "val_huber" in row or step == 1:
            csv_log.write(**row)
    model.load_state_dict(best[2])
    if stage1.param_hash() != h_before:
        raise PipelineError("stage-1 parameters changed during stage-2 training")
    return TrainResult(model, best[1], best[0], csv_log.rows, val_log)


def save_stage2(path, model: Stage2Model, stage1_hash: str, stage1_id: str = "") -> str:
    arrays = model.state_dict()
    mean, std = model.target_stats
    arrays["_norm.target_mean"] = mean
    arrays["_norm.target_std"] = std
    h = model.param_hash()
    emb = model.vocab.embedder
    meta = {"stage": 2, "config": model.cfg.to_dict(), "prosody_dim": model.prosody_dim, "pieces": model.vocab.pieces,
            "embedder": {"dim": emb.dim, "piece_len": emb.piece_len, "scale": emb.scale},
            "stage1_hash": stage1_hash, "stage1_id": stage1_id, "params_hash": h}
    save_checkpoint(path, arrays, meta)
    return h


def load_stage2(path, stage1: Stage1Model) -> tuple[Stage2Model, dict]:
    from .lingfront import HashEmbedding

    arrays, meta = load_checkpoint(path)
    if meta.get("stage") != 2:
        raise CheckpointError(f"{path} is not a stage-2 checkpoint")
    if meta["stage1_hash"] != stage1.param_hash():
        raise CheckpointError(f"{path} was trained against stage-1 {meta['stage1_hash'][:12]}, "
                              f"got {stage1.param_hash()[:12]}")
    cfg = Stage2Config(**{**meta["config"], "streams": tuple(meta["config"]["streams"])})
    vocab = PieceVocab(meta["pieces"], HashEmbedding(**meta["embedder"]))
    model = Stage2Model(cfg, meta["prosody_dim"], vocab)
    model.set_target_stats(arrays.pop("_norm.target_mean"), arrays.pop("_norm.target_std"))
    model.load_state_dict(arrays)
    return model, meta


# -- probes -----------------------------------------------------------------------------
def ridge_fit(X: np.ndarray, Y: np.ndarray, lam: float = RIDGE_LAMBDA) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ridge on standardised inputs; the intercept is not penalised."""
    mu, sd = X.mean(axis=0), np.maximum(X.std(axis=0), 1e-12)
    Z = (X - mu) / sd
    ym = Y.mean(axis=0)
    W = np.linalg.solve(Z.T @ Z + lam * np.eye(Z.shape[1]), Z.T @ (Y - ym))
    W = W / sd[:, None]
    return W, ym - mu @ W


def r_squared(y: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)


def softmax_probe(X: np.ndarray, labels: np.ndarray, n_classes: int, lam: float = RIDGE_LAMBDA) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression (L2 ``lam``) fitted with L-BFGS."""
    mu, sd = X.mean(axis=0), np.maximum(X.std(axis=0), 1e-12)
    Z = np.hstack([(X - mu) / sd, np.ones((len(X), 1))])
    Y = np.eye(n_classes)[labels]
    n, d = Z.shape

    def f(w):
        W = w.reshape(d, n_classes)
        s = Z @ W
        s -= s.max(axis=1, keepdims=True)
        lse = np.log(np.exp(s).sum(axis=1))
        P = np.exp(s - lse[:, None])
        val = float(np.sum(lse - np.sum(Y * s, axis=1))) / n + 0.5 * lam * float(np.sum(W[:-1] ** 2))
        G = Z.T @ (P - Y) / n
        G[:-1] += lam * W[:-1]
        return val, G.ravel()

    res = minimize(f, np.zeros(d * n_classes), jac=True, method="L-BFGS-B", options={"maxiter": 500})
    W = res.x.reshape(d, n_classes)
    return W[:-1] / sd[:, None], W[-1] - (mu / sd) @ W[:-1]


def word_rows(model: Stage1Model, utts: Sequence[Utterance], prosody: list[np.ndarray] | None = None):
    """Word-unit prosody rows, their latents and their first phones."""
    prosody = prosody if prosody is not None else oracle_prosody(model, utts)
    X, lat, first = [], [], []
    for u, rows in zip(utts, prosody):
        if u.latents is None:
            raise ProbeError(f"{u.utt_id}: probes need stored latents")
        ids = u.seg.word_unit_ids()
        if len(ids) != len(u.latents):
            raise ProbeError(f"{u.utt_id}: {len(ids)} word units vs {len(u.latents)} latent rows")
        X.append(rows[ids])
        lat.append(u.latents)
        for k in ids:
            s0, s1 = u.seg.units[k].phone_span
            first.append(next(p for p in u.phones.phones[s0:s1] if p != BOUNDARY))
    return np.concatenate(X), np.concatenate(lat), first


def disentanglement_probe(model: Stage1Model, train: Sequence[Utterance], test: Sequence[Utterance],
                          seed: int = 0, train_rows=None, test_rows=None) -> dict:
    Xtr, Ltr, Ptr = word_rows(model, train, train_rows)
    Xte, Lte, Pte = word_rows(model, test, test_rows)
    if len(Xtr) < 10 * Xtr.shape[1]:
        raise ProbeError(f"probe needs >= {10 * Xtr.shape[1]} training words (10 x dim), got {len(Xtr)}")
    rng = np.random.default_rng([seed, 3])
    out: dict = {"n_train_words": len(Xtr), "n_test_words": len(Xte)}
    W, b = ridge_fit(Xtr, Ltr)
    pred = Xte @ W + b
    Ws, bs = ridge_fit(Xtr[rng.permutation(len(Xtr))], Ltr)
    pred_s = Xte[rng.permutation(len(Xte))] @ Ws + bs
    for j, name in enumerate(LATENT_NAMES):
        out[f"r2_{name}"] = r_squared(Lte[:, j], pred[:, j])
        out[f"r2_shuffled_{name}"] = r_squared(Lte[:, j], pred_s[:, j])
    classes = sorted(set(Ptr) | set(Pte))
    cid = {c: i for i, c in enumerate(classes)}
    ytr = np.array([cid[p] for p in Ptr])
    yte = np.array([cid[p] for p in Pte])
    majority = int(np.bincount(ytr, minlength=len(classes)).argmax())
    W, b = softmax_probe(Xtr, ytr, len(classes))
    out["phone_accuracy"] = float(np.mean((Xte @ W + b).argmax(axis=1) == yte))
    out["phone_chance"] = float(np.mean(yte == majority))
    ysh = ytr[rng.permutation(len(ytr))]
    W, b = softmax_probe(Xtr, ysh, len(classes))
    out["phone_accuracy_shuffled"] = float(np.mean((Xte @ W + b).argmax(axis=1) == yte))
    return out


# -- evaluation -------------------------------------------------------------------------
@dataclass
class EvalReport:
    rows: list[dict]
    aggregate: dict
    probes: dict

    def to_json(self) -> str:
        return json.dumps({"aggregate": self.aggregate, "probes": self.probes, "n_utterances": len(self.rows)},
                          sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        cols = list(self.rows[0])
        lines = [",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in self.rows]
        return "\n".join(lines) + "\n"

    def ordering_line(self) -> str:
        a = self.aggregate
        ora, camp, nop = a["mel_l1_ORA"], a["mel_l1_CAMP"], a["mel_l1_NOPROS"]
        ok = ora < camp < nop
        return (f"mel L1 ORA={ora:.4f} CAMP={camp:.4f} NOPROS={nop:.4f} "
                f"ordering {'ORA < CAMP < NOPROS' if ok else 'VIOLATED'} gap_closed={a['gap_closed']:.3f}")

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "utterances.csv").write_text(self.to_csv())


def aggregate_rows(rows: list[dict]) -> dict:
    """Means over per-utterance rows; RMSE values come from the mean squared error rows."""
    agg = {}
    for k in rows[0]:
        if k == "utt_id":
            continue
        agg[k] = float(np.mean([r[k] for r in rows]))
    for s in SYSTEMS:
        agg[f"dur_rmse_{s}"] = math.sqrt(agg[f"dur_mse_{s}"])
    agg["duration_rmse"] = agg["dur_rmse_CAMP"]
    gap = agg["mel_l1_NOPROS"] - agg["mel_l1_ORA"]
    agg["gap_closed"] = (agg["mel_l1_NOPROS"] - agg["mel_l1_CAMP"]) / gap if gap != 0 else 0.0
    return agg


def evaluate(stage1: Stage1Model, stage2: Stage2Model, test: Sequence[Utterance],
             probe_train: Sequence[Utterance] | None = None, seed: int = 0) -> EvalReport:
    """Per-utterance mel L1 (log-mel units, oracle durations) and duration errors per system."""
    if not test:
        raise PipelineError("evaluation split is empty")
    if stage2.prosody_dim != stage1.cfg.prosody_dim:
        raise PipelineError("stage-2 prosody_dim differs from stage-1")
    ora_rows = oracle_prosody(stage1, test)
    mean_z = np.zeros(stage1.cfg.prosody_dim)
    tmean, tstd = stage2.target_stats
    rows = []
    for u, ora in zip(test, ora_rows):
        b2 = stage2.batch([(u.utt_id, u.features, ora)])
        z_true = b2.targets[0]
        z_pred = stage2.predict_free(b2)[0]
        camp = z_pred * tstd + tmean
        row = {"utt_id": u.utt_id, "n_frames": len(u.mel), "n_units": len(u.seg.units)}
        mean, std = stage1.mel_stats
        b1 = make_stage1_batch(stage1_items([u]), stage1.symbols, mean, std)
        keep = np.array([p != BOUNDARY for p in u.phones.phones])
        for name, pros in (("ORA", ora), ("CAMP", camp), ("NOPROS", np.zeros_like(ora))):
            out = stage1.forward(b1, pros[None])
            mel = stage1.denormalise(out["mel"].data[0])
            row[f"mel_l1_{name}"] = float(np.mean(np.abs(mel - u.mel)))
            err = out["durations"].data[0][keep] - u.durations[keep]
            row[f"dur_l1_{name}"] = float(np.mean(np.abs(err)))
            row[f"dur_mse_{name}"] = float(np.mean(err ** 2))
        row["stage2_huber"] = float(stage2_loss(z_pred, z_true).data)
        row["stage2_huber_teacher"] = float(stage2_loss(stage2.predict_teacher(b2).data[0], z_true).data)
        row["stage2_huber_mean"] = float(stage2_loss(np.broadcast_to(mean_z, z_true.shape), z_true).data)
        rows.append(row)
    probes = disentanglement_probe(stage1, probe_train, test, seed, test_rows=ora_rows) if probe_train else {}
    return EvalReport(rows, aggregate_rows(rows), probes)


# -- end-to-end pipeline ------------------------------------------------------------------
VARIANTS = {
    "SYNTAX": ("pos", "class", "compound", "punct"),
    "EMBED": ("embed",),
    "EMBED+SYNTAX": ("pos", "class", "compound", "punct", "embed"),
}


@dataclass
class PipelineResult:
    report: EvalReport
    variant_huber: dict
    stage1: TrainResult
    stage2: dict


def run_pipeline(cfg: ExperimentConfig, out_dir, utts: Sequence[Utterance] | None = None,
                 variants: dict | None = None, main_variant: str | None = None) -> PipelineResult:
    """Train stage 1, one stage-2 model per variant, evaluate on the test split.

    The CAMP system uses ``main_variant`` (default: the streams in ``cfg.model2``).
    Outputs go to ``out_dir``: checkpoints, CSV training logs and ``report/``.
    The report's ``variants`` entry holds each variant's held-out free-running
    Huber next to the training-mean baseline.
    """
    from .corpus import load_corpus, split_ids

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if utts is None:
        if not cfg.corpus:
            raise PipelineError("no corpus given")
        utts = load_corpus(cfg.corpus)
    by_id = {u.utt_id: u for u in utts}
    split = split_ids(list(by_id), cfg.fractions, cfg.seed)
    train, val, test = ([by_id[i] for i in split[k]] for k in ("train", "val", "test"))
    if not test:
        raise PipelineError("test split is empty")
    r1 = train_stage1(cfg, train, val, out / "stage1_log.csv")
    h1 = save_stage1(out / "stage1.ckpt", r1.model, {"best_step": r1.best_step, "seed": cfg.seed})
    variants = dict(variants) if variants is not None else {"CAMP": cfg.model2.streams}
    main_variant = main_variant or next(iter(variants))
    r2s, variant_huber = {}, {}
    for name, streams in variants.items():
        s2cfg = Stage2Config(**{**cfg.model2.to_dict(), "streams": tuple(streams)})
        tag = name.lower().replace("+", "_")
        r2 = train_stage2(cfg, r1.model, train, val, out / f"stage2_{tag}_log.csv", s2cfg)
        save_stage2(out / f"stage2_{tag}.ckpt", r2.model, h1, "stage1.ckpt")
        r2s[name] = r2
    report = evaluate(r1.model, r2s[main_variant].model, test, train, cfg.seed)
    test_rows = oracle_prosody(r1.model, test)
    for name, r2 in r2s.items():
        variant_huber[name] = stage2_heldout(r2.model, test, test_rows)
    report.aggregate["variants"] = variant_huber
    report.save(out / "report")
    return PipelineResult(report, variant_huber, r1, r2s)


def stage2_heldout(model: Stage2Model, utts: Sequence[Utterance], rows: list[np.ndarray]) -> dict:
    """Entry-weighted held-out Huber of free-running predictions and of the training-mean predictor."""
    pred = mean = teacher = n = 0.0
    for u, r in zip(utts, rows):
        b = model.batch([(u.utt_id, u.features, r)])
        z = b.targets[0]
        k = z.size
        pred += float(stage2_loss(model.predict_free(b)[0], z).data) * k
        teacher += float(stage2_loss(model.predict_teacher(b).data[0], z).data) * k
        mean += float(stage2_loss(np.zeros_like(z), z).data) * k
        n += k
    return {"huber": pred / n, "huber_teacher": teacher / n, "huber_mean": mean / n}

"""Finite-difference checks for every differentiable primitive and both stage losses.

Each check builds a small random instance, so the whole suite runs in a few
seconds. Inputs to kinked functions (relu, abs, L1, Huber) are kept away from
their kinks so central differences stay valid.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .numerics import GradCheckReport, Tensor

Check = Callable[[np.random.Generator], GradCheckReport]
TOL = 1e-4
# 1e-6 puts float64 roundoff (~1e-10 on O(1) losses) at the level of the
# smallest parameter gradients in the model-level checks
EPS = 1e-5


def _gc(f, inputs, **kw) -> GradCheckReport:
    return nx.grad_check(f, inputs, eps=EPS, tol=TOL, **kw)


def _t(rng, *shape, away_from_zero: bool = False) -> Tensor:
    x = rng.normal(size=shape)
    if away_from_zero:
        x = np.where(x >= 0, x + 0.2, x - 0.2)
    return nx.parameter(x)


def _unary(op, kink=False) -> Check:
    def run(rng):
        x = _t(rng, 3, 4, away_from_zero=kink)
        w = rng.normal(size=(3, 4))
        return _gc(lambda: (op(x) * w).sum(), [x])
    return run


def _binary(op, a_shape=(3, 4), b_shape=(3, 4)) -> Check:
    def run(rng):
        a, b = _t(rng, *a_shape), _t(rng, *b_shape)
        y = op(a, b)
        w = rng.normal(size=y.shape)
        return _gc(lambda: (op(a, b) * w).sum(), [a, b])
    return run


def _reductions(rng) -> GradCheckReport:
    x = _t(rng, 2, 3, 4)
    w = rng.normal(size=(2, 4))
    return _gc(lambda: (x.sum(axis=1) * w).sum() + x.mean() * 3.0 + x.reshape(6, 4)[1:4, ::2].sum(), [x])


def _index(rng) -> GradCheckReport:
    table = _t(rng, 5, 3)
    idx = np.array([[0, 2, 2], [4, 1, 0]])
    w = rng.normal(size=(2, 3, 3))
    return _gc(lambda: (table[idx] * w).sum(), [table])


def _concat(rng) -> GradCheckReport:
    a, b = _t(rng, 2, 3, 2), _t(rng, 2, 3, 4)
    w = rng.normal(size=(2, 3, 6))
    return _gc(lambda: (nx.concat([a, b], axis=-1) * w).sum(), [a, b])


def _gather(rng) -> GradCheckReport:
    x = _t(rng, 2, 5, 3)
    idx = np.array([[4, 0, 0, 2], [1, 1, 3, 4]])
    w = rng.normal(size=(2, 4, 3))
    return _gc(lambda: (nx.gather_rows(x, idx) * w).sum(), [x])


def _linear(rng) -> GradCheckReport:
    x, W, b = _t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 5)
    w = rng.normal(size=(2, 3, 5))
    return _gc(lambda: (nx.linear(x, W, b) * w).sum(), [x, W, b])


def _conv(rng) -> GradCheckReport:
    x, k, b = _t(rng, 2, 6, 3), _t(rng, 3, 3, 4), _t(rng, 4)
    w = rng.normal(size=(2, 6, 4))
    return _gc(lambda: (nx.conv1d_same(x, k, b) * w).sum(), [x, k, b])


def _lstm(reverse: bool) -> Check:
    def run(rng):
        p = nx.init_lstm(rng, 3, 4, "l")
        p.bias.data[:] = rng.normal(scale=0.3, size=p.bias.shape)
        x = _t(rng, 2, 5, 3)
        mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=float)
        w = rng.normal(size=(2, 5, 4))
        f = lambda: (nx.lstm_scan(x, p, mask, reverse=reverse) * w).sum()
        return _gc(f, [x, p.w_ih, p.w_hh, p.bias])
    return run


def _bilstm(rng) -> GradCheckReport:
    fwd, bwd = nx.init_lstm(rng, 3, 2, "f"), nx.init_lstm(rng, 3, 2, "b")
    x = _t(rng, 2, 4, 3)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=float)
    w = rng.normal(size=(2, 4, 4))
    f = lambda: (nx.bilstm(x, fwd, bwd, mask) * w).sum()
    return _gc(f, [x, fwd.w_ih, fwd.w_hh, fwd.bias, bwd.w_ih, bwd.w_hh, bwd.bias])


def _l1(rng) -> GradCheckReport:
    pred = _t(rng, 3, 4)
    target = pred.data + np.where(rng.random((3, 4)) < 0.5, -1, 1) * rng.uniform(0.1, 1.0, (3, 4))
    weight = (rng.random((3, 4)) < 0.7).astype(float)
    weight[0, 0] = 1.0
    return _gc(lambda: nx.l1_loss(pred, target, weight), [pred])


def _huber(rng) -> GradCheckReport:
    pred = _t(rng, 4, 5)
    # residuals on both branches, none within 0.05 of |r| = rho
    mag = np.concatenate([rng.uniform(0.05, 0.9, 10), rng.uniform(1.1, 3.0, 10)])
    r = rng.permutation(mag).reshape(4, 5) * np.where(rng.random((4, 5)) < 0.5, -1, 1)
    target = pred.data - r
    return _gc(lambda: nx.huber_loss(pred, target, nx.HuberConfig(1.0)), [pred])


def _stage1(rng) -> GradCheckReport:
    from .align import build_segmentation
    from .lingfront import PhoneSequence
    from .ttsmodel import Stage1Config, Stage1Model, SymbolTable, make_stage1_batch

    cfg = Stage1Config(phone_embedding_dim=3, encoder_conv_layers=1, encoder_kernel=3, encoder_channels=3,
                       encoder_lstm_hidden=2, prosody_dim=2, ref_conv_layers=1, ref_channels=3,
                       duration_hidden=3, decoder_prenet=3, decoder_lstm_layers=1, decoder_lstm_hidden=2, n_mels=3)
    phones = PhoneSequence(["a", "b", "#", "sil", "d", "#"], [0, 0, 0, 0, 1, 1], [False, False, False, True, False, False])
    durs = [2, 1, 0, 2, 2, 0]
    seg = build_segmentation(phones, durs)
    symbols = SymbolTable(["a", "b", "d"])
    model = Stage1Model(cfg, symbols, seed=int(rng.integers(1 << 30)))
    for p in model.parameters():
        p.data[...] = p.data + rng.normal(scale=0.1, size=p.shape)
    mel = rng.normal(size=(7, 3))
    b = make_stage1_batch([("u", phones, durs, seg, mel)], symbols)
    # shift the targets away from the predictions so L1 has no kinks nearby
    out = model.forward(b)
    b.mel = out["mel"].data + np.where(rng.random(b.mel.shape) < 0.5, -1, 1) * rng.uniform(0.2, 1.0, b.mel.shape)
    b.durations = out["durations"].data + rng.uniform(0.2, 1.0, b.durations.shape)

    def f():
        o = model.forward(b)
        return model.loss(o, b)[0]
    return _gc(f, model.parameters())


def _stage2(rng) -> GradCheckReport:
    from .lingfront import Frontend
    from .prosodypred import PieceVocab, Stage2Config, Stage2Model, stage2_loss

    fe = Frontend.default()
    feats = [fe.analyse(t)[2] for t in ("the dog runs.", "a big table, and the cat.")]
    vocab = PieceVocab([p for f in feats for w in f.words if w for p in fe.embedder.pieces(w)][:-1], fe.embedder)
    cfg = Stage2Config(channels=3, lstm_hidden=2, embed_dim=fe.embedder.dim, predictor_hidden=3)
    model = Stage2Model(cfg, 2, vocab, seed=int(rng.integers(1 << 30)))
    # zero-initialised biases would put some relu inputs exactly on the kink
    for p in model.parameters():
        p.data[...] = p.data + rng.normal(scale=0.1, size=p.shape)
    items = [(f"u{i}", f, rng.normal(size=(len(f), 2)) * 2.0) for i, f in enumerate(feats)]
    b = model.batch(items)
    f = lambda: stage2_loss(model.predict_teacher(b), b.targets, b.unit_mask)
    return _gc(f, model.parameters(), max_coords=40, rng=rng)


CHECKS: dict[str, dict[str, Check]] = {
    "numerics": {
        "add": _binary(lambda a, b: a + b, (3, 4), (4,)),
        "sub": _binary(lambda a, b: a - b, (3, 1), (3, 4)),
        "mul": _binary(lambda a, b: a * b),
        "matmul": _binary(lambda a, b: a @ b, (2, 3, 4), (4, 5)),
        "relu": _unary(nx.relu, kink=True),
        "tanh": _unary(nx.tanh),
        "sigmoid": _unary(nx.sigmoid),
        "softplus": _unary(nx.softplus),
        "abs": _unary(nx.tabs, kink=True),
        "sum/mean/reshape/slice": _reductions,
        "index": _index,
        "concat": _concat,
        "gather_rows": _gather,
        "linear": _linear,
        "conv1d_same": _conv,
        "lstm_scan": _lstm(False),
        "lstm_scan_reverse": _lstm(True),
        "bilstm": _bilstm,
        "l1_loss": _l1,
        "huber_loss": _huber,
    },
    "ttsmodel": {"stage1_loss": _stage1},
    "prosodypred": {"stage2_loss": _stage2},
}


def run_checks(module: str | None = None, seed: int = 0) -> list[tuple[str, GradCheckReport]]:
    if module is not None and module not in CHECKS:
        raise KeyError(f"unknown module {module!r}; choose from {', '.join(CHECKS)}")
    out = []
    for mod, checks in CHECKS.items():
        if module is not None and mod != module:
            continue
        for name, check in checks.items():
            rng = np.random.default_rng([seed, len(out)])
            out.append((f"{mod}.{name}", check(rng)))
    return out

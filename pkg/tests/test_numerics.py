import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wordprosody import numerics as nx
from wordprosody.numerics.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from wordprosody.numerics.module import Module, params_hash

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


# -- linear / conv ----------------------------------------------------------------------
def test_linear_identity_and_hand_sum():
    x = nx.Tensor([[1.0, 2.0]])
    assert nx.linear(x, nx.Tensor(np.eye(2)), nx.Tensor([0.0, 0.0])).data.tolist() == [[1.0, 2.0]]
    assert nx.linear(x, nx.Tensor([[1.0], [1.0]]), nx.Tensor([3.0])).data.tolist() == [[6.0]]


def test_linear_grad_tight(rng):
    x, w, b = (nx.parameter(rng.normal(size=s)) for s in [(3, 4), (4, 2), (2,)])
    proj = rng.normal(size=(3, 2))
    rep = nx.grad_check(lambda: (nx.linear(x, w, b) * proj).sum(), [x, w, b], tol=1e-6)
    assert rep.passed, rep


def test_conv_examples():
    ident = nx.conv1d_same(nx.Tensor([[1.0], [2.0], [3.0]]), nx.Tensor([[[1.0]]]), nx.Tensor([0.0]))
    assert ident.data.ravel().tolist() == [1.0, 2.0, 3.0]
    x = nx.Tensor(np.array([[1.0], [2.0], [3.0]]))
    delta = nx.Tensor(np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1))
    ones = nx.Tensor(np.ones((3, 1, 1)))
    assert nx.conv1d_same(x, delta, nx.Tensor([0.0])).data.ravel().tolist() == [1.0, 2.0, 3.0]
    assert nx.conv1d_same(x, ones, nx.Tensor([0.0])).data.ravel().tolist() == [3.0, 6.0, 5.0]


def test_conv_rejects_even_kernel():
    with pytest.raises(nx.ConfigError):
        nx.conv1d_same(nx.Tensor(np.zeros((4, 1))), nx.Tensor(np.zeros((2, 1, 1))), nx.Tensor([0.0]))


@given(T=st.integers(1, 12), K=st.sampled_from([1, 3, 5, 7, 9]), cin=st.integers(1, 3), cout=st.integers(1, 3))
def test_conv_preserves_length(T, K, cin, cout):
    r = np.random.default_rng(T * 100 + K)
    y = nx.conv1d_same(nx.Tensor(r.normal(size=(T, cin))), nx.Tensor(r.normal(size=(K, cin, cout))), nx.Tensor(np.zeros(cout)))
    assert y.shape == (T, cout)


def test_conv_matches_direct_sum(rng):
    x = rng.normal(size=(7, 2))
    k = rng.normal(size=(5, 2, 3))
    b = rng.normal(size=3)
    y = nx.conv1d_same(nx.Tensor(x), nx.Tensor(k), nx.Tensor(b)).data
    pad = np.vstack([np.zeros((2, 2)), x, np.zeros((2, 2))])
    ref = np.array([sum(pad[t + j] @ k[j] for j in range(5)) + b for t in range(7)])
    np.testing.assert_allclose(y, ref, rtol=0, atol=1e-12)


# -- recurrent ------------------------------------------------------------------------
def test_bilstm_zero_weights_give_zero():
    z = lambda: nx.LSTMParams(nx.parameter(np.zeros((3, 8))), nx.parameter(np.zeros((2, 8))), nx.parameter(np.zeros(8)))
    y = nx.bilstm(nx.Tensor(np.random.default_rng(0).normal(size=(5, 3))), z(), z())
    assert y.shape == (5, 4) and np.all(y.data == 0.0)


def _manual_lstm(x, p):
    H = p.w_hh.shape[0]
    h, c, out = np.zeros(H), np.zeros(H), []
    sig = lambda v: 1 / (1 + np.exp(-v))
    for t in range(len(x)):
        a = x[t] @ p.w_ih.data + h @ p.w_hh.data + p.bias.data
        i, f, g, o = sig(a[:H]), sig(a[H:2 * H]), np.tanh(a[2 * H:3 * H]), sig(a[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_lstm_matches_textbook_cell(rng):
    p = nx.init_lstm(rng, 3, 4, "l")
    p.bias.data[:] = rng.normal(size=16)
    x = rng.normal(size=(6, 3))
    np.testing.assert_allclose(nx.lstm_scan(nx.Tensor(x), p).data, _manual_lstm(x, p), atol=1e-13)


def test_lstm_step_matches_scan(rng):
    p = nx.init_lstm(rng, 3, 4, "l")
    x = rng.normal(size=(2, 5, 3))
    full = nx.lstm_scan(nx.Tensor(x), p).data
    h = c = np.zeros((2, 4))
    for t in range(5):
        h, c = nx.lstm_step(x[:, t], h, c, p)
        np.testing.assert_allclose(h, full[:, t], atol=1e-14)


def test_bilstm_backward_half_is_reversed_forward_run(rng):
    fwd, bwd = nx.init_lstm(rng, 3, 2, "f"), nx.init_lstm(rng, 3, 2, "b")
    x = rng.normal(size=(6, 3))
    y = nx.bilstm(nx.Tensor(x), fwd, bwd).data
    ref = nx.lstm_scan(nx.Tensor(x[::-1].copy()), bwd).data[::-1]
    np.testing.assert_allclose(y[:, 2:], ref, atol=1e-14)


def test_padding_does_not_change_valid_steps(rng):
    fwd, bwd = nx.init_lstm(rng, 3, 2, "f"), nx.init_lstm(rng, 3, 2, "b")
    x = rng.normal(size=(4, 3))
    padded = np.concatenate([x, rng.normal(size=(3, 3))])[None]
    mask = np.array([[1, 1, 1, 1, 0, 0, 0]], dtype=float)
    a = nx.bilstm(nx.Tensor(x), fwd, bwd).data
    b = nx.bilstm(nx.Tensor(padded), fwd, bwd, mask).data[0, :4]
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_bilstm_grad_4_steps_h3(rng):
    fwd, bwd = nx.init_lstm(rng, 2, 3, "f"), nx.init_lstm(rng, 2, 3, "b")
    x = nx.parameter(rng.normal(size=(4, 2)))
    w = rng.normal(size=(4, 6))
    rep = nx.grad_check(lambda: (nx.bilstm(x, fwd, bwd) * w).sum(), [x, fwd.w_ih, fwd.w_hh, bwd.bias], eps=1e-5)
    assert rep.passed, rep


def test_bilstm_rejects_empty():
    p = nx.init_lstm(np.random.default_rng(0), 2, 2, "p")
    with pytest.raises(Exception):
        nx.bilstm(nx.Tensor(np.zeros((0, 2))), p, p)


# -- losses ---------------------------------------------------------------------------
def test_l1_values():
    assert nx.l1_loss([1.0, -2.0], [1.0, -2.0]).item() == 0.0
    assert nx.l1_loss([1.0, -2.0], [0.0, 0.0]).item() == 1.5


def test_l1_subgradient_zero_at_exact_fit():
    p = nx.parameter([0.5, 1.0])
    nx.l1_loss(p, [0.5, 0.0]).backward()
    assert p.grad.tolist() == [0.0, 0.5]


def test_huber_values():
    cfg = nx.HuberConfig(1.0)
    assert nx.huber_loss([0.5], [0.0], cfg).item() == 0.125
    assert nx.huber_loss([2.0], [0.0], cfg).item() == 1.5
    for rho in (0.3, 1.0, 2.5):
        c = nx.HuberConfig(rho)
        assert nx.huber_loss([rho], [0.0], c).item() == pytest.approx(0.5 * rho * rho, abs=1e-15)
        below = nx.huber_loss([rho - 1e-9], [0.0], c).item()
        above = nx.huber_loss([rho + 1e-9], [0.0], c).item()
        assert abs(above - below) < 1e-8


def test_huber_rejects_bad_rho():
    with pytest.raises(ValueError):
        nx.HuberConfig(0.0)


def test_huber_grad_at_r03_tight():
    p = nx.parameter([0.3])
    rep = nx.grad_check(lambda: nx.huber_loss(p, [0.0]), [p], tol=1e-6)
    assert rep.passed, rep


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite), st.floats(0.1, 3.0))
def test_huber_symmetric_and_bounded(p, t, rho):
    cfg = nx.HuberConfig(rho)
    h = nx.huber_loss(p, t, cfg).item()
    assert h == pytest.approx(nx.huber_loss(t, p, cfg).item(), abs=1e-12)
    assert h <= nx.l1_loss(p, t).item() * rho + 0.5 * rho * rho + 1e-12


def test_loss_shape_mismatch():
    with pytest.raises(nx.NumericsError):
        nx.l1_loss([1.0, 2.0], [1.0])


# -- optimiser -----------------------------------------------------------------------
def test_lr_schedule_values():
    s = nx.TrainingSchedule(base_lr=0.001, decay_factor=0.98, decay_interval_steps=1)
    assert s.lr_at(0) == 0.001
    assert s.lr_at(1) == pytest.approx(0.00098, abs=1e-18)


@given(st.floats(1e-5, 1.0), st.floats(0.5, 1.0), st.integers(1, 50), st.integers(0, 400))
def test_lr_monotone_and_closed_form(base, decay, interval, k):
    s = nx.TrainingSchedule(base_lr=base, decay_factor=decay, decay_interval_steps=interval)
    assert s.lr_at(k + 1) <= s.lr_at(k)
    assert s.lr_at(k) == base * decay ** (k // interval)


@pytest.mark.parametrize("kw", [{"base_lr": 0.0}, {"decay_factor": 1.5}, {"decay_factor": 0.0}, {"decay_interval_steps": 0}])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        nx.TrainingSchedule(**kw)


def test_adam_first_step_is_signed_lr(rng):
    p = nx.parameter(rng.normal(size=5))
    before = p.data.copy()
    g = rng.normal(size=5)
    s = nx.TrainingSchedule(base_lr=0.01)
    nx.adam_step({"p": p}, {"p": g}, s, nx.AdamState(), 1)
    np.testing.assert_allclose(p.data - before, -0.01 * np.sign(g), atol=1e-6)


def test_adam_exact_two_steps():
    # brute-force reference for two steps of Adam with decay
    s = nx.TrainingSchedule(base_lr=0.1, decay_factor=0.5, decay_interval_steps=1)
    p = nx.parameter([1.0])
    st_ = nx.AdamState()
    m = v = 0.0
    x = 1.0
    for step, g in ((1, 0.3), (2, -0.2)):
        nx.adam_step({"p": p}, {"p": np.array([g])}, s, st_, step)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.1 * 0.5 ** (step - 1) * (m / (1 - 0.9 ** step)) / (math.sqrt(v / (1 - 0.999 ** step)) + 1e-8)
        assert abs(p.data[0] - x) <= 1e-12


def test_adam_zero_grad_noop(rng):
    p = nx.parameter(rng.normal(size=3))
    before = p.data.copy()
    nx.adam_step({"p": p}, {"p": np.zeros(3)}, nx.TrainingSchedule(), nx.AdamState(), 1)
    assert np.array_equal(p.data, before)


def test_adam_rejects_step_zero():
    with pytest.raises(ValueError):
        nx.adam_step({}, {}, nx.TrainingSchedule(), nx.AdamState(), 0)


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert nx.clip_global_norm(g, 1.0) == 5.0
    assert math.isclose(math.hypot(g["a"][0], g["b"][0]), 1.0)


# -- autodiff plumbing -------------------------------------------------------------------
def test_grad_check_square():
    x = nx.parameter([3.0])
    rep = nx.grad_check(lambda: x * x, [x])
    assert rep.analytic == 6.0 and abs(rep.numeric - 6.0) < 1e-8


def test_grad_accumulates_through_reuse():
    x = nx.parameter([2.0])
    y = x * x + x * 3.0
    y.backward()
    assert x.grad.tolist() == [7.0]


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_broadcast_grad_shapes(a, b):
    ta, tb = nx.parameter(a), nx.parameter(b)
    (ta * tb + tb).sum().backward()
    assert ta.grad.shape == a.shape and tb.grad.shape == b.shape
    np.testing.assert_allclose(tb.grad, a.sum(axis=0) + 3.0, atol=1e-12)


def test_debug_finite_flag():
    old = nx.tensor.DEBUG_FINITE if hasattr(nx, "tensor") else None
    from wordprosody.numerics import tensor as T

    T.DEBUG_FINITE = True
    try:
        with pytest.raises(nx.NumericsError):
            nx.Tensor([1.0]) * np.inf
    finally:
        T.DEBUG_FINITE = False if old is None else old


# -- modules / checkpoints ---------------------------------------------------------------
class _Toy(Module):
    def __init__(self, r):
        self.w = nx.parameter(r.normal(size=(2, 3)))
        self.layers = [nx.init_lstm(r, 2, 1, "l")]
        self._private = nx.parameter(np.zeros(1))


def test_module_traversal_sorted(rng):
    names = list(_Toy(rng).named_parameters())
    assert names == ["layers.0.bias", "layers.0.w_hh", "layers.0.w_ih", "w"]


def test_checkpoint_roundtrip_bytes(tmp_path, rng):
    arrays = {"b": rng.normal(size=(2, 3)), "a": np.arange(4.0), "s": np.array(2.5)}
    save_checkpoint(tmp_path / "x.ckpt", arrays, {"k": 1, "stage": 1})
    got, meta = load_checkpoint(tmp_path / "x.ckpt")
    assert meta == {"k": 1, "stage": 1}
    for k in arrays:
        assert np.array_equal(got[k], arrays[k]) and got[k].shape == np.shape(arrays[k])
    save_checkpoint(tmp_path / "y.ckpt", dict(reversed(list(arrays.items()))), {"stage": 1, "k": 1})
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()
    assert params_hash(got) == params_hash(arrays)


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOTACKPT" + b"\0" * 20)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad")
    (tmp_path / "short").write_bytes(b"WPCKPT01\x01")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short")

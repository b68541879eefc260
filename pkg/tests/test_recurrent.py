import numpy as np
import pytest

from qtsim.errors import ConfigError, ShapeError
from qtsim.queue import QueueProxies
from qtsim.recurrent import LSTMCell, LSTMConfig, LSTMStack, lstm_cell, qmogrifier_mask
from qtsim.tensor import Tensor, precision


def sig(v):
    return 1 / (1 + np.exp(-v))


def np_lstm(x, h, c, wx, wh, b):
    H = h.shape[1]
    z = x @ wx + h @ wh + b
    i, f, g, o = sig(z[:, :H]), sig(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sig(z[:, 3 * H:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def test_cell_matches_numpy_reference(rng):
    x, h, c = rng.standard_normal((4, 3)), rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
    wx, wh, b = rng.standard_normal((3, 20)), rng.standard_normal((5, 20)), rng.standard_normal((1, 20))
    with precision("float64"):
        h2, c2 = lstm_cell(*(Tensor(a) for a in (x, h, c, wx, wh, b)))
    want_h, want_c = np_lstm(x, h, c, wx, wh, b)
    np.testing.assert_allclose(h2.data, want_h, rtol=1e-12)
    np.testing.assert_allclose(c2.data, want_c, rtol=1e-12)


def test_cell_init(rng):
    cell = LSTMCell(7, 16, rng, mogrify=True)
    bound = 1 / np.sqrt(16)
    np.testing.assert_array_equal(cell.b.data[:, 16:32], 1.0)
    for name in ("W_x", "W_h"):
        assert np.abs(cell.named_parameters()[name].data).max() <= bound
    assert cell.w_m.shape == (18, 7) and cell.b_m.shape == (1, 7)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        lstm_cell(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), Tensor(np.ones((2, 4))),
                  Tensor(np.ones((3, 12))), Tensor(np.ones((4, 16))), Tensor(np.ones((1, 16))))


def test_mogrifier_mask(rng):
    h, w, l = rng.standard_normal((2, 4)), rng.uniform(0, 1, (2, 1)), rng.uniform(0, 1, (2, 1))
    wm, bm = rng.standard_normal((6, 3)), rng.standard_normal((1, 3))
    with precision("float64"):
        mask = qmogrifier_mask(*(Tensor(a) for a in (h, w, l, wm, bm))).data
    np.testing.assert_allclose(mask, sig(np.concatenate([h, w, l], axis=1) @ wm + bm), rtol=1e-12)
    assert mask.min() > 0 and mask.max() < 1


def manual_direction(cell, xs, ws, ls):
    H = cell.hidden
    h = np.zeros((xs[0].shape[0], H))
    c = np.zeros_like(h)
    outs = []
    for x, w, l in zip(xs, ws, ls):
        if cell.mogrify:
            x = x * sig(np.concatenate([h, w, l], axis=1) @ cell.w_m.data + cell.b_m.data)
        h, c = np_lstm(x, h, c, cell.w_x.data, cell.w_h.data, cell.b.data)
        outs.append(h)
    return outs


@pytest.mark.parametrize("mogrify", [False, True])
def test_bidirectional_stack_matches_manual_unroll(rng, mogrify):
    with precision("float64"):
        stack = LSTMStack(3, LSTMConfig(hidden_size=4, layers=2, bidirectional=True), rng, mogrify=mogrify)
        seq = rng.standard_normal((2, 3, 3))
        w_n, l_n = rng.uniform(0, 1, (2, 3, 1)), rng.uniform(0, 1, (2, 3, 1))
        got = stack(Tensor(seq), QueueProxies(Tensor(w_n), Tensor(l_n))).data
    xs = [seq[:, t] for t in range(3)]
    ws = [w_n[:, t] for t in range(3)]
    ls = [l_n[:, t] for t in range(3)]
    for layer, (fwd, bwd) in enumerate(stack.cells):
        of = manual_direction(fwd, xs, ws, ls)
        ob = manual_direction(bwd, xs[::-1], ws[::-1], ls[::-1])[::-1]  # reverse order, proxies included
        xs = [np.concatenate([a, b], axis=1) for a, b in zip(of, ob)]
        final = np.concatenate([of[-1], ob[0]], axis=1)
    np.testing.assert_allclose(got, final, rtol=1e-12)
    assert got.shape == (2, 8)


def test_unidirectional_output_is_last_hidden(rng):
    stack = LSTMStack(3, LSTMConfig(hidden_size=5, layers=1), rng)
    seq = Tensor(rng.standard_normal((4, 3, 3)))
    out = stack(seq)
    assert out.shape == (4, 5)
    np.testing.assert_array_equal(out.data, stack.cells[0][0].run([seq[:, t, :] for t in range(3)], None, None)[-1].data)


def test_dropout_between_layers_only_in_training(rng):
    stack = LSTMStack(3, LSTMConfig(hidden_size=6, layers=2, dropout=0.5), rng)
    seq = Tensor(rng.standard_normal((4, 3, 3)))
    a, b = stack(seq), stack(seq)
    np.testing.assert_array_equal(a.data, b.data)
    c = stack(seq, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(a.data, c.data)


def test_mogrifier_needs_proxies(rng):
    stack = LSTMStack(3, LSTMConfig(hidden_size=4, layers=1), rng, mogrify=True)
    with pytest.raises(ShapeError):
        stack(Tensor(np.ones((2, 3, 3))))


def test_config_validation():
    with pytest.raises(ConfigError):
        LSTMConfig(hidden_size=0).validate()
    with pytest.raises(ConfigError):
        LSTMConfig(dropout=1.0).validate()
    assert LSTMConfig(hidden_size=8, bidirectional=True).output_size == 16

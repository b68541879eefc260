import numpy as np
import pytest

import oracles
from qtsim.errors import ConfigError, SchemaError
from qtsim.queue import QueueConfig, resolve_columns, residual_delay, utilisation
from qtsim.tensor import Tensor, precision

D, A = 0, 2  # column positions used below


def random_chains(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3, 4))
    x[:, :, D] = rng.uniform(0, 6000, (n, 3))
    x[:, :, A] = rng.uniform(1, 900, (n, 3))
    return x


def oracle_arrays(x, **kw):
    w, l = [], []
    for chain in x:
        wn, ln = oracles.queue_proxies(chain[:, D].tolist(), chain[:, A].tolist(), **kw)
        w.append(wn)
        l.append(ln)
    return np.array(w)[..., None], np.array(l)[..., None]


def test_matches_scalar_oracle_on_1000_chains():
    x = random_chains(1000, 0)
    with precision("float64"):
        q = residual_delay(Tensor(x), D, A, QueueConfig())
    w, l = oracle_arrays(x)
    assert np.abs(q.W_n.data - w).max() <= 1e-6
    assert np.abs(q.L_n.data - l).max() <= 1e-6
    for arr in (q.W_n.data, q.L_n.data):
        assert arr.min() >= 0.0 and arr.max() <= 1.0


def test_float32_path_stays_close():
    x = random_chains(300, 1)
    q = residual_delay(Tensor(x), D, A)
    w, l = oracle_arrays(x)
    assert q.W_n.dtype == np.float32
    assert np.abs(q.W_n.data - w).max() <= 1e-5
    assert np.abs(q.L_n.data - l).max() <= 1e-5


def test_utilisation_is_capped():
    x = random_chains(1000, 2)
    with precision("float64"):
        _, _, rho = utilisation(Tensor(x[:, :, D:D + 1]), Tensor(x[:, :, A:A + 1]), QueueConfig())
    assert rho.data.max() <= 0.99
    assert (rho.data == 0.99).any()  # the sample does reach saturation
    want = [oracles.queue_rho(d, a) for d, a in zip(x[:, :, D].ravel(), x[:, :, A].ravel())]
    np.testing.assert_allclose(rho.data.ravel(), want, rtol=1e-12)


def test_non_default_constants():
    x = random_chains(50, 3)
    cfg = QueueConfig(k_s=0.002, k_a=3.0, eps=1e-5, rho_cap=0.9)
    with precision("float64"):
        q = residual_delay(Tensor(x), D, A, cfg)
    w, l = oracle_arrays(x, k_s=0.002, k_a=3.0, eps=1e-5, cap=0.9)
    np.testing.assert_allclose(q.W_n.data, w, atol=1e-9)
    np.testing.assert_allclose(q.L_n.data, l, atol=1e-9)


def test_identical_legs_give_zero_proxies():
    x = np.tile(np.array([[800.0, 0.0, 120.0, 0.0]]), (1, 3, 1))
    q = residual_delay(Tensor(x), D, A)
    np.testing.assert_array_equal(q.W_n.data, 0.0)
    np.testing.assert_array_equal(q.L_n.data, 0.0)


def test_chain_means_shape():
    q = residual_delay(Tensor(random_chains(4, 5)), D, A)
    w_bar, l_bar = q.chain_means()
    assert w_bar.shape == l_bar.shape == (4, 1, 1)
    assert q.W_n.shape == (4, 3, 1)


def test_errors():
    with pytest.raises(SchemaError):
        residual_delay(Tensor(np.ones((3, 4))), D, A)
    with pytest.raises(ConfigError, match="scheduled_estimated_time"):
        resolve_columns(["distance", "airline"])
    assert resolve_columns(["a", "scheduled_estimated_time", "distance"]) == (2, 1)
    with pytest.raises(ConfigError):
        QueueConfig(rho_cap=1.0).validate()
    with pytest.raises(ConfigError):
        QueueConfig(k_s=0.0).validate()

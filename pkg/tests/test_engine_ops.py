import math

import numpy as np
import pytest
from scipy.signal import correlate

from roadcast import engine as E


def T(a, dtype=np.float64):
    return E.Tensor(np.asarray(a, dtype=dtype), dtype=dtype)


def test_dtype_default_and_precision_switch():
    assert E.get_dtype() is np.float32
    with E.precision(np.float64):
        assert E.Tensor([1.0]).data.dtype == np.float64
    assert E.Tensor([1.0]).data.dtype == np.float32


def test_zero_kernel_gives_zero_output():
    x = T(np.random.default_rng(0).normal(size=(1, 5, 5, 2)))
    out = E.conv2d(x, T(np.zeros((3, 3, 2, 3))), T(np.zeros(3)))
    assert out.shape == (1, 5, 5, 3) and not out.data.any()


def test_ones_kernel_centre_is_input_sum():
    x = np.arange(9.0).reshape(1, 3, 3, 1)
    out = E.conv2d(T(x), T(np.ones((3, 3, 1, 1))), T(np.zeros(1)))
    assert out.data[0, 1, 1, 0] == 36.0
    assert out.data[0, 0, 0, 0] == 0 + 1 + 3 + 4


@pytest.mark.parametrize("c_in,c_out", [(3, 4), (4, 2), (1, 1)])
def test_conv_matches_scipy_correlation(c_in, c_out):
    rng = np.random.default_rng(c_in * 10 + c_out)
    x = rng.normal(size=(2, 6, 5, c_in))
    k = rng.normal(size=(3, 3, c_in, c_out))
    b = rng.normal(size=c_out)
    out = E.conv2d(T(x), T(k), T(b)).data
    for n in range(2):
        for o in range(c_out):
            ref = sum(correlate(x[n, :, :, c], k[:, :, c, o], mode="same") for c in range(c_in)) + b[o]
            assert np.allclose(out[n, :, :, o], ref)


def test_conv_shape_at_full_tile_and_channel_mismatch():
    x = E.Tensor(np.zeros((1, 256, 256, 3)))
    assert E.conv2d(x, E.Tensor(np.zeros((3, 3, 3, 4))), E.Tensor(np.zeros(4))).shape == (1, 256, 256, 4)
    with pytest.raises(ValueError):
        E.conv2d(x, E.Tensor(np.zeros((3, 3, 2, 4))), E.Tensor(np.zeros(4)))


def test_maxpool():
    assert np.all(E.maxpool2(T(np.full((1, 4, 4, 2), 7.0))).data == 7.0)
    block = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    assert E.maxpool2(T(block)).data.item() == 4.0
    x = E.Tensor(np.zeros((1, 256, 256, 1)))
    sides = []
    for _ in range(6):
        x = E.maxpool2(x)
        sides.append(x.shape[1])
    assert sides == [128, 64, 32, 16, 8, 4]
    with pytest.raises(ValueError):
        E.maxpool2(T(np.zeros((1, 3, 4, 1))))


def test_batchnorm_training_and_inference():
    rng = np.random.default_rng(2)
    # balanced +-1 entries: exactly zero mean and unit variance per channel
    x = rng.permuted(np.repeat([[-1.0], [1.0]], 512, axis=0).reshape(64, 4, 4, 1) * np.ones(3), axis=0)
    state = E.BatchNormState(3, dtype=np.float64)
    ones, zeros = T(np.ones(3)), T(np.zeros(3))
    out = E.batchnorm(T(x), ones, zeros, state, training=True).data
    assert np.max(np.abs(out - x)) < 1e-3
    assert np.allclose(out, x / np.sqrt(1 + 1e-3))
    assert np.allclose(state.mean, 0.01 * x.mean(axis=(0, 1, 2)))
    assert np.allclose(state.var, 0.99 + 0.01 * x.var(axis=(0, 1, 2)))
    beta = np.array([0.5, -1.0, 2.0])
    shifted = E.batchnorm(T(rng.normal(3, 2, size=(32, 2, 2, 3))), ones, T(beta), state, True).data
    assert np.allclose(shifted.mean(axis=(0, 1, 2)), beta)
    state.mean, state.var = np.array([1.0, 2.0, 3.0]), np.array([4.0, 0.5, 1.0])
    gamma = np.array([2.0, 1.0, 0.5])
    y = rng.normal(size=(5, 2, 2, 3))
    inf = E.batchnorm(T(y), T(gamma), T(beta), state, training=False).data
    assert np.allclose(inf, (y - state.mean) / np.sqrt(state.var + 1e-3) * gamma + beta)


def test_elementwise_and_shape_ops():
    assert E.sigmoid(T([0.0])).data.item() == 0.5
    assert E.relu(T([-3.0])).data.item() == 0.0
    s = E.sigmoid(T([-800.0, 800.0])).data
    assert s[0] == 0.0 and s[1] == 1.0
    flat = E.flatten(T(np.arange(24.0).reshape(2, 3, 4))).data
    assert flat.shape == (2, 12) and flat[1, 0] == 12.0
    assert E.concat(T(np.zeros((2, 128))), T(np.ones((2, 40)))).shape == (2, 168)
    assert E.dense(T([[1.0, 2.0]]), T([[1.0], [3.0]]), T([0.5])).data.item() == 7.5


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_lstm_zero_weights_two_step_unroll():
    seq = T(np.random.default_rng(0).normal(size=(1, 2, 3)))
    u = 2
    out = E.lstm(seq, T(np.zeros((3, 4 * u))), T(np.zeros((u, 4 * u))), T(np.zeros(4 * u)),
                 return_sequences=True, activation="sigmoid").data
    # every gate and the candidate are sigmoid(0) = 0.5
    c1 = 0.5 * 0 + 0.5 * 0.5
    h1 = 0.5 * _sig(c1)
    c2 = 0.5 * c1 + 0.5 * 0.5
    h2 = 0.5 * _sig(c2)
    assert np.allclose(out[0, :, 0], [h1, h2]) and np.allclose(out[0, :, 1], [h1, h2])


def test_lstm_matches_reference_recurrence():
    rng = np.random.default_rng(4)
    n, steps, d, u = 3, 5, 4, 3
    x, wx, wh, b = rng.normal(size=(n, steps, d)), rng.normal(size=(d, 4 * u)), rng.normal(size=(u, 4 * u)), rng.normal(size=4 * u)
    out = E.lstm(T(x), T(wx), T(wh), T(b), return_sequences=False, activation="tanh").data
    sig = np.vectorize(_sig)
    h, c = np.zeros((n, u)), np.zeros((n, u))
    for t in range(steps):
        z = x[:, t] @ wx + h @ wh + b
        i, f, g, o = sig(z[:, :u]), sig(z[:, u:2 * u]), np.tanh(z[:, 2 * u:3 * u]), sig(z[:, 3 * u:])
        c = f * c + i * g
        h = o * np.tanh(c)
    assert np.allclose(out, h)


def test_lstm_shapes_and_errors():
    seq = E.Tensor(np.zeros((2, 10, 59)))
    out = E.lstm(seq, E.Tensor(np.zeros((59, 236))), E.Tensor(np.zeros((59, 236))),
                 E.Tensor(np.zeros(236)), return_sequences=True)
    assert out.shape == (2, 10, 59)
    with pytest.raises(ValueError):
        E.lstm(E.Tensor(np.zeros((2, 0, 59))), E.Tensor(np.zeros((59, 236))),
               E.Tensor(np.zeros((59, 236))), E.Tensor(np.zeros(236)), return_sequences=False)
    with pytest.raises(ValueError):
        E.lstm(seq, E.Tensor(np.zeros((58, 236))), E.Tensor(np.zeros((59, 236))),
               E.Tensor(np.zeros(236)), return_sequences=False)


def test_weighted_bce_values():
    half = T([[0.5]])
    assert E.weighted_bce(half, [[1]]).data.item() == pytest.approx(math.log(2))
    assert E.weighted_bce(half, [[1]], w1=16.01).data.item() == pytest.approx(16.01 * math.log(2))
    assert E.weighted_bce(half, [[1]], w1=16.01).data.item() == pytest.approx(11.097, abs=1e-3)
    assert E.weighted_bce(T([[1e-12]]), [[0]]).data.item() < 1e-6
    # clamping keeps a confident miss finite
    assert E.weighted_bce(T([[0.0]]), [[1]]).data.item() == pytest.approx(-math.log(1e-7))


def test_bce_sum_and_mean_against_formula():
    rng = np.random.default_rng(6)
    p, y = rng.uniform(0.01, 0.99, (20, 1)), rng.integers(0, 2, (20, 1))
    per = -(16.01 * y * np.log(p) + 1.01 * (1 - y) * np.log(1 - p))
    assert E.weighted_bce(T(p), y, 1.01, 16.01, "sum").data.item() == pytest.approx(per.sum())
    assert E.weighted_bce(T(p), y, 1.01, 16.01).data.item() == pytest.approx(per.mean())
    with pytest.raises(ValueError):
        E.weighted_bce(T(p), y, reduction="max")


def test_non_finite_values_trip_an_error():
    with pytest.raises(E.NonFiniteError):
        E.add(T([np.inf]), T([1.0]))


def test_ops_are_deterministic():
    rng = np.random.default_rng(8)
    x, k, b = rng.normal(size=(2, 8, 8, 3)), rng.normal(size=(3, 3, 3, 5)), rng.normal(size=5)
    run = lambda: E.conv2d(E.Tensor(x), E.Tensor(k), E.Tensor(b)).data.tobytes()
    assert run() == run()

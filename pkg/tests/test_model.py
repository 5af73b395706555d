"""Reward model: exact cell arithmetic, persistence, dropout, normalization."""

import math

import numpy as np
import pytest

from safeteleop.model import (
    ModelSpec,
    NormalizedArray,
    Normalization,
    RewardModel,
    sigmoid,
)


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_param_shapes_default():
    shapes = RewardModel.param_shapes(ModelSpec())
    assert shapes["lstm0.Wx"] == (400, 12)
    assert shapes["lstm1.Wx"] == (400, 100)
    assert shapes["lstm0.Wh"] == (400, 100)
    assert shapes["dec0.W"] == (50, 100)
    assert shapes["dec1.W"] == (25, 50)
    assert shapes["dec2.W"] == (3, 25)


def test_initialize_forget_bias_and_determinism():
    spec = ModelSpec(lstm_layers=1, hidden=4, decoder=(3,))
    m1 = RewardModel.initialize(spec, seed=5)
    m2 = RewardModel.initialize(spec, seed=5)
    b = m1.params["lstm0.b"]
    assert np.all(b[4:8] == 1.0) and np.all(b[:4] == 0.0) and np.all(b[8:] == 0.0)
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_single_lstm_cell_hand_computed():
    """One unit, one timestep: match the cell equations evaluated by hand."""
    spec = ModelSpec(input_dim=1, lstm_layers=1, hidden=1, decoder=(), m_k=1, window=1)
    params = {
        "lstm0.Wx": np.array([[0.3], [-0.2], [0.5], [0.1]]),  # i, f, g, o rows
        "lstm0.Wh": np.zeros((4, 1)),
        "lstm0.b": np.array([0.05, -0.1, 0.2, 0.0]),
        "dec0.W": np.array([[1.5]]),
        "dec0.b": np.array([-0.25]),
    }
    m = RewardModel(spec, params, Normalization(np.zeros(1), np.ones(1)))
    x = 0.7
    gi = _sig(0.3 * x + 0.05)
    gf = _sig(-0.2 * x - 0.1)
    gg = math.tanh(0.5 * x + 0.2)
    go = _sig(0.1 * x + 0.0)
    c = gi * gg  # zero initial cell state
    h = go * math.tanh(c)
    expected = _sig(1.5 * h - 0.25)
    out = m.predict_one(np.array([[x]]))
    assert out.shape == (1,)
    assert abs(float(out[0]) - expected) < 1e-12


def test_two_timestep_recurrence_hand_computed():
    spec = ModelSpec(input_dim=1, lstm_layers=1, hidden=1, decoder=(), m_k=1, window=2)
    params = {
        "lstm0.Wx": np.array([[0.3], [-0.2], [0.5], [0.1]]),
        "lstm0.Wh": np.array([[0.4], [0.2], [-0.3], [0.6]]),
        "lstm0.b": np.array([0.05, -0.1, 0.2, 0.0]),
        "dec0.W": np.array([[1.5]]),
        "dec0.b": np.array([-0.25]),
    }
    m = RewardModel(spec, params, Normalization(np.zeros(1), np.ones(1)))
    h = c = 0.0
    for x in (0.7, -0.4):
        gi = _sig(0.3 * x + 0.4 * h + 0.05)
        gf = _sig(-0.2 * x + 0.2 * h - 0.1)
        gg = math.tanh(0.5 * x - 0.3 * h + 0.2)
        go = _sig(0.1 * x + 0.6 * h)
        c = gf * c + gi * gg
        h = go * math.tanh(c)
    expected = _sig(1.5 * h - 0.25)
    out = m.predict_one(np.array([[0.7], [-0.4]]))
    assert abs(float(out[0]) - expected) < 1e-12


def test_forward_shapes_range_and_batch_consistency():
    spec = ModelSpec(lstm_layers=1, hidden=8, decoder=(6,), window=5)
    m = RewardModel.initialize(spec, seed=1)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 5, 12))
    R = m.forward(X)
    assert R.shape == (4, 3)
    assert np.all(R > 0.0) and np.all(R < 1.0)
    for i in range(4):
        assert np.array_equal(m.predict_one(X[i]), R[i])


def test_window_length_mismatch_raises():
    m = RewardModel.initialize(ModelSpec(lstm_layers=1, hidden=4, window=5), seed=0)
    with pytest.raises(ValueError):
        m.forward(np.zeros((1, 4, 12)))


def test_double_normalization_guard():
    n = Normalization(np.zeros(12), np.full(12, 2.0))
    g = n.apply(np.ones(12))
    assert isinstance(g, NormalizedArray)
    assert np.allclose(np.asarray(g), 0.5)
    with pytest.raises(ValueError):
        n.apply(g)


def test_save_load_bit_identical(tmp_path):
    spec = ModelSpec(lstm_layers=2, hidden=6, decoder=(5, 4), window=4)
    m = RewardModel.initialize(spec, seed=3)
    m.norm = Normalization(np.arange(12.0), np.arange(1.0, 13.0))
    p = tmp_path / "m.npz"
    m.save(p)
    m2 = RewardModel.load(p)
    assert vars(m2.spec) == vars(m.spec)
    assert set(m2.params) == set(m.params)
    for k in m.params:
        assert np.array_equal(m2.params[k], m.params[k])
    assert np.array_equal(m2.norm.mean, m.norm.mean)
    assert np.array_equal(m2.norm.scale, m.norm.scale)
    X = np.random.default_rng(1).standard_normal((3, 4, 12))
    assert np.array_equal(m.forward(X), m2.forward(X))


def test_load_rejects_unknown_version(tmp_path):
    m = RewardModel.initialize(ModelSpec(lstm_layers=1, hidden=2, window=2), seed=0)
    p = tmp_path / "m.npz"
    m.save(p)
    import json

    data = dict(np.load(p))
    meta = json.loads(bytes(data["__meta__"]).decode())
    meta["version"] = 999
    data["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(p, **data)
    with pytest.raises(ValueError):
        RewardModel.load(p)


def test_dropout_training_mode_deterministic_given_rng():
    spec = ModelSpec(lstm_layers=2, hidden=6, decoder=(5,), window=4)
    m = RewardModel.initialize(spec, seed=2)
    X = np.random.default_rng(4).standard_normal((3, 4, 12))
    r1, _ = m.forward(X, train=True, mask_rng=np.random.default_rng(9))
    r2, _ = m.forward(X, train=True, mask_rng=np.random.default_rng(9))
    r3, _ = m.forward(X, train=True, mask_rng=np.random.default_rng(10))
    assert np.array_equal(r1, r2)
    assert not np.array_equal(r1, r3)
    # eval mode ignores dropout entirely
    assert np.array_equal(m.forward(X), m.forward(X))


def test_sigmoid_matches_reference():
    z = np.linspace(-20, 20, 101)
    assert np.allclose(sigmoid(z), 1.0 / (1.0 + np.exp(-z)), atol=1e-15)

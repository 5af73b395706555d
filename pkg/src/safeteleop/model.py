"""LSTM-DNN reward model, implemented directly on numpy.

Architecture: stacked LSTM (default 2 layers x 100 units) over the feature
history, final hidden state decoded through dense layers (100 -> 50 -> 25
-> m_k) with ReLU hidden activations and an elementwise sigmoid output, so
every reward lies strictly in (0, 1). Dropout (0.1 between LSTM layers,
0.2 after decoder hidden layers) is active in training mode only, with
inverted scaling and masks shared across timesteps per batch element.

Forward caches everything the exact BPTT backward pass in `training`
needs. Parameters live in an ordered dict of float64 arrays so training
is bit-reproducible and save/load round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import HISTORY_LEN, NUM_FEATURES

MODEL_FORMAT_VERSION = 1


try:  # single C ufunc; noticeably faster than composing numpy temporaries
    from scipy.special import expit as sigmoid
except ImportError:  # pragma: no cover

    def sigmoid(z):
        return 1.0 / (1.0 + np.exp(-z))


@dataclass
class ModelSpec:
    input_dim: int = NUM_FEATURES
    lstm_layers: int = 2
    hidden: int = 100
    decoder: tuple = (50, 25)
    m_k: int = 3
    window: int = HISTORY_LEN
    lstm_dropout: float = 0.1
    decoder_dropout: float = 0.2


class NormalizedArray(np.ndarray):
    """Marker subclass: guards against normalizing features twice."""


@dataclass
class Normalization:
    """Per-feature affine standardization fit on the training split."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(NUM_FEATURES))
    scale: np.ndarray = field(default_factory=lambda: np.ones(NUM_FEATURES))

    @staticmethod
    def fit(raw: np.ndarray) -> "Normalization":
        mean = raw.mean(axis=0)
        scale = raw.std(axis=0)
        scale[scale < 1e-12] = 1.0  # constant features (the z slots) pass through
        return Normalization(mean, scale)

    def apply(self, gamma: np.ndarray) -> np.ndarray:
        if isinstance(gamma, NormalizedArray):
            raise ValueError("features are already normalized")
        return np.asarray((gamma - self.mean) / self.scale).view(NormalizedArray)


class RewardModel:
    def __init__(self, spec: ModelSpec, params: dict, norm: Normalization):
        self.spec = spec
        self.params = params
        self.norm = norm

    # ---- construction -------------------------------------------------

    @staticmethod
    def param_shapes(spec: ModelSpec) -> dict:
        shapes = {}
        d = spec.input_dim
        for l in range(spec.lstm_layers):
            shapes[f"lstm{l}.Wx"] = (4 * spec.hidden, d)
            shapes[f"lstm{l}.Wh"] = (4 * spec.hidden, spec.hidden)
            shapes[f"lstm{l}.b"] = (4 * spec.hidden,)
            d = spec.hidden
        sizes = (spec.hidden,) + tuple(spec.decoder) + (spec.m_k,)
        for j in range(len(sizes) - 1):
            shapes[f"dec{j}.W"] = (sizes[j + 1], sizes[j])
            shapes[f"dec{j}.b"] = (sizes[j + 1],)
        return shapes

    @staticmethod
    def initialize(spec: ModelSpec, seed: int = 0) -> "RewardModel":
        """Fan-scaled uniform init; LSTM forget-gate bias starts at +1."""
        rng = np.random.Generator(np.random.PCG64(seed))
        params = {}
        for name, shape in RewardModel.param_shapes(spec).items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            else:
                fan_out, fan_in = shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-bound, bound, size=shape)
        for l in range(spec.lstm_layers):
            params[f"lstm{l}.b"][spec.hidden : 2 * spec.hidden] = 1.0
        return RewardModel(spec, params, Normalization(
            np.zeros(spec.input_dim), np.ones(spec.input_dim)
        ))

    # ---- forward ------------------------------------------------------

    def forward(self, windows: np.ndarray, train: bool = False, mask_rng=None):
        """Rewards in (0, 1)^(B, m_k) for windows of shape (B, L, k).

        Eval mode (default) is deterministic. Training mode additionally
        returns the cache consumed by `training.gradients`; dropout masks
        are drawn once from `mask_rng` and stored in the cache so the
        backward pass reuses them.
        """
        sp = self.spec
        X = windows if isinstance(windows, NormalizedArray) else np.asarray(windows, float)
        if X.ndim == 2:
            X = X[None]
        if X.shape[1] != sp.window:
            raise ValueError(f"window length {X.shape[1]} != {sp.window}")
        X = np.asarray(self.norm.apply(X))
        B = X.shape[0]
        H = sp.hidden
        cache = {"layers": [], "masks": [], "dec": None, "X0": X}

        seq = X
        for l in range(sp.lstm_layers):
            Wx = self.params[f"lstm{l}.Wx"]
            Wh = self.params[f"lstm{l}.Wh"]
            b = self.params[f"lstm{l}.b"]
            pre = seq @ Wx.T + b  # (B, L, 4H)
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            steps = []
            outs = np.empty((B, sp.window, H))
            for t in range(sp.window):
                z = pre[:, t] + h @ Wh.T
                gif = sigmoid(z[:, : 2 * H])
                gi = gif[:, :H]
                gf = gif[:, H:]
                gg = np.tanh(z[:, 2 * H : 3 * H])
                go = sigmoid(z[:, 3 * H :])
                c_prev, h_prev = c, h
                c = gf * c_prev + gi * gg
                tc = np.tanh(c)
                h = go * tc
                outs[:, t] = h
                if train:
                    steps.append((gi, gf, gg, go, c_prev, h_prev, tc))
            cache["layers"].append({"input": seq, "steps": steps})
            seq = outs
            if l < sp.lstm_layers - 1 and train and mask_rng is not None and sp.lstm_dropout > 0:
                mask = (mask_rng.random((B, 1, H)) >= sp.lstm_dropout) / (
                    1.0 - sp.lstm_dropout
                )
                seq = seq * mask
                cache["masks"].append(mask)
            elif l < sp.lstm_layers - 1:
                cache["masks"].append(None)

        a = seq[:, -1]  # final hidden state of the top layer
        dec_cache = []
        n_dec = len(sp.decoder) + 1
        for j in range(n_dec):
            W = self.params[f"dec{j}.W"]
            bj = self.params[f"dec{j}.b"]
            z = a @ W.T + bj
            if j < n_dec - 1:
                act = np.maximum(z, 0.0)
                if train and mask_rng is not None and sp.decoder_dropout > 0:
                    mask = (mask_rng.random(act.shape) >= sp.decoder_dropout) / (
                        1.0 - sp.decoder_dropout
                    )
                    out = act * mask
                else:
                    mask = None
                    out = act
                dec_cache.append({"input": a, "z": z, "mask": mask})
                a = out
            else:
                dec_cache.append({"input": a, "z": z, "mask": None})
        logits = z
        rewards = sigmoid(logits)
        cache["dec"] = dec_cache
        cache["logits"] = logits
        cache["rewards"] = rewards
        if train:
            return rewards, cache
        return rewards

    def predict_one(self, window: np.ndarray) -> np.ndarray:
        """Rewards for a single (L, k) window."""
        return self.forward(window[None])[0]

    # ---- persistence --------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": MODEL_FORMAT_VERSION,
            "spec": vars(self.spec) | {"decoder": list(self.spec.decoder)},
        }
        arrays = dict(self.params)
        arrays["norm.mean"] = self.norm.mean
        arrays["norm.scale"] = self.norm.scale
        np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @staticmethod
    def load(path) -> "RewardModel":
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            if meta["version"] != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model file version {meta['version']}")
            spec_d = meta["spec"]
            spec_d["decoder"] = tuple(spec_d["decoder"])
            spec = ModelSpec(**spec_d)
            params = {
                k: data[k].copy() for k in data.files if k not in ("__meta__", "norm.mean", "norm.scale")
            }
            norm = Normalization(data["norm.mean"].copy(), data["norm.scale"].copy())
        return RewardModel(spec, params, norm)

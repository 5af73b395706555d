"""Dataset handling and reward-model training.

The model is trained as a multi-class classifier: one-hot labels name the
correct backup controller per tick, a label shift moves each label
earlier in time so the predicted controller can be handed to the filter
before it is needed, and the loss is softmax cross-entropy applied to the
sigmoid outputs (a `logits_mode` switch gives the conventional softmax-
over-logits variant). Gradients are exact backpropagation through time;
optimization is minibatch Adam with a stepped learning-rate schedule.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .features import FEATURE_ORDER, HISTORY_LEN, NUM_FEATURES
from .model import ModelSpec, Normalization, RewardModel, sigmoid

DATASET_FORMAT_VERSION = 1


# ---- dataset ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    episode: int
    tick: int
    gamma: np.ndarray  # raw features, shape (NUM_FEATURES,)
    label: int
    active: int


@dataclass
class Dataset:
    m_k: int
    rows: list  # of DatasetRow, grouped by episode, ticks ascending
    val_episodes: set = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.rows)

    def episodes(self) -> dict:
        by_ep: dict = {}
        for r in self.rows:
            by_ep.setdefault(r.episode, []).append(r)
        return by_ep

    def split_val_by_episode(self, frac: float, seed: int) -> None:
        """Hold out whole episodes so no window spans the split."""
        eps = sorted(self.episodes())
        rng = np.random.Generator(np.random.PCG64(seed))
        k = max(1, int(round(frac * len(eps))))
        self.val_episodes = set(rng.permutation(eps)[:k].tolist())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            header = {
                "version": DATASET_FORMAT_VERSION,
                "m_k": self.m_k,
                "feature_order": list(FEATURE_ORDER),
                "val_episodes": sorted(self.val_episodes),
            }
            fh.write(json.dumps(header) + "\n")
            for r in self.rows:
                fh.write(
                    json.dumps(
                        {
                            "episode": r.episode,
                            "tick": r.tick,
                            "gamma": list(map(float, r.gamma)),
                            "label": r.label,
                            "active": r.active,
                        }
                    )
                    + "\n"
                )

    @staticmethod
    def load(path) -> "Dataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("version") != DATASET_FORMAT_VERSION:
                raise ValueError("unsupported dataset version")
            if header.get("feature_order") != list(FEATURE_ORDER):
                raise ValueError("dataset feature order mismatch")
            rows = []
            for line in fh:
                d = json.loads(line)
                rows.append(
                    DatasetRow(
                        d["episode"],
                        d["tick"],
                        np.array(d["gamma"], float),
                        d["label"],
                        d["active"],
                    )
                )
        ds = Dataset(header["m_k"], rows)
        ds.val_episodes = set(header.get("val_episodes", []))
        return ds


def shift_labels(d: Dataset, k: int) -> Dataset:
    """label[t] := label[t + k] within each episode, dropping the last k rows.

    Episodes shorter than k are dropped with a warning; windows never leak
    across episode boundaries because the shift happens per episode.
    """
    if k < 0:
        raise ValueError("label shift must be >= 0")
    if k == 0:
        return d
    rows = []
    for ep, ep_rows in sorted(d.episodes().items()):
        if len(ep_rows) <= k:
            warnings.warn(f"episode {ep} shorter than label shift {k}; dropped")
            continue
        for i in range(len(ep_rows) - k):
            rows.append(replace(ep_rows[i], label=ep_rows[i + k].label))
    return Dataset(d.m_k, rows, set(d.val_episodes))


def build_windows(d: Dataset, window: int = HISTORY_LEN):
    """Materialize training windows, never spanning episode boundaries.

    Returns (train_X, train_y, val_X, val_y) with X of shape (N, window, k).
    """
    tr_X, tr_y, va_X, va_y = [], [], [], []
    for ep, ep_rows in sorted(d.episodes().items()):
        gam = np.stack([r.gamma for r in ep_rows])
        labels = [r.label for r in ep_rows]
        dst = (va_X, va_y) if ep in d.val_episodes else (tr_X, tr_y)
        for t in range(window - 1, len(ep_rows)):
            dst[0].append(gam[t - window + 1 : t + 1])
            dst[1].append(labels[t])

    def pack(Xs, ys):
        if not Xs:
            return np.zeros((0, window, NUM_FEATURES)), np.zeros(0, int)
        return np.stack(Xs), np.array(ys, int)

    return (*pack(tr_X, tr_y), *pack(va_X, va_y))


# ---- loss and gradients ---------------------------------------------------


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss_value(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of the (0,1) reward outputs."""
    p = softmax(np.atleast_2d(pred))
    idx = np.arange(len(p))
    return float(-np.log(p[idx, np.atleast_1d(labels)]).mean())


def gradients(
    m: RewardModel,
    windows: np.ndarray,
    labels: np.ndarray,
    mask_rng=None,
    logits_mode: bool = False,
):
    """(loss, grads) of the mean batch loss w.r.t. every parameter.

    Dropout masks (when `mask_rng` is given) are sampled once in the
    forward pass and reused exactly in the backward pass.
    """
    sp = m.spec
    rewards, cache = m.forward(windows, train=True, mask_rng=mask_rng)
    B = rewards.shape[0]
    H = sp.hidden
    onehot = np.zeros_like(rewards)
    onehot[np.arange(B), labels] = 1.0

    if logits_mode:
        p = softmax(cache["logits"])
        loss = float(-np.log(p[np.arange(B), labels]).mean())
        dz = (p - onehot) / B
    else:
        p = softmax(rewards)
        loss = float(-np.log(p[np.arange(B), labels]).mean())
        dy = (p - onehot) / B
        dz = dy * rewards * (1.0 - rewards)  # through the output sigmoid

    grads = {k: np.zeros_like(v) for k, v in m.params.items()}

    # decoder backward
    n_dec = len(sp.decoder) + 1
    da = None
    for j in reversed(range(n_dec)):
        dc = cache["dec"][j]
        if j < n_dec - 1:
            dout = da
            if dc["mask"] is not None:
                dout = dout * dc["mask"]
            dz = dout * (dc["z"] > 0.0)
        grads[f"dec{j}.W"] += dz.T @ dc["input"]
        grads[f"dec{j}.b"] += dz.sum(axis=0)
        da = dz @ m.params[f"dec{j}.W"]

    # BPTT through the stacked LSTM; only the last timestep of the top
    # layer receives an external gradient
    dseq = np.zeros((B, sp.window, H))
    dseq[:, -1] = da
    for l in reversed(range(sp.lstm_layers)):
        if l < sp.lstm_layers - 1 and cache["masks"][l] is not None:
            dseq = dseq * cache["masks"][l]
        lc = cache["layers"][l]
        X = lc["input"]
        Wx = m.params[f"lstm{l}.Wx"]
        Wh = m.params[f"lstm{l}.Wh"]
        dX = np.zeros((B, sp.window, X.shape[2]))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(sp.window)):
            gi, gf, gg, go, c_prev, h_prev, tc = lc["steps"][t]
            dh = dseq[:, t] + dh_next
            do = dh * tc
            dcell = dc_next + dh * go * (1.0 - tc * tc)
            di = dcell * gg
            dg = dcell * gi
            df = dcell * c_prev
            dc_next = dcell * gf
            dzv = np.concatenate(
                [
                    di * gi * (1.0 - gi),
                    df * gf * (1.0 - gf),
                    dg * (1.0 - gg * gg),
                    do * go * (1.0 - go),
                ],
                axis=1,
            )
            grads[f"lstm{l}.Wx"] += dzv.T @ X[:, t]
            grads[f"lstm{l}.Wh"] += dzv.T @ h_prev
            grads[f"lstm{l}.b"] += dzv.sum(axis=0)
            dX[:, t] = dzv @ Wx
            dh_next = dzv @ Wh
        dseq = dX

    # chain through the input normalization is not needed: inputs are data
    return loss, grads


# ---- optimizer and training loop ------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_step_epochs: int = 10  # halve the rate this often
    lr_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 128
    label_shift: int = 2  # ticks; compensates QP latency
    seed: int = 0
    val_fraction: float = 0.2
    logits_mode: bool = False
    dropout: bool = True
    early_stop_acc: Optional[float] = None
    spec: Optional[ModelSpec] = None


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            params[k] -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def accuracy(m: RewardModel, X: np.ndarray, y: np.ndarray, batch: int = 1024):
    """(mean loss, argmax accuracy) on a window set, eval mode."""
    if len(X) == 0:
        return float("nan"), float("nan")
    losses, hits = [], 0
    for i in range(0, len(X), batch):
        r = m.forward(X[i : i + batch])
        losses.append(loss_value(r, y[i : i + batch]) * len(r))
        hits += int((r.argmax(axis=1) == y[i : i + batch]).sum())
    return float(sum(losses) / len(X)), hits / len(X)


def train(d: Dataset, cfg: TrainConfig):
    """Train a reward model on a labeled dataset.

    Returns (model, [EpochMetrics...]). Fully determined by the dataset
    and config seed: shuffling, init, and dropout all derive from it.
    """
    if not d.val_episodes:
        d.split_val_by_episode(cfg.val_fraction, cfg.seed)
    shifted = shift_labels(d, cfg.label_shift)
    spec = cfg.spec or ModelSpec(m_k=d.m_k)
    if spec.m_k != d.m_k:
        raise ValueError("model m_k does not match dataset")
    tr_X, tr_y, va_X, va_y = build_windows(shifted, window=spec.window)
    if len(tr_X) == 0:
        raise ValueError("no training windows; dataset too small")
    m = RewardModel.initialize(spec, seed=cfg.seed)
    m.norm = Normalization.fit(tr_X.reshape(-1, tr_X.shape[-1]))

    opt = Adam(m.params, cfg)
    shuffle_rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))
    mask_rng = np.random.Generator(np.random.PCG64(cfg.seed + 2))
    metrics = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_factor ** (epoch // cfg.lr_step_epochs)
        order = shuffle_rng.permutation(len(tr_X))
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            loss, grads = gradients(
                m,
                tr_X[idx],
                tr_y[idx],
                mask_rng=mask_rng if cfg.dropout else None,
                logits_mode=cfg.logits_mode,
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch} (loss={loss}); "
                    "lower the learning rate"
                )
            opt.step(m.params, grads, lr)
        tl, ta = accuracy(m, tr_X, tr_y)
        vl, va = accuracy(m, va_X, va_y)
        metrics.append(EpochMetrics(epoch, lr, tl, ta, vl, va))
        if cfg.early_stop_acc is not None and va >= cfg.early_stop_acc:
            break
    return m, metrics

"""Power-to-center predictor: a 2-layer feed-forward net trained from scratch.

The continuous center target is quantized onto a grid of image cells and the
net classifies cells under a softmax cross-entropy loss; the prediction is
decoded back to the winning cell's centroid.  A plain 2-output regression
head is available as an ablation alternative.  Backpropagation, Adam, and
the step learning-rate schedule are all implemented here with numpy.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .seeds import stream_rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LOG_EPS = 1e-12

CHECKPOINT_FORMAT = "beamid-checkpoint-v1"


@dataclass(frozen=True)
class GridSpec:
    """Quantization of [0, 1]^2 into gx * gy half-open cells (last cell closed)."""

    gx: int = 32
    gy: int = 16

    def __post_init__(self) -> None:
        if self.gx < 1 or self.gy < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.gx}x{self.gy}")

    @property
    def n_cells(self) -> int:
        return self.gx * self.gy

    def cell_index(self, u: float, v: float) -> int:
        ix = min(max(int(u * self.gx), 0), self.gx - 1)
        iy = min(max(int(v * self.gy), 0), self.gy - 1)
        return iy * self.gx + ix

    def centroid(self, index: int) -> tuple[float, float]:
        iy, ix = divmod(index, self.gx)
        return ((ix + 0.5) / self.gx, (iy + 0.5) / self.gy)


@dataclass
class MlpParams:
    w1: np.ndarray  # (hidden, Q)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    def leaves(self) -> list[tuple[str, np.ndarray]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay_epochs: tuple[int, ...] = (80, 120)
    lr_factor: float = 0.1
    dropout: float = 0.3
    epochs: int = 150
    hidden_width: int = 128
    head: str = "cells"  # "cells" (cross-entropy) or "coords" (mse ablation)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1 or self.hidden_width < 1:
            raise ConfigError("batch size, epochs, and hidden width must be positive")
        if self.lr <= 0.0 or self.lr_factor <= 0.0:
            raise ConfigError("learning rate and decay factor must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.head not in ("cells", "coords"):
            raise ConfigError(f"head must be 'cells' or 'coords', got {self.head!r}")

    def lr_at_epoch(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index: drops by lr_factor at each decay epoch."""
        drops = sum(1 for e in self.lr_decay_epochs if epoch >= e)
        return self.lr * self.lr_factor**drops


@dataclass
class PowerNormalizer:
    """Per-beam standardization of 10*log10(p + eps) fit on the training split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, p: np.ndarray) -> np.ndarray:
        logp = 10.0 * np.log10(np.asarray(p, dtype=float) + LOG_EPS)
        return (logp - self.mean) / self.std


def fit_normalizer(powers: np.ndarray) -> PowerNormalizer:
    """Fit log-domain mean/std; zero-variance features fall back to std 1."""
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 2 or powers.shape[0] == 0:
        raise DataError("normalizer needs a nonempty (N, Q) power matrix")
    logp = 10.0 * np.log10(powers + LOG_EPS)
    mean = logp.mean(axis=0)
    std = logp.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return PowerNormalizer(mean=mean, std=std)


def init_params(q: int, cfg: TrainConfig, grid: GridSpec) -> MlpParams:
    """He-normal weights, zero biases, drawn from the init seed stream."""
    rng = stream_rng(cfg.seed, "init")
    out = grid.n_cells if cfg.head == "cells" else 2
    w1 = rng.normal(0.0, math.sqrt(2.0 / q), (cfg.hidden_width, q))
    b1 = np.zeros(cfg.hidden_width)
    w2 = rng.normal(0.0, math.sqrt(2.0 / cfg.hidden_width), (out, cfg.hidden_width))
    b2 = np.zeros(out)
    return MlpParams(w1, b1, w2, b2)


def forward(
    params: MlpParams,
    x: np.ndarray,
    train: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for one normalized input or a batch.

    Inverted dropout masks the hidden activation in train mode only, so eval
    mode needs no rescale and is deterministic.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != params.w1.shape[1]:
        raise DataError(
            f"input has {batch.shape[1]} features, model expects {params.w1.shape[1]}"
        )
    hidden = np.maximum(batch @ params.w1.T + params.b1, 0.0)
    if train and dropout > 0.0:
        if rng is None:
            raise ConfigError("train-mode dropout needs a random stream")
        mask = (rng.random(hidden.shape) >= dropout) / (1.0 - dropout)
        hidden = hidden * mask
    logits = hidden @ params.w2.T + params.b2
    return logits[0] if single else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(
    params: MlpParams,
    x: np.ndarray,
    targets: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    head: str = "cells",
) -> tuple[float, MlpParams]:
    """Mean loss over a batch and its gradient for every parameter.

    "cells": softmax cross-entropy against integer cell targets.
    "coords": mean squared error against (u, v) targets.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("loss needs a nonempty (B, Q) batch")
    b = x.shape[0]
    pre = x @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    if dropout > 0.0:
        if rng is None:
            raise ConfigError("dropout needs a random stream")
        mask = (rng.random(hidden.shape) >= dropout) / (1.0 - dropout)
        dropped = hidden * mask
    else:
        mask = None
        dropped = hidden
    logits = dropped @ params.w2.T + params.b2

    if head == "cells":
        y = np.asarray(targets, dtype=int)
        probs = softmax(logits)
        loss = float(-np.mean(np.log(probs[np.arange(b), y] + 1e-300)))
        dlogits = probs
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
    else:
        y = np.asarray(targets, dtype=float)
        diff = logits - y
        loss = float(np.mean(diff**2))
        dlogits = 2.0 * diff / diff.size

    gw2 = dlogits.T @ dropped
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.w2
    if mask is not None:
        dhidden = dhidden * mask
    dpre = dhidden * (pre > 0.0)
    gw1 = dpre.T @ x
    gb1 = dpre.sum(axis=0)
    return loss, MlpParams(gw1, gb1, gw2, gb2)


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        zero = lambda a: np.zeros_like(a)
        return cls(
            m=MlpParams(*(zero(a) for _, a in params.leaves())),
            v=MlpParams(*(zero(a) for _, a in params.leaves())),
            step=0,
        )


def adam_step(
    state: AdamState,
    params: MlpParams,
    grads: MlpParams,
    lr: float,
) -> tuple[AdamState, MlpParams]:
    """One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8)."""
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    for (_, m), (_, v), (_, p), (_, g) in zip(
        state.m.leaves(), state.v.leaves(), params.leaves(), grads.leaves()
    ):
        m2 = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v2 = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g**2
        mhat = m2 / (1.0 - ADAM_BETA1**t)
        vhat = v2 / (1.0 - ADAM_BETA2**t)
        new_m.append(m2)
        new_v.append(v2)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + ADAM_EPS))
    return AdamState(MlpParams(*new_m), MlpParams(*new_v), t), MlpParams(*new_p)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    cell_accuracy: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    first_epoch_batch_losses: list[float] = field(default_factory=list)


def _canonical_order(powers: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Content-based ordering so training ignores the caller's sample order."""
    t = targets.reshape(len(targets), -1).astype(float)
    keys = tuple(t[:, j] for j in reversed(range(t.shape[1])))
    keys += tuple(powers[:, j] for j in reversed(range(powers.shape[1])))
    return np.lexsort(keys)


def train(
    powers: np.ndarray,
    centers: np.ndarray,
    cfg: TrainConfig,
    grid: GridSpec,
) -> tuple[MlpParams, PowerNormalizer, TrainHistory]:
    """Fit the predictor on (power vector, user center) pairs.

    Runs exactly cfg.epochs epochs of shuffled minibatches (last partial batch
    kept), dropping the learning rate by cfg.lr_factor at the start of each
    decay epoch.  Shuffling, dropout, and init each own a seed stream, and
    samples are canonically ordered first, so the result is deterministic
    given (data, cfg) regardless of input order.
    """
    powers = np.asarray(powers, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if powers.ndim != 2 or powers.shape[0] == 0:
        raise DataError("training needs a nonempty (N, Q) power matrix")
    if centers.shape != (powers.shape[0], 2):
        raise DataError("training needs one (u, v) center per power vector")

    order = _canonical_order(powers, centers)
    powers = powers[order]
    centers = centers[order]

    normalizer = fit_normalizer(powers)
    x_all = normalizer.apply(powers)
    if cfg.head == "cells":
        targets = np.array([grid.cell_index(u, v) for u, v in centers])
    else:
        targets = centers

    params = init_params(powers.shape[1], cfg, grid)
    state = AdamState.zeros_like(params)
    rng_shuffle = stream_rng(cfg.seed, "shuffle")
    rng_dropout = stream_rng(cfg.seed, "dropout")
    n = len(x_all)
    history = TrainHistory()

    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_at_epoch(epoch)
        perm = rng_shuffle.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grad(
                params, x_all[idx], targets[idx], cfg.dropout, rng_dropout, cfg.head
            )
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            state, params = adam_step(state, params, grads, lr)
            loss_sum += loss * len(idx)
            if epoch == 1:
                history.first_epoch_batch_losses.append(loss)
        logits = forward(params, x_all)
        if cfg.head == "cells":
            acc = float(np.mean(np.argmax(logits, axis=1) == targets))
        else:
            pred_cells = [grid.cell_index(u, v) for u, v in np.clip(logits, 0.0, 1.0)]
            true_cells = [grid.cell_index(u, v) for u, v in centers]
            acc = float(np.mean(np.array(pred_cells) == np.array(true_cells)))
        history.epochs.append(EpochRecord(epoch, lr, loss_sum / n, acc))
    return params, normalizer, history


def predict_center(
    params: MlpParams,
    normalizer: PowerNormalizer,
    grid: GridSpec,
    power: np.ndarray,
    head: str = "cells",
) -> tuple[float, float]:
    """Decode one power vector to a center estimate in [0, 1]^2.

    Cell head: centroid of the argmax cell, ties toward the lowest index.
    Coords head: clipped raw outputs.
    """
    logits = forward(params, normalizer.apply(power))
    if head == "cells":
        return grid.centroid(int(np.argmax(logits)))
    u, v = np.clip(logits, 0.0, 1.0)
    return float(u), float(v)


@dataclass
class CenterPredictor:
    """Trained predictor bundle: weights, input normalizer, grid, and head."""

    params: MlpParams
    normalizer: PowerNormalizer
    grid: GridSpec
    head: str = "cells"
    q: int = 0
    train_config: TrainConfig | None = None
    scenario: str = ""

    def predict_center(self, power: np.ndarray) -> tuple[float, float]:
        return predict_center(self.params, self.normalizer, self.grid, power, self.head)

    def cell_accuracy(self, powers: np.ndarray, centers: np.ndarray) -> float:
        """Fraction of samples whose argmax cell equals the label cell."""
        logits = forward(self.params, self.normalizer.apply(powers))
        if self.head == "coords":
            pred = [self.grid.cell_index(u, v) for u, v in np.clip(logits, 0.0, 1.0)]
        else:
            pred = np.argmax(logits, axis=1)
        true = np.array([self.grid.cell_index(u, v) for u, v in centers])
        return float(np.mean(np.asarray(pred) == true))

    def save(self, path: str) -> None:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "q": self.q,
            "head": self.head,
            "scenario": self.scenario,
            "grid": {"gx": self.grid.gx, "gy": self.grid.gy},
            "normalizer": {
                "mean": self.normalizer.mean.tolist(),
                "std": self.normalizer.std.tolist(),
            },
            "shapes": {name: list(arr.shape) for name, arr in self.params.leaves()},
            "params": {name: arr.ravel().tolist() for name, arr in self.params.leaves()},
            "train_config": asdict(self.train_config) if self.train_config else None,
        }
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "CenterPredictor":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"unrecognized checkpoint format {doc.get('format')!r}")
        shapes = doc["shapes"]
        flat = doc["params"]
        arrays = {
            name: np.array(flat[name], dtype=float).reshape(shapes[name])
            for name in ("w1", "b1", "w2", "b2")
        }
        tc = doc.get("train_config")
        if tc is not None:
            tc = TrainConfig(
                **{
                    k: tuple(v) if isinstance(v, list) else v
                    for k, v in tc.items()
                }
            )
        return cls(
            params=MlpParams(**arrays),
            normalizer=PowerNormalizer(
                mean=np.array(doc["normalizer"]["mean"], dtype=float),
                std=np.array(doc["normalizer"]["std"], dtype=float),
            ),
            grid=GridSpec(gx=doc["grid"]["gx"], gy=doc["grid"]["gy"]),
            head=doc["head"],
            q=doc["q"],
            train_config=tc,
            scenario=doc.get("scenario", ""),
        )

"""Soft Dice loss, Adam and the training loop."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .augmentation import augment_pipeline
from .errors import ConfigError, NumericError, ShapeError
from .model import build_seganet, forward
from .tensor import as_tensor, make_result

FULL_SCALE = {"iterations": 50_000, "batch_size": 300, "learning_rate": 1e-4}


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    batch_size: int = 8
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    dice_smooth: float = 1e-5
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError("iterations must be >= 0 and batch_size >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not (self.adam_epsilon > 0 and self.dice_smooth > 0):
            raise ConfigError("adam_epsilon and dice_smooth must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


@dataclass
class LossTrace:
    values: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def moving_average(self, window=20):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size < window:
            return v[:0]
        return np.convolve(v, np.ones(window) / window, mode="valid")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "loss"])
            for i, v in enumerate(self.values):
                writer.writerow([i, f"{v:.6g}"])


def dice_loss(pred, target, smooth=1e-5):
    """1 - (2 sum(p g) + s) / (sum p + sum g + s), per sample, batch mean.

    ``pred`` holds probabilities [B, ...]; ``target`` must be binary.
    """
    pred = as_tensor(pred)
    g = np.asarray(target.data if hasattr(target, "data") else target)
    if g.shape != pred.shape:
        raise ShapeError(f"dice_loss shape mismatch: {pred.shape} vs {g.shape}")
    if not np.isin(g, (0, 1)).all():
        raise ValueError("dice_loss target must be binary")
    if smooth <= 0:
        raise ValueError("smooth must be positive")
    g = g.astype(pred.dtype)
    b = pred.shape[0] if pred.data.ndim > 1 else 1
    p2 = pred.data.reshape(b, -1)
    g2 = g.reshape(b, -1)
    inter = (p2 * g2).sum(axis=1)
    denom = p2.sum(axis=1) + g2.sum(axis=1) + smooth
    numer = 2 * inter + smooth
    loss = np.asarray(np.mean(1 - numer / denom), dtype=pred.dtype)

    def factory():
        def backward(up):
            d = -(2 * g2 * denom[:, None] - numer[:, None]) / (denom[:, None] ** 2) / b
            return ((up * d).reshape(pred.shape).astype(pred.dtype),)

        return backward

    return make_result(loss, "dice_loss", (pred,), factory)


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Non-finite gradients raise :class:`NumericError` before anything moves.
    """
    params = np.asarray(params)
    grads = np.asarray(grads, dtype=params.dtype)
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeError("params, grads and Adam moments must have equal length")
    if not np.isfinite(grads).all():
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericError(f"non-finite gradient at parameter {bad}; Adam step skipped")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * (grads * grads)
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    update = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return params - update.astype(params.dtype), AdamState(m, v, t)


def slice_stream(seed, iteration, index):
    """Independent RNG for one slice of one iteration."""
    return np.random.default_rng([seed, iteration, index])


def sample_minibatch(dataset, batch_size, rng, augment=None, stream=None):
    """Draw ``batch_size`` slices uniformly with replacement.

    With an ``augment`` spec and ``stream = (seed, iteration)`` every drawn
    slice goes through the augmentation pipeline on its own RNG substream.
    Returns ``(images [B,1,H,W], masks [B,1,H,W], indices)``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot sample from an empty dataset")
    indices = rng.integers(0, len(dataset), size=batch_size)
    images, masks = [], []
    for k, idx in enumerate(indices):
        sample = dataset[idx]
        if augment is not None and stream is not None:
            sample = augment_pipeline(sample, augment, slice_stream(stream[0], stream[1], k))
        images.append(sample.image)
        masks.append(sample.mask)
    images = np.stack(images)[:, None].astype(np.float32)
    masks = np.stack(masks)[:, None].astype(np.float32)
    return images, masks, indices


def _check_dataset(dataset):
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    shapes = {s.image.shape for s in dataset}
    if len(shapes) != 1:
        raise ShapeError(f"training slices must share dims, got {sorted(shapes)}")


def train(model_config, train_config, dataset, augment=None, params=None, on_checkpoint=None, log=None):
    """Run sample -> augment -> forward -> dice loss -> backward -> Adam.

    ``on_checkpoint(iteration, params)`` is called every
    ``checkpoint_every`` iterations (if set) and once at the end. A
    non-finite loss raises :class:`NumericError` carrying the iteration.
    """
    _check_dataset(dataset)
    cfg = train_config
    if params is None:
        params, _ = build_seganet(model_config, seed=cfg.seed)
    state = AdamState.zeros_like(params.vector)
    rng = np.random.default_rng(cfg.seed)
    trace = LossTrace()
    for it in range(cfg.iterations):
        images, masks, _ = sample_minibatch(dataset, cfg.batch_size, rng, augment, (cfg.seed, it))
        leaves = params.leaves(requires_grad=True)
        prob = forward(params, images, leaves)
        loss = dice_loss(prob, masks, cfg.dice_smooth)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at iteration {it}", iteration=it)
        loss.backward()
        try:
            new, state = adam_step(params.vector, params.gather_grad(leaves), state, cfg)
        except NumericError as exc:
            raise NumericError(f"iteration {it}: {exc}", iteration=it) from None
        params.vector[:] = new
        trace.values.append(value)
        if log is not None:
            log(it, value)
        if on_checkpoint is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(it + 1, params)
    if on_checkpoint is not None:
        on_checkpoint(cfg.iterations, params)
    return params, trace


def predict_masks(params, images, threshold=None, batch_size=16):
    """Binary masks [N, H, W] for images [N, H, W]."""
    threshold = params.config.threshold if threshold is None else threshold
    out = np.zeros(images.shape, dtype=bool)
    for start in range(0, images.shape[0], batch_size):
        prob = forward(params, images[start : start + batch_size, None]).data[:, 0]
        out[start : start + batch_size] = prob > threshold
    return out

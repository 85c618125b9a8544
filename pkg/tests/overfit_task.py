"""The reduced-model overfit run shared by the training and acceptance tests."""
import functools
import time

import numpy as np

from seganet.metrics import dice_coefficient
from seganet.model import ModelConfig
from seganet.phantom import generate_phantom
from seganet.training import TrainConfig, predict_masks, train

CHANNELS = (8, 16, 32, 64, 128)
PHASES = (3, 12, 20, 24)


def overfit_slices(seed=0):
    """Four distinct non-empty phantom slices drawn from four phases."""
    pool = generate_phantom().slices(phases=PHASES, nonempty=True)
    pick = np.random.default_rng(seed).choice(len(pool), 4, replace=False)
    return [pool[i] for i in pick]


@functools.lru_cache(maxsize=None)
def run_overfit(seed=0, iterations=200):
    slices = overfit_slices(seed)
    t0 = time.perf_counter()
    params, trace = train(
        ModelConfig(encode_channels=CHANNELS),
        TrainConfig(iterations=iterations, batch_size=8, learning_rate=1e-4, seed=seed),
        slices,
    )
    elapsed = time.perf_counter() - t0
    images = np.stack([s.image for s in slices])
    gts = np.stack([s.mask for s in slices]).astype(bool)
    dice = dice_coefficient(predict_masks(params, images), gts)
    return dice, tuple(trace.values), elapsed

"""Shared fixtures: tiny image factories and the synthetic trained model.

The trained-model fixture is session-scoped because it costs minutes of CPU;
only the end-to-end tests request it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from toneguide import skintone, trainer
from toneguide.color import Colorspace, ImageBuffer


def random_image(seed: int, height: int = 64, width: int = 64) -> ImageBuffer:
    """Mid-gamut random image: smooth blobs, no values pinned at 0 or 1."""
    rng = np.random.default_rng(seed)
    base = rng.random((height // 8 + 1, width // 8 + 1, 3))
    # nearest-neighbor upsample then soften, keeping values well inside gamut
    img = np.repeat(np.repeat(base, 8, axis=0), 8, axis=1)[:height, :width]
    img = 0.15 + 0.7 * img
    return ImageBuffer(img.astype(np.float32), Colorspace.SRGB)


SCORE_DELTAS = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


def delta_to_score(delta: float) -> float:
    """The fixed monotone map assigning guide scores to b-shift magnitudes."""
    return delta / 20.0


def make_fixture_centers(raws, seed: int = 0) -> skintone.SkinToneCenters:
    """Ten Lab centers spanning the raws' mean colors, for label plumbing."""
    rng = np.random.default_rng(seed)
    from toneguide.color import srgb_array_to_lab

    means = [srgb_array_to_lab(r.data.astype(np.float64)).reshape(-1, 3).mean(0) for r in raws]
    points = np.concatenate(
        [m + rng.normal(scale=3.0, size=(6, 3)) for m in means], axis=0
    )
    return skintone.kmeans_lab(points, k=10, seed=seed)


def build_synthetic_dataset(config: trainer.TrainConfig, n_raws: int = 5):
    """The desk-scale stand-in: b-shifted targets with scores from delta/20."""
    from toneguide import engine

    raws = [random_image(100 + i) for i in range(n_raws)]
    centers = make_fixture_centers(raws)
    labels = [
        skintone.classify(
            skintone.mean_skin_color(r, engine.central_crop_mask(r.height, r.width)),
            centers,
        )
        for r in raws
    ]
    samples = []
    for raw, label in zip(raws, labels):
        for delta in SCORE_DELTAS:
            target = trainer.synth_perturb(raw, delta_a=0.0, delta_b=delta)
            samples.append(
                trainer.Sample(
                    raw=raw, target=target, score=delta_to_score(delta), label=label
                )
            )
    return trainer.assemble_samples(samples, config), raws, centers


@dataclass
class SyntheticModel:
    checkpoint: trainer.ModelCheckpoint
    log: list
    raws: list
    centers: skintone.SkinToneCenters
    config: trainer.TrainConfig
    train_seconds: float
    heldout: ImageBuffer


@pytest.fixture(scope="session")
def synthetic_model() -> SyntheticModel:
    """Criterion-5 model: defaults scaled to 200 epochs on the b-shift fixture."""
    config = trainer.TrainConfig(epochs=200, seed=42)
    samples, raws, centers = build_synthetic_dataset(config)
    start = time.perf_counter()
    result = trainer.train(samples, config, centers=centers)
    elapsed = time.perf_counter() - start
    return SyntheticModel(
        checkpoint=result.checkpoint,
        log=result.log,
        raws=raws,
        centers=centers,
        config=config,
        train_seconds=elapsed,
        heldout=random_image(1000),
    )

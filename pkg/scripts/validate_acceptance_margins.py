"""One-off margin check for the synthetic end-to-end fixtures.

Trains the exact fixture the acceptance tests use and prints every
quantity those tests assert on, so thresholds are frozen against
measured behavior rather than hope.  Not part of the test suite.
"""

import json
import sys
import time

import numpy as np

sys.path.insert(0, "tests")

from conftest import build_synthetic_dataset, random_image  # noqa: E402
from toneguide import engine, trainer  # noqa: E402
from toneguide.color import srgb_array_to_lab  # noqa: E402


def mean_b(img) -> float:
    return float(srgb_array_to_lab(img.data.astype(np.float64))[..., 2].mean())


def user_loss(ckpt, samples) -> float:
    config = trainer.config_from_checkpoint(ckpt)
    total = 0.0
    for s in samples:
        cache = trainer.make_cache(s, config)
        out, _ = trainer.apply_chain(
            ckpt.params, ckpt.bank, cache.planes, cache.lab_n, config.use_1d_luts
        )
        total += float(((out - cache.target) ** 2).mean())
    return total / len(samples)


def main() -> None:
    report = {}
    config = trainer.TrainConfig(epochs=200, seed=42)
    t0 = time.monotonic()
    samples, raws, centers = build_synthetic_dataset(config)
    result = trainer.train(samples, config, centers=centers)
    train_seconds = time.monotonic() - t0
    ckpt = result.checkpoint
    report["train_seconds"] = train_seconds
    report["epoch0_recon"] = result.log[0].lr_term
    report["final_recon"] = result.log[-1].lr_term
    report["recon_ratio"] = result.log[-1].lr_term / result.log[0].lr_term

    heldout = random_image(1000)
    scores = [-1.0, -0.5, 0.0, 0.5, 1.0]
    outs = {
        s: engine.enhance(ckpt, engine.EnhanceRequest(heldout, s)) for s in scores
    }
    bs = [mean_b(outs[s]) for s in scores]
    report["heldout_mean_b"] = bs
    diffs = np.diff(bs)
    rng_b = max(bs) - min(bs)
    inversions = [float(d) for d in diffs if d < 0]
    report["b_range"] = rng_b
    report["inversions"] = inversions
    report["worst_inversion_frac"] = (
        max(-d for d in inversions) / rng_b if inversions else 0.0
    )
    zero = outs[0.0]
    report["identity_mean_abs_per_channel"] = [
        float(np.abs(zero.data.astype(np.float64) - heldout.data).mean(axis=(0, 1))[c])
        for c in range(3)
    ]

    # criterion 7: user targets are the model's own renditions shifted +10 b,
    # so the warm start only has to learn a constant offset
    user_samples = []
    for i in range(2):
        raw = random_image(2000 + i)
        label = engine.resolve_label(ckpt, raw)
        for s in (-0.5, 0.0, 0.5):
            rendered = engine.enhance(ckpt, engine.EnhanceRequest(raw, s, label=label))
            target = trainer.synth_perturb(rendered, 0.0, 10.0)
            user_samples.append(
                trainer.Sample(raw=raw, target=target, score=s, label=label)
            )
    pre = user_loss(ckpt, user_samples)
    tuned = trainer.finetune(ckpt, user_samples, epochs=10, lr=1e-4, seed=0)
    post = user_loss(tuned.checkpoint, user_samples)
    report["user_loss_pre"] = pre
    report["user_loss_post"] = post
    report["user_loss_ratio"] = post / pre

    scratch_config = trainer.config_from_checkpoint(ckpt, epochs=50, lr=3e-4, seed=0)
    t1 = time.monotonic()
    scratch = trainer.train(user_samples, scratch_config, centers=ckpt.centers)
    report["scratch_seconds"] = time.monotonic() - t1
    report["scratch_min_epoch_recon"] = min(r.lr_term for r in scratch.log)
    report["scratch_log_lr"] = [r.lr_term for r in scratch.log]

    # criterion 8: repeated apply at score 1 on a fixture raw
    img = raws[0]
    r1 = engine.enhance(ckpt, engine.EnhanceRequest(img, 1.0))
    r2 = engine.enhance(ckpt, engine.EnhanceRequest(r1, 1.0))
    mag1 = float(np.abs(r1.data.astype(np.float64) - img.data).mean())
    mag2 = float(np.abs(r2.data.astype(np.float64) - r1.data).mean())
    report["round1_rgb_mag"] = mag1
    report["round2_rgb_mag"] = mag2
    report["round1_b_shift"] = mean_b(r1) - mean_b(img)
    report["round2_b_shift"] = mean_b(r2) - mean_b(r1)

    print(json.dumps(report, indent=2))
    with open("/tmp/acceptance_margins.json", "w") as fh:
        json.dump(report, fh, indent=2)


if __name__ == "__main__":
    main()

"""Measure the margins behind the conditioning-ablation acceptance checks.

Builds the two-cluster opposing-direction dataset used by the acceptance
suite: the same raw images appear in both clusters, once under label 2 with
targets shifted along +b and once under label 9 with targets shifted along
-b. The label is therefore the only input that distinguishes the clusters.
A label-aware model can satisfy both directions; a label-blind model sees
contradictory targets for identical (image, score) inputs and can only fit
their mean. The script reports the per-cluster inter-score output spread
for both variants, plus the convergence of a 1D-stage-off run.

Writes /tmp/ablation_margins.json and prints it.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import make_fixture_centers, random_image

from toneguide import engine, trainer
from toneguide.color import srgb_array_to_lab


def mean_b(img) -> float:
    return float(srgb_array_to_lab(img.data.astype(np.float64))[..., 2].mean())


def build_cluster_dataset() -> tuple[list[trainer.Sample], list]:
    raws = [random_image(seed) for seed in (300, 301)]
    samples = []
    for raw in raws:
        for score in (-1.0, -0.5, 0.5, 1.0):
            up = trainer.synth_perturb(raw, 0.0, 20.0 * score)
            down = trainer.synth_perturb(raw, 0.0, -20.0 * score)
            samples.append(trainer.Sample(raw=raw, target=up, score=score, label=2))
            samples.append(trainer.Sample(raw=raw, target=down, score=score, label=9))
    return samples, raws


def cluster_spreads(ckpt, raws) -> dict[str, float]:
    spreads = {}
    for label in (2, 9):
        deltas = []
        for raw in raws:
            hi = engine.enhance(ckpt, engine.EnhanceRequest(raw, 1.0, label=label))
            lo = engine.enhance(ckpt, engine.EnhanceRequest(raw, -1.0, label=label))
            deltas.append(mean_b(hi) - mean_b(lo))
        spreads[f"label{label}"] = float(np.mean(deltas))
    return spreads


def main() -> None:
    report: dict = {}
    samples, raws = build_cluster_dataset()
    centers = make_fixture_centers(raws)

    base = dict(epochs=120, lr=3e-4, lut_bins=17, lut_dim=9, cond_size=64, seed=7)

    t0 = time.monotonic()
    on = trainer.train(samples, trainer.TrainConfig(**base), centers=centers)
    report["train_on_seconds"] = time.monotonic() - t0
    report["on_recon_ratio"] = on.log[-1].lr_term / on.log[0].lr_term
    report["spread_on"] = cluster_spreads(on.checkpoint, raws)

    t0 = time.monotonic()
    off = trainer.train(
        samples, trainer.TrainConfig(use_label=False, **base), centers=centers
    )
    report["train_off_seconds"] = time.monotonic() - t0
    report["off_recon_ratio"] = off.log[-1].lr_term / off.log[0].lr_term
    report["spread_off"] = cluster_spreads(off.checkpoint, raws)

    label2 = [s for s in samples if s.label == 2]
    no1d = trainer.train(
        label2,
        trainer.TrainConfig(use_1d_luts=False, epochs=120, lr=3e-4, lut_bins=17,
                            lut_dim=9, cond_size=64, seed=7),
        centers=centers,
    )
    report["no1d_recon_ratio"] = no1d.log[-1].lr_term / no1d.log[0].lr_term

    print(json.dumps(report, indent=2))
    with open("/tmp/ablation_margins.json", "w") as fh:
        json.dump(report, fh, indent=2)


if __name__ == "__main__":
    main()

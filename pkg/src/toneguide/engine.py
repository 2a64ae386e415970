"""Inference: the full enhancement chain at native resolution.

Only the conditioning backbone sees a downsampled copy; the emitted curves
and fused grid are applied to every pixel of the original image.  A loaded
checkpoint is immutable here, so any number of calls can share it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backbone, skintone, trainer
from .color import Colorspace, ImageBuffer, lab_array_normalize, srgb_array_to_lab
from .errors import InvalidImage, LabelOutOfRange, UnresolvedLabel

AUTO_LABEL = "auto"


@dataclass
class EnhanceRequest:
    image: ImageBuffer
    score: float
    label: int | str | None = AUTO_LABEL  # 1..10, "auto", or None (natural mode)
    rounds: int = 1
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise InvalidImage(f"rounds must be a positive integer, got {self.rounds!r}")


def central_crop_mask(height: int, width: int) -> np.ndarray:
    """Boolean mask covering the central 50% x 50% of the frame."""
    mask = np.zeros((height, width), dtype=bool)
    y0, x0 = height // 4, width // 4
    y1 = max(y0 + 1, height - height // 4)
    x1 = max(x0 + 1, width - width // 4)
    mask[y0:y1, x0:x1] = True
    return mask


def resolve_label(
    checkpoint: trainer.ModelCheckpoint,
    image: ImageBuffer,
    mask: np.ndarray | None = None,
) -> int:
    """Nearest-center label for the image's mean skin color.

    Without a mask the mean is taken over the central 50% x 50% crop, a
    stand-in for a face region when no parsing is available.
    """
    if checkpoint.centers is None:
        raise UnresolvedLabel("checkpoint carries no skin-tone centers; pass a label")
    if mask is None:
        mask = central_crop_mask(image.height, image.width)
    mean = skintone.mean_skin_color(image, mask)
    return skintone.classify(mean, checkpoint.centers)


def _resolve_request_label(
    checkpoint: trainer.ModelCheckpoint,
    image: ImageBuffer,
    label: int | str | None,
    mask: np.ndarray | None,
) -> int | None:
    if not checkpoint.use_label:
        return None
    if label == AUTO_LABEL:
        return resolve_label(checkpoint, image, mask)
    if label is None:
        raise UnresolvedLabel(
            "this model conditions on a skin-tone label; pass 1..10 or 'auto'"
        )
    if not isinstance(label, (int, np.integer)) or not (1 <= int(label) <= 10):
        raise LabelOutOfRange(f"label must be an integer in [1, 10], got {label!r}")
    return int(label)


def _enhance_once(
    checkpoint: trainer.ModelCheckpoint,
    image: ImageBuffer,
    score: float,
    label: int | None,
) -> ImageBuffer:
    cond = backbone.condition(
        image,
        score,
        label,
        size=checkpoint.config.cond_size,
        score_range=checkpoint.score_range,
        label_range=checkpoint.label_range,
        strict_score=False,  # out-of-range scores warn instead of failing
    )
    lab_n = lab_array_normalize(srgb_array_to_lab(image.data.astype(np.float64)))
    out, _ = trainer.apply_chain(
        checkpoint.params,
        checkpoint.bank,
        cond.planes,
        lab_n,
        checkpoint.use_1d_luts,
    )
    return ImageBuffer(out.astype(np.float32), Colorspace.SRGB)


def enhance(checkpoint: trainer.ModelCheckpoint, req: EnhanceRequest) -> ImageBuffer:
    """Score-guided enhancement; rounds > 1 feeds the output back as input."""
    image = req.image
    for _ in range(req.rounds):
        label = _resolve_request_label(checkpoint, image, req.label, req.mask)
        image = _enhance_once(checkpoint, image, req.score, label)
    return image


def enhance_multi_round(
    checkpoint: trainer.ModelCheckpoint,
    image: ImageBuffer,
    scores,
    label: int | str | None = AUTO_LABEL,
    mask: np.ndarray | None = None,
) -> ImageBuffer:
    """Fold enhancement over a score sequence, re-resolving auto labels each round."""
    scores = list(scores)
    if not scores:
        raise ValueError("scores list is empty")
    for score in scores:
        image = enhance(checkpoint, EnhanceRequest(image, score, label, 1, mask))
    return image

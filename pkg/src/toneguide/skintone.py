"""Skin-tone centers and labeling.

Mean masked color is taken in CIELAB, clustered with seeded k-means++
followed by Lloyd iterations, and images are labeled 1..10 by the nearest
center (unweighted Euclidean distance in Lab).  Centers are kept sorted by
L ascending so label ids stay stable across runs and checkpoints.

Face masks are external inputs; nothing here segments skin.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .color import Colorspace, ImageBuffer, LabPixel, srgb_array_to_lab
from .errors import (
    BadCentersFile,
    DegenerateClustering,
    DimensionMismatch,
    EmptyMask,
    TooFewPoints,
)

CENTER_COUNT = 10
_FILE_TAG = "toneguide-centers"


class CenterProvenance(enum.Enum):
    CLUSTERED = "CLUSTERED"
    IMPORTED = "IMPORTED"


@dataclass(frozen=True)
class SkinToneCenters:
    """Cluster centers as a (k, 3) Lab array plus where they came from.

    The canonical label set has k = 10; smaller k is allowed in memory for
    evaluation runs, but the centers file format requires exactly 10.
    """

    lab: np.ndarray
    provenance: CenterProvenance = CenterProvenance.CLUSTERED

    def __post_init__(self):
        arr = np.asarray(self.lab, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise DimensionMismatch(f"centers must be (k, 3), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DimensionMismatch("centers must be finite")
        diff = arr[:, None, :] - arr[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        dist[np.diag_indices(arr.shape[0])] = np.inf
        if arr.shape[0] > 1 and dist.min() <= 0.0:
            raise DimensionMismatch("centers must be pairwise distinct")
        object.__setattr__(self, "lab", arr)

    @property
    def count(self) -> int:
        return self.lab.shape[0]

    def pixel(self, index: int) -> LabPixel:
        l, a, b = self.lab[index]
        return LabPixel(float(l), float(a), float(b))


@dataclass(frozen=True)
class SkinSample:
    image_id: str
    mean_color: LabPixel
    label: int | None = None

    def __post_init__(self):
        if self.label is not None and not (1 <= self.label <= CENTER_COUNT):
            raise DimensionMismatch(f"label must be in [1, {CENTER_COUNT}], got {self.label}")


def mean_skin_color(img: ImageBuffer, mask: np.ndarray) -> LabPixel:
    """Average Lab color over the masked pixels (mean taken in Lab)."""
    if img.colorspace != Colorspace.SRGB:
        raise DimensionMismatch("mean_skin_color expects an SRGB image")
    mask = np.asarray(mask)
    if mask.shape != (img.height, img.width):
        raise DimensionMismatch(
            f"mask shape {mask.shape} does not match image {(img.height, img.width)}"
        )
    mask = mask.astype(bool)
    if not mask.any():
        raise EmptyMask("mask selects no pixels")
    lab = srgb_array_to_lab(img.data.astype(np.float64)[mask])
    mean = lab.mean(axis=0)
    return LabPixel(float(mean[0]), float(mean[1]), float(mean[2]))


def _as_lab_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
    else:
        rows = []
        for p in points:
            if isinstance(p, LabPixel):
                rows.append([p.l, p.a, p.b])
            else:
                rows.append(list(p))
        arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionMismatch(f"points must be (n, 3) Lab values, got {arr.shape}")
    return arr


def _plusplus_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, 3))
    centers[0] = pts[rng.integers(n)]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at distance zero; fall back to uniform choice
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.uniform(0.0, total)))
            idx = min(idx, n - 1)
        centers[i] = pts[idx]
        d2 = np.minimum(d2, ((pts - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans_lab(points, k: int = CENTER_COUNT, seed: int = 0) -> SkinToneCenters:
    """Seeded k-means++ then Lloyd iterations in Lab.

    Stops when no center moves more than 1e-4 or after 300 iterations.
    Returned centers are sorted by L ascending.
    """
    pts = _as_lab_array(points)
    n = pts.shape[0]
    if k < 1:
        raise TooFewPoints(f"k must be >= 1, got {k}")
    if n < k:
        raise TooFewPoints(f"need at least {k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _plusplus_init(pts, k, rng)
    for _ in range(300):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()  # empty clusters keep their old center
        for j in range(k):
            members = pts[assign == j]
            if members.shape[0]:
                new_centers[j] = members.mean(axis=0)
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if movement < 1e-4:
            break
    order = np.argsort(centers[:, 0], kind="stable")
    centers = centers[order]
    # duplicate centers can only come from duplicate input points at k near n
    for i in range(1, k):
        if np.array_equal(centers[i], centers[i - 1]):
            raise DegenerateClustering("k-means produced coincident centers")
    return SkinToneCenters(lab=centers, provenance=CenterProvenance.CLUSTERED)


def classify(c: LabPixel, centers: SkinToneCenters) -> int:
    """1-based index of the Euclidean-nearest center; ties go to the lowest index."""
    p = np.array([c.l, c.a, c.b]) if isinstance(c, LabPixel) else np.asarray(c, dtype=np.float64)
    d2 = ((centers.lab - p) ** 2).sum(axis=1)
    return int(d2.argmin()) + 1


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient; singleton-cluster points contribute 0."""
    pts = _as_lab_array(points)
    labels = np.asarray(labels)
    if labels.shape != (pts.shape[0],):
        raise DimensionMismatch("labels must match points one-to-one")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise DegenerateClustering("silhouette needs at least 2 non-empty clusters")
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(pts.shape[0])
    for i in range(pts.shape[0]):
        same = labels == labels[i]
        n_same = int(same.sum())
        if n_same <= 1:
            continue  # singleton contributes 0
        a = dist[i, same].sum() / (n_same - 1)
        b = np.inf
        for lab in uniq:
            if lab == labels[i]:
                continue
            other = labels == lab
            b = min(b, dist[i, other].mean())
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


# --------------------------------------------------------------------------
# Centers file: one provenance header line, then 10 `L a b` lines
# --------------------------------------------------------------------------

def save_centers(centers: SkinToneCenters, path) -> None:
    if centers.count != CENTER_COUNT:
        raise BadCentersFile(
            f"centers file requires exactly {CENTER_COUNT} centers, got {centers.count}"
        )
    lines = [f"{_FILE_TAG} {centers.provenance.value}"]
    for row in centers.lab:
        lines.append(f"{row[0]:.10f} {row[1]:.10f} {row[2]:.10f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_centers(path) -> SkinToneCenters:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise BadCentersFile("empty centers file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != _FILE_TAG:
        raise BadCentersFile(f"unrecognized header line: {lines[0]!r}")
    try:
        prov = CenterProvenance(head[1])
    except ValueError:
        raise BadCentersFile(f"unknown provenance tag {head[1]!r}") from None
    body = lines[1:]
    if len(body) != CENTER_COUNT:
        raise BadCentersFile(f"expected {CENTER_COUNT} center lines, got {len(body)}")
    rows = []
    for ln in body:
        parts = ln.split()
        if len(parts) != 3:
            raise BadCentersFile(f"bad center line: {ln!r}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise BadCentersFile(f"bad center line: {ln!r}") from None
    try:
        return SkinToneCenters(lab=np.asarray(rows), provenance=prov)
    except DimensionMismatch as exc:
        raise BadCentersFile(str(exc)) from None

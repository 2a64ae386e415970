"""Subjective-score processing.

Raw per-subject ratings live on a continuous [-2.5, 2.5] scale.  The
pipeline follows the BT.500-style screening procedure: per-image kurtosis
decides Gaussian vs. non-Gaussian, per-image outliers fall outside 2 sigma
(Gaussian) or sqrt(20) sigma (otherwise), a subject whose flagged fraction
exceeds 5% (strictly) is dropped entirely, and the survivors' ratings are
z-scored per subject and averaged per image on a 0..100 scale.

All moments are population moments (ddof = 0).
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllSubjectsRejected,
    BadRatingsFile,
    TooFewRatings,
    ZeroVarianceSubject,
)

RATING_MIN, RATING_MAX = -2.5, 2.5
GAUSSIAN_THRESHOLD = 2.0
NON_GAUSSIAN_THRESHOLD = math.sqrt(20.0)
REJECT_FRACTION = 0.05
MIN_RATINGS_FOR_KURTOSIS = 4


class DistributionClass(enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    NON_GAUSSIAN = "NON_GAUSSIAN"


@dataclass(frozen=True)
class RatingRecord:
    subject_id: str
    image_id: str
    rating: float

    def __post_init__(self):
        if not math.isfinite(self.rating) or not (RATING_MIN <= self.rating <= RATING_MAX):
            raise BadRatingsFile(
                f"rating {self.rating!r} outside [{RATING_MIN}, {RATING_MAX}] "
                f"for ({self.subject_id}, {self.image_id})"
            )


@dataclass
class RatingTable:
    records: list

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.subject_id, r.image_id)
            if key in seen:
                raise BadRatingsFile(f"duplicate rating for {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def by_image(self) -> dict:
        out: dict = {}
        for r in self.records:
            out.setdefault(r.image_id, []).append(r)
        return out

    def by_subject(self) -> dict:
        out: dict = {}
        for r in self.records:
            out.setdefault(r.subject_id, []).append(r)
        return out


@dataclass
class RejectionReport:
    rejected_subjects: list = field(default_factory=list)
    outlier_pairs: list = field(default_factory=list)  # (subject_id, image_id)
    image_stats: dict = field(default_factory=dict)  # image_id -> {kurtosis, class}

    def to_dict(self) -> dict:
        return {
            "rejected_subjects": sorted(self.rejected_subjects),
            "outlier_pairs": sorted([list(p) for p in self.outlier_pairs]),
            "image_stats": {
                k: {
                    "kurtosis": self.image_stats[k]["kurtosis"],
                    "class": self.image_stats[k]["class"],
                }
                for k in sorted(self.image_stats)
            },
        }


@dataclass
class MosEntry:
    image_id: str
    mos: float
    n_ratings: int


@dataclass
class MosTable:
    entries: dict  # image_id -> MosEntry
    report: RejectionReport

    def mos(self, image_id: str) -> float:
        return self.entries[image_id].mos


def classify_distribution(ratings) -> DistributionClass:
    """Kurtosis gate: GAUSSIAN iff 2 <= m4/m2^2 <= 4 (population moments)."""
    arr = np.asarray(list(ratings), dtype=np.float64)
    if arr.size < MIN_RATINGS_FOR_KURTOSIS:
        raise TooFewRatings(
            f"kurtosis needs >= {MIN_RATINGS_FOR_KURTOSIS} ratings, got {arr.size}"
        )
    centered = arr - arr.mean()
    m2 = float((centered**2).mean())
    if m2 == 0.0:
        return DistributionClass.NON_GAUSSIAN  # degenerate variance rule
    beta2 = float((centered**4).mean()) / (m2 * m2)
    if 2.0 <= beta2 <= 4.0:
        return DistributionClass.GAUSSIAN
    return DistributionClass.NON_GAUSSIAN


def kurtosis(ratings) -> float | None:
    """m4/m2^2 with population moments; None when variance is zero."""
    arr = np.asarray(list(ratings), dtype=np.float64)
    centered = arr - arr.mean()
    m2 = float((centered**2).mean())
    if m2 == 0.0:
        return None
    return float((centered**4).mean()) / (m2 * m2)


def flag_outliers(records, cls: DistributionClass) -> list:
    """Subject ids whose rating for this image falls outside the class threshold."""
    arr = np.array([r.rating for r in records], dtype=np.float64)
    mean = arr.mean()
    sigma = float(arr.std())  # population
    mult = 2.0 if cls is DistributionClass.GAUSSIAN else NON_GAUSSIAN_THRESHOLD
    threshold = mult * sigma
    return [r.subject_id for r, m in zip(records, arr) if abs(m - mean) > threshold]


def reject_subjects(table: RatingTable, flags) -> tuple:
    """Drop subjects with > 5% flagged ratings, then drop remaining flagged records.

    ``flags`` is an iterable of (subject_id, image_id) pairs.  Returns
    (retained RatingTable, rejected subject ids).
    """
    flag_set = set(tuple(p) for p in flags)
    totals: dict = {}
    flagged: dict = {}
    for r in table.records:
        totals[r.subject_id] = totals.get(r.subject_id, 0) + 1
        if (r.subject_id, r.image_id) in flag_set:
            flagged[r.subject_id] = flagged.get(r.subject_id, 0) + 1
    rejected = [s for s in totals if flagged.get(s, 0) / totals[s] > REJECT_FRACTION]
    rejected_set = set(rejected)
    retained = [
        r
        for r in table.records
        if r.subject_id not in rejected_set and (r.subject_id, r.image_id) not in flag_set
    ]
    if table.records and not retained:
        raise AllSubjectsRejected("screening removed every rating")
    return RatingTable(retained), sorted(rejected)


def compute_mos(retained: RatingTable) -> dict:
    """Per-image mean of z' = 100(z + 3)/6 over contributing subjects.

    z-scores use each subject's own mean and population standard deviation
    across their retained ratings.
    """
    z_prime: dict = {}
    for subject, recs in retained.by_subject().items():
        arr = np.array([r.rating for r in recs], dtype=np.float64)
        mu = arr.mean()
        sigma = float(arr.std())
        if sigma == 0.0:
            raise ZeroVarianceSubject(
                f"subject {subject!r} rated every image identically"
            )
        for r, m in zip(recs, arr):
            z = (m - mu) / sigma
            z_prime.setdefault(r.image_id, []).append(100.0 * (z + 3.0) / 6.0)
    return {
        image_id: MosEntry(image_id, float(np.mean(vals)), len(vals))
        for image_id, vals in z_prime.items()
    }


def process_ratings(table: RatingTable) -> MosTable:
    """Full screening pipeline: classify, flag, reject, then compute MOS.

    Images with fewer than 4 ratings skip the kurtosis gate and contribute
    no outlier flags.
    """
    report = RejectionReport()
    flags = []
    for image_id, recs in table.by_image().items():
        values = [r.rating for r in recs]
        if len(recs) < MIN_RATINGS_FOR_KURTOSIS:
            report.image_stats[image_id] = {"kurtosis": kurtosis(values), "class": None}
            continue
        cls = classify_distribution(values)
        report.image_stats[image_id] = {
            "kurtosis": kurtosis(values),
            "class": cls.value,
        }
        for subject in flag_outliers(recs, cls):
            flags.append((subject, image_id))
    retained, rejected = reject_subjects(table, flags)
    report.rejected_subjects = rejected
    report.outlier_pairs = flags
    entries = compute_mos(retained)
    return MosTable(entries=entries, report=report)


def normalize_for_training(mos: float) -> float:
    """Map the 0..100 MOS scale onto [-1, 1], clamped."""
    return float(np.clip((mos - 50.0) / 50.0, -1.0, 1.0))


def normalize_direct(raw: float) -> float:
    """Map a raw [-2.5, 2.5] rating onto [-1, 1], clamped."""
    return float(np.clip(raw / 2.5, -1.0, 1.0))


# --------------------------------------------------------------------------
# CSV / JSON plumbing
# --------------------------------------------------------------------------

def read_ratings_csv(path) -> RatingTable:
    """Read `subject_id,image_id,rating` rows; extra columns are ignored."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "image_id", "rating"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise BadRatingsFile(
                f"ratings CSV must have columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for i, row in enumerate(reader, start=2):
            try:
                rating = float(row["rating"])
            except (TypeError, ValueError):
                raise BadRatingsFile(f"line {i}: bad rating {row['rating']!r}") from None
            records.append(RatingRecord(row["subject_id"], row["image_id"], rating))
    return RatingTable(records)


def write_mos_csv(mos_table: MosTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "mos", "normalized_score", "n_ratings"])
        for image_id in sorted(mos_table.entries):
            e = mos_table.entries[image_id]
            writer.writerow(
                [image_id, repr(e.mos), repr(normalize_for_training(e.mos)), e.n_ratings]
            )


def write_rejection_json(report: RejectionReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Exception hierarchy shared by all toneguide modules."""


class ToneguideError(Exception):
    """Base class for every error raised by this package."""


# --- color ---------------------------------------------------------------

class UnsupportedConversion(ToneguideError):
    pass


class InvalidImage(ToneguideError):
    pass


# --- lut -----------------------------------------------------------------

class InvalidSize(ToneguideError):
    pass


class DimensionMismatch(ToneguideError):
    pass


# --- backbone ------------------------------------------------------------

class ScoreOutOfRange(ToneguideError):
    pass


class LabelOutOfRange(ToneguideError):
    pass


class ShapeMismatch(ToneguideError):
    pass


class StaleTape(ToneguideError):
    pass


# --- skintone ------------------------------------------------------------

class EmptyMask(ToneguideError):
    pass


class TooFewPoints(ToneguideError):
    pass


class DegenerateClustering(ToneguideError):
    pass


class BadCentersFile(ToneguideError):
    pass


# --- mos -----------------------------------------------------------------

class TooFewRatings(ToneguideError):
    pass


class AllSubjectsRejected(ToneguideError):
    pass


class ZeroVarianceSubject(ToneguideError):
    pass


class BadRatingsFile(ToneguideError):
    pass


# --- trainer -------------------------------------------------------------

class ModeViolation(ToneguideError):
    pass


class DeltaOutOfRange(ToneguideError):
    pass


class MissingMask(ToneguideError):
    pass


class EmptyDataset(ToneguideError):
    pass


class NonFiniteLoss(ToneguideError):
    pass


class ArchitectureMismatch(ToneguideError):
    pass


class VersionMismatch(ToneguideError):
    pass


class CorruptCheckpoint(ToneguideError):
    pass


# --- engine --------------------------------------------------------------

class UnresolvedLabel(ToneguideError):
    pass


class ScoreOutOfGuideRange(UserWarning):
    """Warning (not an error): a guide score outside the trained range was used."""

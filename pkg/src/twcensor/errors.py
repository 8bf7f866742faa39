"""Exception hierarchy shared by all pipelines."""


class TwCensorError(Exception):
    """Base class for every error raised by this package."""


# -- record validation -------------------------------------------------------

class ValidationError(TwCensorError, ValueError):
    pass


class MissingField(ValidationError):
    pass


class BadTimestamp(ValidationError):
    pass


class BadCount(ValidationError):
    pass


class MixedAccounts(ValidationError):
    pass


class EmptyTimeline(ValidationError):
    pass


# -- ingestion / analysis ----------------------------------------------------

class CorruptInput(TwCensorError):
    pass


class CohortEmpty(TwCensorError):
    pass


class RangeOutsideSeries(TwCensorError, ValueError):
    pass


class InsufficientSpan(TwCensorError, ValueError):
    pass


# -- statistics --------------------------------------------------------------

class SingleClass(TwCensorError, ValueError):
    pass


# -- layers ------------------------------------------------------------------

class ShapeMismatch(TwCensorError, ValueError):
    pass


class BatchTooSmall(TwCensorError, ValueError):
    pass


class EvenKernel(TwCensorError, ValueError):
    pass


class ZeroLength(TwCensorError, ValueError):
    pass


class EmptySequence(TwCensorError, ValueError):
    pass


# -- encoder -----------------------------------------------------------------

class EncoderError(TwCensorError):
    pass


class EmbeddingMiss(EncoderError, KeyError):
    pass


class BadMagic(EncoderError):
    pass


class DimMismatch(EncoderError):
    pass


class TruncatedFile(EncoderError):
    pass


# -- model / training ----------------------------------------------------------

class ProfileMissing(TwCensorError, ValueError):
    pass


class CheckpointError(TwCensorError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class TooFewUsers(TwCensorError, ValueError):
    pass


class DivergedLoss(TwCensorError, FloatingPointError):
    pass

"""Exception types shared across the package."""


class FallsenseError(Exception):
    pass


# audio_io
class MalformedWav(FallsenseError):
    pass


class UnsupportedEncoding(FallsenseError):
    pass


class ClipTooLong(FallsenseError):
    pass


class EmptyCategory(FallsenseError):
    pass


class DuplicatePath(FallsenseError):
    pass


# augmentation
class ScopeViolation(FallsenseError):
    pass


class ParamOutOfRange(FallsenseError):
    pass


# features
class SegmentTooLong(FallsenseError):
    pass


class TooFewFrames(FallsenseError):
    pass


class InvalidFftSize(FallsenseError):
    pass


class ClipMismatch(FallsenseError):
    pass


# model / training
class ShapeMismatch(FallsenseError):
    pass


class NonFiniteActivation(FallsenseError):
    pass


class NonFiniteGradient(FallsenseError):
    pass


class DivergedTraining(FallsenseError):
    pass


class ChecksumMismatch(FallsenseError):
    pass


class VersionMismatch(FallsenseError):
    pass


# experiments
class MissingCategory(FallsenseError):
    pass


class NonConvergence(FallsenseError):
    """SMO hit its pass limit. The partial model is attached."""

    def __init__(self, msg, model=None):
        super().__init__(msg)
        self.model = model


# sentinel
class StreamUnderrun(FallsenseError):
    pass


class CheckpointMismatch(FallsenseError):
    pass


class DispatchFailed(FallsenseError):
    pass

"""Exception hierarchy shared across the pipeline.

Every error carries a stable ``code`` (its class name) so the HTTP layer
can emit machine-readable error bodies without string matching.
"""


class ScribeloopError(Exception):
    """Base class for all pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- annotation store ---------------------------------------------------

class BoxOutOfBounds(ScribeloopError):
    pass


class DuplicateAccepted(ScribeloopError):
    pass


class AlreadyDecided(ScribeloopError):
    pass


class UnknownId(ScribeloopError):
    pass


class UnknownColumn(ScribeloopError):
    pass


# --- preprocessing ------------------------------------------------------

class RoiOutOfBounds(ScribeloopError):
    pass


class LayoutMismatch(ScribeloopError):
    pass


class EmptyImage(ScribeloopError):
    pass


# --- template matching --------------------------------------------------

class TemplateTooLarge(ScribeloopError):
    pass


class ConstantTemplate(ScribeloopError):
    pass


# --- dataset exchange ---------------------------------------------------

class UndecidedAnnotation(ScribeloopError):
    pass


class MalformedLine(ScribeloopError):
    pass


class MalformedRecord(ScribeloopError):
    pass


class ConfidenceOutOfRange(ScribeloopError):
    pass


class OverlapError(ScribeloopError):
    pass


# --- detector gateway ---------------------------------------------------

class ModelLoadError(ScribeloopError):
    pass


class InferenceError(ScribeloopError):
    pass


# --- evaluation ---------------------------------------------------------

class UnlabeledColumn(ScribeloopError):
    pass


# --- annotation cycles --------------------------------------------------

class PreviousCycleOpen(ScribeloopError):
    pass


class ColumnNotInInferenceSet(ScribeloopError):
    pass


class PendingReviewsRemain(ScribeloopError):
    pass


class DatasetInconsistent(ScribeloopError):
    pass

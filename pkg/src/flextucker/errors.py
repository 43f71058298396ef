"""Exception hierarchy shared by every module of the package."""


class TuckerError(Exception):
    """Base class for all errors raised by flextucker."""


class ShapeMismatch(TuckerError, ValueError):
    pass


class ModeOutOfRange(TuckerError, IndexError):
    pass


class RankExceedsDim(TuckerError, ValueError):
    pass


class NumericalError(TuckerError, ArithmeticError):
    """A factorization or solver failed on otherwise well-formed input."""


class NotSquare(ShapeMismatch):
    pass


class RankTooLarge(TuckerError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NotSPD(NumericalError):
    pass


class ModeFailure(NumericalError):
    """A per-mode solver failed; ``mode`` is the zero-based mode index."""

    def __init__(self, mode, cause):
        self.mode = mode
        self.cause = cause
        super().__init__(f"mode {mode + 1}: {type(cause).__name__}: {cause}")


class ZeroNormInput(TuckerError, ValueError):
    pass


class FormatError(TuckerError, ValueError):
    """A file does not follow its declared binary or JSON layout."""


class SchemaMismatch(FormatError):
    pass


class FeatureVersionMismatch(TuckerError, ValueError):
    pass


class EmptyDataset(TuckerError, ValueError):
    pass

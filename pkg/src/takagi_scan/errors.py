"""Exception types shared across the package."""


class TakagiError(Exception):
    """Base class for all errors raised by this package."""


class NotSymmetric(TakagiError):
    """Input matrix is not complex symmetric within tolerance."""


class DimensionMismatch(TakagiError):
    """Operands have incompatible shapes."""


class NotUnitary(TakagiError):
    """A matrix required to be unitary fails the unitarity tolerance."""


class DegenerateInput(TakagiError):
    """Singular values too close to equal, or too close to zero.

    ``kind`` is one of :data:`COALESCENT` (a pair of adjacent singular
    values is separated by less than the threshold; ``pair`` is the
    1-based index j of the offending pair (sigma_j, sigma_{j+1})) or
    :data:`RANK_DEFICIENT` (the smallest singular value is below the
    threshold).
    """

    COALESCENT = "coalescent"
    RANK_DEFICIENT = "rank_deficient"

    def __init__(self, kind, pair=None, message=None):
        self.kind = kind
        self.pair = pair
        if message is None:
            if kind == self.COALESCENT:
                message = f"singular values {pair} and {pair + 1} coalesce within tolerance"
            else:
                message = "smallest singular value below rank tolerance"
        super().__init__(message)


class StepFloor(TakagiError):
    """Continuation step size fell below the floor; a degeneracy is near."""

    def __init__(self, t, h):
        self.t = t
        self.h = h
        super().__init__(f"step size {h:.3e} below floor at t={t:.6f}")


class InconclusiveLoop(TakagiError):
    """A loop signature could not be trusted.

    ``reason`` is one of :data:`NEAR_DEGENERACY_ON_BOUNDARY` (continuation
    halted on the loop itself) or :data:`LOW_CONFIDENCE` (some column
    overlap fell below the confidence floor).
    """

    NEAR_DEGENERACY_ON_BOUNDARY = "near_degeneracy_on_boundary"
    LOW_CONFIDENCE = "low_confidence"

    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"inconclusive loop: {reason}" + (f" ({detail})" if detail else ""))


class OutOfSupport(TakagiError):
    """Argument lies outside the support of a density."""


class InsufficientData(TakagiError):
    """Not enough data points for a fit."""


class AllZeroCounts(TakagiError):
    """Every count in the series is zero; nothing to fit on a log scale."""


class MatrixFormatError(TakagiError):
    """Malformed matrix text file; carries the offending line number."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")

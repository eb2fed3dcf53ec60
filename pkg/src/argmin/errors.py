"""Diagnostic exception types shared across solver modules."""


class AlgorithmAbort(RuntimeError):
    """A run stopped for a diagnosable reason; carries any partial trace."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class DivergenceError(AlgorithmAbort):
    """Objective blew up (typically a smoothness constant set too small)."""


class LineSearchRunaway(AlgorithmAbort):
    """The backtracking estimate has grown past its runaway guard."""


class EpochCapExceeded(AlgorithmAbort):
    """An outer loop hit its configured hard epoch cap."""


class HalvingFailure(AlgorithmAbort):
    """A restart epoch failed to halve the gradient norm within its budget."""

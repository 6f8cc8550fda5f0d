class IsobubbleError(Exception):
    """Base class for all errors raised by isobubble."""


class NonConvergence(IsobubbleError):
    """Quadrature refinement or root bracketing gave up."""


class FlagViolation(IsobubbleError):
    def __init__(self, flag, witness, magnitude):
        self.flag = flag
        self.witness = witness
        self.magnitude = magnitude
        super().__init__(
            f"declared flag {flag!r} fails at x={witness!r} (violation {magnitude:.3e})")


class OriginSingularity(IsobubbleError, ValueError):
    """A first-variation quantity was requested at a zero of the density."""


class InvalidTarget(IsobubbleError, ValueError):
    """A move or experiment was asked to act on regions it cannot act on."""


class LogConcavityRequired(IsobubbleError):
    pass


class HypothesisViolation(IsobubbleError):
    """The density does not satisfy the hypotheses of the n-bubble theorem."""


class StepFailure(IsobubbleError):
    pass


class MaxStepsExceeded(IsobubbleError):
    pass

class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class NumericalError(ArithmeticError):
    """Raised when a numerical routine fails (non-convergence, non-finite output, singular factorisation)."""


class UpdateError(RuntimeError):
    """Raised by the sampler when a block update fails; carries the iteration and block name."""

    def __init__(self, iteration, block, cause):
        self.iteration = iteration
        self.block = block
        self.cause = cause
        super().__init__(f"iteration {iteration}, block {block!r}: {cause}")

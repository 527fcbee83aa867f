"""Exception hierarchy shared by all modules."""


class HessianLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(HessianLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class StencilError(HessianLabError):
    """A finite-difference stencil leaves the node mask."""

    def __init__(self, node, message=None):
        self.node = node
        super().__init__(message or f"stencil at node {node} leaves the domain mask")


class ResolutionError(HessianLabError):
    """The lattice does not resolve the domain."""


class CertificationError(HessianLabError):
    """A domain or barrier failed its positivity certificate."""

    def __init__(self, message, worst_node=None, value=None):
        self.worst_node = worst_node
        self.value = value
        super().__init__(message)


class ConvergenceError(HessianLabError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


class SolverError(HessianLabError):
    """Admissibility could not be restored during a solve."""

    def __init__(self, message, worst=None):
        self.worst = worst
        super().__init__(message)


class HypothesisViolation(HessianLabError):
    """Sampled data fail the hypothesis of a check."""

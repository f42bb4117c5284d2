"""Exception types shared across the package."""


class MomentflowError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(MomentflowError):
    """Malformed expression text. Carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifier(MomentflowError):
    """Identifier that is neither a variable x1..xn, 'pi', nor a known function."""


class DomainError(MomentflowError):
    """Evaluation outside an expression's domain (log of non-positive, zero divide)."""


class ChartMismatch(MomentflowError):
    """Two fields that must share a chart do not."""


class SignatureMismatch(MomentflowError):
    """Consecutive maps in an operator composition have incompatible signatures."""


class NyquistError(MomentflowError):
    """Field under-resolved on a periodic axis: top-frequency energy too large."""


class PolytopeDifferentiationForbidden(MomentflowError):
    """Grid differentiation requested on a polytope chart, or a field's exact
    derivative data is exhausted."""


class NonPositiveMetric(MomentflowError):
    """Metric lost positive definiteness. Reports worst node and min eigenvalue."""

    def __init__(self, min_eig, node_index):
        super().__init__(
            f"metric not positive definite: min eigenvalue {min_eig:.6e} at node {node_index}"
        )
        self.min_eig = min_eig
        self.node_index = node_index


class NonConvexPotential(MomentflowError):
    """Toric symplectic potential is not strictly convex on the interior nodes."""


class StepTooLarge(MomentflowError):
    """Finite-difference step failed its self-diagnosis (h and h/2 disagree)."""


class MetricDegenerated(MomentflowError):
    """Flow step produced a non-positive metric and the step size underflowed."""


class RicciNotNonNegative(MomentflowError):
    """Positivity check skipped: Ricci has a negative eigenvalue beyond tolerance."""

    def __init__(self, min_eig):
        super().__init__(f"Ricci min eigenvalue {min_eig:.6e} < 0; inequality not asserted")
        self.min_eig = min_eig


class ConfigError(MomentflowError):
    """Scenario configuration problem. Carries the offending key when known."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{message} (key: {key})")
        self.key = key

"""Exception types shared across the solver stack."""


class MFGError(Exception):
    """Base class for all package-specific failures."""


class InfeasibleKinetic(MFGError):
    """Kinetic cost is +infinity: a cell carries flux but no mass."""


class SolverDiverged(MFGError):
    """An inner linear or nonlinear solve failed to reach tolerance."""


class AlternatingProjectionStalled(MFGError):
    """Nonnegativity/feasibility alternating projection did not converge."""


class MaxIterExceeded(MFGError):
    """Descent hit the iteration budget before meeting tolerances."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EnergyDiverging(MFGError):
    """Energy fell below the divergence floor (non-existence evidence)."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class FixedPointStalled(MFGError):
    """Fictitious-play iteration stopped making progress."""


class MarchingDiverged(MFGError):
    """Time marching for the ergodic HJB equation blew up."""


class DegenerateCell(MFGError):
    """Flux-to-gradient inversion hit a cell with mass 0 but |w| > 0."""


class ScaleOutOfRange(MFGError):
    """A rescaled bump is not resolvable on the current grid."""


class InsufficientTail(MFGError):
    """Too few usable cells for a decay fit."""


class InsufficientSpan(MFGError):
    """Rate fit requested on too few points or too narrow a range."""


class NoCommonZero(MFGError):
    """The two potentials share no well center."""


class ParseError(MFGError):
    """Configuration file is malformed or contains unknown keys."""


class ValidationError(MFGError):
    """Configuration violates a model invariant."""


class SchemaMismatch(MFGError):
    """CSV input does not match the expected column schema."""

"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to handle gets its own class so
that tests and the command line driver can catch precisely what they mean to.
All inherit from RenormLabError.
"""


class RenormLabError(Exception):
    """Base class for all package-specific errors."""


class NonConvergence(RenormLabError):
    """An iterative solve (Newton, fixed point, root bracket) failed to meet
    its tolerance within the allotted iterations."""


class ConeDegeneracy(NonConvergence):
    """Direction extraction kept drifting: the contraction that should pin
    down an invariant direction is absent or too weak."""


class ContinuationFailure(NonConvergence):
    """Parameter continuation of periodic points lost a branch."""


class SignError(RenormLabError):
    """A quantity with a pinned sign (a cocycle factor, a norm) came out
    non-positive, so the orientation convention is broken."""


class StepUnderflow(RenormLabError):
    """The adaptive integrator pushed the step size below the representable
    floor without meeting the error target."""


class TransversalityFailure(RenormLabError):
    """The flow direction became too tangent to a section for a crossing
    count or a graph parametrization to be trusted."""


class ConeExit(RenormLabError):
    """A slope left the invariant cone bracket of the projective extension."""


class FiberNonConvergence(NonConvergence):
    """The fiber contraction over a periodic orbit failed to settle."""


class SizeOverflow(RenormLabError):
    """A requested dense discretization exceeds the configured size cap."""


class RecursionStall(RenormLabError):
    """A window decomposition step failed to shrink its support, so the
    recursion cannot terminate."""


class MeanNotZero(RenormLabError):
    """An operation requiring a mean-zero input received one with nonzero
    average."""


class ObstructionNonzero(UserWarning):
    """Warning: an input fails the computed obstruction functionals, so a
    bounded primitive is not expected."""


class LeafInvalid(RenormLabError):
    """A curve segment violates the admissibility constraints (length range
    or tangent cone)."""


class ConfigInvalid(RenormLabError):
    """An experiment configuration failed validation."""


class MissingArtifacts(RenormLabError):
    """A report was requested from a directory that lacks the expected
    output files."""

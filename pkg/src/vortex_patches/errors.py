"""Exceptions raised by vortex-patches."""


class VortexPatchError(Exception):
    """Base class for all errors raised by this package."""


class MaskNotSimplyConnected(VortexPatchError):
    """A bitmap domain is not a single 4-connected component without holes."""


class ResolutionTooCoarse(VortexPatchError):
    """The grid has fewer inside cells than the solvers need."""


class GridMismatch(VortexPatchError):
    """Two fields (or a field and an operator) live on different grids."""


class CoincidentPoints(VortexPatchError):
    """Green function evaluated on its diagonal."""


class OutsideDomain(VortexPatchError):
    """A point lies outside the open domain."""


class SingularSystem(VortexPatchError):
    """The discrete Laplacian could not be factorized."""


class NoInteriorMinimum(VortexPatchError):
    """The Kirchhoff-Routh descent left its search box."""


class DegenerateMinimum(VortexPatchError):
    """No isolating radius certifies the minimum as strict."""


class InfeasibleArea(VortexPatchError):
    """The admissible class is empty: a ball cannot hold the patch area."""


class NotConverged(VortexPatchError):
    """The fixed-point iteration hit its iteration cap.

    The last iterate is attached as ``patch`` so callers can still report it.
    """

    def __init__(self, message: str, patch: object | None = None) -> None:
        super().__init__(message)
        self.patch = patch


class SupportTouchesBallBoundary(VortexPatchError):
    """A converged patch is adjacent to the boundary of its ball."""


class EmptySupport(VortexPatchError):
    """A patch component has no support cells."""


class CirculationMismatch(VortexPatchError):
    """A component's circulation differs from its target by more than a cell."""


class TestFunctionInfeasible(VortexPatchError):
    """The two-ball test function does not fit inside its balls."""

    __test__ = False


class CFLViolation(VortexPatchError):
    """The time step is too large for the current velocity."""


class SupportLeavesDomain(VortexPatchError):
    """A perturbation pushed vorticity outside the domain."""


class Inapplicable(VortexPatchError):
    """The level-set comparison construction does not apply to a candidate."""


class NonDiskDomain(VortexPatchError):
    """An analytic-kernel operation was requested on a non-disk domain."""


class ConfigError(VortexPatchError):
    """Invalid run configuration.

    Attributes:
        field: Dotted name of the offending field (e.g. ``vortex.kappa2``).
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field

"""Exception hierarchy shared by every module of the package."""


class PLRenormError(Exception):
    """Base class for all library errors."""


class MapError(PLRenormError, ValueError):
    """Invalid piecewise-affine map data."""


class NonMonotoneBreakpoints(MapError):
    pass


class ZeroSlopePiece(MapError):
    pass


class RangeViolation(MapError):
    pass


class DomainViolation(PLRenormError, ValueError):
    pass


class BudgetError(PLRenormError):
    """A computation would exceed a resource budget."""


class PieceBudgetExceeded(BudgetError):
    def __init__(self, message, *, pieces=None, budget=None):
        super().__init__(message)
        self.pieces = pieces
        self.budget = budget
        # set by build_tower so callers can still report the levels it finished
        self.partial = None


class CandidateBudgetExceeded(BudgetError):
    pass


class BitBudgetExceeded(BudgetError):
    pass


class NotInvariant(PLRenormError):
    pass


class NotDisjoint(PLRenormError):
    pass


class DegenerateInterval(PLRenormError):
    pass


class NotNested(PLRenormError):
    pass


class RaggedNesting(NotNested):
    pass


class OrbitThroughCorner(PLRenormError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class MultipleCornersInInterval(PLRenormError):
    pass


class IterateHitsCorner(PLRenormError):
    pass


class PointOutsideCycle(PLRenormError):
    pass


class CornerOutsideCycle(PLRenormError):
    pass


class NoSplittingFound(PLRenormError):
    pass


class AmbiguousSplitting(PLRenormError):
    pass


class CornerOnBoundary(PLRenormError):
    pass


class CornerOnSplittingPoint(PLRenormError):
    pass


class HypothesisNotMet(PLRenormError):
    pass


class ConstructionFailed(PLRenormError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InputError(PLRenormError, ValueError):
    """Malformed input document, located by ``line`` and ``field`` when known."""

    def __init__(self, message, *, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.line = line
        self.field = field

"""Exception types shared across the package."""


class TracefrontError(Exception):
    """Base class for all package errors."""


class UnsupportedDegreeError(TracefrontError, ValueError):
    """Polynomial degree outside the supported set {1, 2, 3}."""


class InvalidGeometryError(TracefrontError, ValueError):
    """Non-positive element width or an empty/inverted domain."""


class EmptyInputError(TracefrontError, ValueError):
    """An operation that needs at least one front received none."""


class SymbolicSingularityError(TracefrontError):
    """A pivot position never receives any entry during symbolic elimination."""

    def __init__(self, pivot: int):
        super().__init__(f"pivot position ({pivot}, {pivot}) has no entry")
        self.pivot = pivot


class CycleError(TracefrontError):
    """The dependency graph contains a cycle (must never happen on valid plans)."""

    def __init__(self, cycle_tasks):
        super().__init__(f"dependency cycle through {len(cycle_tasks)} tasks")
        self.cycle_tasks = list(cycle_tasks)


class ZeroPivotError(TracefrontError, ArithmeticError):
    """A pivot value fell below the zero threshold during factorization.

    Carries the front id and the global pivot index that failed.
    """

    def __init__(self, front: int, pivot: int):
        super().__init__(f"zero pivot at global index {pivot} (front {front})")
        self.front = front
        self.pivot = pivot


class ContractViolationError(TracefrontError):
    """Debug-mode check failed: a value was read before it was finalized,
    or written after it was finalized."""

"""Exception hierarchy shared by all modules."""


class HilbertLabError(Exception):
    """Base class for every error raised by the package."""


class NonCollinear(HilbertLabError):
    pass


class DegenerateConfiguration(HilbertLabError):
    pass


class DegenerateChord(HilbertLabError):
    pass


class PointOutsideDomain(HilbertLabError):
    pass


class NonConvergent(HilbertLabError):
    pass


class BudgetExceeded(HilbertLabError):
    pass


class OrbitTooSmall(HilbertLabError):
    pass


class MapDoesNotPreserveDomain(HilbertLabError):
    pass


class Inconclusive(HilbertLabError):
    pass


class LevelNotFound(HilbertLabError):
    pass


class UnmappedAtom(HilbertLabError):
    pass


class MassTooConcentrated(HilbertLabError):
    pass


class NoConvergence(HilbertLabError):
    pass


class StepTooLarge(HilbertLabError):
    pass


class QuadratureUnconverged(HilbertLabError):
    pass


class SceneError(HilbertLabError):
    """Schema or reference error in a scene file (CLI exit code 2)."""

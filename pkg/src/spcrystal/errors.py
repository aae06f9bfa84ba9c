"""Exception hierarchy shared by all solver layers."""


class SPCrystalError(Exception):
    """Base class; every error raised by this package derives from it."""


class ValidationError(SPCrystalError):
    """Input rejected before any computation."""


class DegenerateLattice(ValidationError):
    pass


class BadGrid(ValidationError):
    pass


class BadTruncation(ValidationError):
    pass


class CellMismatch(ValidationError):
    pass


class UnderResolved(ValidationError):
    pass


class WrongDimension(ValidationError):
    pass


class ZeroField(ValidationError):
    pass


class NonNeutral(SPCrystalError):
    """Total charge per cell is not zero within tolerance."""


class NotTangent(SPCrystalError):
    """Perturbation is not orthogonal to the base point on the sphere."""


class LineSearchStalled(SPCrystalError):
    pass


class NotConverged(SPCrystalError):
    pass


class CheckFailed(SPCrystalError):
    """An infrared/integrability precondition does not hold."""

"""Exception hierarchy shared by all cvmaser modules."""


class CVMaserError(Exception):
    """Base class for library errors."""


class DimensionError(CVMaserError, ValueError):
    """A Fock index or subsystem index does not fit the space."""


class SpaceMismatchError(CVMaserError, ValueError):
    """Two objects live on different space signatures."""


class ContractError(CVMaserError, ValueError):
    """An input violates a documented precondition (e.g. non-Hermitian generator)."""


class SingularSectorError(CVMaserError, ArithmeticError):
    """An operator inverse was requested on a Fock sector where it vanishes."""

    def __init__(self, message, sector=None):
        super().__init__(message)
        self.sector = sector


class ClosureExhaustedError(CVMaserError):
    """Target polynomial is not in the commutator closure within the depth budget."""

    def __init__(self, message, reachable=()):
        super().__init__(message)
        self.reachable = tuple(reachable)


class StepBudgetError(CVMaserError):
    """Product-formula refinement ran out of steps before meeting the tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DocumentParseError(CVMaserError):
    """A circuit or job document is not well-formed structured text."""


class ValidationError(CVMaserError):
    """A document parsed but violates the schema; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

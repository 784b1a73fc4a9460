class CohdecError(Exception):
    """Base class for errors raised by this package."""


class ParameterDomainError(CohdecError, ValueError):
    pass


class ShapeError(CohdecError, ValueError):
    pass


class ValidationError(CohdecError, ValueError):
    pass


class UnsupportedHypothesisError(CohdecError, NotImplementedError):
    pass


class MissingBranchError(CohdecError, KeyError):
    pass


class NumericError(CohdecError, ArithmeticError):
    pass


class SearchSpaceError(CohdecError, ValueError):
    pass

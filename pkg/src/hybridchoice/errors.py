"""Exception hierarchy shared by every module of the package."""


class HybridChoiceError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class SchemaError(HybridChoiceError):
    pass


class ParseError(HybridChoiceError):
    pass


class DuplicationError(HybridChoiceError):
    pass


class FusionConflictError(HybridChoiceError):
    pass


class EncodingError(HybridChoiceError):
    pass


class InfeasibleKError(HybridChoiceError):
    pass


class ArityError(HybridChoiceError):
    pass


class DomainError(HybridChoiceError, ValueError):
    pass


class SpecificationError(HybridChoiceError):
    pass


class NumericDomainError(HybridChoiceError, FloatingPointError):
    pass


class UnsupportedDimensionError(HybridChoiceError):
    pass

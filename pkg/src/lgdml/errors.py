"""Exception types raised by the library.

Every contract violation gets its own class so callers (and tests) can
catch precisely; all inherit from LgdmlError.
"""


class LgdmlError(Exception):
    pass


class ZeroRow(LgdmlError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"row {index} has (near-)zero norm, cannot normalize")


class DimMismatch(LgdmlError):
    pass


class ShapeMismatch(LgdmlError):
    pass


class NonPositiveTemperature(LgdmlError):
    pass


class NoValidPairs(LgdmlError):
    pass


class NoValidTriplets(LgdmlError):
    pass


class EmptyTargetList(LgdmlError):
    pass


class EmptyList(LgdmlError):
    pass


class MissingPseudoName(LgdmlError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"pseudo-classname {name!r} not found in language table")


class EmptyClass(LgdmlError):
    pass


class KTooLarge(LgdmlError):
    pass


class InsufficientClasses(LgdmlError):
    pass


class GuidanceInputMissing(LgdmlError):
    pass


class NonFiniteLoss(LgdmlError):
    pass


class UnknownLoss(LgdmlError):
    pass


class KExceedsGallery(LgdmlError):
    pass


class DegenerateInput(LgdmlError):
    pass


class MissingClassName(LgdmlError):
    pass


class MissingClassInExternalMatrix(LgdmlError):
    pass


class BadMagic(LgdmlError):
    pass


class TruncatedPayload(LgdmlError):
    pass


class NonFiniteValue(LgdmlError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite value at flat index {index}")


class CountMismatch(LgdmlError):
    pass


class DuplicateName(LgdmlError):
    pass


class DegenerateSpec(LgdmlError):
    pass


class ConfigError(LgdmlError):
    pass

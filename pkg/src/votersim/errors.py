"""Exception types, one per named failure mode of the toolkit."""


class VoterSimError(Exception):
    """Base class for all toolkit errors."""


# kernel / offspring validation

class KernelError(VoterSimError):
    pass


class AsymmetricError(KernelError):
    pass


class NonIsotropicError(KernelError):
    pass


class OriginInSupportError(KernelError):
    pass


class NotNormalizedError(KernelError):
    pass


class ReducibleError(KernelError):
    """Support does not generate the full lattice as an additive group."""


class NotUniformKernelError(KernelError):
    pass


# model construction

class EpsilonTooLargeError(VoterSimError):
    pass


class SelectionTooStrongError(VoterSimError):
    pass


class NegativeFitnessError(VoterSimError):
    pass


class InvalidRatesError(VoterSimError):
    pass


class KernelNotCoveredError(VoterSimError):
    pass


class NegativeRateError(VoterSimError):
    pass


# lattice engine

class TorusTooSmallError(VoterSimError):
    pass


class BlockMisalignedError(VoterSimError):
    pass


class HorizonExceededError(VoterSimError):
    pass


class MissingInputError(VoterSimError):
    pass


# reaction polynomials

class DegenerateSumError(VoterSimError):
    pass


class NonSimpleRootError(VoterSimError):
    pass


class IdenticallyZeroError(VoterSimError):
    pass


# PDE solvers

class CFLViolationError(VoterSimError):
    pass


class LeftUnitIntervalError(VoterSimError):
    pass


class NoFrontError(VoterSimError):
    pass


class FrontContaminationError(VoterSimError):
    """Traveling front came too close to the domain boundary."""


# reporting

class IOFailureError(VoterSimError):
    pass

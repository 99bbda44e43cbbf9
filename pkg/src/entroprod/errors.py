"""Exception types shared across the package.

Every numerical failure mode raised by the library derives from
EntroprodError so callers (and the CLI) can distinguish numerical failures
from programming errors.
"""


class EntroprodError(Exception):
    """Base class for all library errors."""


class ZeroMass(EntroprodError):
    """Density integral is zero, negative, or not finite."""


class NotNormalized(EntroprodError):
    """Operation requires a normalized density and got one that is not."""


class DomainMismatch(EntroprodError):
    """Two grids that must share a domain do not, or the domain lacks a
    structural property the operation needs (e.g. origin off-lattice)."""


class UnsupportedDomain(EntroprodError):
    """Operation is not defined on this domain kind."""


class DegenerateDensity(EntroprodError):
    """Too much probability mass sits below the evaluation floor for a
    1/f integrand to be trustworthy."""


class DegenerateNoise(EntroprodError):
    """Noise coupling is rank deficient somewhere on the grid."""


class NonFinite(EntroprodError):
    """A state or field left the finite range."""

    def __init__(self, msg, step=None, index=None):
        super().__init__(msg)
        self.step = step
        self.index = index


class CoverageError(EntroprodError):
    """Histogram domain misses too much of the ensemble."""

    def __init__(self, msg, escaped_fraction=None):
        super().__init__(msg)
        self.escaped_fraction = escaped_fraction


class StabilityViolation(EntroprodError):
    """Requested time step violates the explicit-scheme stability bound."""


class ShapeMismatch(EntroprodError):
    """Matrix/vector dimensions do not line up."""


class NotPD(EntroprodError):
    """Matrix required to be (symmetric) positive definite is not."""


class SingularF(EntroprodError):
    """Fisher matrix is singular; its inverse is required."""


class SingularMass(EntroprodError):
    """Mass matrix not invertible at a probe point."""


class SingularJ(EntroprodError):
    """Coordinate-change Jacobian not invertible."""


class SingularB0(EntroprodError):
    """Noise matrix not invertible where an inverse is required."""


class TagMismatch(EntroprodError):
    """Group elements from different groups were combined."""


class NearCutLocus(EntroprodError):
    """Logarithm requested too close to the cut locus of the exponential."""


class TruncationBudget(EntroprodError):
    """Series truncation cannot satisfy the requested tail tolerance."""


class DomainTooSmall(EntroprodError):
    """Integrand has not decayed at the domain boundary."""


class BoundViolation(EntroprodError):
    """A certified inequality failed beyond its tolerance."""


class ConfigError(EntroprodError):
    """Bad experiment configuration (unknown key, bad value, ...)."""

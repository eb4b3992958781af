"""Exception types shared across the package."""


class FusionError(Exception):
    """Base class for all package errors."""


class NotPSD(FusionError):
    """Matrix expected to be (semi) positive definite is not."""


class DimensionMismatch(FusionError):
    """Array shapes inconsistent with each other or with the model dimension."""


class NonFinite(FusionError):
    """A computation produced (or received) NaN / infinity."""


class UnboundedRegion(FusionError):
    """Bounding box required to be finite is not."""


class BadBeta(FusionError):
    """Tempering exponent outside (0, 1] or 1/beta not an integer."""


class BadZeta(FusionError):
    """CESS floor outside (0, 1)."""


class SeriesNonConvergence(FusionError):
    """Alternating layer series failed to resolve within the iteration cap."""


class ChainDiverged(FusionError):
    """Leaf MCMC chain acceptance rate collapsed after adaptation."""


class EmptyInput(FusionError):
    """Operation received no samples / factors."""


class AllZeroWeights(FusionError):
    """Every particle log-weight is -inf; the particle system collapsed."""


class AcceptanceStarvation(FusionError):
    """Rejection sampler acceptance rate below the viability threshold."""


class CountMismatch(FusionError):
    """Per-factor sample counts expected to be equal are not."""


class TooFewSamples(FusionError):
    """Not enough effective samples for a density estimate."""


class ConfigInvalid(FusionError):
    """Experiment configuration failed validation.

    The message names the offending field path.
    """

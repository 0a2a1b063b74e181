"""Exception types shared across the package."""


class ProxkitError(Exception):
    """Base class for package errors."""


class OracleInconsistencyError(ProxkitError):
    """A loss oracle returned a zero subgradient together with a value
    strictly above its reported per-sample infimum."""


class UnsupportedProxError(ProxkitError):
    """No closed-form or certified solver is registered for the family."""


class NonCertifiedError(ProxkitError):
    """Reference optimum tolerance is too loose for the requested accuracy."""


class RankDeficientError(ProxkitError):
    """Random matrix draw failed a rank or spectrum requirement."""


class InsufficientDecayError(ProxkitError):
    """Not enough usable points to fit a linear convergence rate."""

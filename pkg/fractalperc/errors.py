"""Exception hierarchy for the certifier. Refusals are values, not errors."""


class CertifierError(Exception):
    """Base class for every error raised by the engine."""


class ProfileError(CertifierError):
    """Boundary profiles that cannot be tiled, or operands over different profiles."""


class EnumerationCapError(CertifierError):
    """An enumeration was asked to materialize more than the configured cap."""


class StateCapError(CertifierError):
    """A frontier DP layer grew beyond the configured state cap."""

    def __init__(self, step: int, states: int, cap: int):
        super().__init__(
            f"DP layer {step} reached {states} states (cap {cap}); "
            f"raise STATE_CAP or choose a smaller alphabet"
        )
        self.step = step
        self.states = states
        self.cap = cap


class NumericBlowupError(CertifierError):
    """Slack mass grew past the sanity bound."""


class CacheError(CertifierError):
    """Transition-table cache file is corrupt or was written for other inputs."""


class MalformedCertificateError(CertifierError):
    """A certificate file could not be parsed."""

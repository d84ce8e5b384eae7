"""Exception types shared across the package."""


class CompsimError(Exception):
    """Base class for all errors raised by compsim."""


class ConfigurationError(CompsimError, ValueError):
    """A scenario, geometry, or codebook configuration is invalid."""


class DomainError(CompsimError, ValueError):
    """An operation received an input outside its mathematical domain."""


class PrecodingError(CompsimError):
    """Zero-forcing failed: rank-deficient or ill-conditioned channel matrix."""


class EstimationError(CompsimError):
    """A Monte Carlo estimate could not be formed (e.g. all trials failed)."""


class ScenarioError(ConfigurationError):
    """Scenario validation failure carrying the full list of diagnostics."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

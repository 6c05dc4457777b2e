"""Exception taxonomy shared across the package."""


class ConfigurationError(ValueError):
    """A run configuration or generation parameter is invalid."""


class ContractError(ValueError):
    """A documented precondition of an operation was violated by the caller."""


class UndefinedInputError(ValueError):
    """The requested quantity is mathematically undefined for this input."""


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage requires artifacts that are not present on disk."""

"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
CheckpointError -> 3, DataError -> 4.
"""


class PvdiffError(Exception):
    """Base class for all package errors."""


class ConfigError(PvdiffError):
    """Invalid, inconsistent, or unknown configuration."""


class GeometryError(ConfigError):
    """Tensor geometry incompatible with the configured model."""


class CheckpointError(PvdiffError):
    """Checkpoint missing, corrupt, or incompatible with the target model."""


class DataError(PvdiffError):
    """Dataset unusable: no decodable videos, clips too short, etc."""

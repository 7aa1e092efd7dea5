"""
Domain exceptions.

Each error also derives from the builtin it refines, so callers that only
know about ValueError / RuntimeError keep working.
"""


class CasaError(Exception):
    """Base class for every error raised on purpose by this package"""


class ConfigError(CasaError, ValueError):
    """Invalid or inconsistent run configuration"""


class ShapeMismatchError(CasaError, ValueError):
    """Tensor shape does not match the configured model dimensions"""


class PlacementError(CasaError, ValueError):
    """Objects could not be placed without overlap"""


class DatasetExistsError(CasaError, FileExistsError):
    """A dataset manifest already exists and overwriting was not requested"""


class MissingArtifactError(CasaError, FileNotFoundError):
    """A checkpoint, slot cache, split or manifest required by a stage is missing"""


class NonFiniteLossError(CasaError, RuntimeError):
    """Training produced a NaN or infinite loss"""


class DegenerateTaskError(CasaError, ValueError):
    """A supervised task has empty splits or a single label class"""

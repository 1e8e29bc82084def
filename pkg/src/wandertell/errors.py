"""Exception types shared across the package."""


class WandertellError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(WandertellError):
    """Invalid configuration or CLI arguments."""


class GenerationError(WandertellError):
    """Procedural world generation failed after bounded retries."""


class MapBoundsError(WandertellError):
    """A map operation would touch cells outside the allocated grid."""


class NoPathError(WandertellError):
    """The planner could not connect start and goal."""


class SchemaError(WandertellError):
    """A file declares an unknown or mismatched schema version."""

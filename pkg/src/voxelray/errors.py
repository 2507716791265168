"""Exception types shared across the package."""


class VoxelrayError(Exception):
    """Base class for package-specific errors."""


class DomainError(VoxelrayError, ValueError):
    """A numeric or physical precondition was violated."""


class FormatError(VoxelrayError):
    """An input file or payload does not match its documented schema."""


class GenerationError(VoxelrayError):
    """Procedural generation could not satisfy the requested parameters."""


class RenderError(VoxelrayError):
    """A scan plan cannot be rendered (e.g. a camera inside geometry)."""


class SamplingError(DomainError):
    """Not enough candidates to draw the requested sample."""

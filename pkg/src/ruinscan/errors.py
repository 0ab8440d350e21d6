"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ValidationError -> 2,
MissingArtifactError -> 3, anything else -> 4.
"""


class RuinscanError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(RuinscanError):
    """Bad parameters, malformed input files, or violated preconditions."""


class InputFormatError(ValidationError):
    """A data file could not be parsed (message names the file/line)."""


class DegenerateGeometryError(ValidationError):
    """Geometry too degenerate to process (collinear contour, zero-area ring)."""


class MissingArtifactError(RuinscanError):
    """A pipeline stage input artifact is absent from the workspace."""

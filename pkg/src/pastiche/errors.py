"""Exception hierarchy shared by the library, the CLI and the service.

Every error carries a short machine-parsable ``code`` so the CLI can emit
one-line diagnostics and the service can map failures onto structured 4xx
responses.
"""


class PasticheError(Exception):
    """Base class for all library errors."""

    code = "error"


class ShapeError(PasticheError):
    """Tensor shapes or dimensions violate an operation's contract."""

    code = "shape"


class UnknownStyleError(PasticheError):
    code = "unknown-style"


class DuplicateStyleError(PasticheError):
    code = "duplicate-style"


class ConvexityError(PasticheError):
    """Blend weights are negative or do not sum to one."""

    code = "bad-weights"


class ImageFormatError(PasticheError):
    code = "bad-image"


class CheckpointError(PasticheError):
    code = "bad-checkpoint"


class ArchitectureMismatchError(PasticheError):
    """Imported parameters do not fit the target model's layer layout."""

    code = "incompatible-architecture"


class ConfigError(PasticheError):
    code = "bad-config"


class NonFiniteLossError(PasticheError):
    """Training or optimization produced a NaN/Inf loss."""

    code = "non-finite-loss"

    def __init__(self, message, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}

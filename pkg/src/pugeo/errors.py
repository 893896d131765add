"""Exception types shared across the package."""


class FormatError(ValueError):
    """Malformed input file (bad arity, bad token, bad index, ...)."""


class UnsupportedFormatError(FormatError):
    """File is recognised but in an unsupported variant (e.g. binary PLY)."""


class GeometryError(ValueError):
    """Degenerate geometry: zero-area mesh, collinear neighborhood, ..."""


class ShapeError(ValueError):
    """Tensor shape mismatch; message names both shapes."""


class CheckpointError(ValueError):
    """Bad magic, truncated payload, or header/weight mismatch in a checkpoint."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes NaN/Inf.

    Carries a `diagnostics` dict with step index, component losses and
    parameter gradient norms.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

"""Exception and warning types shared across the package."""


class ZoomshiftError(Exception):
    """Base class for all package errors."""


class EmptyMask(ZoomshiftError):
    """Lesion mask contains no nonzero pixel."""


class InvalidBox(ZoomshiftError):
    """Bounding box has zero clamped area or lies outside the image."""


class InsufficientTissue(ZoomshiftError):
    """Breast foreground too small to place the requested crop."""


class TooFewPatients(ZoomshiftError):
    """Not enough patients to build the requested splits."""


class DegenerateLabels(ZoomshiftError):
    """Empty label list or a class with zero samples."""


class ImageTooSmall(ZoomshiftError):
    """Image below the minimum pyramid dimension."""


class ShapeError(ZoomshiftError):
    """Array shapes incompatible with the operation."""


class TrainingDiverged(ZoomshiftError):
    """Non-finite loss encountered during training."""


class WeightsUnavailable(ZoomshiftError):
    """Pretrained backbone weights were requested but not found locally."""


class NumericalError(ZoomshiftError):
    """Numerical failure beyond tolerance (e.g. non-PSD covariance)."""


class UndefinedAUC(ZoomshiftError):
    """ROC-AUC undefined: a class lacks positives or negatives."""


class EmptyInput(ZoomshiftError):
    """Operation called with an empty input collection."""


class ConfigError(ZoomshiftError):
    """Invalid or infeasible configuration values."""


class IncompatibleMembers(ZoomshiftError):
    """Ensemble members disagree on class order."""


class NothingToBalance(UserWarning):
    """Augmentation requested but the target class is not the minority."""

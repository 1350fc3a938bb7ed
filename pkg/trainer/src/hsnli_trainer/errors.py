class TrainerError(Exception):
    """Base class for all errors this package raises on purpose."""


class DataError(TrainerError):
    """A corpus file does not match the expected record schema."""


class PlanError(TrainerError):
    """A phase plan is malformed or violates a plan invariant."""


class TrainingError(TrainerError):
    """Training cannot continue (for example a non-finite loss)."""


class ExportError(TrainerError):
    """Export failed or the exported model does not verify."""

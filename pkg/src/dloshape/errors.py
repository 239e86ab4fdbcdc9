"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameter values or an unusable setup."""


class RejectedCommandError(ValueError):
    """A motion target outside the allowed workspace."""


class SimulationDivergedError(RuntimeError):
    """Rope state left the sane region (NaN or runaway coordinates)."""


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during optimization; carries the step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at training step {step}")


class DimensionError(ValueError):
    """Mismatched point counts or vector lengths."""


class DatasetFormatError(ValueError):
    """Corrupt or incompatible dataset / policy file contents."""


class ModeInfeasibleError(ValueError):
    """Relabeling mode cannot be applied to this dataset."""


class EvaluationError(RuntimeError):
    """Runner produced unusable output during closed-loop evaluation."""


class DegenerateGeometryError(RuntimeError):
    """Servo normal matrix is singular beyond what damping can absorb."""

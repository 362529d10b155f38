"""Exception hierarchy shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid or inconsistent configuration."""


class DataError(PipelineError):
    """Broken dataset tree, unreadable file, or violated data invariant."""


class PromptError(PipelineError):
    """Attribute resolution or prompt rendering failure."""


class VqaError(PipelineError):
    """VQA client transport failure or unusable answer."""


class ShapeAnswerError(VqaError):
    """A VQA answer that cannot be normalized onto the allowed shape values."""

    def __init__(self, raw_answer: str, detail: str = ""):
        self.raw_answer = raw_answer
        message = f"cannot normalize shape answer {raw_answer!r}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class ModelError(PipelineError):
    """Model construction, forward, or checkpoint failure."""


class ModelLoadError(ModelError):
    """Weights or definitions for a model kind could not be loaded."""


class TrainingError(PipelineError):
    """Training aborted (non-finite loss, missing upstream checkpoint, ...)."""


class EvaluationError(PipelineError):
    """Evaluation or statistics failure (unpairable samples, missing cells, ...)."""


class IncompleteMatrixError(EvaluationError):
    """A report was requested for an experiment matrix with missing cells."""


class StaleArtifactError(PipelineError):
    """Upstream stage output was produced under a different configuration."""

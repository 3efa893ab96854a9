"""Exception hierarchy shared across the pipeline."""


class RecontextError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RecontextError):
    """A value violates a type invariant or an operation precondition."""


class ConflictError(RecontextError):
    """An id or submission collides with something already recorded."""


class NotFoundError(RecontextError):
    """A referenced record does not exist."""


class ImmutabilityError(RecontextError):
    """An append-only structure was mutated in place."""


class DegenerateMaskError(RecontextError):
    """A segmentation mask has no foreground pixels where one is required."""


class EmptyBankError(RecontextError):
    """No approved prompt-bank entries exist for the requested category."""


class PartialPopulationError(RecontextError):
    """The LLM failed partway through populating a category.

    Whatever was generated before the failure is already persisted;
    ``persisted`` and ``requested`` report the counts.
    """

    def __init__(self, category: str, persisted: int, requested: int):
        self.category = category
        self.persisted = persisted
        self.requested = requested
        super().__init__(
            f"bank {category!r}: persisted {persisted} of {requested} requested prompts"
        )


class ClassificationError(RecontextError):
    """Product category could not be determined from metadata or the VLM."""


class TokenExhaustionError(RecontextError):
    """Every candidate token conflicts with the product title or metadata."""


class SweepError(RecontextError):
    """Every token in a sweep failed to train.

    Carries per-token failure messages in ``failures``.
    """

    def __init__(self, failures: dict):
        self.failures = dict(failures)
        lines = ", ".join(f"{tok}: {msg}" for tok, msg in sorted(self.failures.items()))
        super().__init__(f"all sweep candidates failed ({lines})")


class UndefinedCorrelationError(RecontextError):
    """Pearson correlation is undefined (a constant series)."""


class UndefinedUpliftError(RecontextError):
    """Relative uplift is undefined (baseline pass rate is zero)."""


class IncompletePanelError(RecontextError):
    """An image verdict was requested before all raters submitted."""


class ConfigError(RecontextError):
    """Run configuration is missing keys, has unknown keys, or is malformed."""


class BackendError(RecontextError):
    """Base class for model-backend failures."""


class TransportError(BackendError):
    """The backend was unreachable or returned a retryable failure."""


class GenerationError(BackendError):
    """The backend rejected the request; retrying will not help."""


class TrainerError(BackendError):
    """A finetuning job failed; message is the trainer's verbatim report."""

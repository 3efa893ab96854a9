"""Adapter contracts for every external model the pipeline consumes.

All generative calls carry an explicit 64-bit seed; mock implementations
are pure functions of (payload, seed), real implementations forward the
seed so reruns are best-effort reproducible.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..errors import ValidationError
from ..models import CaptionRecord, JobStatus, Mask, TrainingDatasetSpec

IMAGE_EMBED_MODELS = ("clip_image", "dino")
TEXT_EMBED_MODELS = ("clip_text",)

#: Operations that must carry a seed (reproducibility contract).
GENERATIVE_OPS = frozenset(
    {"generate_image", "outpaint", "inpaint", "generate_novel_views", "sample_from_model", "generate_text"}
)


@dataclass(frozen=True)
class BackendRequest:
    """One wire-level call to a model-serving endpoint."""

    backend_name: str
    operation: str
    payload: Mapping[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    timeout_ms: int = 30_000

    def __post_init__(self):
        if self.operation in GENERATIVE_OPS and self.seed is None:
            raise ValidationError(f"operation {self.operation!r} requires a seed")


@dataclass
class EmbeddingVector:
    """Fixed-dimension embedding; unit L2 norm when ``normalized`` is set."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValidationError(f"embedding must be 1-D, got shape {self.values.shape}")
        if self.normalized:
            norm = float(np.linalg.norm(self.values))
            if not math.isclose(norm, 1.0, abs_tol=1e-6):
                raise ValidationError(f"normalized embedding has L2 norm {norm}")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


class ModelBackend(ABC):
    """Interface over the generative, perception, and training backends."""

    name: str = "backend"

    # -- generation ---------------------------------------------------------

    @abstractmethod
    def generate_image(self, prompt: str, seed: int) -> np.ndarray:
        """Text-to-image at the configured output size. Same (prompt, seed), same raster."""

    @abstractmethod
    def outpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        """Regenerate the mask=0 region; mask=1 pixels come back bit-identical."""

    @abstractmethod
    def inpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        """Regenerate the mask=1 region; mask=0 pixels come back bit-identical."""

    @abstractmethod
    def generate_novel_views(self, image: np.ndarray, seed: int, n_frames: int) -> list[np.ndarray]:
        """n_frames rasters at the input size; frame 0 is the input itself."""

    # -- perception ---------------------------------------------------------

    @abstractmethod
    def segment(self, image: np.ndarray, subject_hint: str = "") -> Mask:
        """Foreground mask at the input dimensions."""

    @abstractmethod
    def caption(self, image: np.ndarray, instruction: str) -> CaptionRecord:
        """Fine-grained caption; color/position/lighting attributes always present."""

    @abstractmethod
    def embed_image(self, image: np.ndarray, model: str) -> EmbeddingVector:
        """model is one of IMAGE_EMBED_MODELS; output is L2-normalized."""

    @abstractmethod
    def embed_text(self, text: str, model: str = "clip_text") -> EmbeddingVector:
        """model is one of TEXT_EMBED_MODELS; output is L2-normalized."""

    # -- language -----------------------------------------------------------

    @abstractmethod
    def generate_text(self, prompt: str, n: int, seed: int) -> list[str]:
        """n text completions; used to populate the prompt bank."""

    # -- training boundary ---------------------------------------------------

    @abstractmethod
    def submit_training_job(
        self, spec: TrainingDatasetSpec, captions: Sequence[tuple[str, str]]
    ) -> str:
        """Queue a finetuning job; returns an opaque job_ref."""

    @abstractmethod
    def poll_job(self, job_ref: str) -> tuple[JobStatus, Optional[str]]:
        """Job status plus model_ref once done. Failed jobs raise TrainerError
        with the trainer-side message verbatim."""

    @abstractmethod
    def sample_from_model(self, model_ref: str, prompt: str, seed: int, n: int) -> list[np.ndarray]:
        """n rasters from a finetuned model."""


def check_mask_matches(image: np.ndarray, mask: Mask, op: str) -> None:
    if not mask.matches(image):
        raise ValidationError(
            f"{op}: mask {mask.width}x{mask.height} does not match image "
            f"{image.shape[1]}x{image.shape[0]}"
        )

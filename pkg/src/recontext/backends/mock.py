"""Deterministic mock backends.

Every method is a pure function of its payload and seed, so two runs of
the pipeline with the same config produce bit-identical assets. Textures
are low-frequency (an 8x8 color grid upsampled to the output size) so the
mock embedder sees meaningful differences between images instead of the
near-identical block means that white noise would give.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Sequence

import numpy as np

from ..canonical import derive_seed
from ..errors import ConfigError, NotFoundError, TrainerError, ValidationError
from ..models import CaptionRecord, JobStatus, Mask, TrainingDatasetSpec
from .base import (
    IMAGE_EMBED_MODELS,
    TEXT_EMBED_MODELS,
    EmbeddingVector,
    ModelBackend,
    check_mask_matches,
)

_CONTEXT_TEMPLATES = (
    "a {category} in a sunlit scandinavian living room with potted plants",
    "a {category} on a wooden deck overlooking a misty forest at dawn",
    "a {category} in a minimalist studio apartment with concrete walls",
    "a {category} beside a bay window in a cozy reading nook",
    "a {category} in a mid-century lounge with warm brass lighting",
    "a {category} on a patterned rug in an eclectic bohemian den",
    "a {category} in a bright loft with exposed brick and tall ferns",
    "a {category} near a stone fireplace in a rustic cabin interior",
    "a {category} in an airy coastal room with linen curtains",
    "a {category} under pendant lamps in a modern open-plan kitchen",
)

_COLOR_WORDS = ("red-toned", "green-toned", "blue-toned", "neutral gray")
_LIGHTING_WORDS = ("dim", "soft", "bright")
_POSITION_WORDS = ("left of frame", "centered", "right of frame")
_CATEGORY_WORDS = ("chair", "table", "lamp", "sofa", "shelf")


def _image_digest(image: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(image.shape).encode())
    h.update(np.ascontiguousarray(image).tobytes())
    return h.hexdigest()


def _rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def _downsample_grid(gray: np.ndarray, rows: int = 8, cols: int = 8) -> np.ndarray:
    """Area-mean downsample of a 2-D array to rows x cols."""
    row_chunks = np.array_split(gray, rows, axis=0)
    feats = np.empty((rows, cols), dtype=np.float64)
    for i, chunk in enumerate(row_chunks):
        for j, cell in enumerate(np.array_split(chunk, cols, axis=1)):
            feats[i, j] = cell.mean()
    return feats


class MockBackend(ModelBackend):
    """In-process stand-in for every model endpoint."""

    name = "mock"

    def __init__(
        self,
        out_size: tuple[int, int] = (64, 64),
        embed_dim: int = 512,
        fail_tokens: Optional[set[str]] = None,
    ):
        if embed_dim < 66:
            raise ConfigError("embed_dim must leave room for the 65 mock features")
        self.out_height, self.out_width = out_size
        self.embed_dim = embed_dim
        self.fail_tokens = set(fail_tokens or ())
        self._jobs: dict[str, tuple[JobStatus, Optional[str], Optional[str]]] = {}

    # -- textures -----------------------------------------------------------

    def _texture(self, height: int, width: int, *key_parts) -> np.ndarray:
        rng = _rng("texture", *key_parts)
        grid = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        tile = np.repeat(np.repeat(grid, (height + 7) // 8, axis=0), (width + 7) // 8, axis=1)
        return np.ascontiguousarray(tile[:height, :width])

    def _fill_color(self, *key_parts) -> np.ndarray:
        return _rng("fill", *key_parts).integers(0, 256, size=3, dtype=np.uint8)

    # -- generation ---------------------------------------------------------

    def generate_image(self, prompt: str, seed: int) -> np.ndarray:
        if not prompt:
            raise ValidationError("generate_image: prompt must be non-empty")
        return self._texture(self.out_height, self.out_width, "generate_image", prompt, seed)

    def outpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        check_mask_matches(image, mask, "outpaint")
        # Solid background color: re-segmentable by the color-threshold mock.
        background = np.empty_like(image)
        background[:] = self._fill_color("outpaint", prompt, seed)
        return np.where(mask.bits[..., None], image, background)

    def inpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        check_mask_matches(image, mask, "inpaint")
        patch = np.empty_like(image)
        patch[:] = self._fill_color("inpaint", prompt, seed)
        return np.where(mask.bits[..., None], patch, image)

    def generate_novel_views(self, image: np.ndarray, seed: int, n_frames: int) -> list[np.ndarray]:
        if n_frames < 1:
            raise ValidationError("generate_novel_views: n_frames must be >= 1")
        height, width = image.shape[:2]
        rng = _rng("novel_views", seed)
        frames = [np.ascontiguousarray(image)]
        for _ in range(n_frames - 1):
            dy = int(rng.integers(1, max(2, height // 4))) * int(rng.choice((-1, 1)))
            dx = int(rng.integers(1, max(2, width // 4))) * int(rng.choice((-1, 1)))
            frames.append(np.roll(image, (dy, dx), axis=(0, 1)))
        return frames

    # -- perception ---------------------------------------------------------

    def segment(self, image: np.ndarray, subject_hint: str = "") -> Mask:
        if image.size == 0:
            raise ValidationError("segment: image must be non-empty")
        border = np.concatenate([image[0], image[-1], image[:, 0], image[:, -1]])
        colors, counts = np.unique(border.reshape(-1, 3), axis=0, return_counts=True)
        background = colors[counts.argmax()].astype(np.int16)
        diff = np.abs(image.astype(np.int16) - background).max(axis=2)
        return Mask(diff > 10)

    def caption(self, image: np.ndarray, instruction: str) -> CaptionRecord:
        if not instruction:
            raise ValidationError("caption: instruction must be non-empty")
        digest = _image_digest(image)
        means = image.reshape(-1, 3).mean(axis=0)
        spread = means.max() - means.min()
        color = _COLOR_WORDS[3] if spread < 8 else _COLOR_WORDS[int(means.argmax())]
        brightness = means.mean()
        lighting = _LIGHTING_WORDS[0 if brightness < 85 else 1 if brightness < 170 else 2]
        columns = image.mean(axis=(0, 2))
        thirds = np.array_split(columns, 3)
        position = _POSITION_WORDS[int(np.argmax([t.mean() for t in thirds]))]
        text = f"a {color} subject {position} under {lighting} lighting [{digest[:8]}]"
        attributes = {"color": color, "position": position, "lighting": lighting}
        if "category" in instruction.lower() or "type of product" in instruction.lower():
            attributes["category"] = _CATEGORY_WORDS[int(digest[:8], 16) % len(_CATEGORY_WORDS)]
            text = f"this product is a {attributes['category']}"
        return CaptionRecord(
            caption_id=f"cap-{digest[:16]}",
            asset_id="",
            text=text,
            attributes=attributes,
        )

    def embed_image(self, image: np.ndarray, model: str) -> EmbeddingVector:
        if model not in IMAGE_EMBED_MODELS:
            raise ConfigError(f"unknown image embedding model {model!r}")
        gray = np.asarray(image, dtype=np.float64).mean(axis=2)
        if model == "dino":
            gray = gray * gray / 255.0
        feats = _downsample_grid(gray).ravel()
        values = np.zeros(self.embed_dim)
        values[:64] = feats
        values[64] = 1.0  # constant bias keeps the norm nonzero for black images
        return EmbeddingVector(values / np.linalg.norm(values))

    def embed_text(self, text: str, model: str = "clip_text") -> EmbeddingVector:
        if model not in TEXT_EMBED_MODELS:
            raise ConfigError(f"unknown text embedding model {model!r}")
        if not text:
            raise ValidationError("embed_text: text must be non-empty")
        values = _rng("embed_text", model, text).standard_normal(self.embed_dim)
        return EmbeddingVector(values / np.linalg.norm(values))

    # -- language -----------------------------------------------------------

    def generate_text(self, prompt: str, n: int, seed: int) -> list[str]:
        if not prompt:
            raise ValidationError("generate_text: prompt must be non-empty")
        if n < 1:
            raise ValidationError("generate_text: n must be >= 1")
        rng = _rng("generate_text", prompt, seed)
        order = rng.permutation(len(_CONTEXT_TEMPLATES))
        out = []
        for i in range(n):
            template = _CONTEXT_TEMPLATES[order[i % len(order)]]
            text = template.format(category=prompt)
            round_no = i // len(_CONTEXT_TEMPLATES)
            if round_no:
                text = f"{text}, variation {round_no}"
            out.append(text)
        return out

    # -- training boundary ---------------------------------------------------

    def submit_training_job(
        self, spec: TrainingDatasetSpec, captions: Sequence[tuple[str, str]]
    ) -> str:
        job_ref = derive_seed("train", spec).to_bytes(8, "big").hex()
        if spec.token in self.fail_tokens:
            self._jobs[job_ref] = (JobStatus.FAILED, None, f"mock trainer rejected token {spec.token!r}")
        else:
            self._jobs[job_ref] = (JobStatus.DONE, f"model-{job_ref}", None)
        return job_ref

    def poll_job(self, job_ref: str) -> tuple[JobStatus, Optional[str]]:
        if job_ref not in self._jobs:
            raise NotFoundError(f"unknown job {job_ref!r}")
        status, model_ref, message = self._jobs[job_ref]
        if status is JobStatus.FAILED:
            raise TrainerError(message)
        return status, model_ref

    def sample_from_model(self, model_ref: str, prompt: str, seed: int, n: int) -> list[np.ndarray]:
        if n < 1:
            raise ValidationError("sample_from_model: n must be >= 1")
        if not prompt:
            raise ValidationError("sample_from_model: prompt must be non-empty")
        return [
            self._texture(self.out_height, self.out_width, "sample", model_ref, prompt, seed, i)
            for i in range(n)
        ]

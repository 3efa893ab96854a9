"""HTTP client adapter speaking the versioned backend protocol.

One endpoint per operation: POST {base_url}/v1/{operation}. Transport
failures (connection errors, timeouts, 5xx, retryable error payloads) are
retried 3 times with exponential backoff starting at 500 ms; generation
errors are surfaced immediately and never retried.
"""

from __future__ import annotations

import time
from typing import Any, Callable, Optional, Sequence

import numpy as np
import requests

from ..errors import GenerationError, TrainerError, TransportError, ValidationError
from ..models import CaptionRecord, JobStatus, Mask, TrainingDatasetSpec
from .base import BackendRequest, EmbeddingVector, ModelBackend, check_mask_matches
from . import wire


class HttpBackend(ModelBackend):
    """Client for out-of-process model servers."""

    name = "http"

    def __init__(
        self,
        base_url: str,
        timeout_ms: int = 60_000,
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_ms = timeout_ms
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep

    def _call(self, operation: str, payload: dict[str, Any], seed: Optional[int] = None) -> dict:
        request = BackendRequest(
            backend_name=self.name, operation=operation, payload=payload, seed=seed,
            timeout_ms=self.timeout_ms,
        )
        body = {
            "operation": request.operation,
            "payload": dict(request.payload),
            "seed": request.seed,
            "version": wire.PROTOCOL_VERSION,
        }
        url = f"{self.base_url}/v1/{operation}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                resp = requests.post(url, json=body, timeout=self.timeout_ms / 1000.0)
            except requests.RequestException as exc:
                last_error = TransportError(f"{operation}: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"{operation}: server returned {resp.status_code}")
                continue
            data = resp.json()
            if data.get("status") == "ok":
                return data["payload"]
            error = data.get("error", {})
            if error.get("retryable"):
                last_error = TransportError(f"{operation}: {error.get('message', 'retryable failure')}")
                continue
            code = error.get("code", "")
            message = error.get("message", "backend rejected the request")
            if code == "trainer":
                raise TrainerError(message)
            raise GenerationError(f"{operation}: {message}")
        raise last_error if last_error is not None else TransportError(f"{operation}: no response")

    # -- generation ---------------------------------------------------------

    def generate_image(self, prompt: str, seed: int) -> np.ndarray:
        if not prompt:
            raise ValidationError("generate_image: prompt must be non-empty")
        payload = self._call("generate_image", {"prompt": prompt}, seed=seed)
        return wire.decode_raster(payload["image"])

    def outpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        check_mask_matches(image, mask, "outpaint")
        payload = self._call(
            "outpaint",
            {"image": wire.encode_raster(image), "mask": wire.encode_mask(mask), "prompt": prompt},
            seed=seed,
        )
        out = wire.decode_raster(payload["image"])
        if out.shape != image.shape:
            raise GenerationError(f"outpaint: backend changed dimensions to {out.shape}")
        # Paste-back enforces the preservation contract regardless of backend drift.
        out[mask.bits] = image[mask.bits]
        return out

    def inpaint(self, image: np.ndarray, mask: Mask, prompt: str, seed: int) -> np.ndarray:
        check_mask_matches(image, mask, "inpaint")
        payload = self._call(
            "inpaint",
            {"image": wire.encode_raster(image), "mask": wire.encode_mask(mask), "prompt": prompt},
            seed=seed,
        )
        out = wire.decode_raster(payload["image"])
        if out.shape != image.shape:
            raise GenerationError(f"inpaint: backend changed dimensions to {out.shape}")
        out[~mask.bits] = image[~mask.bits]
        return out

    def generate_novel_views(self, image: np.ndarray, seed: int, n_frames: int) -> list[np.ndarray]:
        if n_frames < 1:
            raise ValidationError("generate_novel_views: n_frames must be >= 1")
        payload = self._call(
            "generate_novel_views",
            {"image": wire.encode_raster(image), "n_frames": n_frames},
            seed=seed,
        )
        frames = [wire.decode_raster(f) for f in payload["frames"]]
        if len(frames) != n_frames:
            raise GenerationError(f"generate_novel_views: expected {n_frames} frames, got {len(frames)}")
        frames[0] = np.ascontiguousarray(image)  # anchor-frame contract
        return frames

    # -- perception ---------------------------------------------------------

    def segment(self, image: np.ndarray, subject_hint: str = "") -> Mask:
        payload = self._call("segment", {"image": wire.encode_raster(image), "subject_hint": subject_hint})
        mask = wire.decode_mask(payload["mask"])
        if not mask.matches(image):
            raise GenerationError("segment: backend returned a mask with mismatched dimensions")
        return mask

    def caption(self, image: np.ndarray, instruction: str) -> CaptionRecord:
        if not instruction:
            raise ValidationError("caption: instruction must be non-empty")
        payload = self._call("caption", {"image": wire.encode_raster(image), "instruction": instruction})
        attributes = dict(payload.get("attributes", {}))
        for key in CaptionRecord.REQUIRED_ATTRIBUTES:
            attributes.setdefault(key, "unknown")
        return CaptionRecord(
            caption_id=payload.get("caption_id", ""),
            asset_id="",
            text=payload["text"],
            attributes=attributes,
        )

    def embed_image(self, image: np.ndarray, model: str) -> EmbeddingVector:
        payload = self._call("embed_image", {"image": wire.encode_raster(image), "model": model})
        return EmbeddingVector(np.asarray(payload["values"], dtype=np.float64))

    def embed_text(self, text: str, model: str = "clip_text") -> EmbeddingVector:
        payload = self._call("embed_text", {"text": text, "model": model})
        return EmbeddingVector(np.asarray(payload["values"], dtype=np.float64))

    # -- language -----------------------------------------------------------

    def generate_text(self, prompt: str, n: int, seed: int) -> list[str]:
        payload = self._call("generate_text", {"prompt": prompt, "n": n}, seed=seed)
        return list(payload["texts"])

    # -- training boundary ---------------------------------------------------

    def submit_training_job(
        self, spec: TrainingDatasetSpec, captions: Sequence[tuple[str, str]]
    ) -> str:
        payload = self._call(
            "submit_training_job",
            {"spec": wire.encode_spec(spec), "captions": [list(c) for c in captions]},
        )
        return payload["job_ref"]

    def poll_job(self, job_ref: str) -> tuple[JobStatus, Optional[str]]:
        payload = self._call("poll_job", {"job_ref": job_ref})
        status = JobStatus(payload["status"])
        if status is JobStatus.FAILED:
            raise TrainerError(payload.get("message", "training job failed"))
        return status, payload.get("model_ref")

    def sample_from_model(self, model_ref: str, prompt: str, seed: int, n: int) -> list[np.ndarray]:
        if n < 1:
            raise ValidationError("sample_from_model: n must be >= 1")
        payload = self._call(
            "sample_from_model", {"model_ref": model_ref, "prompt": prompt, "n": n}, seed=seed
        )
        return [wire.decode_raster(r) for r in payload["images"]]

"""Wire encoding for the versioned HTTP+JSON backend protocol.

Request:  {"operation": str, "payload": {...}, "seed": int|null, "version": "v1"}
Response: {"status": "ok", "payload": {...}}
        | {"status": "error", "error": {"code": str, "message": str, "retryable": bool}}

Rasters and masks travel as base64-encoded PNG.
"""

from __future__ import annotations

import base64
import io
from typing import Any

import numpy as np
from PIL import Image

from ..models import Mask, TrainingDatasetSpec

PROTOCOL_VERSION = "v1"


def encode_raster(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_raster(data: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(data))) as img:
        return np.asarray(img.convert("RGB")).copy()


def encode_mask(mask: Mask) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask(data: str) -> Mask:
    with Image.open(io.BytesIO(base64.b64decode(data))) as img:
        return Mask(np.asarray(img.convert("L")) > 127)


def encode_spec(spec: TrainingDatasetSpec) -> dict[str, Any]:
    return {
        "product_id": spec.product_id,
        "token": spec.token,
        "positive_asset_ids": list(spec.positive_asset_ids),
        "negative_asset_ids": list(spec.negative_asset_ids),
        "ratio": list(spec.ratio),
        "lora_rank": spec.lora_rank,
        "train_steps": spec.train_steps,
        "learning_rate": spec.learning_rate,
    }


def decode_spec(raw: dict[str, Any]) -> TrainingDatasetSpec:
    return TrainingDatasetSpec(
        product_id=raw["product_id"],
        token=raw["token"],
        positive_asset_ids=raw["positive_asset_ids"],
        negative_asset_ids=raw["negative_asset_ids"],
        ratio=tuple(raw["ratio"]),
        lora_rank=raw["lora_rank"],
        train_steps=raw["train_steps"],
        learning_rate=raw["learning_rate"],
    )


def ok_response(payload: dict[str, Any]) -> dict[str, Any]:
    return {"status": "ok", "payload": payload}


def error_response(code: str, message: str, retryable: bool) -> dict[str, Any]:
    return {"status": "error", "error": {"code": code, "message": message, "retryable": retryable}}

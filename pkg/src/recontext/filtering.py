"""Scoring and filtering of augmented images before they enter training.

Two independent quality gates:

1. Embedding metrics (CLIP-I/T, DINO-I and their foreground-segmented
   variants) aggregated into a MetricVector per image, used to keep only
   the highest-rated outpaints.
2. A pixel-exact IoU gate comparing the re-segmented outpainted image
   against the mask used for outpainting, which catches hallucinated
   product extensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backends.base import EmbeddingVector, ModelBackend
from .errors import DegenerateMaskError, ValidationError
from .models import FilteredEntry, Mask, MetricVector

METRIC_KEYS = ("aggregate", "clip_i", "clip_t", "dino_i", "seg_clip_i", "seg_clip_t", "seg_dino_i")


def _as_array(v) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    return np.asarray(v, dtype=np.float64)


def cosine_similarity(a, b) -> float:
    """cos(a, b) = a.b / (|a||b|), clamped to [-1, 1]; 0.0 if either norm is 0."""
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise ValidationError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def segmented_embed(image: np.ndarray, mask: Mask, model: str, embedder: ModelBackend) -> EmbeddingVector:
    """Embed only the product region: zero the background, crop to the
    foreground bounding box, zero-pad to square, then embed."""
    if not mask.matches(image):
        raise ValidationError(
            f"segmented_embed: mask {mask.width}x{mask.height} does not match image "
            f"{image.shape[1]}x{image.shape[0]}"
        )
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise DegenerateMaskError("segmented_embed: mask has no foreground pixels")
    isolated = np.where(mask.bits[..., None], image, 0).astype(np.uint8)
    crop = isolated[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    side = max(crop.shape[0], crop.shape[1])
    square = np.zeros((side, side, 3), dtype=np.uint8)
    top = (side - crop.shape[0]) // 2
    left = (side - crop.shape[1]) // 2
    square[top : top + crop.shape[0], left : left + crop.shape[1]] = crop
    return embedder.embed_image(square, model)


def compute_metric_vector(
    gen_image: np.ndarray,
    ref_images: Sequence[np.ndarray],
    prompt: str,
    embedder: ModelBackend,
    gen_mask: Optional[Mask] = None,
    ref_masks: Optional[Sequence[Optional[Mask]]] = None,
) -> MetricVector:
    """Score one generated image against the reference set.

    clip_i / dino_i are means of pairwise image cosines over the refs,
    clip_t is the image-text cosine against the prompt. Segmented variants
    are computed only where the needed masks exist; otherwise they stay
    absent (None) rather than silently zero.
    """
    if not len(ref_images):
        raise ValidationError("compute_metric_vector: refs must be non-empty")
    if ref_masks is None:
        ref_masks = [None] * len(ref_images)
    if len(ref_masks) != len(ref_images):
        raise ValidationError("compute_metric_vector: one mask slot per ref required")

    gen_clip = embedder.embed_image(gen_image, "clip_image")
    gen_dino = embedder.embed_image(gen_image, "dino")
    text_vec = embedder.embed_text(prompt)

    clip_i = float(np.mean([
        cosine_similarity(gen_clip, embedder.embed_image(r, "clip_image")) for r in ref_images
    ]))
    dino_i = float(np.mean([
        cosine_similarity(gen_dino, embedder.embed_image(r, "dino")) for r in ref_images
    ]))
    clip_t = cosine_similarity(gen_clip, text_vec)

    seg_clip_i = seg_clip_t = seg_dino_i = None
    if gen_mask is not None and gen_mask.foreground_count > 0:
        seg_gen_clip = segmented_embed(gen_image, gen_mask, "clip_image", embedder)
        seg_gen_dino = segmented_embed(gen_image, gen_mask, "dino", embedder)
        seg_clip_t = cosine_similarity(seg_gen_clip, text_vec)
        clip_sims, dino_sims = [], []
        for ref, mask in zip(ref_images, ref_masks):
            if mask is None or mask.foreground_count == 0:
                continue
            clip_sims.append(cosine_similarity(seg_gen_clip, segmented_embed(ref, mask, "clip_image", embedder)))
            dino_sims.append(cosine_similarity(seg_gen_dino, segmented_embed(ref, mask, "dino", embedder)))
        if clip_sims:
            seg_clip_i = float(np.mean(clip_sims))
            seg_dino_i = float(np.mean(dino_sims))

    return MetricVector(
        clip_i=clip_i,
        clip_t=clip_t,
        dino_i=dino_i,
        seg_clip_i=seg_clip_i,
        seg_clip_t=seg_clip_t,
        seg_dino_i=seg_dino_i,
    )


def mask_iou(a: Mask, b: Mask) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValidationError(
            f"mask_iou: dimension mismatch {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    intersection = int(np.logical_and(a.bits, b.bits).sum())
    return intersection / union


@dataclass
class IouFilterResult:
    kept: list[str] = field(default_factory=list)
    rejected: list[FilteredEntry] = field(default_factory=list)
    skipped: list[FilteredEntry] = field(default_factory=list)


def filter_by_iou(
    candidates: Sequence[tuple[str, Optional[Mask], Optional[Mask]]],
    threshold: float,
) -> IouFilterResult:
    """Keep candidates whose (re-segmented, reference) mask IoU >= threshold.

    candidates are (asset_id, candidate_mask, reference_mask) triples; a
    missing mask skips that pair (recorded, never fatal). The boundary is
    inclusive: a score exactly at the threshold is kept.
    """
    result = IouFilterResult()
    for asset_id, cand_mask, ref_mask in candidates:
        if cand_mask is None or ref_mask is None:
            result.skipped.append(FilteredEntry(asset_id=asset_id, reason="missing_mask"))
            continue
        score = mask_iou(cand_mask, ref_mask)
        if score >= threshold:
            result.kept.append(asset_id)
        else:
            result.rejected.append(
                FilteredEntry(asset_id=asset_id, reason="iou_below_threshold", score=score)
            )
    return result


def select_top_rated(
    candidates: Sequence[tuple[str, MetricVector]],
    k: int,
    key: str = "aggregate",
) -> list[tuple[str, MetricVector]]:
    """Top-k candidates by the chosen metric component, descending.

    Ties break by ascending asset id; candidates whose component is absent
    rank below every scored one. Returns everything when k exceeds the
    candidate count.
    """
    if k < 1:
        raise ValidationError("select_top_rated: k must be >= 1")
    if key not in METRIC_KEYS:
        raise ValidationError(f"select_top_rated: unknown key {key!r}")

    def sort_key(item: tuple[str, MetricVector]):
        asset_id, metrics = item
        value = metrics.component(key)
        return (-(value if value is not None else float("-inf")), asset_id)

    return sorted(candidates, key=sort_key)[:k]

"""Synthetic training-data augmentation: novel views, new contexts,
negatives, counterfactuals, and fine-grained captions.

Every operation stores what it produces and reports per-asset skips to the
caller instead of failing the run; the pipeline records both in the
manifest.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from .backends.base import ModelBackend
from .canonical import derive_id, derive_seed
from .errors import BackendError, DegenerateMaskError, ValidationError
from .models import CaptionRecord, FilteredEntry, ImageAsset, Mask, ProductRecord, Provenance, Role
from .prompt_bank import PromptBank
from .store import AssetStore

DEFAULT_INSTRUCTION_TEMPLATE = (
    "Describe this image of {product_title} in fine-grained detail, including color, "
    "position, lighting, and any distinguishing product details."
)


def novel_view_frame_indices(n_frames: int, frames_to_keep: int) -> list[int]:
    """Evenly spaced frame indices over 1..n_frames-1, excluding the anchor.

    frames_to_keep=2 of n_frames=5 gives [2, 4]: index (j+1)*(n-1)//k for
    each kept slot j.
    """
    if frames_to_keep < 1:
        raise ValidationError("frames_to_keep must be >= 1")
    if frames_to_keep > n_frames - 1:
        raise ValidationError(
            f"frames_to_keep={frames_to_keep} needs n_frames > {frames_to_keep} "
            "(frame 0 is the anchor duplicate and is never kept)"
        )
    return [(j + 1) * (n_frames - 1) // frames_to_keep for j in range(frames_to_keep)]


def harvest_novel_views(
    product: ProductRecord,
    n_frames: int,
    frames_to_keep: int,
    seed: int,
    *,
    store: AssetStore,
    backend: ModelBackend,
) -> tuple[list[ImageAsset], list[FilteredEntry]]:
    """Generate video frames per base image and keep an evenly spaced subset.

    A backend failure on one base asset skips that asset (reported in the
    second return value) and the harvest continues.
    """
    indices = novel_view_frame_indices(n_frames, frames_to_keep)
    produced: list[ImageAsset] = []
    skipped: list[FilteredEntry] = []
    for base_id in product.base_asset_ids:
        pixels = store.load_pixels(base_id)
        view_seed = derive_seed(seed, base_id)
        try:
            frames = backend.generate_novel_views(pixels, view_seed, n_frames)
        except BackendError as exc:
            skipped.append(FilteredEntry(asset_id=base_id, reason=f"novel_view_failed: {exc}"))
            continue
        for frame_index in indices:
            frame = frames[frame_index]
            asset = ImageAsset(
                asset_id=derive_id(product.product_id, "novel_view", seed, base_id, frame_index),
                product_id=product.product_id,
                role=Role.NOVEL_VIEW,
                image_ref="",
                width=frame.shape[1],
                height=frame.shape[0],
                provenance=Provenance(
                    backend_name=backend.name,
                    backend_params={"source_asset": base_id, "n_frames": n_frames, "frame_index": frame_index},
                    seed=view_seed,
                ),
            )
            store.store_asset(asset, frame)
            produced.append(asset)
    return produced, skipped


def generate_new_context(
    asset: ImageAsset,
    category: str,
    k_prompts: int,
    seed: int,
    *,
    store: AssetStore,
    backend: ModelBackend,
    bank: PromptBank,
    subject_hint: str = "",
) -> list[ImageAsset]:
    """Segment the product, then outpaint a new background per bank prompt.

    The source asset gets its segmentation mask attached (it doubles as the
    IoU reference later); each output carries its prompt and the same mask.
    """
    if asset.role not in (Role.BASE, Role.NOVEL_VIEW):
        raise ValidationError(
            f"new context source must be base or novel_view, got {asset.role.value}"
        )
    pixels = store.load_pixels(asset.asset_id)
    mask = backend.segment(pixels, subject_hint)
    if mask.foreground_count == 0:
        raise DegenerateMaskError(f"segmentation of {asset.asset_id!r} found no product pixels")
    store.attach_mask(asset.asset_id, mask)

    prompts = bank.get_prompts(category, k_prompts, derive_seed(seed, asset.asset_id, "ctx"))
    produced = []
    for i, prompt in enumerate(prompts):
        out_seed = derive_seed(seed, asset.asset_id, i)
        out_pixels = backend.outpaint(pixels, mask, prompt, out_seed)
        out_asset = ImageAsset(
            asset_id=derive_id(asset.product_id, "new_context", seed, asset.asset_id, i),
            product_id=asset.product_id,
            role=Role.NEW_CONTEXT,
            image_ref="",
            width=out_pixels.shape[1],
            height=out_pixels.shape[0],
            prompt=prompt,
            provenance=Provenance(
                backend_name=backend.name,
                backend_params={"source_asset": asset.asset_id, "operation": "outpaint"},
                seed=out_seed,
            ),
        )
        store.store_asset(out_asset, out_pixels, mask=mask)
        produced.append(out_asset)
    return produced


def generate_negatives(
    product: ProductRecord,
    positives: Sequence[ImageAsset],
    seed: int,
    *,
    store: AssetStore,
    backend: ModelBackend,
    count: Optional[int] = None,
) -> list[ImageAsset]:
    """Generate class-prior negatives from positive captions via the base model.

    Selection is deterministic: the first ``count`` positives in ascending
    asset-id order. Every selected positive must already be captioned.
    """
    ordered = sorted(positives, key=lambda a: a.asset_id)
    if count is not None:
        ordered = ordered[:count]
    produced = []
    for positive in ordered:
        if not positive.caption_id:
            raise ValidationError(f"positive {positive.asset_id!r} has no caption; run captioning first")
        caption = store.get_caption(positive.caption_id)
        neg_seed = derive_seed(seed, positive.asset_id)
        pixels = backend.generate_image(caption.text, neg_seed)
        asset = ImageAsset(
            asset_id=derive_id(product.product_id, "negative", seed, positive.asset_id),
            product_id=product.product_id,
            role=Role.NEGATIVE,
            image_ref="",
            width=pixels.shape[1],
            height=pixels.shape[0],
            prompt=caption.text,
            provenance=Provenance(
                backend_name=backend.name,
                backend_params={"source_asset": positive.asset_id, "operation": "generate_image"},
                seed=neg_seed,
            ),
        )
        store.store_asset(asset, pixels)
        produced.append(asset)
    return produced


def generate_counterfactuals(
    asset: ImageAsset,
    distractor_prompts: Sequence[str],
    seed: int,
    *,
    store: AssetStore,
    backend: ModelBackend,
) -> list[ImageAsset]:
    """Inpaint distractor objects into the product region, keeping the background."""
    if not distractor_prompts:
        raise ValidationError("distractor_prompts must be non-empty")
    pixels = store.load_pixels(asset.asset_id)
    mask = store.load_mask(asset.asset_id)
    if mask is None:
        mask = backend.segment(pixels)
    if mask.foreground_count == 0:
        raise DegenerateMaskError(f"counterfactual mask for {asset.asset_id!r} is empty")
    produced = []
    for i, prompt in enumerate(distractor_prompts):
        cf_seed = derive_seed(seed, asset.asset_id, "cf", i)
        out_pixels = backend.inpaint(pixels, mask, prompt, cf_seed)
        cf_asset = ImageAsset(
            asset_id=derive_id(asset.product_id, "counterfactual", seed, asset.asset_id, i),
            product_id=asset.product_id,
            role=Role.COUNTERFACTUAL,
            image_ref="",
            width=out_pixels.shape[1],
            height=out_pixels.shape[0],
            prompt=prompt,
            provenance=Provenance(
                backend_name=backend.name,
                backend_params={"source_asset": asset.asset_id, "operation": "inpaint"},
                seed=cf_seed,
            ),
        )
        store.store_asset(cf_asset, out_pixels, mask=mask)
        produced.append(cf_asset)
    return produced


def enforce_ratio(
    positives: Sequence,
    negatives: Sequence,
    ratio_pos: int = 2,
    ratio_neg: int = 1,
) -> tuple[list, list]:
    """Trim the negative side down to the positive:negative ratio bound.

    Keeps all positives; keeps the first floor(P * ratio_neg / ratio_pos)
    negatives in ascending asset-id order (or all of them when already
    under the bound). Empty inputs pass through.
    """
    if ratio_pos < 1 or ratio_neg < 1:
        raise ValidationError("ratio components must be >= 1")
    kept_positives = list(positives)
    allowed = len(kept_positives) * ratio_neg // ratio_pos
    ordered = sorted(negatives, key=lambda a: a.asset_id)
    return kept_positives, ordered[: min(len(ordered), allowed)]


def caption_assets(
    assets: Sequence[ImageAsset],
    instruction_template: str,
    *,
    store: AssetStore,
    backend: ModelBackend,
) -> tuple[list[CaptionRecord], list[FilteredEntry]]:
    """Caption each asset with the VLM; the template must name the product.

    Reuses an existing caption when the asset already has one. Adapter
    failures skip the asset and are reported, not raised.
    """
    if "{product_title}" not in instruction_template:
        raise ValidationError("instruction_template must contain the {product_title} placeholder")
    records: list[CaptionRecord] = []
    skipped: list[FilteredEntry] = []
    titles: dict[str, str] = {}
    for asset in assets:
        if asset.caption_id:
            records.append(store.get_caption(asset.caption_id))
            continue
        if asset.product_id not in titles:
            titles[asset.product_id] = store.get_product(asset.product_id).title
        instruction = instruction_template.replace("{product_title}", titles[asset.product_id])
        try:
            raw = backend.caption(store.load_pixels(asset.asset_id), instruction)
        except BackendError as exc:
            skipped.append(FilteredEntry(asset_id=asset.asset_id, reason=f"caption_failed: {exc}"))
            continue
        record = CaptionRecord(
            caption_id=derive_id(asset.asset_id, "caption"),
            asset_id=asset.asset_id,
            text=raw.text,
            attributes=raw.attributes,
        )
        store.put_caption(record, asset.product_id)
        store.attach_caption(asset.asset_id, record.caption_id)
        asset.caption_id = record.caption_id
        records.append(record)
    return records, skipped

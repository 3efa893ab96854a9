"""Lossless on-disk store for products, assets, captions, and run manifests.

Layout (all metadata in canonical JSON):

    <root>/<product_id>/product.meta
    <root>/<product_id>/<role>/<asset_id>.png         lossless raster
    <root>/<product_id>/<role>/<asset_id>.meta        ImageAsset record
    <root>/<product_id>/<role>/<asset_id>.mask.png    optional 1-bit mask
    <root>/<product_id>/captions/<caption_id>.meta
    <root>/<product_id>/runs/<run_id>.manifest

Readers are lock-free; writers serialize per product. File writes are
atomic (temp file + rename) so a crashed writer never leaves a torn record.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from PIL import Image

from .canonical import canonical_json
from .errors import ConflictError, NotFoundError, ValidationError
from .models import (
    CaptionRecord,
    FilteredEntry,
    ImageAsset,
    Mask,
    PipelineManifest,
    ProductRecord,
    Provenance,
    Role,
    StageRecord,
    append_stage,
)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def save_raster(path: Path, pixels: np.ndarray) -> None:
    """Persist an RGB raster as PNG. Round-trips bit-exactly."""
    import io

    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    _atomic_write_bytes(path, buf.getvalue())


def load_raster(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB")).copy()


def save_mask(path: Path, mask: Mask) -> None:
    import io

    buf = io.BytesIO()
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    _atomic_write_bytes(path, buf.getvalue())


def load_mask_file(path: Path) -> Mask:
    with Image.open(path) as img:
        return Mask(np.asarray(img.convert("L")) > 127)


def _check_pixels(asset: ImageAsset, pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValidationError(
            f"asset {asset.asset_id!r}: pixels must be uint8 HxWx3, got "
            f"{pixels.dtype} shape {pixels.shape}"
        )
    if pixels.shape[0] != asset.height or pixels.shape[1] != asset.width:
        raise ValidationError(
            f"asset {asset.asset_id!r}: declared {asset.width}x{asset.height} but pixels are "
            f"{pixels.shape[1]}x{pixels.shape[0]}"
        )
    return pixels


def _asset_to_meta(asset: ImageAsset) -> str:
    return canonical_json(
        {
            "asset_id": asset.asset_id,
            "product_id": asset.product_id,
            "role": asset.role.value,
            "image_ref": asset.image_ref,
            "width": asset.width,
            "height": asset.height,
            "prompt": asset.prompt,
            "mask_ref": asset.mask_ref,
            "caption_id": asset.caption_id,
            "provenance": {
                "backend_name": asset.provenance.backend_name,
                "backend_params": dict(asset.provenance.backend_params),
                "seed": asset.provenance.seed,
            },
        }
    )


def _asset_from_meta(raw: dict) -> ImageAsset:
    prov = raw.get("provenance", {})
    return ImageAsset(
        asset_id=raw["asset_id"],
        product_id=raw["product_id"],
        role=Role(raw["role"]),
        image_ref=raw["image_ref"],
        width=raw["width"],
        height=raw["height"],
        prompt=raw.get("prompt"),
        mask_ref=raw.get("mask_ref"),
        caption_id=raw.get("caption_id"),
        provenance=Provenance(
            backend_name=prov.get("backend_name", ""),
            backend_params=prov.get("backend_params", {}),
            seed=prov.get("seed", 0),
        ),
    )


class AssetStore:
    """File-backed store rooted at a directory, safe for concurrent readers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._global_lock = threading.Lock()
        self._product_locks: dict[str, threading.Lock] = {}
        self._index: dict[str, Path] = {}
        self._reindex()

    def _lock_for(self, product_id: str) -> threading.Lock:
        with self._global_lock:
            return self._product_locks.setdefault(product_id, threading.Lock())

    def _reindex(self) -> None:
        self._index.clear()
        for meta in self.root.glob("*/*/*.meta"):
            if meta.parent.name in ("runs", "captions"):
                continue
            self._index[meta.stem] = meta

    # -- products ----------------------------------------------------------

    def put_product(self, product: ProductRecord) -> None:
        if not product.category:
            raise ValidationError(f"product {product.product_id!r}: category must be resolved before storing")
        with self._lock_for(product.product_id):
            path = self.root / product.product_id / "product.meta"
            if path.exists():
                raise ConflictError(f"product {product.product_id!r} already stored")
            missing = [a for a in product.base_asset_ids if a not in self._index]
            if missing:
                raise NotFoundError(f"product {product.product_id!r}: base assets not stored: {missing}")
            path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write_text(
                path,
                canonical_json(
                    {
                        "product_id": product.product_id,
                        "title": product.title,
                        "category": product.category,
                        "metadata": dict(product.metadata),
                        "base_asset_ids": list(product.base_asset_ids),
                    }
                ),
            )

    def get_product(self, product_id: str) -> ProductRecord:
        path = self.root / product_id / "product.meta"
        if not path.exists():
            raise NotFoundError(f"product {product_id!r} not found")
        raw = json.loads(path.read_text("utf-8"))
        return ProductRecord(**raw)

    def list_products(self) -> list[str]:
        return sorted(p.parent.name for p in self.root.glob("*/product.meta"))

    # -- assets ------------------------------------------------------------

    def store_asset(self, asset: ImageAsset, pixels: np.ndarray, mask: Optional[Mask] = None) -> str:
        """Persist raster + metadata; returns the asset id."""
        pixels = _check_pixels(asset, pixels)
        if mask is not None and not mask.matches(pixels):
            raise ValidationError(f"asset {asset.asset_id!r}: mask dimensions do not match pixels")
        with self._lock_for(asset.product_id):
            if asset.asset_id in self._index:
                raise ConflictError(f"asset {asset.asset_id!r} already stored")
            role_dir = self.root / asset.product_id / asset.role.value
            role_dir.mkdir(parents=True, exist_ok=True)
            image_path = role_dir / f"{asset.asset_id}.png"
            asset.image_ref = str(image_path.relative_to(self.root))
            save_raster(image_path, pixels)
            if mask is not None:
                mask_path = role_dir / f"{asset.asset_id}.mask.png"
                save_mask(mask_path, mask)
                asset.mask_ref = str(mask_path.relative_to(self.root))
            meta_path = role_dir / f"{asset.asset_id}.meta"
            _atomic_write_text(meta_path, _asset_to_meta(asset))
            self._index[asset.asset_id] = meta_path
        return asset.asset_id

    def _meta_path(self, asset_id: str) -> Path:
        path = self._index.get(asset_id)
        if path is None or not path.exists():
            self._reindex()
            path = self._index.get(asset_id)
        if path is None:
            raise NotFoundError(f"asset {asset_id!r} not found")
        return path

    def get_asset(self, asset_id: str) -> ImageAsset:
        return _asset_from_meta(json.loads(self._meta_path(asset_id).read_text("utf-8")))

    def has_asset(self, asset_id: str) -> bool:
        try:
            self._meta_path(asset_id)
            return True
        except NotFoundError:
            return False

    def load_pixels(self, asset_id: str) -> np.ndarray:
        asset = self.get_asset(asset_id)
        return load_raster(self.root / asset.image_ref)

    def load_mask(self, asset_id: str) -> Optional[Mask]:
        asset = self.get_asset(asset_id)
        if not asset.mask_ref:
            return None
        return load_mask_file(self.root / asset.mask_ref)

    def attach_mask(self, asset_id: str, mask: Mask) -> None:
        asset = self.get_asset(asset_id)
        pixels = self.load_pixels(asset_id)
        if not mask.matches(pixels):
            raise ValidationError(f"asset {asset_id!r}: mask dimensions do not match the image")
        with self._lock_for(asset.product_id):
            meta_path = self._meta_path(asset_id)
            mask_path = meta_path.with_name(f"{asset_id}.mask.png")
            save_mask(mask_path, mask)
            asset.mask_ref = str(mask_path.relative_to(self.root))
            _atomic_write_text(meta_path, _asset_to_meta(asset))

    def attach_caption(self, asset_id: str, caption_id: str) -> None:
        asset = self.get_asset(asset_id)
        with self._lock_for(asset.product_id):
            asset.caption_id = caption_id
            _atomic_write_text(self._meta_path(asset_id), _asset_to_meta(asset))

    def list_assets(self, product_id: str, role: Optional[Role] = None) -> list[ImageAsset]:
        pattern = f"{product_id}/{role.value}/*.meta" if role else f"{product_id}/*/*.meta"
        assets = []
        for meta in self.root.glob(pattern):
            if meta.parent.name in ("runs", "captions"):
                continue
            assets.append(_asset_from_meta(json.loads(meta.read_text("utf-8"))))
        return sorted(assets, key=lambda a: a.asset_id)

    # -- captions ----------------------------------------------------------

    def put_caption(self, record: CaptionRecord, product_id: str) -> None:
        with self._lock_for(product_id):
            cap_dir = self.root / product_id / "captions"
            cap_dir.mkdir(parents=True, exist_ok=True)
            path = cap_dir / f"{record.caption_id}.meta"
            if path.exists():
                raise ConflictError(f"caption {record.caption_id!r} already stored")
            _atomic_write_text(
                path,
                canonical_json(
                    {
                        "caption_id": record.caption_id,
                        "asset_id": record.asset_id,
                        "text": record.text,
                        "attributes": dict(record.attributes),
                    }
                ),
            )

    def get_caption(self, caption_id: str) -> CaptionRecord:
        for path in self.root.glob(f"*/captions/{caption_id}.meta"):
            return CaptionRecord(**json.loads(path.read_text("utf-8")))
        raise NotFoundError(f"caption {caption_id!r} not found")

    # -- manifests ---------------------------------------------------------

    def _manifest_path(self, product_id: str, run_id: str) -> Path:
        return self.root / product_id / "runs" / f"{run_id}.manifest"

    def save_manifest(self, manifest: PipelineManifest) -> None:
        with self._lock_for(manifest.product_id):
            path = self._manifest_path(manifest.product_id, manifest.run_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            records = [dict(r.body(), content_hash=r.content_hash) for r in manifest.records]
            _atomic_write_text(
                path,
                canonical_json(
                    {
                        "run_id": manifest.run_id,
                        "product_id": manifest.product_id,
                        "records": records,
                    }
                ),
            )

    def load_manifest(self, product_id: str, run_id: str) -> PipelineManifest:
        path = self._manifest_path(product_id, run_id)
        if not path.exists():
            raise NotFoundError(f"manifest {run_id!r} for product {product_id!r} not found")
        raw = json.loads(path.read_text("utf-8"))
        records = tuple(
            StageRecord(
                stage_name=r["stage_name"],
                inputs=tuple(r["inputs"]),
                outputs=tuple(r["outputs"]),
                filtered=tuple(FilteredEntry(**f) for f in r["filtered"]),
                config_snapshot=r["config_snapshot"],
                content_hash=r["content_hash"],
            )
            for r in raw["records"]
        )
        return PipelineManifest(run_id=raw["run_id"], product_id=raw["product_id"], records=records)

    def append_and_save(self, manifest: PipelineManifest, record: StageRecord) -> PipelineManifest:
        manifest = append_stage(manifest, record)
        self.save_manifest(manifest)
        return manifest

    def list_manifests(self, product_id: str) -> list[str]:
        return sorted(p.stem for p in (self.root / product_id / "runs").glob("*.manifest"))

    def missing_references(self, manifest: PipelineManifest) -> list[str]:
        """Asset ids referenced by the manifest that are absent from the store."""
        missing = []
        for record in manifest.records:
            for asset_id in (*record.inputs, *record.outputs):
                if not self.has_asset(asset_id):
                    missing.append(asset_id)
        return sorted(set(missing))

    def iter_all_assets(self) -> Iterator[ImageAsset]:
        for product_id in self.list_products():
            yield from self.list_assets(product_id)

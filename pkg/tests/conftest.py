from __future__ import annotations

import numpy as np
import pytest

from recontext.backends.mock import MockBackend
from recontext.canonical import derive_id
from recontext.models import ImageAsset, Mask, ProductRecord, Role
from recontext.store import AssetStore


def make_rect_image(
    height: int = 48,
    width: int = 48,
    bg=(200, 200, 200),
    rect=(10, 10, 30, 30),
    rect_color=(30, 60, 200),
) -> np.ndarray:
    """Uniform background with one colored rectangle (the 'product')."""
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = bg
    top, left, bottom, right = rect
    img[top:bottom, left:right] = rect_color
    return img


def rect_mask(height: int = 48, width: int = 48, rect=(10, 10, 30, 30)) -> Mask:
    bits = np.zeros((height, width), dtype=bool)
    top, left, bottom, right = rect
    bits[top:bottom, left:right] = True
    return Mask(bits)


@pytest.fixture
def backend() -> MockBackend:
    return MockBackend(out_size=(48, 48), embed_dim=512)


@pytest.fixture
def store(tmp_path) -> AssetStore:
    return AssetStore(tmp_path / "store")


def store_base_asset(store: AssetStore, product_id: str, index: int = 0, pixels=None) -> ImageAsset:
    if pixels is None:
        pixels = make_rect_image(rect=(8 + index, 8, 28 + index, 30))
    asset = ImageAsset(
        asset_id=derive_id(product_id, "base", 0, index),
        product_id=product_id,
        role=Role.BASE,
        image_ref="",
        width=pixels.shape[1],
        height=pixels.shape[0],
    )
    store.store_asset(asset, pixels)
    return asset


def store_product(store: AssetStore, product_id: str = "p1", n_images: int = 2,
                  title: str = "Acme Chair", category: str = "chair") -> ProductRecord:
    assets = [store_base_asset(store, product_id, i) for i in range(n_images)]
    product = ProductRecord(
        product_id=product_id,
        title=title,
        category=category,
        metadata={},
        base_asset_ids=[a.asset_id for a in assets],
    )
    store.put_product(product)
    return product

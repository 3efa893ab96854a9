"""Cached, curated context prompts keyed by product category.

The bank lives offline as one file per category (`bank/<category>.prompts`,
one canonical-JSON entry per line, sorted by entry id) plus an append-only
curation audit (`bank/<category>.audit`). Only approved entries are ever
served to the pipeline.
"""

from __future__ import annotations

import json
import random
import threading
from pathlib import Path
from typing import Optional

import numpy as np

from .canonical import canonical_json, derive_id
from .errors import (
    ClassificationError,
    EmptyBankError,
    NotFoundError,
    PartialPopulationError,
    TransportError,
    ValidationError,
)
from .models import EntryStatus, ProductRecord, PromptBankEntry

CATEGORY_INSTRUCTION = (
    "What type of product is shown in this image? Answer with a short category name."
)

_METADATA_CATEGORY_KEYS = ("category", "product_type", "type")


def classify_category(
    product: ProductRecord,
    vlm,
    base_image: Optional[np.ndarray] = None,
) -> str:
    """Resolve a product's category; dataset metadata wins over the VLM."""
    for key in _METADATA_CATEGORY_KEYS:
        value = product.metadata.get(key, "").strip()
        if value:
            return value
    if product.category:
        return product.category
    if base_image is None:
        raise ClassificationError(
            f"product {product.product_id!r}: no metadata category and no image to classify"
        )
    try:
        record = vlm.caption(base_image, CATEGORY_INSTRUCTION)
    except TransportError as exc:
        raise ClassificationError(f"product {product.product_id!r}: VLM failed: {exc}") from exc
    category = record.attributes.get("category", "").strip() or record.text.strip()
    if not category:
        raise ClassificationError(f"product {product.product_id!r}: VLM returned no category")
    return category


class PromptBank:
    """File-backed prompt cache; single writer, concurrent readers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _entries_path(self, category: str) -> Path:
        return self.root / f"{category}.prompts"

    def _audit_path(self, category: str) -> Path:
        return self.root / f"{category}.audit"

    def _load(self, category: str) -> dict[str, PromptBankEntry]:
        path = self._entries_path(category)
        entries: dict[str, PromptBankEntry] = {}
        if path.exists():
            for line in path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                raw = json.loads(line)
                entries[raw["entry_id"]] = PromptBankEntry(**raw)
        return entries

    def _save(self, category: str, entries: dict[str, PromptBankEntry]) -> None:
        lines = []
        for entry in sorted(entries.values(), key=lambda e: e.entry_id):
            lines.append(
                canonical_json(
                    {
                        "entry_id": entry.entry_id,
                        "category": entry.category,
                        "prompt_text": entry.prompt_text,
                        "status": entry.status.value,
                        "usage_count": entry.usage_count,
                    }
                )
            )
        tmp = self._entries_path(category).with_suffix(".prompts.tmp")
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
        tmp.replace(self._entries_path(category))

    def _audit(self, category: str, entry_id: str, decision: str, reviewer: str) -> None:
        line = canonical_json(
            {"entry_id": entry_id, "decision": decision, "reviewer": reviewer}
        )
        with self._audit_path(category).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    # -- operations ----------------------------------------------------------

    def populate(self, category: str, n: int, llm, seed: int) -> list[PromptBankEntry]:
        """Generate and persist n pending prompts. Idempotent per (category, seed)."""
        if not category:
            raise ValidationError("category must be non-empty")
        if n < 1:
            raise ValidationError("n must be >= 1")
        with self._write_lock:
            entries = self._load(category)
            try:
                texts = llm.generate_text(category, n, seed)
            except TransportError:
                texts = []
            created = []
            for i, text in enumerate(texts[:n]):
                entry_id = derive_id("bank", category, seed, i)
                if entry_id in entries:
                    created.append(entries[entry_id])
                    continue
                entry = PromptBankEntry(entry_id=entry_id, category=category, prompt_text=text)
                entries[entry_id] = entry
                created.append(entry)
            self._save(category, entries)
            if len(texts) < n:
                raise PartialPopulationError(category, persisted=len(created), requested=n)
            return created

    def curate(self, category: str, entry_id: str, decision: str, reviewer: str) -> PromptBankEntry:
        decision_status = EntryStatus(decision)
        if decision_status is EntryStatus.PENDING:
            raise ValidationError("curation decision must be approved or rejected")
        with self._write_lock:
            entries = self._load(category)
            if entry_id not in entries:
                raise NotFoundError(f"prompt bank entry {entry_id!r} not found in {category!r}")
            entry = entries[entry_id]
            entry.status = decision_status
            self._save(category, entries)
            self._audit(category, entry_id, decision_status.value, reviewer)
            return entry

    def pending(self, category: str) -> list[PromptBankEntry]:
        return [
            e for e in sorted(self._load(category).values(), key=lambda e: e.entry_id)
            if e.status is EntryStatus.PENDING
        ]

    def approved_count(self, category: str) -> int:
        return sum(1 for e in self._load(category).values() if e.status is EntryStatus.APPROVED)

    def find_entry(self, entry_id: str) -> tuple[str, PromptBankEntry]:
        """Locate an entry by id across categories (curation endpoints use this)."""
        for path in sorted(self.root.glob("*.prompts")):
            entries = self._load(path.stem)
            if entry_id in entries:
                return path.stem, entries[entry_id]
        raise NotFoundError(f"prompt bank entry {entry_id!r} not found")

    def categories(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.prompts"))

    def get_prompts(self, category: str, k: int, seed: int) -> list[str]:
        """Serve k approved prompts, sampled deterministically for the seed.

        Samples without replacement when the category has at least k
        approved entries, with replacement otherwise. Every serve bumps
        the entry's usage_count.
        """
        if k < 1:
            raise ValidationError("k must be >= 1")
        with self._write_lock:
            entries = self._load(category)
            approved = sorted(
                (e for e in entries.values() if e.status is EntryStatus.APPROVED),
                key=lambda e: e.entry_id,
            )
            if not approved:
                raise EmptyBankError(f"no approved prompts for category {category!r}")
            rnd = random.Random(seed)
            if len(approved) >= k:
                chosen = rnd.sample(approved, k)
            else:
                chosen = rnd.choices(approved, k=k)
            for entry in chosen:
                entry.usage_count += 1
            self._save(category, entries)
            return [e.prompt_text for e in chosen]

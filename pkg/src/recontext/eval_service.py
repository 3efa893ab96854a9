"""Human rating protocol: task distribution, collection, majority verdicts.

Each image is rated by a fixed panel of distinct raters (3 by default)
answering 8 yes/maybe/no/unclear questions. A rater passes an image only
if all 8 answers are "yes"; the image passes on a majority of passing
raters. Assignment is atomic: a rater never sees the same asset twice and
an asset never accrues more ratings than its panel size.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from .canonical import canonical_json, derive_id
from .errors import (
    ConflictError,
    IncompletePanelError,
    NotFoundError,
    ValidationError,
)
from .models import Answer, RatingRecord, TaskStatus

PROTOCOL_VERSION = "a3.v1"

#: The 8 rating questions, served verbatim to every rater UI.
PROTOCOL_QUESTIONS = (
    {"id": "product_fidelity", "text": "Does the generated product faithfully match the source product's shape, materials, and details?"},
    {"id": "logo_fidelity", "text": "Are any logos or brand marks on the product rendered accurately?"},
    {"id": "realistic_use", "text": "Is the product shown in a realistic, plausible use or setting?"},
    {"id": "product_size", "text": "Is the product rendered at a believable size relative to its surroundings?"},
    {"id": "no_hallucinations", "text": "Is the image free of hallucinated objects or artifacts in the background or foreground?"},
    {"id": "placement", "text": "Is the product placed naturally within the scene?"},
    {"id": "image_safety", "text": "Is the image safe and appropriate to publish?"},
    {"id": "business_use", "text": "Would you use this image to showcase the product if you were the business owner?"},
)

ANSWER_SCALE = tuple(a.value for a in Answer)


@dataclass
class RatingTask:
    """One rating slot: a specific asset waiting for one more rater."""

    task_id: str
    asset_id: str
    source_asset_ids: tuple[str, ...] = ()
    assigned_rater: Optional[str] = None
    status: TaskStatus = TaskStatus.OPEN
    product_id: str = ""


def rater_verdict(record: RatingRecord) -> bool:
    """A rater passes an image only when every one of the 8 answers is yes."""
    return all(a is Answer.YES for a in record.answers)


def image_verdict(records: Sequence[RatingRecord], panel_size: int = 3) -> bool:
    """Majority vote over the complete panel of per-rater verdicts."""
    if len(records) != panel_size:
        raise IncompletePanelError(
            f"image verdict needs exactly {panel_size} ratings, got {len(records)}"
        )
    raters = {r.rater_id for r in records}
    if len(raters) != panel_size:
        raise ValidationError("panel ratings must come from distinct raters")
    passes = sum(1 for r in records if rater_verdict(r))
    return passes >= panel_size // 2 + 1


def protocol_document() -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "scale": list(ANSWER_SCALE),
        "questions": [dict(q) for q in PROTOCOL_QUESTIONS],
    }


class EvalService:
    """In-memory task queue and rating log with atomic assignment."""

    def __init__(self, raters_needed: int = 3, rating_log: Optional[str | Path] = None):
        if raters_needed < 1:
            raise ValidationError("raters_needed must be >= 1")
        self.raters_needed = raters_needed
        self._lock = threading.Lock()
        self._tasks: dict[str, RatingTask] = {}
        self._ratings: dict[str, list[RatingRecord]] = {}
        self._asset_products: dict[str, str] = {}
        self._rating_log = Path(rating_log) if rating_log else None
        if self._rating_log and self._rating_log.exists():
            self._replay_log()

    # -- task lifecycle ------------------------------------------------------

    def create_batch(
        self,
        assets: Sequence[tuple[str, Sequence[str], str]],
        raters_needed: Optional[int] = None,
    ) -> list[RatingTask]:
        """Open rating tasks for (asset_id, source_asset_ids, product_id) triples.

        Ratings replayed from the log consume their task slots up front, so
        an asset never collects more than its panel size across restarts.
        """
        panel = raters_needed if raters_needed is not None else self.raters_needed
        if panel < 1:
            raise ValidationError("raters_needed must be >= 1")
        created = []
        with self._lock:
            for asset_id, source_ids, product_id in assets:
                if not asset_id:
                    raise ValidationError("asset_id must be non-empty")
                self._asset_products[asset_id] = product_id
                prior = self._ratings.get(asset_id, [])
                for slot in range(panel):
                    task = RatingTask(
                        task_id=derive_id("task", asset_id, slot),
                        asset_id=asset_id,
                        source_asset_ids=tuple(source_ids),
                        product_id=product_id,
                    )
                    if task.task_id in self._tasks:
                        raise ConflictError(f"task {task.task_id!r} already exists")
                    if slot < len(prior):
                        task.status = TaskStatus.SUBMITTED
                        task.assigned_rater = prior[slot].rater_id
                    self._tasks[task.task_id] = task
                    created.append(task)
        return created

    def fetch_next_task(self, rater_id: str) -> Optional[RatingTask]:
        """Atomically assign one open task for an asset this rater hasn't touched."""
        if not rater_id:
            raise ValidationError("rater_id must be non-empty")
        with self._lock:
            busy_assets = {
                t.asset_id
                for t in self._tasks.values()
                if t.assigned_rater == rater_id
            }
            busy_assets.update(
                asset_id
                for asset_id, records in self._ratings.items()
                if any(r.rater_id == rater_id for r in records)
            )
            for task in sorted(self._tasks.values(), key=lambda t: (t.asset_id, t.task_id)):
                if task.status is not TaskStatus.OPEN or task.asset_id in busy_assets:
                    continue
                task.status = TaskStatus.ASSIGNED
                task.assigned_rater = rater_id
                return task
            return None

    def submit_rating(self, task_id: str, rater_id: str, answers: Sequence[str]) -> RatingRecord:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise NotFoundError(f"task {task_id!r} not found")
            if task.status is TaskStatus.SUBMITTED:
                raise ConflictError(f"task {task_id!r} already has a rating")
            if task.assigned_rater != rater_id:
                raise ValidationError(f"task {task_id!r} is not assigned to rater {rater_id!r}")
            if any(r.rater_id == rater_id for r in self._ratings.get(task.asset_id, [])):
                raise ConflictError(f"rater {rater_id!r} already rated asset {task.asset_id!r}")
            record = RatingRecord(
                rating_id=derive_id("rating", task_id),
                asset_id=task.asset_id,
                rater_id=rater_id,
                answers=[Answer(a) for a in answers],
                submitted_at=datetime.now(timezone.utc).isoformat(),
            )
            task.status = TaskStatus.SUBMITTED
            self._ratings.setdefault(task.asset_id, []).append(record)
            self._append_log(record)
            return record

    # -- verdicts ------------------------------------------------------------

    def ratings_for(self, asset_id: str) -> list[RatingRecord]:
        return list(self._ratings.get(asset_id, []))

    def verdict_for(self, asset_id: str) -> bool:
        return image_verdict(self.ratings_for(asset_id), panel_size=self.raters_needed)

    def report(self) -> dict:
        """Pass rates over every asset whose panel is complete."""
        image_verdicts: list[bool] = []
        by_product: dict[str, list[bool]] = {}
        complete = 0
        for asset_id, records in sorted(self._ratings.items()):
            if len(records) != self.raters_needed:
                continue
            complete += 1
            verdict = image_verdict(records, panel_size=self.raters_needed)
            image_verdicts.append(verdict)
            product = self._asset_products.get(asset_id, "")
            by_product.setdefault(product, []).append(verdict)
        per_image = (
            sum(image_verdicts) / len(image_verdicts) if image_verdicts else 0.0
        )
        per_product = (
            sum(1 for v in by_product.values() if any(v)) / len(by_product) if by_product else 0.0
        )
        return {
            "per_image_pass_rate": per_image,
            "per_product_pass_rate": per_product,
            "assets_with_complete_panel": complete,
            "products": len(by_product),
        }

    def open_task_count(self) -> int:
        with self._lock:
            return sum(1 for t in self._tasks.values() if t.status is TaskStatus.OPEN)

    # -- persistence ---------------------------------------------------------

    def _append_log(self, record: RatingRecord) -> None:
        if self._rating_log is None:
            return
        line = canonical_json(
            {
                "rating_id": record.rating_id,
                "asset_id": record.asset_id,
                "rater_id": record.rater_id,
                "answers": [a.value for a in record.answers],
                "submitted_at": record.submitted_at,
            }
        )
        with self._rating_log.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _replay_log(self) -> None:
        for line in self._rating_log.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            record = RatingRecord(**raw)
            self._ratings.setdefault(record.asset_id, []).append(record)

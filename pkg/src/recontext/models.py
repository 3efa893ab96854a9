"""Domain types shared by every pipeline stage.

Dataclasses validate their own invariants in ``__post_init__``; anything
store-scoped (id uniqueness, category presence at ingest) is enforced by
the store itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .canonical import content_hash
from .errors import ImmutabilityError, ValidationError


class Role(str, Enum):
    BASE = "base"
    NOVEL_VIEW = "novel_view"
    NEW_CONTEXT = "new_context"
    NEGATIVE = "negative"
    COUNTERFACTUAL = "counterfactual"
    GENERATED = "generated"


class Answer(str, Enum):
    YES = "yes"
    MAYBE = "maybe"
    NO = "no"
    UNCLEAR = "unclear"


class EntryStatus(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"


class TaskStatus(str, Enum):
    OPEN = "open"
    ASSIGNED = "assigned"
    SUBMITTED = "submitted"


class JobStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


LORA_RANKS = (1, 2, 4, 8, 16, 32, 64)

_SEED_MAX = 2**64


@dataclass(frozen=True)
class Provenance:
    """How an asset came to exist: which backend, with what parameters and seed."""

    backend_name: str = ""
    backend_params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < _SEED_MAX:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class ProductRecord:
    """One product: its identity, metadata, and few-shot input image ids.

    ``category`` may be empty on a freshly ingested record; the store
    rejects products whose category has not been resolved yet.
    """

    product_id: str
    title: str
    category: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)
    base_asset_ids: Sequence[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.product_id:
            raise ValidationError("product_id must be non-empty")
        if not self.base_asset_ids:
            raise ValidationError(f"product {self.product_id!r} needs at least one base asset")
        self.base_asset_ids = list(self.base_asset_ids)
        self.metadata = dict(self.metadata)


@dataclass
class ImageAsset:
    """An image in the store, tagged with its role and full provenance."""

    asset_id: str
    product_id: str
    role: Role
    image_ref: str
    width: int
    height: int
    prompt: Optional[str] = None
    mask_ref: Optional[str] = None
    caption_id: Optional[str] = None
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        self.role = Role(self.role)
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"asset {self.asset_id!r}: dimensions must be positive, got {self.width}x{self.height}"
            )
        if self.role is Role.BASE and self.provenance.backend_name:
            raise ValidationError(f"asset {self.asset_id!r}: base assets carry no backend provenance")
        if self.role in (Role.NEW_CONTEXT, Role.COUNTERFACTUAL) and not self.prompt:
            raise ValidationError(f"asset {self.asset_id!r}: {self.role.value} assets require a prompt")


class Mask:
    """Binary foreground mask: 1 = product pixels, 0 = background."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValidationError(f"mask must be a 2-D raster, got shape {bits.shape}")
        self.bits = bits.astype(bool)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def foreground_count(self) -> int:
        return int(self.bits.sum())

    def matches(self, image: np.ndarray) -> bool:
        return image.shape[:2] == self.bits.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"Mask({self.width}x{self.height}, fg={self.foreground_count})"


@dataclass
class CaptionRecord:
    """Fine-grained caption for one asset, with mandatory attribute keys."""

    REQUIRED_ATTRIBUTES = ("color", "position", "lighting")

    caption_id: str
    asset_id: str
    text: str
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValidationError(f"caption {self.caption_id!r}: text must be non-empty")
        missing = [k for k in self.REQUIRED_ATTRIBUTES if k not in self.attributes]
        if missing:
            raise ValidationError(f"caption {self.caption_id!r}: missing attribute keys {missing}")
        self.attributes = dict(self.attributes)


@dataclass(frozen=True)
class MetricVector:
    """The six similarity scores for one generated image.

    Segmented components are ``None`` when the masks needed to compute
    them were absent; they are excluded from reports, never zeroed.
    ``aggregate`` is always clip_i + clip_t + dino_i.
    """

    clip_i: float
    clip_t: float
    dino_i: float
    seg_clip_i: Optional[float] = None
    seg_clip_t: Optional[float] = None
    seg_dino_i: Optional[float] = None

    def __post_init__(self):
        for name in ("clip_i", "clip_t", "dino_i", "seg_clip_i", "seg_clip_t", "seg_dino_i"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or not -1.0 <= value <= 1.0:
                raise ValidationError(f"metric {name}={value} outside [-1, 1]")

    @property
    def aggregate(self) -> float:
        return self.clip_i + self.clip_t + self.dino_i

    def component(self, key: str) -> Optional[float]:
        if key == "aggregate":
            return self.aggregate
        if key not in ("clip_i", "clip_t", "dino_i", "seg_clip_i", "seg_clip_t", "seg_dino_i"):
            raise ValidationError(f"unknown metric component {key!r}")
        return getattr(self, key)


@dataclass
class RatingRecord:
    """One rater's answers to the 8 protocol questions for one image."""

    rating_id: str
    asset_id: str
    rater_id: str
    answers: Sequence[Answer]
    submitted_at: str = ""

    def __post_init__(self):
        answers = tuple(Answer(a) for a in self.answers)
        if len(answers) != 8:
            raise ValidationError(f"rating {self.rating_id!r}: expected 8 answers, got {len(answers)}")
        self.answers = answers
        if not self.rater_id:
            raise ValidationError("rater_id must be non-empty")


@dataclass
class PromptBankEntry:
    """A cached context prompt for one product category."""

    entry_id: str
    category: str
    prompt_text: str
    status: EntryStatus = EntryStatus.PENDING
    usage_count: int = 0

    def __post_init__(self):
        self.status = EntryStatus(self.status)
        if not self.prompt_text:
            raise ValidationError(f"prompt bank entry {self.entry_id!r}: prompt_text must be non-empty")
        if self.usage_count < 0:
            raise ValidationError("usage_count must be non-negative")


@dataclass
class TrainingDatasetSpec:
    """Everything the trainer needs to finetune one product's adapter."""

    product_id: str
    token: str
    positive_asset_ids: Sequence[str]
    negative_asset_ids: Sequence[str]
    ratio: tuple[int, int] = (2, 1)
    lora_rank: int = 64
    train_steps: int = 1800
    learning_rate: float = 1e-4

    def __post_init__(self):
        if not self.token or self.token != self.token.lower() or any(c.isspace() for c in self.token):
            raise ValidationError(f"token {self.token!r} must be non-empty lowercase with no whitespace")
        if self.lora_rank not in LORA_RANKS:
            raise ValidationError(f"lora_rank must be one of {LORA_RANKS}, got {self.lora_rank}")
        if self.train_steps <= 0:
            raise ValidationError("train_steps must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        ratio_pos, ratio_neg = self.ratio
        if ratio_pos < 1 or ratio_neg < 1:
            raise ValidationError("ratio components must be >= 1")
        self.positive_asset_ids = list(self.positive_asset_ids)
        self.negative_asset_ids = list(self.negative_asset_ids)
        allowed = len(self.positive_asset_ids) * ratio_neg // ratio_pos
        if len(self.negative_asset_ids) > allowed:
            raise ValidationError(
                f"{len(self.negative_asset_ids)} negatives exceed the "
                f"{ratio_pos}:{ratio_neg} bound of {allowed} for "
                f"{len(self.positive_asset_ids)} positives"
            )
        self.ratio = (ratio_pos, ratio_neg)


@dataclass(frozen=True)
class FilteredEntry:
    """One asset dropped by a stage, with the reason and the score it got."""

    asset_id: str
    reason: str
    score: Optional[float] = None


@dataclass(frozen=True)
class StageRecord:
    """Append-only record of one stage execution inside a run manifest."""

    stage_name: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    filtered: tuple[FilteredEntry, ...] = ()
    config_snapshot: Mapping[str, Any] = field(default_factory=dict)
    content_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "filtered", tuple(self.filtered))
        object.__setattr__(self, "config_snapshot", dict(self.config_snapshot))

    def body(self) -> dict:
        """The hashed portion of the record (everything but the hash itself)."""
        return {
            "stage_name": self.stage_name,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "filtered": [
                {"asset_id": f.asset_id, "reason": f.reason, "score": f.score} for f in self.filtered
            ],
            "config_snapshot": dict(self.config_snapshot),
        }

    def sealed(self) -> "StageRecord":
        return StageRecord(
            stage_name=self.stage_name,
            inputs=self.inputs,
            outputs=self.outputs,
            filtered=self.filtered,
            config_snapshot=self.config_snapshot,
            content_hash=content_hash(self.body()),
        )


@dataclass(frozen=True)
class PipelineManifest:
    """Ordered, append-only log of every stage decision for one run."""

    run_id: str
    product_id: str
    records: tuple[StageRecord, ...] = ()


def append_stage(manifest: PipelineManifest, record: StageRecord) -> PipelineManifest:
    """Return a new manifest with ``record`` sealed and appended.

    Raises ImmutabilityError if any prior record no longer matches its
    content hash (someone mutated the append-only log).
    """
    if not record.stage_name:
        raise ValidationError("stage_name must be non-empty")
    for i, prior in enumerate(manifest.records):
        if content_hash(prior.body()) != prior.content_hash:
            raise ImmutabilityError(
                f"manifest {manifest.run_id!r} record {i} ({prior.stage_name!r}) was mutated"
            )
    return replace(manifest, records=manifest.records + (record.sealed(),))

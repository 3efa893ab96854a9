"""Token selection, training-set assembly, and ablation grids.

The diffusion training itself happens behind the trainer adapter; this
module owns everything up to the wire payload: picking a synthetic token
that cannot be confused with the product name, rewriting positive captions
to bind that token, and emitting the dataset spec(s).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .errors import BackendError, SweepError, TokenExhaustionError, ValidationError
from .models import CaptionRecord, ImageAsset, ProductRecord, TrainingDatasetSpec


def _is_admissible(token: str, product: ProductRecord) -> bool:
    needle = token.lower()
    if needle in product.title.lower():
        return False
    return all(needle not in value.lower() for value in product.metadata.values())


def _shuffled(rare_tokens: Sequence[str], seed: int) -> list[str]:
    order = list(rare_tokens)
    random.Random(seed).shuffle(order)
    return order


def select_token(product: ProductRecord, rare_tokens: Sequence[str], seed: int) -> str:
    """First seed-shuffled candidate that is not a case-insensitive substring
    of the product title or of any metadata value."""
    if not rare_tokens:
        raise ValidationError("rare_tokens must be non-empty")
    for token in _shuffled(rare_tokens, seed):
        if _is_admissible(token, product):
            return token
    raise TokenExhaustionError(
        f"every candidate token collides with product {product.product_id!r} title/metadata"
    )


def token_sweep(
    product: ProductRecord,
    rare_tokens: Sequence[str],
    sweep_size: int,
    evaluate: Callable[[str], float],
    seed: int,
) -> tuple[str, dict[str, float]]:
    """Try the first ``sweep_size`` admissible tokens and keep the best.

    ``evaluate`` runs the assemble/train/sample/rank loop for one token and
    returns the mean aggregate metric of its top-ranked samples. A trainer
    failure scores that token -inf; if every candidate fails, the sweep
    fails with the per-token messages.
    """
    if sweep_size < 1:
        raise ValidationError("sweep_size must be >= 1")
    candidates = [t for t in _shuffled(rare_tokens, seed) if _is_admissible(t, product)][:sweep_size]
    if not candidates:
        raise TokenExhaustionError(
            f"no admissible token for product {product.product_id!r}"
        )
    scores: dict[str, float] = {}
    failures: dict[str, str] = {}
    for token in candidates:
        try:
            scores[token] = float(evaluate(token))
        except BackendError as exc:
            scores[token] = -math.inf
            failures[token] = str(exc)
    if len(failures) == len(candidates):
        raise SweepError(failures)
    best = max(candidates, key=lambda t: scores[t])  # max keeps candidate order on ties
    return best, scores


def rewrite_caption(token: str, category: str, text: str) -> str:
    """Bind the synthetic token: "a {token} {category}, {original caption}"."""
    return f"a {token} {category}, {text}"


@dataclass(frozen=True)
class AssembledDataset:
    """Trainer wire payload: the dataset spec plus per-asset training captions."""

    spec: TrainingDatasetSpec
    captions: tuple[tuple[str, str], ...]


def assemble_dataset(
    product: ProductRecord,
    token: str,
    positives: Sequence[ImageAsset],
    negatives: Sequence[ImageAsset],
    captions: Mapping[str, CaptionRecord] | Sequence[CaptionRecord],
    lora_rank: int = 64,
    train_steps: int = 1800,
    learning_rate: float = 1e-4,
    ratio: tuple[int, int] = (2, 1),
) -> AssembledDataset:
    """Build the final training payload for one product.

    Positive captions get the token binding prepended (the fine-grained
    detail is preserved, not replaced); negative captions stay bit-
    unchanged. Inputs must already satisfy the ratio (enforce_ratio runs
    before this).
    """
    if not isinstance(captions, Mapping):
        captions = {c.asset_id: c for c in captions}
    training_captions: list[tuple[str, str]] = []
    for positive in positives:
        record = captions.get(positive.asset_id)
        if record is None and positive.caption_id:
            record = captions.get(positive.caption_id)
        if record is None:
            raise ValidationError(f"positive {positive.asset_id!r} has no caption")
        training_captions.append(
            (positive.asset_id, rewrite_caption(token, product.category, record.text))
        )
    for negative in negatives:
        record = captions.get(negative.asset_id)
        text = record.text if record is not None else negative.prompt
        if not text:
            raise ValidationError(f"negative {negative.asset_id!r} has no caption or prompt")
        training_captions.append((negative.asset_id, text))

    spec = TrainingDatasetSpec(
        product_id=product.product_id,
        token=token,
        positive_asset_ids=[a.asset_id for a in positives],
        negative_asset_ids=[a.asset_id for a in negatives],
        ratio=ratio,
        lora_rank=lora_rank,
        train_steps=train_steps,
        learning_rate=learning_rate,
    )
    return AssembledDataset(spec=spec, captions=tuple(training_captions))


def emit_ablation_grid(
    spec: TrainingDatasetSpec,
    ranks: Sequence[int],
    steps: Sequence[int],
) -> list[TrainingDatasetSpec]:
    """Cross product of LoRA ranks and step counts, all else shared."""
    if not ranks or not steps:
        raise ValidationError("ranks and steps must be non-empty")
    return [replace(spec, lora_rank=r, train_steps=s) for r in ranks for s in steps]

"""Post-finetuning ranking and quantitative evaluation.

Generated images are scored with the same metric vector used for
filtering, thresholded on the aggregate (clip_i + clip_t + dino_i), and
the top N survive. Pass-rate arithmetic and the Pearson correlation
between automatic metrics and human verdicts live here too.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import UndefinedCorrelationError, UndefinedUpliftError, ValidationError
from .models import ImageAsset, MetricVector

#: Table row order for metric reports.
REPORT_ROWS = (
    ("CLIP-I", "clip_i"),
    ("CLIP-T", "clip_t"),
    ("DINO-I", "dino_i"),
    ("Seg CLIP-I", "seg_clip_i"),
    ("Seg CLIP-T", "seg_clip_t"),
    ("Seg DINO-I", "seg_dino_i"),
)

Scorer = Callable[[ImageAsset, Sequence[ImageAsset], str], MetricVector]


def rank_generated(
    images: Sequence[ImageAsset],
    refs: Sequence[ImageAsset],
    prompts: Mapping[str, str],
    n: int,
    threshold: float,
    *,
    scorer: Scorer,
) -> list[tuple[str, MetricVector]]:
    """Score every image, drop aggregates below the threshold, keep the top n.

    Ordering is aggregate descending with ties broken by ascending asset
    id. An empty result is a valid outcome when nothing clears the bar.
    """
    if not len(refs):
        raise ValidationError("rank_generated: refs must be non-empty")
    if n < 1:
        raise ValidationError("rank_generated: n must be >= 1")
    scored = []
    for image in images:
        prompt = prompts.get(image.asset_id)
        if prompt is None:
            raise ValidationError(f"rank_generated: no prompt for {image.asset_id!r}")
        scored.append((image.asset_id, scorer(image, refs, prompt)))
    survivors = [(a, m) for a, m in scored if m.aggregate >= threshold]
    survivors.sort(key=lambda item: (-item[1].aggregate, item[0]))
    return survivors[:n]


def per_image_pass_rate(verdicts: Iterable[bool]) -> float:
    """Fraction of passing images; 0.0 for an empty set by convention."""
    verdicts = list(verdicts)
    if not verdicts:
        return 0.0
    return sum(bool(v) for v in verdicts) / len(verdicts)


def per_product_pass_rate(verdicts_by_product: Mapping[str, Iterable[bool]]) -> float:
    """Fraction of products with at least one passing image."""
    if not verdicts_by_product:
        return 0.0
    passing = sum(1 for verdicts in verdicts_by_product.values() if any(verdicts))
    return passing / len(verdicts_by_product)


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson r. Undefined (raises) when either series is constant."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValidationError("pearson_correlation: series must be 1-D and equal length")
    if xa.size < 2:
        raise ValidationError("pearson_correlation: need at least 2 points")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    denom = math.sqrt(float((dx * dx).sum()) * float((dy * dy).sum()))
    if denom == 0.0:
        raise UndefinedCorrelationError("pearson_correlation: constant series")
    return max(-1.0, min(1.0, float((dx * dy).sum()) / denom))


def ranking_uplift(
    before: Union[float, Iterable[bool]],
    after: Union[float, Iterable[bool]],
) -> float:
    """Relative pass-rate change (after - before) / before.

    Accepts raw verdict lists or already-computed rates.
    """
    rate_before = before if isinstance(before, float) else _rate_of(before, "before")
    rate_after = after if isinstance(after, float) else _rate_of(after, "after")
    if rate_before == 0.0:
        raise UndefinedUpliftError("ranking_uplift: baseline pass rate is zero")
    return (rate_after - rate_before) / rate_before


def _rate_of(verdicts: Iterable[bool], name: str) -> float:
    verdicts = list(verdicts)
    if not verdicts:
        raise ValidationError(f"ranking_uplift: {name} verdict set is empty")
    return per_image_pass_rate(verdicts)


def metric_rating_correlations(
    scores: Mapping[str, MetricVector],
    verdicts: Mapping[str, bool],
) -> dict[str, Optional[float]]:
    """Pearson r between each metric (aggregate and every component) and
    human verdicts, over the assets present in both maps.

    Whether the correlation between automatic metrics and ratings is best
    read on the aggregate or per component is an open call, so both are
    reported. Components absent for some assets use only the assets that
    have them; undefined correlations (constant series, <2 points) report
    as None.
    """
    shared = sorted(set(scores) & set(verdicts))
    out: dict[str, Optional[float]] = {}
    for key in ("aggregate", "clip_i", "clip_t", "dino_i", "seg_clip_i", "seg_clip_t", "seg_dino_i"):
        xs, ys = [], []
        for asset_id in shared:
            value = scores[asset_id].component(key)
            if value is None:
                continue
            xs.append(value)
            ys.append(1.0 if verdicts[asset_id] else 0.0)
        try:
            out[key] = pearson_correlation(xs, ys)
        except (ValidationError, UndefinedCorrelationError):
            out[key] = None
    return out


@dataclass
class DatasetEval:
    """One dataset to report on: generated images, references, prompts."""

    gens: Sequence[ImageAsset]
    refs: Sequence[ImageAsset]
    prompts: Mapping[str, str]


@dataclass
class MetricsReport:
    """Per-dataset component means in fixed table row order."""

    sections: dict[str, dict[str, Optional[float]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for name in self.sections:
            lines.append(f"== {name} ==")
            for label, key in REPORT_ROWS:
                value = self.sections[name][key]
                lines.append(f"{label:<12} {'n/a' if value is None else f'{value:.4f}'}")
            lines.append("")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines).rstrip() + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["dataset", "metric", "mean"])
        for name, metrics in self.sections.items():
            for label, key in REPORT_ROWS:
                value = metrics[key]
                writer.writerow([name, label, "" if value is None else f"{value:.6f}"])
        return buf.getvalue()


def build_metrics_report(
    datasets: Mapping[str, DatasetEval],
    *,
    scorer: Scorer,
) -> MetricsReport:
    """Mean of every metric component per dataset, Table-row ordered.

    Empty datasets are skipped with a warning row instead of failing the
    report. Absent segmented components are excluded from their mean; a
    component absent everywhere reports as n/a.
    """
    report = MetricsReport()
    for name, data in datasets.items():
        if not len(data.gens):
            report.warnings.append(f"dataset {name!r} is empty, skipped")
            continue
        vectors = []
        for gen in data.gens:
            prompt = data.prompts.get(gen.asset_id)
            if prompt is None:
                raise ValidationError(f"build_metrics_report: no prompt for {gen.asset_id!r}")
            vectors.append(scorer(gen, data.refs, prompt))
        section: dict[str, Optional[float]] = {}
        for _, key in REPORT_ROWS:
            values = [v.component(key) for v in vectors]
            present = [v for v in values if v is not None]
            section[key] = float(np.mean(present)) if present else None
        report.sections[name] = section
    return report

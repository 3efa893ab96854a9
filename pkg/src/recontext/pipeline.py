"""Stage orchestration: one reproducible run from a single config.

Stages execute in a fixed order (ingest, bank, augment, filter, assemble,
train, generate, rank, report); any subset can be requested as long as its
prerequisites either run first in the same invocation or already completed
in a previous one (tracked in the run state file). Every stage appends a
StageRecord to the per-product manifest, and all randomness derives from
hash(run_seed, stage, ...) so reruns are bit-identical.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from . import augmentation, filtering, finetune, ranking
from .backends.base import ModelBackend
from .backends.http_client import HttpBackend
from .backends.mock import MockBackend
from .backends import wire
from .canonical import canonical_json, derive_id, derive_seed
from .config import echo_config
from .errors import (
    ConfigError,
    DegenerateMaskError,
    EmptyBankError,
    NotFoundError,
    RecontextError,
)
from .models import (
    FilteredEntry,
    ImageAsset,
    JobStatus,
    PipelineManifest,
    ProductRecord,
    Provenance,
    Role,
    StageRecord,
)
from .prompt_bank import PromptBank, classify_category
from .store import AssetStore

STAGE_ORDER = ("ingest", "bank", "augment", "filter", "assemble", "train", "generate", "rank", "report")

STAGE_DEPS = {
    "ingest": (),
    "bank": ("ingest",),
    "augment": ("ingest", "bank"),
    "filter": ("augment",),
    "assemble": ("filter",),
    "train": ("assemble",),
    "generate": ("train",),
    "rank": ("generate",),
    "report": ("rank",),
}


def make_backend(config: dict) -> ModelBackend:
    backend_cfg = config["backend"]
    if config["mock"]:
        return MockBackend(
            out_size=(backend_cfg["out_height"], backend_cfg["out_width"]),
            embed_dim=backend_cfg["embed_dim"],
        )
    base_url = config["endpoints"].get("base_url")
    if not base_url:
        raise ConfigError("endpoints.base_url is required when mock is false")
    return HttpBackend(base_url)


def map_bounded(fn, items, bound: int) -> list:
    """Order-preserving map with at most ``bound`` calls in flight."""
    items = list(items)
    if bound <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=bound) as pool:
        return list(pool.map(fn, items))


def make_scorer(store: AssetStore, backend: ModelBackend) -> ranking.Scorer:
    def scorer(gen: ImageAsset, refs, prompt: str):
        return filtering.compute_metric_vector(
            store.load_pixels(gen.asset_id),
            [store.load_pixels(r.asset_id) for r in refs],
            prompt,
            backend,
            gen_mask=store.load_mask(gen.asset_id),
            ref_masks=[store.load_mask(r.asset_id) for r in refs],
        )

    return scorer


class PipelineRun:
    """One run over one config; owns the store, bank, backend, and state."""

    def __init__(self, config: dict, backend: Optional[ModelBackend] = None):
        self.config = config
        self.workdir = Path(config["workdir"])
        self.store = AssetStore(self.workdir / "store")
        self.bank = PromptBank(self.workdir / "bank")
        self.backend = backend if backend is not None else make_backend(config)
        self.run_seed = int(config["seed"])
        # The run identity is the logical configuration; where it is stored is not part of it.
        self.run_id = derive_id("run", {k: v for k, v in config.items() if k != "workdir"})
        self.run_dir = self.workdir / "runs" / self.run_id
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._state_path = self.run_dir / "state.json"
        self.state: dict = self._load_state()
        self._manifests: dict[str, PipelineManifest] = {}

    # -- state & manifest plumbing -------------------------------------------

    def _load_state(self) -> dict:
        if self._state_path.exists():
            return json.loads(self._state_path.read_text("utf-8"))
        return {"stages_done": [], "products": {}}

    def _save_state(self) -> None:
        self._state_path.write_text(canonical_json(self.state), "utf-8")

    def _product_state(self, product_id: str) -> dict:
        return self.state["products"].setdefault(product_id, {})

    def _mark_done(self, stage: str) -> None:
        if stage not in self.state["stages_done"]:
            self.state["stages_done"].append(stage)
        self._save_state()

    def _manifest(self, product_id: str) -> PipelineManifest:
        if product_id not in self._manifests:
            try:
                self._manifests[product_id] = self.store.load_manifest(product_id, self.run_id)
            except NotFoundError:
                self._manifests[product_id] = PipelineManifest(run_id=self.run_id, product_id=product_id)
        return self._manifests[product_id]

    def _append(self, product_id: str, record: StageRecord) -> None:
        self._manifests[product_id] = self.store.append_and_save(self._manifest(product_id), record)

    def _product_ids(self) -> list[str]:
        return [p["product_id"] for p in self.config["products"]]

    # -- entry point -----------------------------------------------------------

    def run(self, stages: Optional[list[str]] = None) -> int:
        """Execute the requested stages in pipeline order. 0 ok, 1 stage failure."""
        requested = list(stages) if stages else list(STAGE_ORDER)
        unknown = [s for s in requested if s not in STAGE_ORDER]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        ordered = [s for s in STAGE_ORDER if s in requested]
        done = set(self.state["stages_done"])
        for stage in ordered:
            missing = [d for d in STAGE_DEPS[stage] if d not in done and d not in ordered[: ordered.index(stage)]]
            if missing:
                raise ConfigError(
                    f"stage {stage!r} requires {', '.join(missing)} to run first "
                    "(in this invocation or a previous one)"
                )
        (self.run_dir / "config_echo.json").write_text(echo_config(self.config) + "\n", "utf-8")
        for stage in ordered:
            print(f"[{self.run_id}] stage {stage}")
            try:
                getattr(self, f"_stage_{stage}")()
            except RecontextError as exc:
                print(f"[{self.run_id}] stage {stage} failed: {exc}")
                return 1
            self._mark_done(stage)
        return 0

    # -- stages ----------------------------------------------------------------

    def _stage_ingest(self) -> None:
        for entry in self.config["products"]:
            product_id = entry["product_id"]
            pstate = self._product_state(product_id)
            try:
                self.store.get_product(product_id)
                continue  # already ingested in a previous invocation
            except NotFoundError:
                pass
            base_ids = []
            first_pixels = None
            for i, image_path in enumerate(entry["images"]):
                with Image.open(image_path) as img:
                    pixels = np.asarray(img.convert("RGB"))
                if first_pixels is None:
                    first_pixels = pixels
                asset = ImageAsset(
                    asset_id=derive_id(product_id, "base", 0, i),
                    product_id=product_id,
                    role=Role.BASE,
                    image_ref="",
                    width=pixels.shape[1],
                    height=pixels.shape[0],
                )
                self.store.store_asset(asset, pixels)
                base_ids.append(asset.asset_id)
            product = ProductRecord(
                product_id=product_id,
                title=entry["title"],
                category=entry.get("category", ""),
                metadata=entry.get("metadata", {}),
                base_asset_ids=base_ids,
            )
            product.category = classify_category(product, self.backend, first_pixels)
            self.store.put_product(product)
            pstate["base"] = base_ids
            self._append(
                product_id,
                StageRecord(
                    stage_name="ingest",
                    outputs=tuple(base_ids),
                    config_snapshot={"category": product.category, "n_images": len(base_ids)},
                ),
            )
        self._save_state()

    def _stage_bank(self) -> None:
        bank_cfg = self.config["bank"]
        categories = sorted({self.store.get_product(pid).category for pid in self._product_ids()})
        approved: dict[str, int] = {}
        for category in categories:
            self.bank.populate(category, bank_cfg["size"], self.backend, derive_seed(self.run_seed, "bank", category))
            if bank_cfg["auto_approve"]:
                for entry in self.bank.pending(category):
                    self.bank.curate(category, entry.entry_id, "approved", "auto")
            approved[category] = self.bank.approved_count(category)
        for pid in self._product_ids():
            category = self.store.get_product(pid).category
            self._append(
                pid,
                StageRecord(
                    stage_name="bank",
                    config_snapshot={"category": category, "approved": approved[category]},
                ),
            )

    def _stage_augment(self) -> None:
        aug_cfg = self.config["augment"]
        asm_cfg = self.config["assemble"]
        all_categories = sorted({self.store.get_product(pid).category for pid in self._product_ids()})
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            seed_a = derive_seed(self.run_seed, "augment", pid)
            skips: list[FilteredEntry] = []

            views, view_skips = augmentation.harvest_novel_views(
                product, aug_cfg["n_frames"], aug_cfg["frames_to_keep"], seed_a,
                store=self.store, backend=self.backend,
            )
            skips.extend(view_skips)

            sources = [self.store.get_asset(a) for a in product.base_asset_ids] + views
            new_context: list[ImageAsset] = []
            for source in sources:
                try:
                    new_context.extend(
                        augmentation.generate_new_context(
                            source, product.category, aug_cfg["k_prompts"], seed_a,
                            store=self.store, backend=self.backend, bank=self.bank,
                            subject_hint=product.title,
                        )
                    )
                except DegenerateMaskError as exc:
                    skips.append(FilteredEntry(asset_id=source.asset_id, reason=f"degenerate_mask: {exc}"))

            positives = [self.store.get_asset(a.asset_id) for a in sources] + new_context
            _, caption_skips = augmentation.caption_assets(
                positives, aug_cfg["instruction_template"], store=self.store, backend=self.backend
            )
            skips.extend(caption_skips)

            captioned = [a for a in positives if a.caption_id]
            target = len(captioned) * asm_cfg["ratio_neg"] // asm_cfg["ratio_pos"]
            n_negatives = int(target * aug_cfg["negative_split"])
            n_counterfactuals = target - n_negatives

            negatives = augmentation.generate_negatives(
                product, captioned, seed_a, store=self.store, backend=self.backend, count=n_negatives
            )

            counterfactuals: list[ImageAsset] = []
            cf_sources = sorted((a for a in positives if a.mask_ref), key=lambda a: a.asset_id)
            other_categories = [c for c in all_categories if c != product.category]
            i = 0
            while len(counterfactuals) < n_counterfactuals and cf_sources:
                source = cf_sources[i % len(cf_sources)]
                if other_categories:
                    category = other_categories[i % len(other_categories)]
                    try:
                        prompt = self.bank.get_prompts(category, 1, derive_seed(seed_a, "distractor", i))[0]
                    except EmptyBankError:
                        prompt = f"a {category} in place of the product"
                else:
                    prompt = f"a different object in place of the {product.category}"
                counterfactuals.extend(
                    augmentation.generate_counterfactuals(
                        source, [prompt], derive_seed(seed_a, "cf", i),
                        store=self.store, backend=self.backend,
                    )
                )
                i += 1

            produced = views + new_context + negatives + counterfactuals
            pstate["novel_view"] = [a.asset_id for a in views]
            pstate["new_context"] = [a.asset_id for a in new_context]
            pstate["negative_side"] = [a.asset_id for a in negatives + counterfactuals]
            self._append(
                pid,
                StageRecord(
                    stage_name="augment",
                    inputs=tuple(product.base_asset_ids),
                    outputs=tuple(a.asset_id for a in produced),
                    filtered=tuple(skips),
                    config_snapshot={
                        "n_frames": aug_cfg["n_frames"],
                        "frames_to_keep": aug_cfg["frames_to_keep"],
                        "k_prompts": aug_cfg["k_prompts"],
                        "negatives": len(negatives),
                        "counterfactuals": len(counterfactuals),
                    },
                ),
            )
        self._save_state()

    def _stage_filter(self) -> None:
        filter_cfg = self.config["filter"]
        threshold = filter_cfg["iou_threshold"]
        merged = ["asset_id,metric,score,decision,threshold"]
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            new_context_ids = pstate.get("new_context", [])

            def resegment(asset_id: str):
                reference_mask = self.store.load_mask(asset_id)
                candidate_mask = self.backend.segment(self.store.load_pixels(asset_id), product.title)
                return asset_id, candidate_mask, reference_mask

            triples = map_bounded(resegment, new_context_ids, self.config["backend"]["max_inflight"])
            iou_result = filtering.filter_by_iou(triples, threshold)

            ref_pixels = [self.store.load_pixels(b) for b in product.base_asset_ids]
            ref_masks = [self.store.load_mask(b) for b in product.base_asset_ids]
            scored = []
            for asset_id in iou_result.kept:
                asset = self.store.get_asset(asset_id)
                vector = filtering.compute_metric_vector(
                    self.store.load_pixels(asset_id), ref_pixels, asset.prompt or "",
                    self.backend, gen_mask=self.store.load_mask(asset_id), ref_masks=ref_masks,
                )
                scored.append((asset_id, vector))
            top = filtering.select_top_rated(scored, filter_cfg["keep_top_k"], filter_cfg["metric_key"])
            kept_ids = [asset_id for asset_id, _ in top]
            metric_drops = [
                FilteredEntry(asset_id=a, reason="metric_rank", score=v.component(filter_cfg["metric_key"]))
                for a, v in scored
                if a not in kept_ids
            ]

            report_lines = ["asset_id,metric,score,decision,threshold"]
            iou_scores = {e.asset_id: e.score for e in iou_result.rejected}
            for asset_id, candidate_mask, reference_mask in triples:
                if candidate_mask is None or reference_mask is None:
                    continue
                score = iou_scores.get(asset_id)
                if score is None:
                    score = filtering.mask_iou(candidate_mask, reference_mask)
                decision = "kept" if asset_id in iou_result.kept else "rejected"
                report_lines.append(f"{asset_id},iou,{score:.6f},{decision},{threshold}")
            for asset_id, vector in scored:
                decision = "kept" if asset_id in kept_ids else "rejected"
                value = vector.component(filter_cfg["metric_key"])
                report_lines.append(
                    f"{asset_id},{filter_cfg['metric_key']},{value:.6f},{decision},top_{filter_cfg['keep_top_k']}"
                )
            (self.run_dir / f"filter_report_{pid}.csv").write_text("\n".join(report_lines) + "\n", "utf-8")
            merged.extend(report_lines[1:])

            pstate["positives"] = list(pstate.get("base", [])) + pstate.get("novel_view", []) + kept_ids
            self._append(
                pid,
                StageRecord(
                    stage_name="filter",
                    inputs=tuple(new_context_ids),
                    outputs=tuple(kept_ids),
                    filtered=tuple(iou_result.rejected) + tuple(iou_result.skipped) + tuple(metric_drops),
                    config_snapshot={"iou_threshold": threshold, "keep_top_k": filter_cfg["keep_top_k"]},
                ),
            )
        (self.run_dir / "filter_report.csv").write_text("\n".join(merged) + "\n", "utf-8")
        self._save_state()

    def _stage_assemble(self) -> None:
        asm_cfg = self.config["assemble"]
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            positives = [self.store.get_asset(a) for a in pstate.get("positives", [])]
            negative_side = [self.store.get_asset(a) for a in pstate.get("negative_side", [])]
            kept_pos, kept_neg = augmentation.enforce_ratio(
                positives, negative_side, asm_cfg["ratio_pos"], asm_cfg["ratio_neg"]
            )
            trimmed = [
                FilteredEntry(asset_id=a.asset_id, reason="ratio_trim")
                for a in negative_side
                if a.asset_id not in {n.asset_id for n in kept_neg}
            ]
            captions = {
                a.asset_id: self.store.get_caption(a.caption_id) for a in kept_pos if a.caption_id
            }
            seed_s = derive_seed(self.run_seed, "assemble", pid)
            if asm_cfg["sweep_size"] > 1:
                token, sweep_scores = finetune.token_sweep(
                    product, asm_cfg["rare_tokens"], asm_cfg["sweep_size"],
                    self._sweep_evaluator(product, kept_pos, kept_neg, captions, seed_s),
                    seed_s,
                )
            else:
                token, sweep_scores = finetune.select_token(product, asm_cfg["rare_tokens"], seed_s), {}
            assembled = finetune.assemble_dataset(
                product, token, kept_pos, kept_neg, captions,
                lora_rank=asm_cfg["lora_rank"], train_steps=asm_cfg["train_steps"],
                learning_rate=asm_cfg["learning_rate"],
                ratio=(asm_cfg["ratio_pos"], asm_cfg["ratio_neg"]),
            )
            spec_path = self.run_dir / f"train_spec_{pid}_{token}.spec"
            spec_path.write_text(
                canonical_json(
                    {"spec": wire.encode_spec(assembled.spec), "captions": [list(c) for c in assembled.captions]}
                ) + "\n",
                "utf-8",
            )
            pstate["token"] = token
            pstate["spec_file"] = str(spec_path.relative_to(self.run_dir))
            self._append(
                pid,
                StageRecord(
                    stage_name="assemble",
                    inputs=tuple(a.asset_id for a in positives + negative_side),
                    outputs=tuple(assembled.spec.positive_asset_ids) + tuple(assembled.spec.negative_asset_ids),
                    filtered=tuple(trimmed),
                    config_snapshot={
                        "token": token,
                        "ratio": f"{asm_cfg['ratio_pos']}:{asm_cfg['ratio_neg']}",
                        "lora_rank": asm_cfg["lora_rank"],
                        "train_steps": asm_cfg["train_steps"],
                        "learning_rate": asm_cfg["learning_rate"],
                        "sweep_scores": {k: str(v) for k, v in sweep_scores.items()},
                    },
                ),
            )
        self._save_state()

    def _sweep_evaluator(self, product, kept_pos, kept_neg, captions, seed_s):
        """assemble->train->sample->rank loop for one candidate token."""
        asm_cfg = self.config["assemble"]
        ref_pixels = [self.store.load_pixels(b) for b in product.base_asset_ids]

        def evaluate(token: str) -> float:
            assembled = finetune.assemble_dataset(
                product, token, kept_pos, kept_neg, captions,
                lora_rank=asm_cfg["lora_rank"], train_steps=asm_cfg["train_steps"],
                learning_rate=asm_cfg["learning_rate"],
                ratio=(asm_cfg["ratio_pos"], asm_cfg["ratio_neg"]),
            )
            model_ref = self._train_to_completion(assembled)
            prompts = self.bank.get_prompts(
                product.category, asm_cfg["sweep_samples"], derive_seed(seed_s, "sweep", token)
            )
            aggregates = []
            for j, context in enumerate(prompts):
                prompt = finetune.rewrite_caption(token, product.category, context)
                sample = self.backend.sample_from_model(
                    model_ref, prompt, derive_seed(seed_s, token, j), 1
                )[0]
                vector = filtering.compute_metric_vector(sample, ref_pixels, prompt, self.backend)
                aggregates.append(vector.aggregate)
            top = sorted(aggregates, reverse=True)[: asm_cfg["sweep_top_n"]]
            return float(np.mean(top))

        return evaluate

    def _train_to_completion(self, assembled: finetune.AssembledDataset, poll_interval: float = 0.05) -> str:
        job_ref = self.backend.submit_training_job(assembled.spec, assembled.captions)
        for _ in range(10_000):
            status, model_ref = self.backend.poll_job(job_ref)
            if status is JobStatus.DONE:
                return model_ref
            time.sleep(poll_interval)
        raise RecontextError(f"training job {job_ref!r} did not finish")

    def _stage_train(self) -> None:
        for pid in self._product_ids():
            pstate = self._product_state(pid)
            raw = json.loads((self.run_dir / pstate["spec_file"]).read_text("utf-8"))
            assembled = finetune.AssembledDataset(
                spec=wire.decode_spec(raw["spec"]),
                captions=tuple((a, t) for a, t in raw["captions"]),
            )
            model_ref = self._train_to_completion(assembled)
            pstate["model_ref"] = model_ref
            self._append(
                pid,
                StageRecord(
                    stage_name="train",
                    inputs=tuple(assembled.spec.positive_asset_ids) + tuple(assembled.spec.negative_asset_ids),
                    config_snapshot={"model_ref": model_ref, "token": pstate["token"]},
                ),
            )
        self._save_state()

    def _stage_generate(self) -> None:
        gen_cfg = self.config["generate"]
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            token, model_ref = pstate["token"], pstate["model_ref"]
            seed_g = derive_seed(self.run_seed, "generate", pid)
            contexts = self.bank.get_prompts(product.category, gen_cfg["prompts_per_product"], seed_g)
            generated = []
            for j, context in enumerate(contexts):
                prompt = finetune.rewrite_caption(token, product.category, context)
                samples = self.backend.sample_from_model(
                    model_ref, prompt, derive_seed(seed_g, j), gen_cfg["samples_per_prompt"]
                )
                for k, pixels in enumerate(samples):
                    asset = ImageAsset(
                        asset_id=derive_id(pid, "generated", seed_g, j, k),
                        product_id=pid,
                        role=Role.GENERATED,
                        image_ref="",
                        width=pixels.shape[1],
                        height=pixels.shape[0],
                        prompt=prompt,
                        provenance=Provenance(
                            backend_name=self.backend.name,
                            backend_params={"model_ref": model_ref, "prompt_index": j, "sample_index": k},
                            seed=derive_seed(seed_g, j),
                        ),
                    )
                    self.store.store_asset(asset, pixels)
                    generated.append(asset)
            pstate["generated"] = [a.asset_id for a in generated]
            self._append(
                pid,
                StageRecord(
                    stage_name="generate",
                    outputs=tuple(a.asset_id for a in generated),
                    config_snapshot={
                        "model_ref": model_ref,
                        "prompts_per_product": gen_cfg["prompts_per_product"],
                        "samples_per_prompt": gen_cfg["samples_per_prompt"],
                    },
                ),
            )
        self._save_state()

    def _stage_rank(self) -> None:
        rank_cfg = self.config["rank"]
        scorer = make_scorer(self.store, self.backend)
        merged = ["asset_id,clip_i,clip_t,dino_i,aggregate,decision,threshold"]
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            images = [self.store.get_asset(a) for a in pstate.get("generated", [])]
            refs = [self.store.get_asset(b) for b in product.base_asset_ids]
            prompts = {a.asset_id: a.prompt or "" for a in images}

            def score_one(asset):
                return asset.asset_id, scorer(asset, refs, prompts[asset.asset_id])

            cache: dict[str, object] = dict(
                map_bounded(score_one, images, self.config["backend"]["max_inflight"])
            )

            def caching_scorer(gen, refs_, prompt):
                return cache[gen.asset_id]

            ranked = ranking.rank_generated(
                images, refs, prompts, rank_cfg["top_n"], rank_cfg["threshold"], scorer=caching_scorer
            )
            kept_ids = [asset_id for asset_id, _ in ranked]
            dropped = [
                FilteredEntry(asset_id=a.asset_id, reason="rank", score=cache[a.asset_id].aggregate)
                for a in images
                if a.asset_id not in kept_ids
            ]

            lines = ["asset_id,clip_i,clip_t,dino_i,aggregate,decision,threshold"]
            for asset in sorted(images, key=lambda a: a.asset_id):
                vector = cache[asset.asset_id]
                decision = "kept" if asset.asset_id in kept_ids else "dropped"
                lines.append(
                    f"{asset.asset_id},{vector.clip_i:.6f},{vector.clip_t:.6f},"
                    f"{vector.dino_i:.6f},{vector.aggregate:.6f},{decision},{rank_cfg['threshold']}"
                )
            (self.run_dir / f"rank_report_{pid}.csv").write_text("\n".join(lines) + "\n", "utf-8")
            merged.extend(lines[1:])

            pstate["ranked"] = kept_ids
            self._append(
                pid,
                StageRecord(
                    stage_name="rank",
                    inputs=tuple(a.asset_id for a in images),
                    outputs=tuple(kept_ids),
                    filtered=tuple(dropped),
                    config_snapshot={"top_n": rank_cfg["top_n"], "threshold": rank_cfg["threshold"]},
                ),
            )
        (self.run_dir / "rank_report.csv").write_text("\n".join(merged) + "\n", "utf-8")
        self._save_state()

    def _stage_report(self) -> None:
        scorer = make_scorer(self.store, self.backend)
        datasets = {}
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            ids = pstate.get("ranked") or pstate.get("generated", [])
            gens = [self.store.get_asset(a) for a in ids]
            refs = [self.store.get_asset(b) for b in product.base_asset_ids]
            datasets[pid] = ranking.DatasetEval(
                gens=gens, refs=refs, prompts={g.asset_id: g.prompt or "" for g in gens}
            )
        report = ranking.build_metrics_report(datasets, scorer=scorer)
        (self.run_dir / "metrics_table.txt").write_text(report.to_text(), "utf-8")
        (self.run_dir / "metrics_report.csv").write_text(report.to_csv(), "utf-8")
        for pid in self._product_ids():
            self._append(
                pid,
                StageRecord(
                    stage_name="report",
                    inputs=tuple(self.state["products"][pid].get("ranked", [])),
                    config_snapshot={"table": "metrics_table.txt"},
                ),
            )
        self._save_state()

    # -- eval service ------------------------------------------------------------

    def build_eval_service(self, rating_log: Optional[Path] = None):
        """Eval service over this run's final images (ranked, else generated)."""
        from .eval_service import EvalService

        service = EvalService(
            raters_needed=self.config["eval"]["raters_needed"],
            rating_log=rating_log if rating_log is not None else self.run_dir / "ratings.log",
        )
        batch = []
        for pid in self._product_ids():
            product = self.store.get_product(pid)
            pstate = self._product_state(pid)
            for asset_id in pstate.get("ranked") or pstate.get("generated", []):
                batch.append((asset_id, tuple(product.base_asset_ids), pid))
        if batch:
            service.create_batch(batch)
        return service

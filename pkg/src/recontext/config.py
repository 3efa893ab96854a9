"""Run configuration: defaults, validation, and canonical echo.

Every constant the method leaves "experimentally determined" (IoU
threshold, ranking threshold, top N, ratio, frame counts, sweep size,
learning rate) surfaces here so it can be tuned without code changes.
Validation reports every problem in one pass and the normalized echo is
idempotent: validating the echo reproduces it byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .augmentation import DEFAULT_INSTRUCTION_TEMPLATE
from .canonical import canonical_json
from .errors import ConfigError

DEFAULT_RARE_TOKENS = ["zxv", "qpt", "vxk", "jzq", "wqx", "kvz", "xqj", "pzv"]

DEFAULTS: dict[str, Any] = {
    "workdir": "recontext_out",
    "seed": 42,
    "mock": False,
    "endpoints": {},
    "products": [],
    "bank": {
        "size": 50,
        "auto_approve": True,
    },
    "augment": {
        "n_frames": 8,
        "frames_to_keep": 2,
        "k_prompts": 3,
        "negative_split": 0.5,
        "instruction_template": DEFAULT_INSTRUCTION_TEMPLATE,
    },
    "filter": {
        "iou_threshold": 0.85,
        "keep_top_k": 8,
        "metric_key": "aggregate",
    },
    "assemble": {
        "ratio_pos": 2,
        "ratio_neg": 1,
        "lora_rank": 64,
        "train_steps": 1800,
        "learning_rate": 1e-4,
        "rare_tokens": DEFAULT_RARE_TOKENS,
        "sweep_size": 1,
        "sweep_samples": 4,
        "sweep_top_n": 2,
    },
    "generate": {
        "prompts_per_product": 4,
        "samples_per_prompt": 2,
    },
    "rank": {
        "top_n": 4,
        "threshold": 1.6,
    },
    "eval": {
        "raters_needed": 3,
        "host": "127.0.0.1",
        "port": 8080,
    },
    "backend": {
        "out_width": 64,
        "out_height": 64,
        "embed_dim": 512,
        "max_inflight": 4,
    },
}

_PRODUCT_KEYS = {"product_id", "title", "category", "metadata", "images"}


def _merge_section(section: str, defaults: dict, given: Any, problems: list[str]) -> dict:
    if not isinstance(given, dict):
        problems.append(f"section {section!r} must be an object")
        return dict(defaults)
    merged = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            problems.append(f"unknown key {section}.{key}")
            continue
        merged[key] = value
    return merged


def validate_config(config_path: str | Path) -> tuple[dict, list[str]]:
    """Parse, check, and normalize a run config.

    Returns (normalized config, warnings). Raises ConfigError listing every
    missing/unknown key at once.
    """
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return normalize_config(raw)


def normalize_config(raw: dict) -> tuple[dict, list[str]]:
    problems: list[str] = []
    warnings: list[str] = []
    config: dict[str, Any] = {}

    for key in raw:
        if key not in DEFAULTS:
            problems.append(f"unknown key {key}")

    for key, default in DEFAULTS.items():
        given = raw.get(key, None)
        if isinstance(default, dict) and key != "endpoints":
            config[key] = _merge_section(key, default, given if given is not None else {}, problems)
        else:
            config[key] = given if given is not None else (
                list(default) if isinstance(default, list) else
                dict(default) if isinstance(default, dict) else default
            )

    products = config["products"]
    if not isinstance(products, list) or not products:
        problems.append("missing required key: products (at least one product)")
    else:
        for i, product in enumerate(products):
            if not isinstance(product, dict):
                problems.append(f"products[{i}] must be an object")
                continue
            for key in product:
                if key not in _PRODUCT_KEYS:
                    problems.append(f"unknown key products[{i}].{key}")
            if not product.get("product_id"):
                problems.append(f"products[{i}].product_id is required")
            if not product.get("title"):
                problems.append(f"products[{i}].title is required")
            if not product.get("images"):
                problems.append(f"products[{i}].images must list at least one image file")

    mock = bool(config["mock"])
    endpoints = config["endpoints"]
    if not isinstance(endpoints, dict):
        problems.append("endpoints must be an object")
        endpoints = {}
    if not mock and not endpoints:
        problems.append("missing required key: endpoints (or set mock: true)")
    if mock and endpoints:
        warnings.append("mock: true set; configured endpoints are ignored")

    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(sorted(problems)))

    config["mock"] = mock
    # Normalize product entries so the echo is complete.
    config["products"] = [
        {
            "product_id": p["product_id"],
            "title": p["title"],
            "category": p.get("category", ""),
            "metadata": dict(p.get("metadata", {})),
            "images": list(p["images"]),
        }
        for p in products
    ]
    return config, warnings


def echo_config(config: dict) -> str:
    """Canonical text form of a normalized config (the idempotent echo)."""
    return canonical_json(config)

"""Canonical serialization, content hashing, and deterministic ids.

Everything the pipeline persists or hashes goes through ``canonical_json``:
UTF-8 text, lexicographically sorted keys, no insignificant whitespace.
Two runs that produce structurally equal records therefore produce
byte-identical files and identical SHA-256 digests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from enum import Enum
from typing import Any


def _plain(value: Any) -> Any:
    """Reduce a value to plain JSON types (dict/list/str/int/float/bool/None)."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return _plain(value.value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    raise TypeError(f"value of type {type(value).__name__} has no canonical form")


def canonical_json(value: Any) -> str:
    """Serialize ``value`` canonically; equal structures give equal strings."""
    return json.dumps(_plain(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def content_hash(value: Any) -> str:
    """SHA-256 of the canonical serialization of ``value``."""
    return sha256_hex(canonical_json(value))


def derive_id(*parts: Any) -> str:
    """Deterministic 16-hex-char id from the canonical form of ``parts``."""
    return content_hash(list(parts))[:16]


def derive_seed(*parts: Any) -> int:
    """Deterministic unsigned 64-bit seed from the canonical form of ``parts``."""
    digest = hashlib.sha256(canonical_json(list(parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")

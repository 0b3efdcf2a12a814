"""Small shared helpers: clamping, stable seeding, canonical JSON."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return max(lo, min(hi, x))


def stable_seed(*parts: Any) -> int:
    """Derive a 64-bit seed from arbitrary parts, stable across processes.

    Built on blake2b rather than hash() so results do not depend on
    PYTHONHASHSEED.
    """
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def canonical_json(obj: Any) -> str:
    """Serialize with a fixed, whitespace-free layout for byte-exact replay diffs.

    Key order is the insertion order of the dicts handed in; callers build
    their dicts in a fixed field order.
    """
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

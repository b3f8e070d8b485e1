"""Shared helpers: deterministic seeding, float formatting, JSON io."""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path


def derive_seed(*parts: object) -> int:
    """Collapse arbitrary labels into a stable 64-bit seed.

    Uses sha256 rather than hash() so results do not depend on
    PYTHONHASHSEED or the platform.
    """
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derived_rng(*parts: object) -> random.Random:
    """A random.Random whose stream is a pure function of the labels."""
    return random.Random(derive_seed(*parts))


def fmt_float(x: float, sig: int = 12) -> str:
    """Fixed significant-digit rendering so emitted files are reproducible."""
    if x != x:  # NaN
        return "NA"
    return format(float(x), f".{sig}g")


def write_json(path: str | Path, obj: object) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

"""Shared plumbing: deterministic hashing, seed derivation, stable JSON, parallel map."""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from typing import Any, Callable, Iterable, Sequence


class DataError(ValueError):
    """Malformed or unusable input data (maps to CLI exit code 2)."""


def stable_json_dumps(obj: Any) -> str:
    """Serialize to JSON with a byte-stable layout (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def content_hash(obj: Any) -> str:
    """Hash of the stable JSON form of a JSON-serializable object."""
    return sha256_text(stable_json_dumps(obj))


def derive_seed(master: int, label: str) -> int:
    """Derive a stage-local RNG seed from a master seed and a stage label.

    Stable across runs and platforms; labels keep stages independent so adding
    a stage never perturbs another stage's randomness.
    """
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _call(args):
    fn, item = args
    return fn(item)


def ordered_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map fn over items, optionally with a process pool.

    Output order always equals input order, so results are independent of the
    worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (workers * 4))
    with multiprocessing.Pool(processes=workers) as pool:
        return pool.map(_call, [(fn, item) for item in items], chunksize=chunk)


def float_list(values: Iterable[float]) -> list[float]:
    """Plain-float copy (de-numpys values so JSON serialization stays stable)."""
    return [float(v) for v in values]

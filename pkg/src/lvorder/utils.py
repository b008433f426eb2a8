"""Utilities for lvorder."""

import os
import zlib
from typing import Any, Union

import numpy as np
import orjson

THREADS_ENV = "LVORDER_THREADS"

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """
    Derive an independent 64-bit seed from a root seed and a path of keys.

    String keys are hashed with CRC-32 so the result does not depend on the
    interpreter's hash randomization.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key))
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])


def thread_count(requested: Any = None) -> int:
    """Get the number of worker threads, capped by LVORDER_THREADS."""
    cap = os.environ.get(THREADS_ENV)
    count = int(requested) if requested is not None else (os.cpu_count() or 1)
    if cap:
        count = min(count, int(cap))
    return max(1, count)


def dumps_json(obj: Any) -> bytes:
    """Serialize a document with stable key order and a trailing newline."""
    return orjson.dumps(obj, option=_JSON_OPTIONS) + b"\n"


__all__ = ["derive_seed", "dumps_json", "thread_count"]

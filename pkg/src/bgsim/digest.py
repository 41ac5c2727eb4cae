"""Stable canonical encoding and hash-chained step digests.

``hash()`` of strings changes between interpreter runs, so anything that
ends up in a trace file goes through :func:`canon` instead.
"""
from __future__ import annotations

import hashlib
import json

GENESIS = "0" * 16

_memo: dict = {}
_memo_types: set = set()


def memoize_type(cls):
    """Cache encodings of instances of ``cls`` (immutable, hashable, and
    never mixing bools with equal ints inside)."""
    _memo_types.add(cls)
    return cls


def canon(x) -> str:
    if x is None or isinstance(x, (bool, int, str, float)):
        return json.dumps(x)
    if isinstance(x, tuple):
        memo = type(x) in _memo_types
        if memo:
            hit = _memo.get((type(x), x))
            if hit is not None:
                return hit
        body = ",".join(canon(v) for v in x)
        name = type(x).__name__ if hasattr(x, "_fields") else ""
        out = f"{name}({body})"
        if memo and len(_memo) < 200_000:
            _memo[(type(x), x)] = out
        return out
    if isinstance(x, (frozenset, set)):
        return "{" + ",".join(sorted(canon(v) for v in x)) + "}"
    if isinstance(x, list):
        return "[" + ",".join(canon(v) for v in x) + "]"
    if isinstance(x, dict):
        return "<" + ",".join(f"{canon(k)}:{canon(v)}"
                              for k, v in sorted(x.items(), key=lambda kv: canon(kv[0]))) + ">"
    raise TypeError(f"cannot canonicalize {type(x).__name__}")


def chain(prev: str, *parts) -> str:
    h = hashlib.sha256(prev.encode())
    for p in parts:
        h.update(b"|")
        h.update(canon(p).encode())
    return h.hexdigest()[:16]

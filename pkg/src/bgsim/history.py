"""Call/return actions, histories and the line-based history file format.

A history is a plain tuple of :class:`Call` and :class:`Ret` actions.
Invocation ids are strings; the process issuing an invocation is the part
of the id before the first ``.`` (``"0.3"`` is the third call of process
``0``).  Ids without a dot are treated as their own process.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Optional

from .errors import MalformedHistory, TraceParseError


class Call(NamedTuple):
    method: str
    arg: Any
    inv: str

    def __str__(self):
        arg = "" if self.arg is None else encode_value(self.arg)
        return f"{self.method}({arg})#{self.inv}"


class Ret(NamedTuple):
    value: Any
    inv: str

    def __str__(self):
        return f"ret({encode_value(self.value)})#{self.inv}"


class Lin(NamedTuple):
    """Linearization-point label of the atomic object."""

    inv: str

    def __str__(self):
        return f"lin#{self.inv}"


def is_visible(label) -> bool:
    return isinstance(label, (Call, Ret))


def proc_of(inv: str) -> str:
    return inv.split(".", 1)[0]


def encode_value(v) -> str:
    return json.dumps(_jsonable(v), separators=(",", ":"), sort_keys=True)


def decode_value(s: str):
    return _tupled(json.loads(s))


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return sorted(_jsonable(x) for x in v)
    return v


def _tupled(v):
    # json has no tuples; values inside the simulator are always tuples
    if isinstance(v, list):
        return tuple(_tupled(x) for x in v)
    return v


class Invocation(NamedTuple):
    inv: str
    method: str
    arg: Any
    call_at: int
    ret_at: Optional[int]
    value: Any

    @property
    def complete(self):
        return self.ret_at is not None


def invocations(h: Iterable) -> dict[str, Invocation]:
    """Index a well-formed history by invocation id (in call order)."""
    out: dict[str, Invocation] = {}
    busy: dict[str, str] = {}
    for idx, a in enumerate(h):
        if isinstance(a, Call):
            if a.inv in out:
                raise MalformedHistory(f"duplicate invocation id {a.inv!r}")
            p = proc_of(a.inv)
            if p in busy:
                raise MalformedHistory(
                    f"process {p} calls {a.inv} while {busy[p]} is pending")
            busy[p] = a.inv
            out[a.inv] = Invocation(a.inv, a.method, a.arg, idx, None, None)
        elif isinstance(a, Ret):
            iv = out.get(a.inv)
            if iv is None:
                raise MalformedHistory(f"return for unknown invocation {a.inv!r}")
            if iv.complete:
                raise MalformedHistory(f"second return for {a.inv!r}")
            busy.pop(proc_of(a.inv), None)
            out[a.inv] = iv._replace(ret_at=idx, value=a.value)
        else:
            raise MalformedHistory(f"not an action: {a!r}")
    return out


def check_well_formed(h) -> None:
    invocations(h)


def is_sequential(h) -> bool:
    if len(h) % 2:
        return False
    for c, r in zip(h[::2], h[1::2]):
        if not (isinstance(c, Call) and isinstance(r, Ret) and c.inv == r.inv):
            return False
    return True


def sequential(ops) -> tuple:
    """Build a sequential history from ``(method, arg, value, inv)`` tuples."""
    h = []
    for method, arg, value, inv in ops:
        h.append(Call(method, arg, inv))
        h.append(Ret(value, inv))
    return tuple(h)


def pairs(hs):
    """Iterate ``(Call, Ret)`` pairs of a sequential history."""
    return zip(hs[::2], hs[1::2])


# -- file format -----------------------------------------------------------

def format_history(h) -> str:
    lines = []
    for a in h:
        if isinstance(a, Call):
            arg = "-" if a.arg is None else encode_value(a.arg)
            lines.append(f"CALL {a.inv} {a.method} {arg}")
        else:
            lines.append(f"RET {a.inv} {encode_value(a.value)}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_history(text: str) -> tuple:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 3)
        try:
            if parts[0] == "CALL":
                _, inv, method, *rest = parts
                arg = None if not rest or rest[0] == "-" else decode_value(rest[0])
                out.append(Call(method, arg, inv))
            elif parts[0] == "RET":
                _, inv, val = parts
                out.append(Ret(decode_value(val), inv))
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except ValueError as e:
            raise TraceParseError(lineno, str(e)) from None
    return tuple(out)


def write_history(path, h) -> None:
    Path(path).write_text(format_history(h))


def read_history(path) -> tuple:
    return parse_history(Path(path).read_text())

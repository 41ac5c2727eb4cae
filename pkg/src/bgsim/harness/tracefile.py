"""Line-based trace files.

::

    TRACE v1 m=2 n=3 seed=7
    CONFIG trace.kind=mp
    CONFIG scenario.impl=abd
    STEP 0 CALL 0 write(1)#0.1 - 3f9c...
    STEP 1 INT 2 - 0:1 a01b...
    END 2 a01b...

Message-passing steps carry the received uids in the fifth field.
Shared-memory steps (rules ``SMR``/``SMW``/``SML``) put the accessed
register key there instead, JSON encoded.  The ``END`` line repeats the
step count and final digest, so a truncated file is always detected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..digest import GENESIS
from ..errors import TraceParseError
from ..history import decode_value, encode_value, is_visible
from ..mp import Step, format_label, format_uids, parse_label, parse_uids

MP_RULES = ("CALL", "RET", "INT")
SM_RULES = ("SMR", "SMW", "SML")


@dataclass
class TraceRecord:
    n: int
    rule: str
    pid: int
    label: object
    field: object  # received uids (mp) or register key (sm)
    digest: str


@dataclass
class TraceFile:
    m: int
    n: int
    seed: object
    config: list = field(default_factory=list)  # (key, value) pairs
    records: list = field(default_factory=list)

    @property
    def kind(self):
        return dict(self.config).get("trace.kind", "mp")

    @property
    def digest(self):
        return self.records[-1].digest if self.records else GENESIS

    @property
    def history(self):
        return tuple(r.label for r in self.records if is_visible(r.label))

    def mp_steps(self):
        return [Step(r.rule, r.pid, r.label if r.rule == "CALL" else None, r.field)
                for r in self.records]

    def schedule(self):
        return [r.pid for r in self.records]


def _seed_text(seed):
    return "-" if seed is None else str(seed)


def _header(m, n, seed, kind, items):
    lines = [f"TRACE v1 m={m} n={n} seed={_seed_text(seed)}", f"CONFIG trace.kind={kind}"]
    lines += [f"CONFIG {k}={v}" for k, v in items if k != "trace.kind"]
    return lines


def format_mp_trace(trace, items=()) -> str:
    lines = _header(trace.m, trace.n, trace.seed, "mp", items)
    for t in trace.steps:
        lines.append(f"STEP {t.n} {t.rule} {t.pid} {format_label(t.label)} "
                     f"{format_uids(t.recv)} {t.digest}")
    lines.append(f"END {len(trace.steps)} {trace.digest}")
    return "\n".join(lines) + "\n"


def format_sm_trace(trace, m, n, items=()) -> str:
    lines = _header(m, n, trace.seed, "sm", items)
    for e in trace.steps:
        key = "-" if e.key is None else encode_value(e.key)
        lines.append(f"STEP {e.n} {e.rule} {e.pid} {format_label(e.label)} {key} {e.digest}")
    lines.append(f"END {len(trace.steps)} {trace.digest}")
    return "\n".join(lines) + "\n"


def _kv(tok, lineno):
    k, sep, v = tok.partition("=")
    if not sep:
        raise TraceParseError(lineno, f"expected key=value, got {tok!r}")
    return k, v


def parse_trace(text: str) -> TraceFile:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("TRACE "):
        raise TraceParseError(1, "missing TRACE header")
    head = lines[0].split()
    if len(head) != 5 or head[1] != "v1":
        raise TraceParseError(1, f"unsupported header {lines[0]!r}")
    hdr = dict(_kv(t, 1) for t in head[2:])
    try:
        m, n = int(hdr["m"]), int(hdr["n"])
    except (KeyError, ValueError):
        raise TraceParseError(1, "header needs integer m= and n=") from None
    seed = hdr.get("seed", "-")
    tf = TraceFile(m, n, None if seed == "-" else int(seed))
    ended = False
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        if ended:
            raise TraceParseError(lineno, "content after END")
        word, _, rest = line.partition(" ")
        if word == "CONFIG":
            tf.config.append(_kv(rest, lineno))
        elif word == "STEP":
            tf.records.append(_parse_step(rest, lineno, len(tf.records), tf.kind))
        elif word == "END":
            parts = rest.split()
            if len(parts) != 2 or parts[0] != str(len(tf.records)) or parts[1] != tf.digest:
                raise TraceParseError(lineno, "END does not match the steps above it")
            ended = True
        else:
            raise TraceParseError(lineno, f"unknown record {word!r}")
    if not ended:
        raise TraceParseError(len(lines) + 1, "truncated trace: no END line")
    return tf


def _parse_step(rest, lineno, expected, kind):
    parts = rest.split(" ")
    if len(parts) != 6:
        raise TraceParseError(lineno, f"expected 6 fields, got {len(parts)}")
    idx, rule, pid, label, fld, digest = parts
    if not idx.isdigit() or int(idx) != expected:
        raise TraceParseError(lineno, f"step index {idx} out of order (expected {expected})")
    rules = SM_RULES if kind == "sm" else MP_RULES
    if rule not in rules:
        raise TraceParseError(lineno, f"unknown rule {rule!r}")
    try:
        lab = parse_label(label)
        if kind == "sm":
            fval = None if fld == "-" else decode_value(fld)
        else:
            fval = parse_uids(fld)
        return TraceRecord(expected, rule, int(pid), lab, fval, digest)
    except (ValueError, IndexError) as exc:
        raise TraceParseError(lineno, str(exc)) from None


def read_trace(path) -> TraceFile:
    return parse_trace(Path(path).read_text())

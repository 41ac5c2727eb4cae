"""Scenario configuration: flat INI files with section headers.

Example::

    [scenario]
    impl = abd
    m = 1
    n = 3
    init = 0

    [workload]
    client0 = write(5); read()

    [scheduler]
    kind = fair
    seed = 1

    [crash]
    at = 40:3

    [budget]
    steps = 5000
    depth = 30

    [checks]
    run = linearizable, completes
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from ..errors import ConfigError
from ..history import decode_value, encode_value

SCHEDULERS = ("fair", "script", "exhaustive")
_OP = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$")


@dataclass
class Scenario:
    impl: str
    m: int = 1
    n: int = 1
    init: Any = 0
    inner: Optional[str] = None
    workload: dict = field(default_factory=dict)
    scheduler: str = "fair"
    seed: int = 0
    deadline: Optional[int] = None
    script: tuple = ()
    crashes: tuple = ()
    steps: int = 10_000
    depth: int = 20
    max_states: int = 2_000_000
    dedupe: bool = True
    max_recv: Optional[int] = 1
    checks: tuple = ()
    name: str = "scenario"

    def items(self):
        """Canonical ``(key, value)`` pairs, as stored in trace headers."""
        wl = {f"workload.client{p}": format_ops(ops) for p, ops in sorted(self.workload.items())}
        out = [("scenario.impl", self.impl), ("scenario.m", str(self.m)),
               ("scenario.n", str(self.n)), ("scenario.init", encode_value(self.init))]
        if self.inner:
            out.append(("scenario.inner", self.inner))
        out += sorted(wl.items())
        out += [("scheduler.kind", self.scheduler), ("scheduler.seed", str(self.seed))]
        if self.deadline is not None:
            out.append(("scheduler.deadline", str(self.deadline)))
        if self.script:
            out.append(("scheduler.script", " ".join(self.script)))
        if self.crashes:
            out.append(("crash.at", ", ".join(f"{s}:{p}" for s, p in self.crashes)))
        out += [("budget.steps", str(self.steps)), ("budget.depth", str(self.depth)),
                ("budget.max_states", str(self.max_states)),
                ("explore.dedupe", "yes" if self.dedupe else "no"),
                ("explore.max_recv", "all" if self.max_recv is None else str(self.max_recv)),
                ("checks.run", ", ".join(self.checks))]
        return out


def parse_op(text: str, where: str):
    mo = _OP.match(text)
    if not mo:
        raise ConfigError(f"{where}: cannot parse operation {text.strip()!r}")
    method, arg = mo.group(1), mo.group(2).strip()
    if not arg:
        return method, None
    try:
        return method, decode_value(arg)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad argument {arg!r} ({exc})") from None


def parse_ops(text: str, where: str) -> list:
    return [parse_op(t, where) for t in text.split(";") if t.strip()]


def format_ops(ops) -> str:
    return "; ".join(f"{m}({'' if a is None else encode_value(a)})" for m, a in ops)


def _int(sec, key, where, default=None, minimum=None):
    raw = sec.get(key) if sec is not None else None
    if raw is None:
        if default is None:
            raise ConfigError(f"{where}: missing")
        return default
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}, got {v}")
    return v


def _list(raw):
    return tuple(x.strip() for x in raw.split(",") if x.strip()) if raw else ()


def parse_config(text: str, name="scenario") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    if not cp.has_section("scenario"):
        raise ConfigError("scenario: section missing")
    sc = cp["scenario"]
    impl = sc.get("impl")
    if not impl:
        raise ConfigError("scenario.impl: missing")
    init_raw = sc.get("init", "0")
    try:
        init = decode_value(init_raw)
    except ValueError:
        raise ConfigError(f"scenario.init: cannot parse {init_raw!r}") from None
    cfg = Scenario(impl=impl.strip(), m=_int(sc, "m", "scenario.m", 1, 1),
                   n=_int(sc, "n", "scenario.n", 1, 0), init=init,
                   inner=sc.get("inner"), name=name)

    if cp.has_section("workload"):
        for key, raw in cp["workload"].items():
            mo = re.fullmatch(r"(?:client|p)(\d+)", key)
            if not mo:
                raise ConfigError(f"workload.{key}: expected clientN")
            cfg.workload[int(mo.group(1))] = parse_ops(raw, f"workload.{key}")

    sched = cp["scheduler"] if cp.has_section("scheduler") else None
    kind = (sched.get("kind", "fair") if sched is not None else "fair").strip()
    if kind not in SCHEDULERS:
        raise ConfigError(f"scheduler.kind: expected one of {', '.join(SCHEDULERS)}, got {kind!r}")
    cfg.scheduler = kind
    cfg.seed = _int(sched, "seed", "scheduler.seed", 0)
    if sched is not None and sched.get("deadline"):
        cfg.deadline = _int(sched, "deadline", "scheduler.deadline", minimum=1)
    if sched is not None and sched.get("script"):
        cfg.script = tuple(sched.get("script").split())

    if cp.has_section("crash"):
        crashes = []
        for tok in _list(cp["crash"].get("at", "")):
            try:
                s, p = tok.split(":")
                crashes.append((int(s), int(p)))
            except ValueError:
                raise ConfigError(f"crash.at: expected step:pid, got {tok!r}") from None
        cfg.crashes = tuple(sorted(crashes))

    bud = cp["budget"] if cp.has_section("budget") else None
    cfg.steps = _int(bud, "steps", "budget.steps", cfg.steps, 1)
    cfg.depth = _int(bud, "depth", "budget.depth", cfg.depth, 0)
    cfg.max_states = _int(bud, "max_states", "budget.max_states", cfg.max_states, 1)

    if cp.has_section("explore"):
        ex = cp["explore"]
        dd = ex.get("dedupe", "yes").strip().lower()
        if dd not in ("yes", "no", "true", "false"):
            raise ConfigError(f"explore.dedupe: expected yes/no, got {dd!r}")
        cfg.dedupe = dd in ("yes", "true")
        mr = ex.get("max_recv", "1").strip()
        cfg.max_recv = None if mr == "all" else _int(ex, "max_recv", "explore.max_recv", 1, 1)

    if cp.has_section("checks"):
        cfg.checks = _list(cp["checks"].get("run", ""))
    return cfg


def load_config(path) -> Scenario:
    from pathlib import Path

    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, name=p.stem)


def config_from_items(items) -> Scenario:
    """Rebuild a scenario from the ``CONFIG`` lines of a trace file."""
    sections: dict = {}
    for key, value in items:
        sec, _, opt = key.partition(".")
        sections.setdefault(sec, {})[opt] = value
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict(sections)
    lines = []
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in cp[sec].items()]
    return parse_config("\n".join(lines))

"""Safe agreement from single-writer registers.

Every participant ``i`` owns three registers under a common key prefix:
``Val[i]`` (its proposal), ``Id[i]`` (its id once it participates) and
``Set[i]`` (the ids it saw, stored as a sorted tuple).  ``propose``
announces the value and the id, double-collects ``Id`` until two
consecutive collects agree and publishes the ids it saw.  ``resolve``
reads every ``Set``; if the smallest non-empty one is contained in the
sets of all its members, it returns the proposal of its least member,
otherwise ``None`` (no decision yet).

Propose and resolve are written as step machines so the same code runs
standalone and inside the BG refinement (under a different key prefix).
"""
from __future__ import annotations

from typing import Any, NamedTuple, Optional

from .errors import DoublePropose, PropertyViolation, UndefinedTransition
from .history import Call, Ret
from .sm import Monitor, SmProgram, read_register

BOTTOM = None


def val_key(base, i):
    return base + ("Val", i)


def id_key(base, i):
    return base + ("Id", i)


def set_key(base, i):
    return base + ("Set", i)


def sa_default(key):
    # Val and Id start at bottom, Set at the empty set
    return () if key[-2] == "Set" else BOTTOM


class Propose(NamedTuple):
    v: Any
    stage: str = "val"  # val | id | c1 | c2 | set
    c1: tuple = ()
    c2: tuple = ()
    iters: int = 0  # double-collect iterations started


class Resolve(NamedTuple):
    sets: tuple = ()
    target: Optional[int] = None  # least member of C, once the check passed


def propose_step(base, m, pid, pr: Propose, port) -> Optional[Propose]:
    """One shared access of ``propose``; ``None`` once ``Set[pid]`` is written."""
    if pr.stage == "val":
        port.write(val_key(base, pid), pr.v)
        return pr._replace(stage="id")
    if pr.stage == "id":
        port.write(id_key(base, pid), pid)
        return pr._replace(stage="c1", iters=1)
    if pr.stage == "c1":
        c1 = pr.c1 + (port.read(id_key(base, len(pr.c1))),)
        return pr._replace(c1=c1, stage="c2" if len(c1) == m else "c1")
    if pr.stage == "c2":
        c2 = pr.c2 + (port.read(id_key(base, len(pr.c2))),)
        if len(c2) < m:
            return pr._replace(c2=c2)
        if c2 == pr.c1:
            return pr._replace(c2=c2, stage="set")
        return pr._replace(c1=(), c2=(), stage="c1", iters=pr.iters + 1)
    if pr.stage == "set":
        port.write(set_key(base, pid), tuple(j for j in pr.c1 if j is not BOTTOM))
        return None
    raise ValueError(f"bad propose stage {pr.stage!r}")


def decide(sets) -> Optional[int]:
    """The least member of the core set if the sets allow a decision."""
    nonempty = [s for s in sets if s]
    if not nonempty:
        return None
    core = min(nonempty, key=lambda s: (len(s), s))
    c = set(core)
    for j in core:
        if not sets[j] or not c <= set(sets[j]):
            return None
    return min(core)


def resolve_step(base, m, pid, rs: Resolve, port):
    """One shared access of ``resolve``; returns ``(rs', done, value)``."""
    if rs.target is not None:
        return rs, True, port.read(val_key(base, rs.target))
    sets = rs.sets + (port.read(set_key(base, len(rs.sets))),)
    if len(sets) < m:
        return rs._replace(sets=sets), False, None
    target = decide(sets)
    if target is None:
        return rs._replace(sets=sets), True, BOTTOM
    return Resolve(sets, target), False, None


def resolve_now(mem_get, base, m):
    """Resolve evaluated atomically on a memory snapshot (for checks)."""
    sets = tuple(mem_get(set_key(base, j)) for j in range(m))
    target = decide(sets)
    return BOTTOM if target is None else mem_get(val_key(base, target))


# -- standalone object --------------------------------------------------------

class SaLocals(NamedTuple):
    op: Optional[str] = None  # None (idle) | propose | resolve
    sub: Any = None
    proposed: bool = False
    ret: Optional[tuple] = None  # (value,) once the response is ready


class SafeAgreementProgram(SmProgram):
    """``m`` processes sharing one safe agreement object; methods are
    ``propose(v)`` and ``resolve()``."""

    def __init__(self, m: int, base=("SA",)):
        if m < 1:
            raise ValueError("need at least one process")
        self.n = self.m = m
        self.base = tuple(base)

    def init_locals(self, pid):
        return SaLocals()

    def default(self, key):
        return sa_default(key)

    def owner(self, key):
        return key[-1]

    def idle(self, pid, loc):
        return loc.op is None

    def invoke(self, pid, loc, call):
        if call.method == "propose":
            if loc.proposed:
                raise DoublePropose(f"process {pid} already proposed")
            return SaLocals("propose", Propose(call.arg), True)
        if call.method == "resolve":
            return loc._replace(op="resolve", sub=Resolve())
        raise UndefinedTransition(f"unknown method {call.method!r}")

    def step(self, pid, loc, port):
        if loc.ret is not None:
            return loc._replace(op=None, sub=None, ret=None), loc.ret
        if loc.op == "propose":
            sub = propose_step(self.base, self.m, pid, loc.sub, port)
            if sub is None:
                return loc._replace(sub=None, ret=("ok",)), None
            return loc._replace(sub=sub), None
        sub, done, value = resolve_step(self.base, self.m, pid, loc.sub, port)
        if done:
            return loc._replace(sub=None, ret=(value,)), None
        return loc._replace(sub=sub), None


def sa_workload(proposals, resolves=1) -> dict:
    """Process ``i`` proposes ``proposals[i]`` then resolves ``resolves`` times."""
    return {i: [("propose", v)] + [("resolve", None)] * resolves
            for i, v in enumerate(proposals)}


class SaState(NamedTuple):
    decided: Any = BOTTOM
    proposed: frozenset = frozenset()
    pending: frozenset = frozenset()  # processes inside propose
    completed: frozenset = frozenset()  # processes whose propose returned
    strict: frozenset = frozenset()  # resolves invoked while no propose was pending


class SaMonitor(Monitor):
    """Agreement, validity, finite liveness, comparability of the written
    sets and the bound of ``m`` double-collect iterations."""

    def __init__(self, program: SafeAgreementProgram):
        self.p = program
        self.max_iters = 0
        self.resolves = 0
        self.bottoms = 0

    def init(self):
        return SaState()

    def on_step(self, ms: SaState, ev, g):
        p, m, base = self.p, self.p.m, self.p.base
        sub = ev.loc.sub
        if isinstance(sub, Propose):
            self.max_iters = max(self.max_iters, sub.iters)
            if sub.iters > m:
                raise PropertyViolation(f"process {ev.pid} started {sub.iters} double collects")
        if ev.rule == "SMW" and ev.key[-2] == "Set":
            check_comparable(lambda k: read_register(p, g, k), base, m)
        lab = ev.label
        if isinstance(lab, Call):
            if lab.method == "propose":
                return ms._replace(proposed=ms.proposed | {lab.arg},
                                   pending=ms.pending | {ev.pid})
            return ms if ms.pending else ms._replace(strict=ms.strict | {lab.inv})
        if not isinstance(lab, Ret):
            return ms
        if ev.pid in ms.pending:
            return ms._replace(pending=ms.pending - {ev.pid},
                               completed=ms.completed | {ev.pid})
        self.resolves += 1
        y, strict = lab.value, lab.inv in ms.strict
        ms = ms._replace(strict=ms.strict - {lab.inv})
        if y is BOTTOM:
            self.bottoms += 1
            if strict:
                raise PropertyViolation(f"resolve {lab.inv} returned bottom with no pending propose")
            return ms
        if y not in ms.proposed:
            raise PropertyViolation(f"resolve returned {y!r}, never proposed")
        if ms.decided is not BOTTOM and y != ms.decided:
            raise PropertyViolation(f"disagreement: {ms.decided!r} vs {y!r}")
        return ms._replace(decided=y)

    def on_terminal(self, ms: SaState, g, at_bound):
        if ms.pending or not ms.completed:
            return
        y = resolve_now(lambda k: read_register(self.p, g, k), self.p.base, self.p.m)
        if y is BOTTOM:
            raise PropertyViolation("no pending propose yet resolve would return bottom")
        if ms.decided is not BOTTOM and y != ms.decided:
            raise PropertyViolation(f"late resolve disagrees: {ms.decided!r} vs {y!r}")


def check_comparable(mem_get, base, m):
    sets = [set(mem_get(set_key(base, j))) for j in range(m)]
    for a in range(m):
        for b in range(a + 1, m):
            if not (sets[a] <= sets[b] or sets[b] <= sets[a]):
                raise PropertyViolation(
                    f"incomparable sets {sorted(sets[a])} / {sorted(sets[b])} under {base}")

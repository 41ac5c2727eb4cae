"""Shared-memory implementations over single-writer registers.

A program gives every process an immutable local state (control point
plus locals).  One step of a process performs at most one shared access:

* SMR -- a read of one register,
* SMW -- a write of one register owned by the process,
* SML -- a step without shared access: an invocation (labeled with the
         call) or a return (labeled with the response).

Local computation between two accesses is folded into the step that
precedes it.  Register keys are tuples; ``program.owner(key)`` names the
only process allowed to write a key and ``program.default(key)`` its
initial value, so memory is allocated lazily.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from .digest import GENESIS, chain
from .errors import (BoundExceeded, BudgetExhausted, Crashed, DoubleAccess,
                     NoEnabledStatement, PropertyViolation, SingleWriterViolation)
from .history import Call, Ret


class SmProgram:
    """Interface of a shared-memory program for ``n`` processes.

    ``step`` returns ``(loc', ret)`` where ``ret`` is ``None`` or a 1-tuple
    holding the response of the pending invocation (``(None,)`` is a
    legitimate response).
    """

    n: int = 0

    def init_locals(self, pid):
        raise NotImplementedError

    def default(self, key):
        return None

    def owner(self, key) -> int:
        raise NotImplementedError

    def idle(self, pid, loc) -> bool:
        raise NotImplementedError

    def invoke(self, pid, loc, call: Call):
        raise NotImplementedError

    def step(self, pid, loc, port):
        raise NotImplementedError


class Port:
    """The single shared access granted to one step."""

    __slots__ = ("program", "pid", "mem", "copy", "rule", "key", "value")

    def __init__(self, program, pid, mem, copy_on_write=False):
        self.program = program
        self.pid = pid
        self.mem = mem
        self.copy = copy_on_write
        self.rule = "SML"
        self.key = None
        self.value = None

    def read(self, key):
        if self.rule != "SML":
            raise DoubleAccess(f"process {self.pid} accessed {self.key} and {key} in one step")
        self.rule = "SMR"
        self.key = key
        v = self.mem.get(key, _MISSING)
        return self.program.default(key) if v is _MISSING else v

    def write(self, key, value):
        if self.rule != "SML":
            raise DoubleAccess(f"process {self.pid} accessed {self.key} and {key} in one step")
        if self.program.owner(key) != self.pid:
            raise SingleWriterViolation(f"process {self.pid} wrote {key}")
        self.rule = "SMW"
        self.key = key
        self.value = value
        if self.copy:
            self.mem = dict(self.mem)
        self.mem[key] = value


_MISSING = object()


class SmState(NamedTuple):
    locs: tuple
    mem: dict  # treated as immutable; steps copy on write
    open_calls: tuple
    issued: tuple


def sm_initial(program) -> SmState:
    k = program.n
    return SmState(tuple(program.init_locals(p) for p in range(k)), {},
                   (None,) * k, (0,) * k)


def read_register(program, g: SmState, key):
    v = g.mem.get(key, _MISSING)
    return program.default(key) if v is _MISSING else v


def next_invocation(workload, issued, pid) -> Optional[Call]:
    script = workload.get(pid, ()) if workload else ()
    k = issued[pid]
    if k >= len(script):
        return None
    method, arg = script[k]
    return Call(method, arg, f"{pid}.{k + 1}")


def is_enabled(program, g: SmState, pid, workload) -> bool:
    if not program.idle(pid, g.locs[pid]):
        return True
    return next_invocation(workload, g.issued, pid) is not None


class SmEvent(NamedTuple):
    n: int
    rule: str
    pid: int
    label: Any
    key: Any
    value: Any
    loc: Any  # local state of ``pid`` after the step
    digest: str


def sm_step(program, g: SmState, p: int, workload=None, crashed=frozenset()):
    """Execute one statement of ``p``; returns ``(label, g', port)``."""
    if p in crashed:
        raise Crashed(f"process {p} has crashed")
    loc = g.locs[p]
    port = Port(program, p, g.mem, copy_on_write=True)
    if program.idle(p, loc):
        call = next_invocation(workload, g.issued, p)
        if call is None:
            raise NoEnabledStatement(f"process {p} is idle with nothing to invoke")
        loc2 = program.invoke(p, loc, call)
        label = call
        open_calls = g.open_calls[:p] + (call,) + g.open_calls[p + 1:]
        issued = g.issued[:p] + (g.issued[p] + 1,) + g.issued[p + 1:]
    else:
        loc2, ret = program.step(p, loc, port)
        label, open_calls, issued = None, g.open_calls, g.issued
        if ret is not None:
            label = Ret(ret[0], g.open_calls[p].inv)
            open_calls = g.open_calls[:p] + (None,) + g.open_calls[p + 1:]
    locs = g.locs[:p] + (loc2,) + g.locs[p + 1:]
    return label, SmState(locs, port.mem, open_calls, issued), port


# -- traces ----------------------------------------------------------------

@dataclass
class SmTrace:
    n: int
    seed: Any = None
    config: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)
    history: list = field(default_factory=list)
    final: Optional[SmState] = None
    crashed: frozenset = frozenset()

    @property
    def digest(self):
        return self.steps[-1].digest if self.steps else GENESIS

    @property
    def schedule(self):
        return [e.pid for e in self.steps]


def step_digest(prev, pid, loc, key, value):
    return chain(prev, pid, loc, key, value)


class SmScheduler:
    def __init__(self, crashes=()):
        self.crash_plan = sorted(crashes)
        self.crashed: set = set()

    def apply_crashes(self, n):
        while self.crash_plan and self.crash_plan[0][0] <= n:
            self.crashed.add(self.crash_plan.pop(0)[1])

    def choose(self, program, g, workload, n) -> Optional[int]:
        raise NotImplementedError


class ScriptSmScheduler(SmScheduler):
    def __init__(self, pids, crashes=()):
        super().__init__(crashes)
        self.pids = list(pids)
        self.pos = 0

    def choose(self, program, g, workload, n):
        if self.pos >= len(self.pids):
            return None
        self.pos += 1
        return self.pids[self.pos - 1]


class FairSmScheduler(SmScheduler):
    """Seeded rounds: each round is a random permutation of the live,
    enabled processes, so every such process steps once per round."""

    def __init__(self, seed=0, crashes=()):
        super().__init__(crashes)
        self.seed = seed
        self.rng = random.Random(seed)
        self.round: list = []

    def choose(self, program, g, workload, n):
        for _ in range(2):
            while self.round:
                p = self.round.pop()
                if p not in self.crashed and is_enabled(program, g, p, workload):
                    return p
            live = [p for p in range(program.n)
                    if p not in self.crashed and is_enabled(program, g, p, workload)]
            if not live:
                return None
            self.rng.shuffle(live)
            self.round = live
        return None


class RandomSmScheduler(SmScheduler):
    """Any live, enabled process, chosen uniformly at random at every step
    (fair with probability 1).  Interleaves more finely than rounds."""

    def __init__(self, seed=0, crashes=()):
        super().__init__(crashes)
        self.seed = seed
        self.rng = random.Random(seed)

    def choose(self, program, g, workload, n):
        live = [p for p in range(program.n)
                if p not in self.crashed and is_enabled(program, g, p, workload)]
        return self.rng.choice(live) if live else None


def sm_done(program, g: SmState, workload, crashed) -> bool:
    return all(p in crashed or not is_enabled(program, g, p, workload)
               for p in range(program.n))


def sm_run(program, sched: SmScheduler, workload: dict, bound: int,
           digests=False) -> SmTrace:
    """Drive ``program`` until every live process is idle with an exhausted
    script.  Mutates a private memory dict in place for speed; raises
    :class:`BudgetExhausted` (with the partial trace) past ``bound``."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    g = sm_initial(program)
    locs = list(g.locs)
    mem: dict = {}
    open_calls = list(g.open_calls)
    issued = list(g.issued)
    trace = SmTrace(program.n, getattr(sched, "seed", None))
    d = GENESIS
    view = _LiveView(locs, mem, open_calls, issued)
    for n in range(bound):
        sched.apply_crashes(n)
        if sm_done(program, view, workload, sched.crashed):
            break
        p = sched.choose(program, view, workload, n)
        if p is None:
            break
        if p in sched.crashed:
            raise Crashed(f"scheduler picked crashed process {p}")
        loc = locs[p]
        port = Port(program, p, mem)
        label = None
        if program.idle(p, loc):
            call = next_invocation(workload, issued, p)
            if call is None:
                raise NoEnabledStatement(f"process {p} is idle with nothing to invoke")
            loc = program.invoke(p, loc, call)
            label = call
            open_calls[p] = call
            issued[p] += 1
        else:
            loc, ret = program.step(p, loc, port)
            if ret is not None:
                label = Ret(ret[0], open_calls[p].inv)
                open_calls[p] = None
        locs[p] = loc
        if digests:
            d = step_digest(d, p, loc, port.key, port.value)
        trace.steps.append(SmEvent(n, port.rule, p, label, port.key, port.value, loc, d))
        if label is not None:
            trace.history.append(label)
    trace.crashed = frozenset(sched.crashed)
    trace.final = SmState(tuple(locs), dict(mem), tuple(open_calls), tuple(issued))
    if not sm_done(program, view, workload, sched.crashed):
        raise BudgetExhausted(f"workload unfinished after {len(trace.steps)} steps", trace)
    return trace


class _LiveView:
    """Read-only view of ``sm_run``'s mutable state with SmState's fields."""

    __slots__ = ("locs", "mem", "open_calls", "issued")

    def __init__(self, locs, mem, open_calls, issued):
        self.locs, self.mem, self.open_calls, self.issued = locs, mem, open_calls, issued


def sm_replay(program, trace: SmTrace, workload) -> SmTrace:
    """Re-run the recorded schedule and compare digests step by step."""
    from .errors import DigestMismatch

    again = sm_run(program, ScriptSmScheduler(trace.schedule), workload,
                   max(1, len(trace.steps) + 1), digests=True)
    for a, b in zip(trace.steps, again.steps):
        if a.digest != b.digest:
            raise DigestMismatch(a.n, a.digest, b.digest)
    if len(again.steps) != len(trace.steps):
        raise DigestMismatch(len(again.steps), trace.digest, again.digest)
    return again


# -- script programs ---------------------------------------------------------

class ScriptLocals(NamedTuple):
    pc: int = 0
    reads: tuple = ()


class ScriptProgram(SmProgram):
    """Straight-line programs of ``("read", key)`` / ``("write", key, v)``
    statements, checked for single-writer discipline up front."""

    def __init__(self, scripts, owners: dict, initial=None):
        self.n = len(scripts)
        self.scripts = [tuple(s) for s in scripts]
        self.owners = dict(owners)
        self.initial = dict(initial or {})
        for pid, script in enumerate(self.scripts):
            for stmt in script:
                if stmt[0] == "write" and self.owners.get(stmt[1]) != pid:
                    raise SingleWriterViolation(
                        f"process {pid} writes {stmt[1]!r} owned by {self.owners.get(stmt[1])}")
                if stmt[0] not in ("read", "write"):
                    raise ValueError(f"unknown statement {stmt!r}")

    def init_locals(self, pid):
        return ScriptLocals()

    def default(self, key):
        return self.initial.get(key)

    def owner(self, key):
        return self.owners.get(key)

    def idle(self, pid, loc):
        return loc.pc >= len(self.scripts[pid])

    def invoke(self, pid, loc, call):
        raise NoEnabledStatement("script programs take no invocations")

    def step(self, pid, loc, port):
        stmt = self.scripts[pid][loc.pc]
        if stmt[0] == "read":
            return ScriptLocals(loc.pc + 1, loc.reads + (port.read(stmt[1]),)), None
        port.write(stmt[1], stmt[2])
        return ScriptLocals(loc.pc + 1, loc.reads), None


# -- exhaustive exploration ------------------------------------------------

class Monitor:
    """Ghost observer for exploration: ``init()`` gives a hashable state and
    ``on_step(m, event, g')`` the next one; raise
    :class:`PropertyViolation` to report a bad step."""

    def init(self):
        return ()

    def on_step(self, mstate, event: SmEvent, g: SmState):
        return mstate

    def on_terminal(self, mstate, g: SmState, at_bound: bool):
        pass


@dataclass
class SmExploration:
    states: int = 0
    terminals: int = 0
    frontier: int = 0
    max_depth: int = 0
    per_depth: dict = field(default_factory=dict)
    violation: Optional[str] = None
    witness: tuple = ()  # schedule (pids) leading to the violation


def sm_state_key(g: SmState, mstate):
    return (g.locs, frozenset(g.mem.items()), g.open_calls, g.issued, mstate)


def sm_explore(program, workload, depth: int, monitor: Optional[Monitor] = None,
               crashed=frozenset(), max_states=2_000_000) -> SmExploration:
    """Breadth-first enumeration of every schedule up to ``depth`` steps,
    merging identical (state, monitor state) nodes."""
    monitor = monitor or Monitor()
    stats = SmExploration()
    g0 = sm_initial(program)
    m0 = monitor.init()
    parent = {sm_state_key(g0, m0): None}
    layer = [(g0, m0)]

    def schedule_to(key, pid):
        out = [pid]
        while parent[key] is not None:
            key, p = parent[key]
            out.append(p)
        return tuple(reversed(out))

    for d in range(depth + 1):
        if not layer:
            break
        stats.per_depth[d] = len(layer)
        stats.max_depth = d
        nxt = []
        for g, mstate in layer:
            stats.states += 1
            if stats.states > max_states:
                raise BoundExceeded(f"more than {max_states} states",
                                    {"states": stats.states, "depth": d, "frontier": len(layer)})
            key = sm_state_key(g, mstate)
            moved = False
            if d < depth:
                for p in range(program.n):
                    if p in crashed or not is_enabled(program, g, p, workload):
                        continue
                    moved = True
                    label, g2, port = sm_step(program, g, p, workload, crashed)
                    ev = SmEvent(d, port.rule, p, label, port.key, port.value, g2.locs[p], "-")
                    try:
                        m2 = monitor.on_step(mstate, ev, g2)
                    except PropertyViolation as exc:
                        stats.violation = str(exc)
                        stats.witness = schedule_to(key, p)
                        return stats
                    k2 = sm_state_key(g2, m2)
                    if k2 not in parent:
                        parent[k2] = (key, p)
                        nxt.append((g2, m2))
            at_bound = d >= depth and any(
                p not in crashed and is_enabled(program, g, p, workload)
                for p in range(program.n))
            if at_bound or not moved:
                stats.terminals += 1
                stats.frontier += at_bound
                try:
                    monitor.on_terminal(mstate, g, at_bound)
                except PropertyViolation as exc:
                    stats.violation = str(exc)
                    up = parent[key]
                    stats.witness = schedule_to(*up) if up is not None else ()
                    return stats
        layer = nxt
    return stats

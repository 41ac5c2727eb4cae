"""Message-passing implementations as labeled transition systems.

Processes ``0 .. m-1`` are clients and ``m .. m+n-1`` are servers.  Every
process owns a local state and the pool of all messages it has ever sent;
a step advances exactly one process with one of three rules:

* CALL   -- an idle client accepts an invocation,
* RET    -- a client whose state enables a return produces the response,
* INT    -- any process consumes a (possibly empty) set of messages picked
            from the pools and addressed to it.

All nondeterminism lives in the choice of rule, process and received set;
transition functions are deterministic.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional

from .digest import GENESIS, canon, chain, memoize_type
from .errors import (BudgetExhausted, ForeignMessage, NotAClient, PendingInvocation,
                     ReturnNotEnabled, UndefinedTransition)
from .history import Call, Ret, decode_value, encode_value, is_visible


@memoize_type
class Message(NamedTuple):
    src: int
    dst: int
    payload: Any
    uid: tuple  # (sender, per-sender sequence number)


def msg_key(msg: Message):
    return msg.uid


@dataclass(frozen=True)
class MpImplementation:
    """``delta(pid, state, inp)`` returns ``(state', sent)`` or ``None`` when
    undefined; ``inp`` is a frozenset of messages, a :class:`Call` or a
    :class:`Ret`.  ``ret_enabled(pid, state)`` is the value a return would
    produce, or ``None``."""

    name: str
    m: int
    n: int
    s0: Any
    delta: Callable = field(compare=False)
    pending: Callable = field(compare=False)
    ret_enabled: Callable = field(compare=False)
    params: tuple = ()

    @property
    def size(self):
        return self.m + self.n

    def is_client(self, pid):
        return 0 <= pid < self.m

    @property
    def servers(self):
        return range(self.m, self.m + self.n)


class Proc(NamedTuple):
    state: Any
    pool: frozenset


class MpGlobalState(NamedTuple):
    """``procs`` is the global state proper; the other fields are
    bookkeeping (delivered uids per process, the open invocation of each
    client and how many calls each client has issued)."""

    procs: tuple
    delivered: tuple
    open_calls: tuple
    issued: tuple


def initial_state(impl: MpImplementation) -> MpGlobalState:
    k = impl.size
    return MpGlobalState(
        procs=tuple(Proc(impl.s0, frozenset()) for _ in range(k)),
        delivered=(frozenset(),) * k,
        open_calls=(None,) * impl.m,
        issued=(0,) * impl.m,
    )


def _check_sent(pid, sent):
    for msg in sent:
        if msg.src != pid or msg.uid[0] != pid:
            raise UndefinedTransition(f"process {pid} produced foreign message {msg}")


def _advance(g, pid, state, sent, delivered=None, open_calls=None, issued=None):
    proc = g.procs[pid]
    pool = proc.pool | sent if sent else proc.pool
    procs = g.procs[:pid] + (Proc(state, pool),) + g.procs[pid + 1:]
    return MpGlobalState(procs, g.delivered if delivered is None else delivered,
                         g.open_calls if open_calls is None else open_calls,
                         g.issued if issued is None else issued)


def step_call(impl, g: MpGlobalState, i: int, a: Call) -> MpGlobalState:
    if not impl.is_client(i):
        raise NotAClient(f"process {i} is not a client")
    s = g.procs[i].state
    if impl.pending(i, s):
        raise PendingInvocation(f"client {i} already has a pending invocation")
    res = impl.delta(i, s, a)
    if res is None:
        raise UndefinedTransition(f"client {i} cannot accept {a}")
    state, sent = res
    _check_sent(i, sent)
    open_calls = g.open_calls[:i] + (a,) + g.open_calls[i + 1:]
    issued = g.issued[:i] + (g.issued[i] + 1,) + g.issued[i + 1:]
    return _advance(g, i, state, sent, open_calls=open_calls, issued=issued)


def step_return(impl, g: MpGlobalState, i: int):
    if not impl.is_client(i):
        raise NotAClient(f"process {i} is not a client")
    s = g.procs[i].state
    y = impl.ret_enabled(i, s)
    if y is None:
        raise ReturnNotEnabled(f"client {i} has no enabled return")
    call = g.open_calls[i]
    inv = call.inv if call is not None else f"{i}.?"
    res = impl.delta(i, s, Ret(y, inv))
    if res is None:
        raise UndefinedTransition(f"client {i}: return of {y!r} undefined")
    state, sent = res
    _check_sent(i, sent)
    open_calls = g.open_calls[:i] + (None,) + g.open_calls[i + 1:]
    return _advance(g, i, state, sent, open_calls=open_calls), y


def step_internal(impl, g: MpGlobalState, j: int, recv) -> MpGlobalState:
    recv = frozenset(recv)
    for msg in recv:
        if msg.dst != j:
            raise ForeignMessage(f"{msg} is not addressed to {j}")
        if not (0 <= msg.src < impl.size) or msg not in g.procs[msg.src].pool:
            raise ForeignMessage(f"{msg} is not in any pool")
    res = impl.delta(j, g.procs[j].state, recv)
    if res is None:
        raise UndefinedTransition(f"process {j}: delta undefined on {len(recv)} messages")
    state, sent = res
    _check_sent(j, sent)
    delivered = g.delivered
    if recv:
        delivered = delivered[:j] + (delivered[j] | {m.uid for m in recv},) + delivered[j + 1:]
    return _advance(g, j, state, sent, delivered=delivered)


def messages_to(g: MpGlobalState, j: int, undelivered_only=False):
    out = [msg for p in g.procs for msg in p.pool if msg.dst == j]
    if undelivered_only:
        seen = g.delivered[j]
        out = [msg for msg in out if msg.uid not in seen]
    out.sort(key=msg_key)
    return out


def find_message(g: MpGlobalState, uid) -> Message:
    src = uid[0]
    if 0 <= src < len(g.procs):
        for msg in g.procs[src].pool:
            if msg.uid == uid:
                return msg
    raise ForeignMessage(f"no message with uid {uid}")


# -- steps as data ---------------------------------------------------------

class Step(NamedTuple):
    rule: str  # CALL | RET | INT
    pid: int
    action: Any = None  # the Call for CALL steps
    recv: tuple = ()  # sorted uids for INT steps


def apply_step(impl, g: MpGlobalState, step: Step):
    """Apply a step descriptor; returns ``(label, g')``."""
    if step.rule == "CALL":
        return step.action, step_call(impl, g, step.pid, step.action)
    if step.rule == "RET":
        g2, y = step_return(impl, g, step.pid)
        return Ret(y, g.open_calls[step.pid].inv), g2
    if step.rule == "INT":
        recv = [find_message(g, uid) for uid in step.recv]
        return None, step_internal(impl, g, step.pid, recv)
    raise ValueError(f"unknown rule {step.rule!r}")


def next_call(workload, g: MpGlobalState, i: int) -> Optional[Call]:
    script = workload.get(i, ())
    k = g.issued[i]
    if k >= len(script):
        return None
    method, arg = script[k]
    return Call(method, arg, f"{i}.{k + 1}")


def enabled_steps(impl, g: MpGlobalState, dedupe: bool = False, workload=None,
                  crashed=frozenset(), max_recv: Optional[int] = None):
    """Every enabled step: CALLs for idle clients with a next invocation in
    ``workload``, RETs that are enabled and one INT per legal received set.
    """
    out = []
    for i in range(impl.m):
        if i in crashed:
            continue
        s = g.procs[i].state
        if workload is not None and not impl.pending(i, s):
            call = next_call(workload, g, i)
            if call is not None and impl.delta(i, s, call) is not None:
                out.append(Step("CALL", i, call))
        if impl.ret_enabled(i, s) is not None:
            out.append(Step("RET", i))
    for j in range(impl.size):
        if j in crashed:
            continue
        cands = [msg.uid for msg in messages_to(g, j, undelivered_only=dedupe)]
        top = len(cands) if max_recv is None else min(max_recv, len(cands))
        for r in range(top + 1):
            for sub in itertools.combinations(cands, r):
                out.append(Step("INT", j, None, sub))
    return out


# -- traces ----------------------------------------------------------------

class TraceStep(NamedTuple):
    n: int
    rule: str
    pid: int
    label: Any
    recv: tuple
    digest: str


def state_digest(prev: str, g: MpGlobalState, pid: int) -> str:
    return chain(prev, pid, g.procs[pid])


@dataclass
class MpTrace:
    m: int
    n: int
    seed: Any = None
    config: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)
    history: list = field(default_factory=list)
    final: Optional[MpGlobalState] = None
    states: Optional[list] = None

    @property
    def digest(self):
        return self.steps[-1].digest if self.steps else GENESIS

    def record(self, step: Step, label, g: MpGlobalState, with_digest=True):
        d = state_digest(self.digest, g, step.pid) if with_digest else "-"
        self.steps.append(TraceStep(len(self.steps), step.rule, step.pid, label,
                                    step.recv, d))
        if is_visible(label):
            self.history.append(label)
        self.final = g
        if self.states is not None:
            self.states.append(g)

    def as_steps(self):
        return [Step(t.rule, t.pid, t.label if t.rule == "CALL" else None, t.recv)
                for t in self.steps]


def format_label(label) -> str:
    return "-" if label is None else str(label)


def parse_label(tok: str):
    if tok == "-":
        return None
    body, inv = tok.rsplit("#", 1)
    name, rest = body.split("(", 1)
    arg = rest[:-1]
    if name == "ret":
        return Ret(decode_value(arg), inv)
    return Call(name, decode_value(arg) if arg else None, inv)


def format_uids(uids) -> str:
    return ",".join(f"{a}:{b}" for a, b in uids) if uids else "-"


def parse_uids(tok: str) -> tuple:
    if tok == "-":
        return ()
    return tuple(tuple(int(x) for x in u.split(":")) for u in tok.split(","))


# -- schedulers ------------------------------------------------------------

class Scheduler:
    """Picks the next step; crashed processes are never scheduled again."""

    def __init__(self, crashes=()):
        # crashes: iterable of (global step index, pid)
        self.crash_plan = sorted(crashes)
        self.crashed: set = set()

    def apply_crashes(self, n):
        while self.crash_plan and self.crash_plan[0][0] <= n:
            self.crashed.add(self.crash_plan.pop(0)[1])

    def choose(self, impl, g, workload, n) -> Optional[Step]:
        raise NotImplementedError


class ScriptScheduler(Scheduler):
    def __init__(self, steps, crashes=()):
        super().__init__(crashes)
        self.script = list(steps)
        self.pos = 0

    def choose(self, impl, g, workload, n):
        if self.pos >= len(self.script):
            return None
        step = self.script[self.pos]
        self.pos += 1
        return step


class FairScheduler(Scheduler):
    """Seeded random scheduler with bounded fairness.

    Processes are visited in rounds (a fresh random permutation of the
    live processes per round), so every live process steps once per round.
    Each message to a live process is delivered within ``deadline`` steps
    of its destination; returns and calls are postponed at most
    ``deadline`` turns.
    """

    def __init__(self, seed=0, deadline=None, crashes=(), delay_prob=0.3,
                 dup_prob=0.05):
        super().__init__(crashes)
        self.seed = seed
        self.rng = random.Random(seed)
        self.deadline = deadline
        self.delay_prob = delay_prob
        self.dup_prob = dup_prob
        self.round: list = []
        self.age: dict = {}
        self.postponed: dict = {}

    def _next_pid(self, impl):
        for _ in range(2):
            while self.round:
                pid = self.round.pop()
                if pid not in self.crashed:
                    return pid
            live = [p for p in range(impl.size) if p not in self.crashed]
            self.rng.shuffle(live)
            self.round = live
        return None

    def _postpone(self, pid, d):
        k = self.postponed.get(pid, 0)
        if k < d and self.rng.random() < self.delay_prob:
            self.postponed[pid] = k + 1
            return True
        self.postponed[pid] = 0
        return False

    def choose(self, impl, g, workload, n):
        d = self.deadline or 4 * impl.size
        pid = self._next_pid(impl)
        if pid is None:
            return None
        if impl.is_client(pid):
            s = g.procs[pid].state
            if impl.ret_enabled(pid, s) is not None and not self._postpone(pid, d):
                return Step("RET", pid)
            if not impl.pending(pid, s):
                call = next_call(workload, g, pid)
                if call is not None and not self._postpone(pid, d):
                    return Step("CALL", pid, call)
        fresh = messages_to(g, pid, undelivered_only=True)
        recv = []
        for msg in fresh:
            age = self.age.get(msg.uid, 0)
            if age >= d - 1 or self.rng.random() < 0.5:
                recv.append(msg.uid)
                self.age.pop(msg.uid, None)
            else:
                self.age[msg.uid] = age + 1
        if self.dup_prob and self.rng.random() < self.dup_prob:
            old = sorted(g.delivered[pid])
            if old:
                recv.append(self.rng.choice(old))
        return Step("INT", pid, None, tuple(sorted(recv)))


def workload_done(impl, g: MpGlobalState, workload, crashed) -> bool:
    for i in range(impl.m):
        if i in crashed:
            continue
        if g.open_calls[i] is not None or g.issued[i] < len(workload.get(i, ())):
            return False
    return True


def run(impl, sched: Scheduler, workload: dict, bound: int, digests=True,
        keep_states=False) -> MpTrace:
    """Drive ``impl`` with ``sched`` until every live client has finished its
    script; raises :class:`BudgetExhausted` (carrying the partial trace)
    when ``bound`` steps are not enough."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    g = initial_state(impl)
    trace = MpTrace(impl.m, impl.n, getattr(sched, "seed", None))
    if keep_states:
        trace.states = [g]
    trace.final = g
    for n in range(bound):
        sched.apply_crashes(n)
        if workload_done(impl, g, workload, sched.crashed):
            return trace
        step = sched.choose(impl, g, workload, n)
        if step is None:
            raise BudgetExhausted(f"no step available after {n} steps", trace)
        label, g = apply_step(impl, g, step)
        trace.record(step, label, g, digests)
    if workload_done(impl, g, workload, sched.crashed):
        return trace
    raise BudgetExhausted(f"workload unfinished after {bound} steps", trace)


def replay_steps(impl, steps, digests=None):
    """Re-execute step descriptors from ``g0``; optionally compare against
    expected digests.  Returns the list of global states visited."""
    from .errors import DigestMismatch

    g = initial_state(impl)
    states = [g]
    d = GENESIS
    for idx, step in enumerate(steps):
        _, g = apply_step(impl, g, step)
        states.append(g)
        if digests is not None:
            d = state_digest(d, g, step.pid)
            if digests[idx] != d:
                raise DigestMismatch(idx, digests[idx], d)
    return states


# -- exhaustive exploration ------------------------------------------------

def successors(impl, g: MpGlobalState, dedupe=True, workload=None, crashed=frozenset(),
               max_recv=None, skip_stutter=False):
    """``(label, g')`` for every enabled step; same steps as
    :func:`enabled_steps` but without re-validating received sets.  With
    ``skip_stutter`` internal steps leaving the process unchanged are
    dropped."""
    if max_recv != 1:
        for step in enabled_steps(impl, g, dedupe, workload, crashed, max_recv):
            label, g2 = apply_step(impl, g, step)
            if not (skip_stutter and label is None and g2.procs == g.procs):
                yield label, g2
        return
    for i in range(impl.m):
        if i in crashed:
            continue
        s = g.procs[i].state
        if workload is not None and not impl.pending(i, s):
            call = next_call(workload, g, i)
            if call is not None and impl.delta(i, s, call) is not None:
                yield call, step_call(impl, g, i, call)
        if impl.ret_enabled(i, s) is not None:
            g2, y = step_return(impl, g, i)
            yield Ret(y, g.open_calls[i].inv), g2
    inbox: dict = {}
    for proc in g.procs:
        for msg in proc.pool:
            inbox.setdefault(msg.dst, []).append(msg)
    delta, delivered = impl.delta, g.delivered
    for j in range(impl.size):
        if j in crashed:
            continue
        state = g.procs[j].state
        res = delta(j, state, frozenset())
        if res is None:
            raise UndefinedTransition(f"process {j}: delta undefined on no messages")
        if not (skip_stutter and res[0] == state and not res[1]):
            yield None, _advance(g, j, res[0], res[1])
        seen = delivered[j]
        for msg in sorted(inbox.get(j, ()), key=msg_key):
            if dedupe and msg.uid in seen:
                continue
            res = delta(j, state, frozenset((msg,)))
            if res is None:
                raise UndefinedTransition(f"process {j}: delta undefined on {msg}")
            if skip_stutter and res[0] == state and not res[1]:
                continue
            dl = delivered[:j] + (seen | {msg.uid},) + delivered[j + 1:]
            yield None, _advance(g, j, res[0], res[1], delivered=dl)


@dataclass
class MpExploration:
    states: int = 0
    terminals: int = 0
    max_depth: int = 0
    frontier: int = 0
    per_depth: dict = field(default_factory=dict)
    histories: set = field(default_factory=set)
    violation: Optional[tuple] = None  # history that falsified the monitor


def explore(impl, workload, depth: int, dedupe=True, crashed=frozenset(),
            on_terminal=None, prune_stutter=True, max_states=2_000_000,
            max_recv=None, monitor=None, track_delivered=True):
    """Breadth-first exhaustive exploration to ``depth`` steps.

    Without a ``monitor`` nodes are keyed on ``(global state, history)`` and
    ``on_terminal(history, g, at_bound)`` sees every distinct history that
    reaches a leaf.  With a monitor (``init()``/``step(m, label)``, an empty
    result meaning violation) the history in the key is replaced by the
    monitor state, which merges far more nodes; exploration stops at the
    first violation and ``stats.violation`` holds a witness history.

    Internal steps that leave every process unchanged are pruned when
    ``prune_stutter`` is set; they cannot change histories.  ``max_recv``
    caps received-set sizes (``1`` is exact for implementations whose delta
    on a set equals consuming its messages one at a time).
    ``track_delivered=False`` drops the delivery bookkeeping from the key,
    which is sound when redelivering a message is always a stutter.
    """
    from .errors import BoundExceeded

    stats = MpExploration()
    g0 = initial_state(impl)
    m0 = monitor.init() if monitor is not None else ()

    def key_of(g, mstate):
        return (g.procs, g.delivered if dedupe and track_delivered else None,
                g.open_calls, g.issued, mstate)

    parent = {key_of(g0, m0): None}
    layer = [(g0, m0)]

    def witness(key, label):
        out = [label] if label is not None else []
        while parent[key] is not None:
            key, lab = parent[key]
            if lab is not None:
                out.append(lab)
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
                                    {"states": stats.states, "depth": d,
                                     "frontier": len(layer)})
            key = key_of(g, mstate)
            moved = False
            if d < depth:
                for label, g2 in successors(impl, g, dedupe, workload, crashed, max_recv,
                                            prune_stutter):
                    moved = True
                    if monitor is not None:
                        m2 = monitor.step(mstate, label) if label is not None else mstate
                        if not m2:
                            stats.violation = witness(key, label)
                            return stats
                    else:
                        m2 = mstate + (label,) if label is not None else mstate
                    k2 = key_of(g2, m2)
                    if k2 not in parent:
                        parent[k2] = (key, label)
                        nxt.append((g2, m2))
            if not moved:
                stats.terminals += 1
                if d >= depth:
                    stats.frontier += 1
                if monitor is None:
                    stats.histories.add(mstate)
                if on_terminal is not None:
                    on_terminal(mstate, g, d >= depth)
        layer = nxt
    return stats

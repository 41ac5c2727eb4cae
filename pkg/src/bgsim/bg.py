"""BG-style refinement of a message-passing implementation in shared memory.

``m`` shared-memory processes simulate the ``m`` clients and ``n`` servers
of an :class:`~bgsim.mp.MpImplementation`.  Process ``p_i`` owns

* ``client[i]``: the state and sent pool of client ``i``,
* ``server[i][j]``: its latest view of server ``j`` with a step number,

and the processes agree on step ``r`` of server ``j`` through the safe
agreement object ``SA[j][r]``.  A method call at ``p_i`` applies the call
to ``client[i]`` and then loops: return if the client can return, else
simulate one client step and try to advance every server by one step.

The module also contains the forward-simulation image of a shared-memory
state (an MP global state) and a monitor checking, step by step, that a
shared-memory trace is mapped onto a legal message-passing execution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from .errors import (RefinementViolation, SimError, UndefinedTransition,
                     UnreachableShape)
from .history import Call, Ret
from .mp import (MpGlobalState, MpTrace, Proc, Step, apply_step, find_message,
                 initial_state, replay_steps, step_call, step_internal, step_return)
from .safe_agreement import (BOTTOM, Propose, Resolve, propose_step, resolve_now,
                             resolve_step, sa_default)
from .sm import SmProgram, SmState, SmTrace, read_register

# control points; CALL is "before the loop", RETW/RET the return window
IDLE, CALL, RETW, RET = "idle", "call", "retw", "ret"
COLLECT, CLIENT_W, PROPOSE, RESOLVE, SRV_W = "collect", "client_w", "propose", "resolve", "srv_w"
POINTS = (IDLE, CALL, RETW, RET, COLLECT, CLIENT_W, PROPOSE, RESOLVE, SRV_W)


class Cell(NamedTuple):
    """Value of ``client[i]``.  ``witness`` (instrumentation only) lists the
    uids received by the internal step that produced the cell."""

    state: Any
    msgs: frozenset
    witness: tuple = ()


class SCell(NamedTuple):
    """Value of ``server[i][j]``."""

    state: Any
    msgs: frozenset
    sn: int
    witness: tuple = ()


class Proposal(NamedTuple):
    state: Any
    msgs: frozenset
    witness: tuple = ()


class BgLocals(NamedTuple):
    point: str
    client: Cell  # p_i's copy of client[i] (only p_i writes it)
    servers: tuple  # p_i's copies of server[i][m..m+n-1]
    resolved: tuple
    r: tuple
    call: Optional[Call] = None
    old_client: Optional[Cell] = None
    j: int = 0  # server loop position
    target: int = 0  # process whose step is being computed
    pos: int = 0  # next read of the collect
    lserver: tuple = ()
    msgs: frozenset = frozenset()
    sa: Any = None
    out: Any = None  # value to write next, or the return value


def client_key(i):
    return ("client", i)


def server_key(i, j):
    return ("server", i, j)


def sa_base(j, r):
    return ("SA", j, r)


def act_step(impl, pid, c: Cell, action) -> Cell:
    res = impl.delta(pid, c.state, action)
    if res is None:
        raise UndefinedTransition(f"client {pid} cannot take {action}")
    q, sent = res
    return Cell(q, c.msgs | sent if sent else c.msgs)


def most_recent(entries):
    """The entry with the largest step number; equal numbers must carry
    equal contents."""
    if not entries:
        raise ValueError("most_recent of nothing")
    best = entries[0]
    for e in entries[1:]:
        if e.sn > best.sn:
            best = e
        elif e.sn == best.sn and (e.state != best.state or e.msgs != best.msgs):
            raise UnreachableShape(f"two views of step {e.sn} disagree")
    return best


def addressed(msgs, j):
    return frozenset(x for x in msgs if x.dst == j)


def apply_internal(impl, target, state, pool, msgs):
    res = impl.delta(target, state, msgs)
    if res is None:
        raise UndefinedTransition(f"process {target}: delta undefined on {len(msgs)} messages")
    q, sent = res
    return q, pool | sent if sent else pool, tuple(sorted(x.uid for x in msgs))


def collect_messages(impl, mem_get, j) -> frozenset:
    """Every message to ``j`` in the client registers and in the most recent
    view of each server (an atomic snapshot version of the collect)."""
    m = impl.m
    out = set()
    for k in range(m):
        out |= addressed(mem_get(client_key(k)).msgs, j)
    for k in impl.servers:
        out |= addressed(most_recent([mem_get(server_key(i, k)) for i in range(m)]).msgs, j)
    return frozenset(out)


def internal_step(impl, mem_get, target, executor):
    """Collect and apply one step of ``target`` as computed by ``executor``;
    returns ``(state, msgs)``.  Clients use ``client[target]``, servers use
    the executor's own ``server[executor][target]``."""
    msgs = collect_messages(impl, mem_get, target)
    base = mem_get(client_key(target)) if impl.is_client(target) \
        else mem_get(server_key(executor, target))
    q, pool, _ = apply_internal(impl, target, base.state, base.msgs, msgs)
    return q, pool


class BgProgram(SmProgram):
    """The shared-memory implementation built from ``impl``; process ``i``
    runs the method code for client ``i``."""

    def __init__(self, impl):
        self.impl = impl
        self.n = self.m = impl.m
        self.servers = tuple(impl.servers)
        self.nreads = impl.m + impl.n * impl.m
        self._client0 = Cell(impl.s0, frozenset())
        self._server0 = SCell(impl.s0, frozenset(), 0)

    # registers
    def default(self, key):
        if key[0] == "client":
            return self._client0
        if key[0] == "server":
            return self._server0
        return sa_default(key)

    def owner(self, key):
        return key[1] if key[0] in ("client", "server") else key[-1]

    def init_locals(self, pid):
        n = self.impl.n
        return BgLocals(IDLE, self._client0, (self._server0,) * n, (True,) * n, (0,) * n)

    def idle(self, pid, loc):
        return loc.point == IDLE

    def invoke(self, pid, loc, call):
        if self.impl.pending(pid, loc.client.state):
            raise UndefinedTransition(f"client {pid} has a pending invocation")
        return loc._replace(point=CALL, call=call)

    # local control flow between shared accesses
    def _loop_head(self, pid, loc):
        y = self.impl.ret_enabled(pid, loc.client.state)
        if y is not None:
            return loc._replace(point=RETW, old_client=loc.client, out=y)
        return self._collect(loc, pid)

    def _collect(self, loc, target):
        return loc._replace(point=COLLECT, target=target, pos=0, lserver=(), msgs=frozenset())

    def _visit(self, pid, loc, j):
        impl = self.impl
        if j == impl.m + impl.n:
            return self._loop_head(pid, loc)
        loc = loc._replace(j=j)
        if loc.resolved[j - impl.m]:
            return self._collect(loc, j)
        return loc._replace(point=RESOLVE, sa=Resolve())

    def step(self, pid, loc, port):
        impl = self.impl
        pt = loc.point
        if pt == COLLECT:
            return self._collect_step(pid, loc, port), None
        if pt == PROPOSE:
            k = loc.j - impl.m
            sa = propose_step(sa_base(loc.j, loc.r[k]), impl.m, pid, loc.sa, port)
            if sa is None:
                return self._visit(pid, loc._replace(sa=None), loc.j + 1), None
            return loc._replace(sa=sa), None
        if pt == RESOLVE:
            k = loc.j - impl.m
            sa, done, s = resolve_step(sa_base(loc.j, loc.r[k]), impl.m, pid, loc.sa, port)
            if not done:
                return loc._replace(sa=sa), None
            if s is BOTTOM:
                return self._visit(pid, loc._replace(sa=None), loc.j + 1), None
            cell = SCell(s.state, s.msgs, loc.r[k], s.witness)
            resolved = loc.resolved[:k] + (True,) + loc.resolved[k + 1:]
            return loc._replace(point=SRV_W, sa=None, resolved=resolved, out=cell), None
        if pt == SRV_W:
            k = loc.j - impl.m
            port.write(server_key(pid, loc.j), loc.out)
            servers = loc.servers[:k] + (loc.out,) + loc.servers[k + 1:]
            return self._visit(pid, loc._replace(servers=servers, out=None), loc.j + 1), None
        if pt == CLIENT_W:
            port.write(client_key(pid), loc.out)
            return self._visit(pid, loc._replace(client=loc.out, out=None), impl.m), None
        if pt == CALL:
            c = act_step(impl, pid, loc.client, loc.call)
            port.write(client_key(pid), c)
            return self._loop_head(pid, loc._replace(client=c)), None
        if pt == RETW:
            c = act_step(impl, pid, loc.client, Ret(loc.out, loc.call.inv))
            port.write(client_key(pid), c)
            return loc._replace(point=RET, client=c), None
        if pt == RET:
            return loc._replace(point=IDLE, call=None, old_client=None, out=None), (loc.out,)
        raise UnreachableShape(f"process {pid} at unknown point {pt!r}")

    def _collect_step(self, pid, loc, port):
        impl, m = self.impl, self.impl.m
        pos, t = loc.pos, loc.target
        msgs, lserver = loc.msgs, loc.lserver
        if pos < m:
            c = port.read(client_key(pos))
            msgs = msgs | addressed(c.msgs, t)
        else:
            q = pos - m
            k = self.servers[q // m]
            lserver = lserver + (port.read(server_key(q % m, k)),)
            if len(lserver) == m:
                msgs = msgs | addressed(most_recent(lserver).msgs, t)
                lserver = ()
        pos += 1
        if pos < self.nreads:
            return loc._replace(pos=pos, msgs=msgs, lserver=lserver)
        if t == pid:
            q, pool, wit = apply_internal(impl, t, loc.client.state, loc.client.msgs, msgs)
            return loc._replace(point=CLIENT_W, out=Cell(q, pool, wit), pos=pos,
                                msgs=frozenset(), lserver=())
        k = t - m
        mine = loc.servers[k]
        q, pool, wit = apply_internal(impl, t, mine.state, mine.msgs, msgs)
        r = loc.r[:k] + (loc.r[k] + 1,) + loc.r[k + 1:]
        resolved = loc.resolved[:k] + (False,) + loc.resolved[k + 1:]
        return loc._replace(point=PROPOSE, sa=Propose(Proposal(q, pool, wit)), r=r,
                            resolved=resolved, pos=pos, msgs=frozenset(), lserver=())


def build_sm(impl) -> BgProgram:
    return BgProgram(impl)


# -- forward simulation image --------------------------------------------------

def client_image(impl, pid, loc: BgLocals) -> Proc:
    if loc.point == CALL:
        c = act_step(impl, pid, loc.client, loc.call)
    elif loc.point in (RETW, RET):
        c = loc.old_client
    else:
        c = loc.client
    return Proc(c.state, c.msgs)


def fwd_sim_image(program: BgProgram, g: SmState) -> MpGlobalState:
    """The MP global state associated with a shared-memory state."""
    impl, m = program.impl, program.m
    procs = []
    for i in range(m):
        loc = g.locs[i]
        if loc.point not in POINTS:
            raise UnreachableShape(f"process {i} at unknown point {loc.point!r}")
        if loc.point == IDLE and g.open_calls[i] is not None:
            raise UnreachableShape(f"process {i} idle with an open call")
        procs.append(client_image(impl, i, loc))
    for j in impl.servers:
        s = most_recent([read_register(program, g, server_key(i, j)) for i in range(m)])
        procs.append(Proc(s.state, s.msgs))
    return MpGlobalState(tuple(procs), (frozenset(),) * impl.size,
                         tuple(g.open_calls), tuple(g.issued))


# -- refinement monitor ----------------------------------------------------------

@dataclass
class RefinementReport:
    ok: bool
    steps: int = 0
    induced: list = field(default_factory=list)  # mp.Step per non-stuttering step
    induced_history: list = field(default_factory=list)
    sm_index: list = field(default_factory=list)  # SM step index of each induced step
    stutters: int = 0
    final: Optional[MpGlobalState] = None
    # induced CALL index -> SM index of the write publishing its messages
    published: dict = field(default_factory=dict)

    def mp_trace(self, impl, seed=None) -> MpTrace:
        t = MpTrace(impl.m, impl.n, seed)
        g = initial_state(impl)
        for st in self.induced:
            label, g = apply_step(impl, g, st)
            t.record(st, label, g)
        return t


def monitor_refinement(trace: SmTrace, impl, replay=True, window=2) -> RefinementReport:
    """Map every step of a trace of ``build_sm(impl)`` onto a stuttering or
    single legal MP step, raising :class:`RefinementViolation` otherwise.

    ``window`` is the induced-delivery bound: a message must be received by
    one of the first ``window`` induced internal steps of its destination
    that follow its sending (when that many exist); ``None`` skips it.
    """
    m = impl.m
    g = initial_state(impl)
    rep = RefinementReport(True)
    points = [IDLE] * m
    last_sn: dict = {}
    top: dict = {j: SCell(impl.s0, frozenset(), 0) for j in impl.servers}
    calls: dict = {}

    def fail(idx, why):
        raise RefinementViolation(idx, why)

    def take(idx, step, label, g2):
        rep.induced.append(step)
        rep.sm_index.append(idx)
        if label is not None:
            rep.induced_history.append(label)
        return g2

    def recv_of(idx, witness):
        try:
            return [find_message(g, uid) for uid in witness]
        except SimError as exc:
            fail(idx, f"received messages not in the image pools ({exc})")

    for ev in trace.steps:
        idx, p, lab = ev.n, ev.pid, ev.label
        loc = ev.loc
        try:
            img = client_image(impl, p, loc)
        except SimError as exc:
            fail(idx, f"no image for process {p}: {exc}")
        prev_point = points[p]
        points[p] = loc.point
        if isinstance(lab, Call):
            try:
                g2 = step_call(impl, g, p, lab)
            except SimError as exc:
                fail(idx, f"call {lab} is not a legal CALL step: {exc}")
            if g2.procs[p] != img:
                fail(idx, f"call {lab}: image differs from the CALL successor")
            g = take(idx, Step("CALL", p, lab), lab, g2)
            calls[p] = len(rep.induced) - 1
            continue
        if isinstance(lab, Ret):
            try:
                g2, y = step_return(impl, g, p)
            except SimError as exc:
                fail(idx, f"return {lab} is not a legal RET step: {exc}")
            if y != lab.value or g2.procs[p] != img:
                fail(idx, f"return {lab}: MP return gives {y!r} / different state")
            g = take(idx, Step("RET", p), Ret(y, lab.inv), g2)
            continue
        if ev.rule == "SMW" and ev.key[0] == "client" and prev_point == CLIENT_W:
            recv = recv_of(idx, ev.value.witness)
            try:
                g2 = step_internal(impl, g, p, recv)
            except SimError as exc:
                fail(idx, f"client step is not a legal INT step: {exc}")
            if g2.procs[p] != img:
                fail(idx, "client write differs from the INT successor")
            g = take(idx, Step("INT", p, None, ev.value.witness), None, g2)
            continue
        if img != g.procs[p]:
            fail(idx, f"image of client {p} changed on a stuttering step")
        if ev.rule == "SMW" and ev.key[0] == "client" and prev_point == CALL:
            rep.published[calls.pop(p)] = idx
        if ev.rule == "SMW" and ev.key[0] == "server":
            j, cell = ev.key[2], ev.value
            if cell.sn < last_sn.get((p, j), 0):
                fail(idx, f"server[{p}][{j}].sn decreased to {cell.sn}")
            last_sn[(p, j)] = cell.sn
            best = top[j]
            if cell.sn > best.sn:
                if cell.sn != best.sn + 1:
                    fail(idx, f"server {j} jumps from step {best.sn} to {cell.sn}")
                recv = recv_of(idx, cell.witness)
                try:
                    g2 = step_internal(impl, g, j, recv)
                except SimError as exc:
                    fail(idx, f"server {j} step is not a legal INT step: {exc}")
                if g2.procs[j] != Proc(cell.state, cell.msgs):
                    fail(idx, f"server {j} step {cell.sn} differs from the INT successor")
                top[j] = cell
                g = take(idx, Step("INT", j, None, cell.witness), None, g2)
                continue
            if cell.sn == best.sn and (cell.state != best.state or cell.msgs != best.msgs):
                fail(idx, f"two writes of server {j} step {cell.sn} disagree")
        rep.stutters += 1

    rep.steps = len(trace.steps)
    rep.final = g
    if rep.induced_history != list(trace.history):
        fail(len(trace.steps), "induced history differs from the shared-memory history")
    if replay:
        states = replay_steps(impl, [s for s in rep.induced])
        if states[-1].procs != g.procs:
            fail(len(trace.steps), "replaying the induced steps ends elsewhere")
    if window is not None:
        _check_delivery(impl, rep, window)
    return rep


def _check_delivery(impl, rep: RefinementReport, window: int):
    g = initial_state(impl)
    pending: dict = {}  # destination -> {uid: remaining chances}
    for k, st in enumerate(rep.induced):
        before = g.procs[st.pid].pool
        _, g = apply_step(impl, g, st)
        if st.rule == "INT":
            waiting = pending.get(st.pid, {})
            got = set(st.recv)
            now = rep.sm_index[k]
            for uid, (left, armed) in list(waiting.items()):
                if uid in got:
                    del waiting[uid]
                elif now > armed:
                    waiting[uid] = (left - 1, armed)
                    if left == 1:
                        raise RefinementViolation(
                            rep.sm_index[k],
                            f"message {uid} to {st.pid} missed {window} internal steps")
        # messages of a call reach the shared register only at the next
        # write; if the process crashed before it, no collect can see them
        armed = rep.sm_index[k]
        if st.rule == "CALL":
            if k not in rep.published:
                continue
            armed = rep.published[k]
        for msg in g.procs[st.pid].pool - before:
            pending.setdefault(msg.dst, {})[msg.uid] = (window, armed)


# -- liveness instrumentation ----------------------------------------------------

def stalled_servers(program: BgProgram, g: SmState, crashed) -> list:
    """Servers that no live process can advance any more: a live process is
    waiting on ``SA[j][r]``, that object cannot decide, and a crashed
    process is inside its propose."""
    impl, m = program.impl, program.m
    out = []
    for j in impl.servers:
        k = j - impl.m
        for p in range(m):
            if p in crashed:
                continue
            loc = g.locs[p]
            if loc.resolved[k]:
                continue
            base = sa_base(j, loc.r[k])
            if resolve_now(lambda key: read_register(program, g, key), base, m) is not BOTTOM:
                continue
            if any(g.locs[c].point == PROPOSE and g.locs[c].j == j and g.locs[c].r[k] == loc.r[k]
                   for c in crashed):
                out.append(j)
                break
    return out

import pytest
from hypothesis import given, settings, strategies as st

from bgsim.abd import abd_implementation
from bgsim.errors import (BudgetExhausted, ForeignMessage, PendingInvocation,
                          ReturnNotEnabled)
from bgsim.history import Call, Ret, check_well_formed
from bgsim.mp import (FairScheduler, Message, Step, apply_step, enabled_steps, explore,
                      initial_state, messages_to, run, step_call, step_internal,
                      step_return)
from bgsim.toy import ping_implementation


def deliver_one(impl, g, dst, src=None, kind=None):
    """Deliver the first undelivered message to ``dst`` (optionally from
    ``src`` / with payload kind ``kind``)."""
    for msg in messages_to(g, dst, undelivered_only=True):
        if src is not None and msg.src != src:
            continue
        p = msg.payload
        if kind is not None and (p[0] if isinstance(p, tuple) else p) != kind:
            continue
        return step_internal(impl, g, dst, [msg])
    raise AssertionError(f"nothing to deliver to {dst}")


# -- step_call ----------------------------------------------------------------

def test_ping_call_sends_one_message():
    impl = ping_implementation()
    g = step_call(impl, initial_state(impl), 0, Call("ping", None, "0.1"))
    assert len(g.procs[0].pool) == 1
    assert impl.pending(0, g.procs[0].state)


def test_abd_write_call_queries_every_server():
    impl = abd_implementation(1, 3)
    g = step_call(impl, initial_state(impl), 0, Call("write", 5, "0.1"))
    pool = g.procs[0].pool
    assert sorted(m.dst for m in pool) == [1, 2, 3]
    assert {m.payload[0] for m in pool} == {"query"}


def test_call_while_pending_rejected():
    impl = ping_implementation()
    g = step_call(impl, initial_state(impl), 0, Call("ping", None, "0.1"))
    with pytest.raises(PendingInvocation):
        step_call(impl, g, 0, Call("ping", None, "0.2"))


# -- step_return ----------------------------------------------------------------

def test_ping_return_after_reply():
    impl = ping_implementation()
    g = step_call(impl, initial_state(impl), 0, Call("ping", None, "0.1"))
    g = deliver_one(impl, g, 1)
    g = deliver_one(impl, g, 0)
    g2, y = step_return(impl, g, 0)
    assert y == "pong"
    assert not impl.pending(0, g2.procs[0].state)


def test_return_without_pending():
    impl = ping_implementation()
    with pytest.raises(ReturnNotEnabled):
        step_return(impl, initial_state(impl), 0)


def test_abd_write_returns_ok_after_two_of_three():
    impl = abd_implementation(1, 3)
    g = step_call(impl, initial_state(impl), 0, Call("write", 5, "0.1"))
    for s in (1, 2):
        g = deliver_one(impl, g, s)
    for s in (1, 2):
        g = deliver_one(impl, g, 0, src=s)
    # query quorum reached: the update phase went out to all three servers
    assert sum(m.payload[0] == "update" for m in g.procs[0].pool) == 3
    with pytest.raises(ReturnNotEnabled):
        step_return(impl, g, 0)
    for s in (1, 2):
        g = deliver_one(impl, g, s, kind="update")
    for s in (1, 2):
        g = deliver_one(impl, g, 0, src=s, kind="update-ack")
    _, y = step_return(impl, g, 0)
    assert y == "ok"


# -- step_internal ----------------------------------------------------------------

def test_empty_delivery_is_identity_on_servers():
    impl = abd_implementation(1, 3)
    g = initial_state(impl)
    assert step_internal(impl, g, 2, []) == g


def test_server_adopts_larger_timestamp_and_acks():
    impl = abd_implementation(1, 1)
    g = initial_state(impl)
    upd = Message(0, 1, ("update", 1, (1, 0), 9), (0, 1))
    g = g._replace(procs=(g.procs[0]._replace(pool=frozenset({upd})), g.procs[1]))
    g2 = step_internal(impl, g, 1, [upd])
    srv = g2.procs[1].state
    assert (srv.value, srv.ts) == (9, (1, 0))
    (ack,) = g2.procs[1].pool
    assert ack.dst == 0 and ack.payload == ("update-ack", 1)


def test_foreign_message_rejected():
    impl = abd_implementation(1, 3)
    g = step_call(impl, initial_state(impl), 0, Call("read", None, "0.1"))
    to2 = [m for m in g.procs[0].pool if m.dst == 2]
    with pytest.raises(ForeignMessage):
        step_internal(impl, g, 1, to2)


# -- enabled_steps ----------------------------------------------------------------

def test_enabled_at_start():
    impl = abd_implementation(1, 1)
    wl = {0: [("write", 1)]}
    steps = enabled_steps(impl, initial_state(impl), workload=wl)
    assert steps == [Step("CALL", 0, Call("write", 1, "0.1")), Step("INT", 0), Step("INT", 1)]


def test_enabled_after_one_send_and_dedupe():
    impl = abd_implementation(1, 1)
    g = step_call(impl, initial_state(impl), 0, Call("read", None, "0.1"))
    (x,) = g.procs[0].pool
    ints = {s.recv for s in enabled_steps(impl, g) if s.pid == 1}
    assert ints == {(), (x.uid,)}
    g = step_internal(impl, g, 1, [x])
    assert {s.recv for s in enabled_steps(impl, g) if s.pid == 1} == {(), (x.uid,)}
    assert {s.recv for s in enabled_steps(impl, g, dedupe=True) if s.pid == 1} == {()}


# -- run ---------------------------------------------------------------------------

def test_abd_fair_run_read_sees_write():
    impl = abd_implementation(1, 3)
    tr = run(impl, FairScheduler(seed=7, crashes=[(0, 3)]), {0: [("write", 5), ("read", None)]}, 5000)
    assert tr.history[-1] == Ret(5, "0.2")


def test_empty_workload_empty_history():
    impl = abd_implementation(1, 3)
    tr = run(impl, FairScheduler(seed=1), {}, 10)
    assert tr.history == []


def test_majority_crashed_write_never_returns():
    impl = abd_implementation(1, 3)
    wl = {0: [("write", 5)]}
    stats = explore(impl, wl, 12, crashed=frozenset({2, 3}), max_recv=1)
    assert stats.frontier == 0  # the exploration is complete
    assert all(not any(isinstance(a, Ret) for a in h) for h in stats.histories)
    with pytest.raises(BudgetExhausted):
        run(impl, FairScheduler(seed=0, crashes=[(0, 2), (0, 3)]), wl, 3000)


# -- invariants over random runs ----------------------------------------------------

WL = {0: [("write", 1), ("read", None)], 1: [("write", 2), ("read", None)]}


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), crash=st.sampled_from([None, 2, 3, 4]))
def test_run_invariants(seed, crash):
    impl = abd_implementation(2, 3)
    crashes = [(seed % 40, crash)] if crash is not None else []
    tr = run(impl, FairScheduler(seed=seed, crashes=crashes), WL, 5000, keep_states=True)
    check_well_formed(tr.history)
    for k, ts in enumerate(tr.steps):
        before, after = tr.states[k], tr.states[k + 1]
        # pools only grow
        assert all(a.pool <= b.pool for a, b in zip(before.procs, after.procs))
        # re-applying the recorded rule to the pre-state gives the post-state
        st_ = Step(ts.rule, ts.pid, ts.label if ts.rule == "CALL" else None, ts.recv)
        assert apply_step(impl, before, st_)[1] == after


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_run_is_deterministic(seed):
    impl = abd_implementation(2, 3)
    a = run(impl, FairScheduler(seed=seed), WL, 5000)
    b = run(impl, FairScheduler(seed=seed), WL, 5000)
    assert a.steps == b.steps and a.digest == b.digest


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_bounded_delivery(seed):
    impl = abd_implementation(2, 3)
    d = 4 * impl.size
    sched = FairScheduler(seed=seed, deadline=d, crashes=[(20, 4)])
    tr = run(impl, sched, WL, 5000, keep_states=True)
    waiting = {}  # uid -> (destination, internal steps it has taken since)
    for k, ts in enumerate(tr.steps):
        if ts.rule == "INT":
            for uid in ts.recv:
                waiting.pop(uid, None)
            for uid, (dst, n) in list(waiting.items()):
                if dst == ts.pid:
                    waiting[uid] = (dst, n + 1)
                    assert n + 1 < d, f"message {uid} waited {n + 1} steps"
        before, after = tr.states[k].procs[ts.pid].pool, tr.states[k + 1].procs[ts.pid].pool
        for msg in after - before:
            waiting[msg.uid] = (msg.dst, 0)
    for uid, (dst, n) in waiting.items():
        assert dst in sched.crashed or n < d

"""Quorum-replicated atomic register (ABD) as a message-passing implementation.

Servers hold ``(value, timestamp)``.  Timestamps are ``(seq, writer)`` pairs
compared lexicographically.  Multi-writer operations run two phases each:

* read:  query every server, wait for a majority, adopt the reply with the
  largest timestamp, push it back to a majority, return the value;
* write: query a majority for the largest timestamp, pick
  ``(seq + 1, writer id)``, push the new value to a majority, return ``ok``.

The single-writer variant lets only client 0 write and skips the write's
query phase (the writer keeps its own sequence number).

Every message carries a phase nonce so late replies from an earlier phase
are ignored.  Servers remember the uids they have processed, so a
redelivered request is not answered twice, and number each reply after
the request it answers.
"""
from __future__ import annotations

from typing import Any, NamedTuple, Optional

from .history import Call, Ret
from .mp import Message, MpImplementation

INIT_TS = (0, -1)
OK = "ok"


class AbdServer(NamedTuple):
    value: Any
    ts: tuple = INIT_TS
    seen: frozenset = frozenset()


class AbdClient(NamedTuple):
    phase: str = "idle"  # idle | rq | rwb | wq | wp | done
    method: Optional[str] = None
    arg: Any = None
    nonce: int = 0
    acks: frozenset = frozenset()
    best: Optional[tuple] = None  # (ts, value) with the largest ts seen
    result: Any = None
    seq: int = 0
    last: Any = None
    wseq: int = 0


def majority(n: int) -> int:
    return n // 2 + 1


REPLY_SPAN = 1 << 20


def reply_seq(request: Message) -> int:
    # A server answers each request once, so numbering replies after the
    # request keeps uids unique while making them independent of the order
    # in which requests were delivered.
    return request.uid[0] * REPLY_SPAN + request.uid[1]


def abd_implementation(m: int, n: int, init=0, single_writer=False) -> MpImplementation:
    if n < 1:
        raise ValueError("ABD needs at least one server")
    quorum = majority(n)
    servers = range(m, m + n)

    def send_all(pid, seq, payload):
        msgs = []
        for j in servers:
            seq += 1
            msgs.append(Message(pid, j, payload, (pid, seq)))
        return seq, frozenset(msgs)

    def server_delta(pid, state, msgs):
        st = state if state is not None else AbdServer(init)
        new = sorted((x for x in msgs if x.uid not in st.seen), key=lambda x: x.uid)
        if not new:
            return state, frozenset()
        value, ts = st.value, st.ts
        out = []
        for msg in new:
            kind = msg.payload[0]
            if kind == "query":
                out.append(Message(pid, msg.src, ("query-ack", msg.payload[1], ts, value),
                                   (pid, reply_seq(msg))))
            elif kind == "update":
                _, nonce, wts, wval = msg.payload
                if wts > ts:
                    ts, value = wts, wval
                out.append(Message(pid, msg.src, ("update-ack", nonce),
                                   (pid, reply_seq(msg))))
        seen = st.seen | {x.uid for x in new}
        return AbdServer(value, ts, seen), frozenset(out)

    def client_call(pid, st, call):
        if st.phase != "idle":
            return None
        if call.method == "read":
            nonce = st.nonce + 1
            seq, sent = send_all(pid, st.seq, ("query", nonce))
            return st._replace(phase="rq", method="read", arg=None, nonce=nonce,
                               acks=frozenset(), best=None, result=None, seq=seq), sent
        if call.method != "write":
            return None
        if single_writer:
            if pid != 0:
                return None
            wseq = st.wseq + 1
            nonce = st.nonce + 1
            seq, sent = send_all(pid, st.seq, ("update", nonce, (wseq, pid), call.arg))
            return st._replace(phase="wp", method="write", arg=call.arg, nonce=nonce,
                               acks=frozenset(), best=None, result=OK, seq=seq,
                               wseq=wseq), sent
        nonce = st.nonce + 1
        seq, sent = send_all(pid, st.seq, ("query", nonce))
        return st._replace(phase="wq", method="write", arg=call.arg, nonce=nonce,
                           acks=frozenset(), best=None, result=None, seq=seq), sent

    def client_recv(pid, state, st, msgs):
        # replies are filtered by nonce and acks are a set, so clients need no
        # uid bookkeeping: stale or repeated messages leave the state alone
        if st.phase in ("idle", "done"):
            return state, frozenset()
        acks, best = st.acks, st.best
        want = "query-ack" if st.phase in ("rq", "wq") else "update-ack"
        for msg in sorted(msgs, key=lambda x: x.uid):
            p = msg.payload
            if p[0] != want or p[1] != st.nonce:
                continue
            acks = acks | {msg.src}
            if want == "query-ack":
                cand = (p[2], p[3])
                if best is None or cand[0] > best[0]:
                    best = cand
        if acks == st.acks and best == st.best:
            return state, frozenset()
        st = st._replace(acks=acks, best=best)
        if len(acks) < quorum:
            return st, frozenset()
        nonce = st.nonce + 1
        if st.phase == "rq":
            ts, value = best
            seq, sent = send_all(pid, st.seq, ("update", nonce, ts, value))
            return st._replace(phase="rwb", nonce=nonce, acks=frozenset(),
                               result=value, seq=seq), sent
        if st.phase == "wq":
            ts = (best[0][0] + 1, pid)
            seq, sent = send_all(pid, st.seq, ("update", nonce, ts, st.arg))
            return st._replace(phase="wp", nonce=nonce, acks=frozenset(),
                               result=OK, seq=seq), sent
        return st._replace(phase="done"), frozenset()

    def delta(pid, state, inp):
        if pid >= m:
            if not isinstance(inp, frozenset):
                return None
            return server_delta(pid, state, inp)
        st = state if state is not None else AbdClient()
        if isinstance(inp, Call):
            return client_call(pid, st, inp)
        if isinstance(inp, Ret):
            if st.phase != "done" or inp.value != st.result:
                return None
            return st._replace(phase="idle", acks=frozenset(), best=None,
                               result=None, last=inp.value), frozenset()
        return client_recv(pid, state, st, inp)

    def pending(pid, state):
        return state is not None and state.phase != "idle"

    def ret_enabled(pid, state):
        if state is not None and state.phase == "done":
            return state.result
        return None

    name = "abd_sw" if single_writer else "abd"
    return MpImplementation(name, m, n, None, delta, pending, ret_enabled,
                            params=(("init", init), ("single_writer", single_writer)))

"""A one-client, one-server ping/pong implementation used in tests."""
from __future__ import annotations

from typing import NamedTuple

from .history import Call, Ret
from .mp import Message, MpImplementation


class PingState(NamedTuple):
    phase: str = "idle"  # idle | wait | ready
    seq: int = 0
    seen: frozenset = frozenset()


def ping_implementation() -> MpImplementation:
    m, n = 1, 1
    server = m

    def delta(pid, state, inp):
        st = state if state is not None else PingState()
        if isinstance(inp, Call):
            if pid != 0 or st.phase != "idle" or inp.method != "ping":
                return None
            seq = st.seq + 1
            return st._replace(phase="wait", seq=seq), frozenset(
                {Message(0, server, "ping", (0, seq))})
        if isinstance(inp, Ret):
            if pid != 0 or st.phase != "ready" or inp.value != "pong":
                return None
            return st._replace(phase="idle"), frozenset()
        new = sorted((x for x in inp if x.uid not in st.seen), key=lambda x: x.uid)
        if not new:
            return state, frozenset()
        seen = st.seen | {x.uid for x in new}
        if pid == server:
            seq, out = st.seq, []
            for msg in new:
                if msg.payload == "ping":
                    seq += 1
                    out.append(Message(server, msg.src, "pong", (server, seq)))
            return st._replace(seq=seq, seen=seen), frozenset(out)
        phase = st.phase
        if phase == "wait" and any(x.payload == "pong" for x in new):
            phase = "ready"
        return st._replace(phase=phase, seen=seen), frozenset()

    def pending(pid, state):
        return state is not None and state.phase != "idle"

    def ret_enabled(pid, state):
        return "pong" if state is not None and state.phase == "ready" else None

    return MpImplementation("ping", m, n, None, delta, pending, ret_enabled)

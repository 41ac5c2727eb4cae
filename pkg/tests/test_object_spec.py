import pytest
from hypothesis import given, settings, strategies as st

from bgsim.errors import IllegalAtomicStep, MalformedHistory, TraceParseError
from bgsim.history import (Call, Lin, Ret, format_history, parse_history, sequential)
from bgsim.objects import (AtomicState, atomic_enabled, atomic_step, is_linearization,
                           make_spec, parse_spec)

REG = make_spec("mw_register", 0)


def test_empty_histories():
    assert is_linearization((), (), REG)


def test_overlapping_write_read():
    h1 = (Call("write", 1, "a"), Call("read", None, "b"), Ret("ok", "a"), Ret(1, "b"))
    h2 = sequential([("write", 1, "ok", "a"), ("read", None, 1, "b")])
    assert is_linearization(h1, h2, REG)
    # the other order would make the read return 0
    h2_bad = sequential([("read", None, 1, "b"), ("write", 1, "ok", "a")])
    assert not is_linearization(h1, h2_bad, REG)


def test_read_of_unwritten_value():
    h1 = (Call("read", None, "b"), Ret(1, "b"))
    for h2 in (sequential([("read", None, 1, "b")]), sequential([("read", None, 0, "b")]), ()):
        assert not is_linearization(h1, h2, REG)


def test_pending_call_may_be_dropped_or_completed():
    h1 = (Call("write", 3, "a"), Call("read", None, "b"), Ret(3, "b"))
    assert is_linearization(h1, sequential([("write", 3, "ok", "a"), ("read", None, 3, "b")]), REG)
    h1 = (Call("write", 3, "a"), Call("read", None, "b"), Ret(0, "b"))
    assert is_linearization(h1, sequential([("read", None, 0, "b")]), REG)


def test_real_time_order_respected():
    h1 = (Call("write", 1, "a"), Ret("ok", "a"), Call("read", None, "b"), Ret(0, "b"))
    h2 = sequential([("read", None, 0, "b"), ("write", 1, "ok", "a")])
    assert not is_linearization(h1, h2, REG)


def test_second_argument_must_be_sequential():
    with pytest.raises(MalformedHistory):
        is_linearization((), (Call("read", None, "b"),), REG)


# -- atomic object ----------------------------------------------------------------

def test_atomic_steps():
    s = atomic_step(AtomicState(), Call("write", 1, "a"), REG)
    assert s.h == (Call("write", 1, "a"),) and s.hs == ()
    s = atomic_step(s, Lin("a"), REG)
    assert s.hs == (Call("write", 1, "a"), Ret("ok", "a"))
    s = atomic_step(s, Ret("ok", "a"), REG)
    assert s.h[-1] == Ret("ok", "a")
    s = atomic_step(s, Call("read", None, "b"), REG)
    with pytest.raises(IllegalAtomicStep):
        atomic_step(s, Ret(1, "b"), REG)


def _explore_atomic(spec, script, depth):
    out, layer = [], [AtomicState()]
    for _ in range(depth):
        nxt = []
        for s in layer:
            out.append(s)
            nxt.extend(t for _, t in atomic_enabled(s, spec, script))
        layer = nxt
    return out + layer


def test_atomic_object_histories_linearize():
    script = {0: [("write", 1), ("read", None)], 1: [("write", 2)], 2: [("read", None)]}
    states = _explore_atomic(REG, script, 7)
    assert len(states) > 1000
    for s in states:
        assert REG.accepts(s.hs)
        assert is_linearization(s.h, s.hs, REG)


# -- sequential objects ----------------------------------------------------------------

def test_register_apply():
    assert REG.apply(0, "write", 7) == ("ok", 7)
    assert REG.apply(7, "read", None) == (7, 7)


def test_max_register():
    spec = make_spec("max_register", 0)
    v = spec.initial
    for x in (3, 1):
        _, v = spec.apply(v, "writeMax", x)
    assert spec.apply(v, "readMax", None)[0] == 3


def test_counter():
    spec = make_spec("counter")
    v = spec.initial
    for _ in range(3):
        _, v = spec.apply(v, "increment", None)
    assert spec.apply(v, "read", None)[0] == 3


def test_snapshot_and_parse_spec():
    spec = parse_spec("snapshot:3:0")
    _, v = spec.apply(spec.initial, "update", (1, 5))
    assert spec.apply(v, "scan", None)[0] == (0, 5, 0)
    assert parse_spec("mw_register:4").initial == 4
    with pytest.raises(ValueError):
        make_spec("queue")


# -- history files ----------------------------------------------------------------

@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["write", "read"]), st.integers(0, 3)),
                max_size=6))
def test_history_file_roundtrip(ops):
    h = sequential([(m, a if m == "write" else None, "ok" if m == "write" else a, f"{i}.1")
                    for i, (m, a) in enumerate(ops)])
    assert parse_history(format_history(h)) == h


def test_history_parse_error_has_line():
    with pytest.raises(TraceParseError) as ei:
        parse_history("CALL a write 1\nBOGUS\n")
    assert ei.value.lineno == 2

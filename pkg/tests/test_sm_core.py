import pytest

from bgsim.errors import Crashed, DoubleAccess, NoEnabledStatement, SingleWriterViolation
from bgsim.sm import (FairSmScheduler, Monitor, Port, RandomSmScheduler, ScriptProgram,
                      ScriptSmScheduler, read_register, sm_explore, sm_initial, sm_run, sm_step)

X, Y = ("X",), ("Y",)


def test_owner_write_then_read():
    prog = ScriptProgram([[("write", X, 5), ("read", X)]], {X: 0})
    g = sm_initial(prog)
    label, g, port = sm_step(prog, g, 0)
    assert label is None and (port.rule, port.key, port.value) == ("SMW", X, 5)
    _, g, port = sm_step(prog, g, 0)
    assert port.rule == "SMR" and g.locs[0].reads == (5,)
    assert read_register(prog, g, X) == 5


def test_non_owner_write_rejected_at_construction():
    with pytest.raises(SingleWriterViolation):
        ScriptProgram([[("write", X, 1)], [("write", X, 2)]], {X: 0})


def test_port_allows_one_access():
    prog = ScriptProgram([[]], {X: 0})
    port = Port(prog, 0, {})
    port.read(X)
    with pytest.raises(DoubleAccess):
        port.write(X, 1)


def test_port_rejects_foreign_write():
    prog = ScriptProgram([[], []], {X: 0})
    with pytest.raises(SingleWriterViolation):
        Port(prog, 1, {}).write(X, 1)


class Outcomes(Monitor):
    def __init__(self, prog):
        self.prog = prog
        self.seen = set()

    def on_terminal(self, mstate, g, at_bound):
        self.seen.add(tuple(loc.reads[0] for loc in g.locs))


def test_read_then_write_outcomes():
    # each process reads the other's register, then writes its own
    prog = ScriptProgram([[("read", Y), ("write", X, 1)], [("read", X), ("write", Y, 1)]],
                         {X: 0, Y: 1}, initial={X: 0, Y: 0})
    mon = Outcomes(prog)
    stats = sm_explore(prog, {}, 10, monitor=mon)
    assert stats.frontier == 0 and stats.violation is None
    assert mon.seen == {(0, 0), (0, 1), (1, 0)}


def test_empty_workload():
    prog = ScriptProgram([[], []], {})
    tr = sm_run(prog, FairSmScheduler(seed=0), {}, 10)
    assert tr.steps == [] and tr.history == []
    with pytest.raises(NoEnabledStatement):
        sm_step(prog, sm_initial(prog), 0)


def test_crashed_process_stops_others_continue():
    prog = ScriptProgram([[("write", X, 1)] * 3, [("write", Y, 2)] * 3], {X: 0, Y: 1})
    tr = sm_run(prog, FairSmScheduler(seed=4, crashes=[(0, 0)]), {}, 100)
    assert {e.pid for e in tr.steps} == {1} and len(tr.steps) == 3
    with pytest.raises(Crashed):
        sm_step(prog, sm_initial(prog), 0, crashed=frozenset({0}))


def test_script_scheduler_and_digest_determinism():
    prog = ScriptProgram([[("write", X, 1), ("read", Y)], [("write", Y, 2), ("read", X)]],
                         {X: 0, Y: 1})
    a = sm_run(prog, ScriptSmScheduler([1, 0, 0, 1]), {}, 10, digests=True)
    b = sm_run(prog, ScriptSmScheduler([1, 0, 0, 1]), {}, 10, digests=True)
    assert a.schedule == [1, 0, 0, 1] and a.digest == b.digest
    c = sm_run(prog, ScriptSmScheduler([0, 1, 0, 1]), {}, 10, digests=True)
    assert c.digest != a.digest


def test_random_scheduler_is_seeded():
    prog = ScriptProgram([[("write", X, i) for i in range(4)], [("read", X)] * 4], {X: 0})
    a = sm_run(prog, RandomSmScheduler(seed=9), {}, 100)
    b = sm_run(prog, RandomSmScheduler(seed=9), {}, 100)
    assert a.schedule == b.schedule and sorted(a.schedule) == [0] * 4 + [1] * 4

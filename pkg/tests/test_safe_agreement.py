import pytest

from bgsim.errors import DoublePropose, PropertyViolation
from bgsim.history import Ret
from bgsim.safe_agreement import (BOTTOM, SafeAgreementProgram, SaMonitor, check_comparable,
                                  decide, sa_workload, set_key)
from bgsim.sm import (FairSmScheduler, ScriptSmScheduler, read_register, sm_explore,
                      sm_initial, sm_run, sm_step)


def drive(prog, wl, pids):
    g, out = sm_initial(prog), []
    for p in pids:
        label, g, _ = sm_step(prog, g, p, wl)
        out.append(label)
    return g, out


def test_solo_propose_single_iteration():
    prog = SafeAgreementProgram(2)
    wl = {0: [("propose", 5)]}
    g, _ = drive(prog, wl, [0] * 3)
    assert g.locs[0].sub.iters == 1
    g, labels = drive(prog, wl, [0] * 9)
    assert read_register(prog, g, set_key(prog.base, 0)) == (0,)
    assert labels[-1] == Ret("ok", "0.1")


def test_interleaved_id_forces_second_collect():
    prog = SafeAgreementProgram(2)
    wl = {0: [("propose", 5)], 1: [("propose", 7)]}
    # p0 finishes its first collect and half of the second before p1 writes its id
    g, _ = drive(prog, wl, [0] * 6 + [1] * 3 + [0])
    assert g.locs[0].sub.iters == 2


def test_double_propose_rejected():
    prog = SafeAgreementProgram(1)
    wl = {0: [("propose", 1), ("propose", 2)]}
    with pytest.raises(DoublePropose):
        sm_run(prog, FairSmScheduler(seed=0), wl, 100)


def test_solo_resolve_returns_proposal():
    prog = SafeAgreementProgram(1)
    tr = sm_run(prog, ScriptSmScheduler([0] * 20), sa_workload([7]), 100)
    assert tr.history[-1] == Ret(7, "0.2")


def test_decide():
    assert decide(((), ())) is None
    assert decide(((0,), (0, 1))) == 0
    assert decide(((0, 1), (0, 1))) == 0
    assert decide(((0, 1), ())) is None  # member 1 has not published yet


def test_incomparable_sets_flagged():
    sets = {("SA", "Set", 0): (0,), ("SA", "Set", 1): (1,)}
    with pytest.raises(PropertyViolation):
        check_comparable(sets.get, ("SA",), 2)


def test_bottom_reachable_then_excluded():
    prog = SafeAgreementProgram(2)
    mon = SaMonitor(prog)
    stats = sm_explore(prog, sa_workload([5, 7]), 40, monitor=mon)
    assert stats.violation is None
    assert mon.bottoms > 0  # a resolve overlapping the other's propose
    assert mon.max_iters <= 2


def test_resolve_never_bottom_once_proposes_done():
    prog = SafeAgreementProgram(2)
    wl = {0: [("propose", 5), ("resolve", None)], 1: [("propose", 7), ("resolve", None)]}
    # both proposes complete before either resolve starts
    tr = sm_run(prog, ScriptSmScheduler([0] * 9 + [1] * 9 + [0, 1] * 8), wl, 200)
    vals = [a.value for a in tr.history if isinstance(a, Ret) and a.value != "ok"]
    assert len(vals) == 2 and BOTTOM not in vals and len(set(vals)) == 1
    for seed in range(50):
        tr = sm_run(prog, FairSmScheduler(seed=seed), wl, 500)
        vals = {a.value for a in tr.history if isinstance(a, Ret) and a.value != "ok"}
        assert len(vals - {BOTTOM}) <= 1

import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from bgsim.checkers import (ExecutionTree, ExplicitLTS, LinMonitor, brute_force_linearizable,
                            check_assignment, check_forward_simulation, check_linearizable,
                            check_strongly_linearizable, compose)
from bgsim.checkers.linearizability import enumerate_histories
from bgsim.errors import BoundExceeded
from bgsim.history import Call, Ret
from bgsim.objects import AtomicState, atomic_enabled, is_linearization, make_spec

from witnesses import atomic_register_tree, lts_chain, sw_abd_witness

REG = make_spec("mw_register", 0)
REG_OPS = [("write", 0, "ok"), ("write", 1, "ok"), ("read", None, 0), ("read", None, 1)]
CNT_OPS = [("increment", None, "ok"), ("read", None, 0), ("read", None, 1)]


# -- linearizability ----------------------------------------------------------------

def test_empty_history():
    v = check_linearizable((), REG)
    assert v and v.witness == ()


def test_overlapping_write_read():
    h = (Call("write", 1, "a"), Call("read", None, "b"), Ret("ok", "a"), Ret(1, "b"))
    v = check_linearizable(h, REG)
    assert v and is_linearization(h, v.witness, REG)
    assert brute_force_linearizable(h, REG)


def test_read_from_nowhere():
    h = (Call("read", None, "b"), Ret(1, "b"))
    assert not check_linearizable(h, REG)
    assert not brute_force_linearizable(h, REG)


def test_bound():
    h = tuple(a for i in range(5) for a in (Call("read", None, f"{i}.1"), Ret(0, f"{i}.1")))
    with pytest.raises(BoundExceeded):
        check_linearizable(h, REG, bound=4)


def _sample(ops, k, seed):
    hs = list(enumerate_histories(4, ops))
    return random.Random(seed).sample(hs, k)


@pytest.mark.parametrize("kind,ops", [("mw_register", REG_OPS), ("counter", CNT_OPS)])
def test_oracle_agreement_sample(kind, ops):
    spec = make_spec(kind, 0)
    for h in _sample(ops, 3000, 11):
        v = check_linearizable(h, spec)
        assert bool(v) == brute_force_linearizable(h, spec), h
        if v:
            assert is_linearization(h, v.witness, spec)


@pytest.mark.parametrize("kind,ops", [("mw_register", REG_OPS), ("counter", CNT_OPS)])
def test_monitor_agrees_with_checker(kind, ops):
    spec = make_spec(kind, 0)
    mon = LinMonitor(spec)
    for h in _sample(ops, 2000, 5):
        ms = mon.init()
        for a in h:
            ms = mon.step(ms, a)
            if not ms:
                break
        assert bool(ms) == bool(check_linearizable(h, spec)), h


# -- strong linearizability ----------------------------------------------------------------

def test_atomic_register_tree_is_strongly_linearizable():
    tree = atomic_register_tree(REG)
    v = check_strongly_linearizable(tree, REG)
    assert v
    assert check_assignment(tree, v.assignment, REG) == []
    # the object's own linearization component is a valid assignment
    hs = {n.id: n.state.hs for n in tree.nodes}
    assert check_assignment(tree, hs, REG) == []


def test_sw_abd_is_not_strongly_linearizable():
    tree, e = sw_abd_witness()
    assert len(tree) <= 200
    for leaf in tree.leaves():
        assert check_linearizable(tree.nodes[leaf].history, REG)
    v = check_strongly_linearizable(tree, REG)
    assert not v
    fork, a, b = v.counterexample
    assert fork == e and {a, b} == set(tree.leaves())


_SMALL = list(itertools.islice(enumerate_histories(3, REG_OPS), 0, None, 7))


def _path_tree(h):
    t, nid = ExecutionTree(), 0
    for a in h:
        nid = t.add(nid, a)
    return t


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_single_branch_reduces_to_linearizability(data):
    h = data.draw(st.sampled_from(_SMALL))
    v = check_strongly_linearizable(_path_tree(h), REG, find_pair=False)
    assert bool(v) == bool(check_linearizable(h, REG))
    if v:
        # f is monotone by prefix along the path
        t = _path_tree(h)
        assert check_assignment(t, v.assignment, REG) == []


def test_assignment_checker_flags_non_prefix():
    t = _path_tree((Call("write", 1, "a"), Ret("ok", "a")))
    seq = (Call("write", 1, "a"), Ret("ok", "a"))
    assert check_assignment(t, {0: (), 1: seq, 2: seq}, REG) == []
    bad = check_assignment(t, {0: seq, 1: (), 2: seq}, REG)
    assert (1, "parent linearization is not a prefix") in bad


# -- forward simulation ----------------------------------------------------------------

def test_reflexive_on_toy_lts():
    a = ExplicitLTS.of(0, [(0, Call("m", None, "x"), 1), (1, "tau", 2), (2, Ret(0, "x"), 0)])
    ident = {(s, s) for s in a.states}
    assert check_forward_simulation(a, a, ident)
    assert check_forward_simulation(a, a)


def _atomic_lts(depth):
    script = {0: [("write", 1)], 1: [("read", None)]}
    trans, layer = set(), [AtomicState()]
    for _ in range(depth):
        nxt = []
        for s in layer:
            for lab, t in atomic_enabled(s, REG, script):
                trans.add((s, lab, t))
                nxt.append(t)
        layer = nxt
    return ExplicitLTS.of(AtomicState(), trans)


def test_atomic_object_simulates_itself():
    a = _atomic_lts(3)
    assert check_forward_simulation(a, a, {(s, s) for s in a.states})


def test_unmatched_return_reported():
    a = ExplicitLTS.of("p", [("p", Ret(1, "x"), "q")])
    b = ExplicitLTS.of("u", [("u", Ret(2, "x"), "v")])
    v = check_forward_simulation(a, b)
    assert not v
    assert v.uncovered == (("p", "u"), ("p", Ret(1, "x"), "q"))
    assert ("p", "u") not in v.relation


def test_composition_of_simulations():
    a, b, c, f1, f2 = lts_chain()
    assert check_forward_simulation(a, b, f1)
    assert check_forward_simulation(b, c, f2)
    assert check_forward_simulation(a, c, compose(f1, f2))

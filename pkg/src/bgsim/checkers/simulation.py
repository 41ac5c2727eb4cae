"""Forward simulations between finite labeled transition systems."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

from ..history import is_visible


@dataclass(frozen=True)
class ExplicitLTS:
    states: frozenset
    init: Any
    transitions: frozenset  # of (src, label, dst)

    @classmethod
    def of(cls, init, transitions):
        transitions = frozenset(transitions)
        states = {init}
        for s, _, t in transitions:
            states.update((s, t))
        return cls(frozenset(states), init, transitions)

    def out(self):
        succ = defaultdict(list)
        for s, a, t in self.transitions:
            succ[s].append((a, t))
        return succ


@dataclass
class SimVerdict:
    holds: bool
    relation: frozenset = frozenset()
    # ((s1, s2), (s1, a, s1')) for the first transition that could not be matched
    uncovered: Optional[tuple] = None

    def __bool__(self):
        return self.holds


def _matches(a, a2):
    # visible labels must agree exactly; internal steps map to internal ones
    if is_visible(a) or is_visible(a2):
        return a == a2
    return True


def _step_ok(s2, a, t1, rel, succ_b):
    if not is_visible(a) and (t1, s2) in rel:
        return True  # stuttering
    return any(_matches(a, a2) and (t1, t2) in rel for a2, t2 in succ_b.get(s2, ()))


def _first_failure(a: ExplicitLTS, b: ExplicitLTS, rel):
    succ_a, succ_b = a.out(), b.out()
    for s1, s2 in sorted(rel, key=repr):
        for lab, t1 in sorted(succ_a.get(s1, ()), key=repr):
            if not _step_ok(s2, lab, t1, rel, succ_b):
                return (s1, s2), (s1, lab, t1)
    return None


def check_forward_simulation(a: ExplicitLTS, b: ExplicitLTS, rel=None) -> SimVerdict:
    """Check ``rel`` (or find the largest relation) mapping every step of
    ``a`` to a possibly stuttering step of ``b``."""
    init = (a.init, b.init)
    if rel is not None:
        rel = frozenset(rel)
        if init not in rel:
            return SimVerdict(False, rel, (init, None))
        bad = _first_failure(a, b, rel)
        return SimVerdict(bad is None, rel, bad)

    succ_a, succ_b = a.out(), b.out()
    rel = {(s1, s2) for s1 in a.states for s2 in b.states}
    last_bad = None
    changed = True
    while changed:
        changed = False
        for pair in sorted(rel, key=repr):
            s1, s2 = pair
            for lab, t1 in succ_a.get(s1, ()):
                if not _step_ok(s2, lab, t1, rel, succ_b):
                    rel.discard(pair)
                    changed = True
                    if pair == init:
                        last_bad = (pair, (s1, lab, t1))
                    break
    rel = frozenset(rel)
    return SimVerdict(init in rel, rel, None if init in rel else last_bad)


def compose(f1, f2) -> frozenset:
    """Relational composition ``{(s1, s3) | (s1, s2) ∈ f1, (s2, s3) ∈ f2}``."""
    by_mid = defaultdict(list)
    for s2, s3 in f2:
        by_mid[s2].append(s3)
    return frozenset((s1, s3) for s1, s2 in f1 for s3 in by_mid.get(s2, ()))

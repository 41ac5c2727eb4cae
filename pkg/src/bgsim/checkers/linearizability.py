"""Linearizability checking.

``check_linearizable`` is a Wing & Gould style search: repeatedly pick an
invocation that may be linearized first (its call precedes every pending
return), memoizing on the set of linearized invocations and the abstract
value.  ``brute_force_linearizable`` enumerates completions and
permutations outright; it exists as an independent oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from ..errors import BoundExceeded
from ..history import Call, Ret, invocations, sequential
from ..objects import SeqSpec

DEFAULT_BOUND = 32


@dataclass
class LinVerdict:
    holds: bool
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.holds


def check_linearizable(h, spec: SeqSpec, bound: int = DEFAULT_BOUND) -> LinVerdict:
    invs = list(invocations(h).values())
    if len(invs) > bound:
        raise BoundExceeded(f"{len(invs)} invocations exceed bound {bound}",
                            {"invocations": len(invs)})
    inf = len(h) + 1
    calls = [iv.call_at for iv in invs]
    rets = [iv.ret_at if iv.complete else inf for iv in invs]
    complete = frozenset(i for i, iv in enumerate(invs) if iv.complete)
    failed = set()

    def search(done: frozenset, value):
        if complete <= done:
            return []
        key = (done, value)
        if key in failed:
            return None
        first_ret = min(rets[i] for i in complete - done)
        for i, iv in enumerate(invs):
            if i in done or calls[i] > first_ret:
                continue
            out, nxt = spec.apply(value, iv.method, iv.arg)
            if iv.complete and out != iv.value:
                continue
            rest = search(done | {i}, nxt)
            if rest is not None:
                return [(iv.method, iv.arg, out, iv.inv)] + rest
        failed.add(key)
        return None

    ops = search(frozenset(), spec.initial)
    if ops is None:
        return LinVerdict(False)
    return LinVerdict(True, sequential(ops))


def brute_force_linearizable(h, spec: SeqSpec) -> bool:
    """Enumerate every completion/pruning and every permutation."""
    invs = list(invocations(h).values())
    done = [iv for iv in invs if iv.complete]
    pend = [iv for iv in invs if not iv.complete]
    for r in range(len(pend) + 1):
        for kept in itertools.combinations(pend, r):
            chosen = done + list(kept)
            for perm in itertools.permutations(chosen):
                if _legal_order(perm) and _legal_values(perm, spec):
                    return True
    return False


def _legal_order(perm):
    for a, b in itertools.combinations(perm, 2):
        # a is placed before b: b must not have returned before a was called
        if b.complete and b.ret_at < a.call_at:
            return False
    return True


def _legal_values(perm, spec):
    value = spec.initial
    for iv in perm:
        out, value = spec.apply(value, iv.method, iv.arg)
        if iv.complete and out != iv.value:
            return False
    return True


def enumerate_histories(n_max: int, ops, pending_ops=None):
    """All well-formed histories with at most ``n_max`` invocations, each on
    its own process, up to renaming (invocations are numbered in call
    order).

    ``ops`` lists completed operations as ``(method, arg, value)``;
    ``pending_ops`` lists ``(method, arg)`` for invocations left pending.
    """
    if pending_ops is None:
        pending_ops = sorted({(m, a) for m, a, _ in ops}, key=repr)
    for n in range(n_max + 1):
        for shape in _shapes(n):
            slots = [ops if shape_done else pending_ops
                     for shape_done in _completion(shape, n)]
            for choice in itertools.product(*slots):
                yield _materialize(shape, choice)


def _shapes(n):
    """Event orders as tuples of ('c'|'r', index), calls in index order.

    Every subset of invocations may be left pending; the rest return
    after their call in every possible interleaving.
    """
    def rec(prefix, called, open_, returning):
        if called == n and not (open_ & returning):
            yield prefix
            return
        if called < n:
            yield from rec(prefix + (("c", called),), called + 1,
                           open_ | {called}, returning)
        for i in sorted(open_ & returning):
            yield from rec(prefix + (("r", i),), called, open_ - {i}, returning)

    for r in range(n + 1):
        for returning in itertools.combinations(range(n), r):
            yield from rec((), 0, frozenset(), frozenset(returning))


def _completion(shape, n):
    returned = {i for kind, i in shape if kind == "r"}
    return [i in returned for i in range(n)]


def _materialize(shape, choice):
    h = []
    for kind, i in shape:
        inv = f"p{i}"
        if kind == "c":
            h.append(Call(choice[i][0], choice[i][1], inv))
        else:
            h.append(Ret(choice[i][2], inv))
    return tuple(h)


class LinMonitor:
    """Incremental linearizability check, one action at a time.

    The monitor state is the set of configurations ``(value, pending)``
    the atomic object can be in after the history so far, where
    ``pending`` lists the open invocations as ``(inv, method, arg, out)``
    with ``out`` the linearized result or ``UNLIN``.  The set is kept
    closed under linearizing open invocations, so a return keeps exactly
    the configurations that already produced its value.  The history is
    linearizable iff the set is non-empty.
    """

    UNLIN = ("<unlinearized>",)

    def __init__(self, spec: SeqSpec):
        self.spec = spec

    def init(self) -> frozenset:
        return frozenset({(self.spec.initial, ())})

    def _closure(self, cfgs):
        seen = set(cfgs)
        todo = list(cfgs)
        while todo:
            value, pend = todo.pop()
            for k, (inv, method, arg, out) in enumerate(pend):
                if out != self.UNLIN:
                    continue
                res, nxt = self.spec.apply(value, method, arg)
                cfg = (nxt, pend[:k] + ((inv, method, arg, res),) + pend[k + 1:])
                if cfg not in seen:
                    seen.add(cfg)
                    todo.append(cfg)
        return frozenset(seen)

    def step(self, cfgs: frozenset, label) -> frozenset:
        if isinstance(label, Call):
            add = (label.inv, label.method, label.arg, self.UNLIN)
            return self._closure({(v, tuple(sorted(p + (add,)))) for v, p in cfgs})
        if isinstance(label, Ret):
            out = set()
            for v, p in cfgs:
                for k, (inv, _, _, res) in enumerate(p):
                    if inv == label.inv:
                        if res != self.UNLIN and res == label.value:
                            out.add((v, p[:k] + p[k + 1:]))
                        break
            return frozenset(out)
        return cfgs

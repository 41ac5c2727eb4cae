"""Strong linearizability over finite execution trees.

A tree is strongly linearizable when every node ``e`` can be given a
sequential history ``f(e)`` with ``hist(e) ⊑ f(e)`` and ``f(parent)`` a
prefix of ``f(child)``.  The search walks the tree depth first and, at
every node, branches on which not-yet-linearized invocations to append
to the parent's linearization (and in which order).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from ..errors import BoundExceeded
from ..history import Call, Ret, invocations, is_visible, pairs
from ..objects import SeqSpec, is_linearization


@dataclass
class TreeNode:
    id: int
    parent: Optional[int]
    label: Any
    history: tuple
    depth: int
    state: Any = None
    step: Any = None
    children: list = field(default_factory=list)


class ExecutionTree:
    """Rooted tree of executions; node ``i``'s execution is the path to it."""

    def __init__(self, root_state=None):
        self.nodes = [TreeNode(0, None, None, (), 0, root_state)]

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self):
        return self.nodes[0]

    def add(self, parent: int, label, state=None, step=None) -> int:
        p = self.nodes[parent]
        hist = p.history + (label,) if is_visible(label) else p.history
        node = TreeNode(len(self.nodes), parent, label, hist, p.depth + 1, state, step)
        self.nodes.append(node)
        p.children.append(node.id)
        return node.id

    def leaves(self):
        return [n.id for n in self.nodes if not n.children]

    def path(self, node: int):
        out = []
        while node is not None:
            out.append(node)
            node = self.nodes[node].parent
        return out[::-1]

    def subtree(self, keep: Iterable[int]) -> "ExecutionTree":
        """Tree restricted to the given nodes and their ancestors."""
        wanted = set()
        for k in keep:
            wanted.update(self.path(k))
        t = ExecutionTree(self.root.state)
        remap = {0: 0}
        for n in self.nodes[1:]:
            if n.id in wanted:
                remap[n.id] = t.add(remap[n.parent], n.label, n.state, n.step)
        return t

    @classmethod
    def build(cls, root, successors: Callable, depth: int, max_nodes: int = 100_000):
        """Exhaustive tree: ``successors(state)`` yields ``(label, state')``."""
        t = cls(root)
        frontier = [0]
        while frontier:
            nid = frontier.pop()
            node = t.nodes[nid]
            if node.depth >= depth:
                continue
            for label, nxt in successors(node.state):
                frontier.append(t.add(nid, label, nxt))
                if len(t.nodes) > max_nodes:
                    raise BoundExceeded(f"tree exceeds {max_nodes} nodes",
                                        {"nodes": len(t.nodes)})
        return t

    @classmethod
    def from_schedules(cls, root, apply: Callable, schedules):
        """Trie of scripted executions; ``apply(state, step)`` returns
        ``(label, state')``.  Shared prefixes share nodes."""
        t = cls(root)
        for sched in schedules:
            nid = 0
            for step in sched:
                node = t.nodes[nid]
                nxt = next((c for c in node.children if t.nodes[c].step == step), None)
                if nxt is None:
                    label, state = apply(node.state, step)
                    nxt = t.add(nid, label, state, step)
                nid = nxt
        return t


@dataclass
class StrongVerdict:
    holds: bool
    assignment: Optional[dict] = None
    # (branching node, leaf a, leaf b): the two executions below the branching
    # node that cannot share one linearization prefix
    counterexample: Optional[tuple] = None
    explored: int = 0

    def __bool__(self):
        return self.holds


class _Search:
    def __init__(self, tree: ExecutionTree, spec: SeqSpec):
        self.tree = tree
        self.spec = spec
        self.failed = set()
        self.invs = {}
        self.explored = 0

    def value_after(self, lin):
        return lin[-1][4] if lin else self.spec.initial

    def index(self, node):
        iv = self.invs.get(node.id)
        if iv is None:
            iv = self.invs[node.id] = invocations(node.history)
        return iv

    def extensions(self, node, lin):
        """Every ordered extension of ``lin`` that linearizes ``node``'s
        history.  Entries of ``lin`` are ``(inv, method, arg, out, value_after)``."""
        invs = self.index(node)
        # an invocation linearized earlier must return what it was given
        for e in lin:
            iv = invs.get(e[0])
            if iv is not None and iv.complete and iv.value != e[3]:
                return []
        placed = {e[0] for e in lin}
        cand = [iv for k, iv in invs.items() if k not in placed]
        must = {iv.inv for iv in cand if iv.complete}
        ret_before = {}
        for iv in cand:
            ret_before[iv.inv] = {b.inv for b in invs.values()
                                  if b.complete and b.ret_at < iv.call_at}

        def rec(ext, value, chosen):
            if must <= chosen:
                yield ext
            for iv in cand:
                if iv.inv in chosen:
                    continue
                if not ret_before[iv.inv] <= placed | chosen:
                    continue
                out, nxt = self.spec.apply(value, iv.method, iv.arg)
                if iv.complete and out != iv.value:
                    continue
                yield from rec(ext + ((iv.inv, iv.method, iv.arg, out, nxt),),
                               nxt, chosen | {iv.inv})

        exts = list(rec((), self.value_after(lin), frozenset()))
        exts.sort(key=len)
        return exts

    def solve(self, nid, lin):
        key = (nid, lin)
        if key in self.failed:
            return None
        self.explored += 1
        node = self.tree.nodes[nid]
        for ext in self.extensions(node, lin):
            here = lin + ext
            out = {nid: here}
            for c in node.children:
                sub = self.solve(c, here)
                if sub is None:
                    break
                out.update(sub)
            else:
                return out
        self.failed.add(key)
        return None


def _as_history(lin):
    h = []
    for inv, method, arg, out, _ in lin:
        h.append(Call(method, arg, inv))
        h.append(Ret(out, inv))
    return tuple(h)


def check_strongly_linearizable(tree: ExecutionTree, spec: SeqSpec,
                                bound: int = 6, max_nodes: int = 50_000,
                                find_pair: bool = True) -> StrongVerdict:
    if len(tree) > max_nodes:
        raise BoundExceeded(f"tree has {len(tree)} nodes > {max_nodes}",
                            {"nodes": len(tree)})
    worst = max(len(invocations(tree.nodes[l].history)) for l in tree.leaves())
    if worst > bound:
        raise BoundExceeded(f"{worst} invocations exceed bound {bound}",
                            {"invocations": worst})
    search = _Search(tree, spec)
    found = search.solve(0, ())
    if found is not None:
        f = {nid: _as_history(lin) for nid, lin in found.items()}
        return StrongVerdict(True, f, explored=search.explored)
    cex = _counterexample_pair(tree, spec) if find_pair else None
    return StrongVerdict(False, None, cex, explored=search.explored)


def _counterexample_pair(tree, spec):
    leaves = tree.leaves()
    for leaf in leaves:
        if not _solvable(tree.subtree([leaf]), spec):
            return (leaf, leaf, leaf)
    candidates = []
    for a, b in itertools.combinations(leaves, 2):
        pa, pb = tree.path(a), tree.path(b)
        split = max(i for i in range(min(len(pa), len(pb))) if pa[i] == pb[i])
        candidates.append((-split, a, b, pa[split]))
    candidates.sort()
    for _, a, b, fork in candidates:
        if not _solvable(tree.subtree([a, b]), spec):
            return (fork, a, b)
    return None


def _solvable(tree, spec):
    return _Search(tree, spec).solve(0, ()) is not None


def check_assignment(tree: ExecutionTree, f: dict, spec: SeqSpec) -> list:
    """Validate a candidate linearization function; returns the problems
    found (empty when ``f`` is prefix preserving and sound everywhere)."""
    problems = []
    for node in tree.nodes:
        lin = f.get(node.id)
        if lin is None:
            problems.append((node.id, "no linearization assigned"))
            continue
        if not is_linearization(node.history, lin, spec):
            problems.append((node.id, "not a linearization of the history"))
        if node.parent is not None:
            up = f.get(node.parent, ())
            if lin[:len(up)] != up:
                problems.append((node.id, "parent linearization is not a prefix"))
    return problems

"""Sequential specifications, the linearization relation and the atomic object.

The atomic object is the labeled transition system whose states pair a
concurrent history with one of its sequential linearizations; it moves on
call and return actions and on explicit linearization points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from .errors import IllegalAtomicStep, MalformedHistory
from .history import Call, Lin, Ret, invocations, is_sequential, pairs

OK = "ok"


@dataclass(frozen=True)
class SeqSpec:
    name: str
    initial: Any
    apply: Callable[[Any, str, Any], tuple] = field(compare=False)
    methods: frozenset = frozenset()

    def run(self, hs):
        """Replay a sequential history; return the final abstract value or
        raise ``ValueError`` at the first illegal return."""
        value = self.initial
        for c, r in pairs(hs):
            out, value = self.apply(value, c.method, c.arg)
            if out != r.value:
                raise ValueError(f"{c} returned {r.value!r}, expected {out!r}")
        return value

    def accepts(self, hs) -> bool:
        if not is_sequential(hs):
            return False
        try:
            self.run(hs)
        except ValueError:
            return False
        return True


def _unknown(spec, method):
    raise ValueError(f"{spec}: unknown method {method!r}")


def _register(value, method, arg):
    if method == "write":
        return OK, arg
    if method == "read":
        return value, value
    _unknown("mw_register", method)


def _max_register(value, method, arg):
    if method == "writeMax":
        return OK, max(value, arg)
    if method == "readMax":
        return value, value
    _unknown("max_register", method)


def _counter(value, method, arg):
    if method == "increment":
        return OK, value + 1
    if method == "read":
        return value, value
    _unknown("counter", method)


def _snapshot(value, method, arg):
    if method == "update":
        i, v = arg
        if not 0 <= i < len(value):
            raise ValueError(f"snapshot component {i} out of range")
        return OK, value[:i] + (v,) + value[i + 1:]
    if method == "scan":
        return value, value
    _unknown("snapshot", method)


def make_spec(kind: str, init=0, width: int = 2) -> SeqSpec:
    """Standard sequential objects: ``mw_register``, ``max_register``,
    ``counter`` and ``snapshot``."""
    if kind in ("mw_register", "register"):
        return SeqSpec(f"mw_register({init})", init, _register,
                       frozenset({"write", "read"}))
    if kind == "max_register":
        return SeqSpec(f"max_register({init})", init, _max_register,
                       frozenset({"writeMax", "readMax"}))
    if kind == "counter":
        return SeqSpec("counter", 0, _counter, frozenset({"increment", "read"}))
    if kind == "snapshot":
        return SeqSpec(f"snapshot({width},{init})", (init,) * width, _snapshot,
                       frozenset({"update", "scan"}))
    raise ValueError(f"unknown object kind {kind!r}")


def parse_spec(text: str) -> SeqSpec:
    """Parse ``kind`` or ``kind:init`` (``snapshot:width:init``)."""
    kind, *params = text.split(":")
    if kind == "snapshot":
        width = int(params[0]) if params else 2
        init = int(params[1]) if len(params) > 1 else 0
        return make_spec(kind, init=init, width=width)
    return make_spec(kind, init=int(params[0]) if params else 0)


def is_linearization(h1, h2, spec: SeqSpec) -> bool:
    """Decide ``h1 ⊑ h2`` with ``h2`` legal for ``spec``.

    ``h2`` must keep every completed invocation of ``h1`` with the same
    return value, may keep any subset of the pending ones (completed with
    whatever the specification returns) and must respect the order
    between returns and later calls in ``h1``.
    """
    inv1 = invocations(h1)
    if not is_sequential(h2):
        raise MalformedHistory("second argument must be a sequential history")
    seen = set()
    for c, r in pairs(h2):
        iv = inv1.get(c.inv)
        if iv is None or c.inv in seen:
            return False
        if (iv.method, iv.arg) != (c.method, c.arg):
            return False
        if iv.complete and iv.value != r.value:
            return False
        seen.add(c.inv)
    if any(iv.complete and k not in seen for k, iv in inv1.items()):
        return False
    order = [c.inv for c, _ in pairs(h2)]
    for pos, a in enumerate(order):
        for b in order[:pos]:
            # b precedes a in h2; forbidden if a returned before b was called
            if inv1[a].complete and inv1[a].ret_at < inv1[b].call_at:
                return False
    return spec.accepts(h2)


# -- atomic object ---------------------------------------------------------

class AtomicState(NamedTuple):
    h: tuple = ()
    hs: tuple = ()


def atomic_step(s: AtomicState, label, spec: SeqSpec) -> AtomicState:
    if isinstance(label, Call):
        if any(isinstance(a, Call) and a.inv == label.inv for a in s.h):
            raise IllegalAtomicStep(f"call: invocation {label.inv} already called")
        return AtomicState(s.h + (label,), s.hs)
    if isinstance(label, Ret):
        if label not in s.hs:
            raise IllegalAtomicStep(
                f"return: {label} does not occur in the linearization")
        if label in s.h:
            raise IllegalAtomicStep(f"return: {label} already returned")
        return AtomicState(s.h + (label,), s.hs)
    if isinstance(label, Lin):
        call = next((a for a in s.h if isinstance(a, Call) and a.inv == label.inv), None)
        if call is None:
            raise IllegalAtomicStep(f"lin: invocation {label.inv} was never called")
        if any(c.inv == label.inv for c, _ in pairs(s.hs)):
            raise IllegalAtomicStep(f"lin: invocation {label.inv} already linearized")
        out, _ = spec.apply(spec.run(s.hs), call.method, call.arg)
        return AtomicState(s.h, s.hs + (call, Ret(out, label.inv)))
    raise IllegalAtomicStep(f"not an atomic-object label: {label!r}")


def atomic_enabled(s: AtomicState, spec: SeqSpec, script: dict):
    """Enabled ``(label, next_state)`` pairs of the atomic object.

    ``script`` maps a process name to its list of ``(method, arg)``
    invocations; process ``p`` may call its next one once idle.
    """
    out = []
    called = {a.inv: a for a in s.h if isinstance(a, Call)}
    returned = {a.inv for a in s.h if isinstance(a, Ret)}
    linearized = {c.inv: r for c, r in pairs(s.hs)}
    for p in sorted(script, key=str):
        mine = [k for k in called if k.split(".", 1)[0] == str(p)]
        if all(k in returned for k in mine) and len(mine) < len(script[p]):
            method, arg = script[p][len(mine)]
            label = Call(method, arg, f"{p}.{len(mine) + 1}")
            out.append((label, atomic_step(s, label, spec)))
    for k in called:
        if k in returned:
            continue
        if k in linearized:
            label = linearized[k]
        else:
            label = Lin(k)
        out.append((label, atomic_step(s, label, spec)))
    return out

"""Registry of runnable scenarios.

Each entry builds either a message-passing implementation (``kind ==
"mp"``) or a shared-memory program (``kind == "sm"``) from a scenario,
together with the sequential object its histories are checked against and
the checks it supports.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

from ..abd import abd_implementation
from ..bg import build_sm
from ..errors import ConfigError
from ..objects import SeqSpec, make_spec
from ..safe_agreement import SafeAgreementProgram
from ..toy import ping_implementation

PING_SPEC = SeqSpec("ping", None, lambda v, method, arg: ("pong", v), frozenset({"ping"}))


@dataclass
class Built:
    kind: str  # mp | sm
    system: Any  # MpImplementation or SmProgram
    spec: Optional[SeqSpec]
    checks: tuple
    inner: Any = None  # the simulated implementation of a bg scenario
    # redelivering a message is always a stutter, so exploration may ignore
    # the delivered sets when merging states
    redelivery_stutters: bool = True

    @property
    def m(self):
        return self.system.m

    @property
    def header(self):
        """``(m, n)`` for trace headers: clients and servers."""
        if self.kind == "mp":
            return self.system.m, self.system.n
        return self.system.n, self.inner.n if self.inner is not None else 0


def _abd(cfg, sw=False):
    if cfg.n < 1:
        raise ConfigError("scenario.n: abd needs at least one server")
    return abd_implementation(cfg.m, cfg.n, cfg.init, single_writer=sw), \
        make_spec("mw_register", cfg.init)


def _ping(cfg):
    if cfg.m != 1 or cfg.n != 1:
        raise ConfigError("scenario.m: ping runs with m=1 and n=1")
    return ping_implementation(), PING_SPEC


INNER: dict[str, Callable] = {
    "abd": _abd,
    "abd_sw": lambda cfg: _abd(cfg, sw=True),
    "ping": _ping,
}

MP_CHECKS = ("linearizable", "completes")


def _build_mp(name):
    def build(cfg):
        impl, spec = INNER[name](cfg)
        return Built("mp", impl, spec, MP_CHECKS)
    return build


def _build_sa(cfg):
    return Built("sm", SafeAgreementProgram(cfg.m), None, ("safe_agreement", "completes"))


def _build_bg(cfg):
    inner = cfg.inner or "abd"
    if inner not in INNER:
        raise ConfigError(f"scenario.inner: unknown implementation {inner!r}")
    impl, spec = INNER[inner](cfg)
    return Built("sm", build_sm(impl), spec,
                 ("refinement", "linearizable", "completes", "stalled"), inner=impl)


REGISTRY: dict[str, Callable] = {
    "abd": _build_mp("abd"),
    "abd_sw": _build_mp("abd_sw"),
    "ping": _build_mp("ping"),
    "safe_agreement": _build_sa,
    "bg": _build_bg,
}


def build(cfg) -> Built:
    """Resolve ``cfg`` against the registry and validate its fields."""
    if cfg.impl not in REGISTRY:
        raise ConfigError(f"scenario.impl: unknown implementation {cfg.impl!r} "
                          f"(known: {', '.join(sorted(REGISTRY))})")
    b = REGISTRY[cfg.impl](cfg)
    for c in cfg.checks:
        if c not in b.checks:
            raise ConfigError(f"checks.run: {c!r} not available for {cfg.impl} "
                              f"(available: {', '.join(b.checks)})")
    nproc = b.system.size if b.kind == "mp" else b.system.n
    for p in cfg.workload:
        if not 0 <= p < b.m:
            raise ConfigError(f"workload.client{p}: no such client (m={b.m})")
    for _, p in cfg.crashes:
        if not 0 <= p < nproc:
            raise ConfigError(f"crash.at: no process {p}")
    return b

"""Executing scenarios: runs, explorations, replays and file checks.

Every entry point returns a :class:`~bgsim.harness.report.Report`; when an
output directory is given the trace, report, timing table, figure and any
counterexample are written there.
"""
from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

from ..bg import monitor_refinement, stalled_servers
from ..checkers.linearizability import LinMonitor, check_linearizable
from ..digest import GENESIS
from ..errors import (BoundExceeded, BudgetExhausted, ConfigError, DigestMismatch,
                      PropertyViolation, RefinementViolation, SimError)
from ..history import Ret, format_history, is_visible
from ..mp import (FairScheduler, Scheduler, Step, apply_step, explore, initial_state,
                  next_call, parse_uids, run, state_digest, workload_done)
from ..objects import parse_spec
from ..safe_agreement import SaMonitor
from ..sm import (FairSmScheduler, Monitor, ScriptSmScheduler, SmEvent, sm_done,
                  sm_explore, sm_initial, sm_run, sm_step, step_digest)
from .config import Scenario, config_from_items
from .report import BOUND, HOLDS, REFUTED, Report
from .scenarios import Built, build
from .tracefile import format_mp_trace, format_sm_trace, parse_trace, read_trace


class MpScriptScheduler(Scheduler):
    """Adversarial script: tokens ``call/P``, ``ret/P``, ``int/P`` or
    ``int/P/a:b,c:d`` (receiving the listed uids)."""

    def __init__(self, tokens, crashes=()):
        super().__init__(crashes)
        self.tokens = list(tokens)
        self.pos = 0

    def choose(self, impl, g, workload, n):
        if self.pos >= len(self.tokens):
            return None
        tok = self.tokens[self.pos]
        self.pos += 1
        parts = tok.split("/")
        try:
            rule, pid = parts[0].upper(), int(parts[1])
        except (IndexError, ValueError):
            raise ConfigError(f"scheduler.script: bad token {tok!r}") from None
        if rule == "CALL":
            return Step("CALL", pid, next_call(workload, g, pid))
        if rule == "RET":
            return Step("RET", pid)
        if rule == "INT":
            return Step("INT", pid, None, parse_uids(parts[2]) if len(parts) > 2 else ())
        raise ConfigError(f"scheduler.script: bad token {tok!r}")


def _crashed_set(cfg):
    return frozenset(p for _, p in cfg.crashes)


def _requested(cfg, b: Built, mode):
    checks = cfg.checks or tuple(c for c in b.checks
                                 if mode == "run" or c not in ("refinement", "stalled"))
    if mode != "run":
        for c in checks:
            if c in ("refinement", "stalled"):
                raise ConfigError(f"checks.run: {c!r} is checked on runs, not explorations")
    return checks


def _write(out, name, text, rep: Report, role):
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text)
    rep.files[role] = name


def _completions(history):
    pts, k = [(0, 0)], 0
    for i, lab in enumerate(history, 1):
        if isinstance(lab, Ret):
            k += 1
            pts.append((i, k))
    return pts


def _lin_verdict(rep, spec, history, out):
    try:
        v = check_linearizable(tuple(history), spec)
    except BoundExceeded as exc:
        rep.verdict("linearizable", BOUND, str(exc))
        return
    if v:
        rep.verdict("linearizable", HOLDS)
        return
    rep.verdict("linearizable", REFUTED, "no linearization")
    _write(out, "counterexample.txt", _counterexample(spec, history), rep, "counterexample")
    rep.counterexample = "counterexample.txt"


def _counterexample(spec, history, schedule=None, reason=None):
    """The shortest non-linearizable prefix of ``history`` (when the
    violation is one), with the schedule that produced it."""
    lines = []
    if reason:
        lines.append(f"# {reason}")
    if schedule is not None:
        lines.append("# schedule: " + " ".join(str(p) for p in schedule))
    h = tuple(history)
    if spec is not None and reason is None:
        mon = LinMonitor(spec)
        ms = mon.init()
        for k, lab in enumerate(h):
            ms = mon.step(ms, lab)
            if not ms:
                h = h[:k + 1]
                break
    return "\n".join(lines) + ("\n" if lines else "") + format_history(h)


# -- run ---------------------------------------------------------------------

def run_scenario(cfg: Scenario, out_dir=None, figure=True) -> Report:
    """Execute one scheduled run; a :class:`BudgetExhausted` run is
    reported (``completes`` gets the ``bound`` verdict), not raised."""
    b = build(cfg)
    checks = _requested(cfg, b, "run")
    if cfg.scheduler == "exhaustive":
        raise ConfigError("scheduler.kind: exhaustive scenarios are explored, not run")
    rep = Report(cfg.name, "run")
    t0 = time.perf_counter()
    if b.kind == "mp":
        _run_mp(cfg, b, checks, rep, out_dir)
    else:
        _run_sm(cfg, b, checks, rep, out_dir)
    rep.timing["run"] = time.perf_counter() - t0
    if out_dir is not None:
        rep.write(out_dir, figure)
    return rep


def _run_mp(cfg, b, checks, rep, out):
    impl = b.system
    if cfg.scheduler == "script":
        sched = MpScriptScheduler(cfg.script, cfg.crashes)
    else:
        sched = FairScheduler(cfg.seed, cfg.deadline, cfg.crashes)
    exhausted = None
    try:
        trace = run(impl, sched, cfg.workload, cfg.steps)
    except BudgetExhausted as exc:
        trace, exhausted = exc.trace, str(exc)
    trace.seed = cfg.seed
    _write(out, "trace.txt", format_mp_trace(trace, cfg.items()), rep, "trace")
    for c in checks:
        if c == "linearizable":
            _lin_verdict(rep, b.spec, trace.history, out)
        elif c == "completes":
            rep.verdict(c, BOUND, exhausted) if exhausted else rep.verdict(c, HOLDS)
    rep.counts.update(steps=len(trace.steps), calls=sum(s.rule == "CALL" for s in trace.steps),
                      returns=sum(s.rule == "RET" for s in trace.steps),
                      crashed=len(sched.crashed), digest=trace.digest)
    rep.series["returns"] = _completions(trace.history)


def _run_sm(cfg, b, checks, rep, out):
    prog = b.system
    if cfg.scheduler == "script":
        try:
            pids = [int(x) for x in cfg.script]
        except ValueError:
            raise ConfigError("scheduler.script: expected process ids") from None
        sched = ScriptSmScheduler(pids, cfg.crashes)
    else:
        sched = FairSmScheduler(cfg.seed, cfg.crashes)
    exhausted = None
    try:
        trace = sm_run(prog, sched, cfg.workload, cfg.steps, digests=True)
    except BudgetExhausted as exc:
        trace, exhausted = exc.trace, str(exc)
    trace.seed = cfg.seed
    m, n = b.header
    _write(out, "trace.txt", format_sm_trace(trace, m, n, cfg.items()), rep, "trace")
    for c in checks:
        if c == "linearizable":
            _lin_verdict(rep, b.spec, trace.history, out)
        elif c == "completes":
            rep.verdict(c, BOUND, exhausted) if exhausted else rep.verdict(c, HOLDS)
        elif c == "safe_agreement":
            _sa_verdict(cfg, prog, trace, exhausted is not None, rep, out)
        elif c == "refinement":
            _refinement_verdict(cfg, b, trace, rep, out)
        elif c == "stalled":
            stalled = stalled_servers(prog, trace.final, trace.crashed)
            rep.counts["stalled"] = len(stalled)
            if len(stalled) <= len(trace.crashed):
                rep.verdict(c, HOLDS)
            else:
                rep.verdict(c, REFUTED, f"servers {stalled} stalled")
    rep.counts.update(steps=len(trace.steps),
                      calls=sum(1 for e in trace.steps if e.label is not None
                                and not isinstance(e.label, Ret)),
                      returns=sum(isinstance(e.label, Ret) for e in trace.steps),
                      crashed=len(trace.crashed), digest=trace.digest)
    rep.series["returns"] = _completions(trace.history)


def _sa_verdict(cfg, prog, trace, at_bound, rep, out):
    mon = SaMonitor(prog)
    ms, g = mon.init(), sm_initial(prog)
    try:
        for e in trace.steps:
            label, g, port = sm_step(prog, g, e.pid, cfg.workload)
            ms = mon.on_step(ms, SmEvent(e.n, port.rule, e.pid, label, port.key, port.value,
                                         g.locs[e.pid], "-"), g)
        mon.on_terminal(ms, g, at_bound)
    except PropertyViolation as exc:
        rep.verdict("safe_agreement", REFUTED, str(exc))
        _write(out, "counterexample.txt",
               _counterexample(None, trace.history, trace.schedule, str(exc)),
               rep, "counterexample")
        rep.counterexample = "counterexample.txt"
        return
    rep.verdict("safe_agreement", HOLDS)
    rep.counts["max_double_collects"] = mon.max_iters


def _refinement_verdict(cfg, b, trace, rep, out):
    impl = b.inner
    try:
        rr = monitor_refinement(trace, impl)
    except (RefinementViolation, SimError) as exc:
        rep.verdict("refinement", REFUTED, str(exc))
        _write(out, "counterexample.txt",
               _counterexample(None, trace.history, trace.schedule, str(exc)),
               rep, "counterexample")
        rep.counterexample = "counterexample.txt"
        return
    rep.verdict("refinement", HOLDS)
    rep.counts.update(induced_steps=len(rr.induced), stutters=rr.stutters)
    items = [(k, v) for k, v in cfg.items() if k != "scenario.inner"]
    items = [(k, cfg.inner or "abd") if k == "scenario.impl" else (k, v) for k, v in items]
    _write(out, "induced.trace", format_mp_trace(rr.mp_trace(impl, cfg.seed), items),
           rep, "induced_trace")


# -- explore -----------------------------------------------------------------

class _LinSmMonitor(Monitor):
    def __init__(self, spec):
        self.lin = LinMonitor(spec)

    def init(self):
        return self.lin.init()

    def on_step(self, ms, ev, g):
        if not is_visible(ev.label):
            return ms
        ms2 = self.lin.step(ms, ev.label)
        if not ms2:
            raise PropertyViolation(f"not linearizable at {ev.label}")
        return ms2


class _Both(Monitor):
    def __init__(self, monitors):
        self.monitors = monitors

    def init(self):
        return tuple(m.init() for m in self.monitors)

    def on_step(self, ms, ev, g):
        return tuple(m.on_step(s, ev, g) for m, s in zip(self.monitors, ms))

    def on_terminal(self, ms, g, at_bound):
        for m, s in zip(self.monitors, ms):
            m.on_terminal(s, g, at_bound)


def explore_scenario(cfg: Scenario, out_dir=None, figure=True) -> Report:
    """Exhaustive exploration to ``budget.depth`` steps.  Processes named
    in ``crash.at`` are crashed from the start."""
    b = build(cfg)
    checks = _requested(cfg, b, "explore")
    if cfg.scheduler != "exhaustive":
        raise ConfigError("scheduler.kind: explore needs kind = exhaustive")
    rep = Report(cfg.name, "explore")
    t0 = time.perf_counter()
    try:
        if b.kind == "mp":
            stats = _explore_mp(cfg, b, checks, rep, out_dir)
        else:
            stats = _explore_sm(cfg, b, checks, rep, out_dir)
    except BoundExceeded as exc:
        for c in checks:
            rep.verdict(c, BOUND, str(exc))
        rep.counts.update((k, v) for k, v in sorted((exc.stats or {}).items()))
        stats = None
    if stats is not None:
        rep.counts.update(states=stats.states, terminals=stats.terminals,
                          frontier=stats.frontier, max_depth=stats.max_depth)
        rep.series["states"] = sorted(stats.per_depth.items())
    rep.timing["explore"] = time.perf_counter() - t0
    if out_dir is not None:
        rep.write(out_dir, figure)
    return rep


def _explore_mp(cfg, b, checks, rep, out):
    impl, crashed = b.system, _crashed_set(cfg)
    blocked = []

    def on_terminal(mstate, g, at_bound):
        if not at_bound and not workload_done(impl, g, cfg.workload, crashed):
            blocked.append(g)

    monitor = LinMonitor(b.spec) if "linearizable" in checks else None
    stats = explore(impl, cfg.workload, cfg.depth, dedupe=cfg.dedupe, crashed=crashed,
                    on_terminal=on_terminal, max_states=cfg.max_states,
                    max_recv=cfg.max_recv, monitor=monitor,
                    track_delivered=not b.redelivery_stutters)
    for c in checks:
        if c == "linearizable":
            if stats.violation is not None:
                rep.verdict(c, REFUTED, "non-linearizable history reached")
                _write(out, "counterexample.txt", _counterexample(b.spec, stats.violation),
                       rep, "counterexample")
                rep.counterexample = "counterexample.txt"
            else:
                rep.verdict(c, HOLDS)
        elif c == "completes":
            if blocked:
                rep.verdict(c, REFUTED, f"{len(blocked)} blocked terminal states")
            elif stats.violation is not None:
                rep.verdict(c, HOLDS, "exploration stopped early")
            else:
                rep.verdict(c, HOLDS)
    return stats


class _Completes(Monitor):
    def __init__(self, prog, workload, crashed):
        self.prog, self.workload, self.crashed = prog, workload, crashed

    def init(self):
        return None

    def on_step(self, ms, ev, g):
        return ms

    def on_terminal(self, ms, g, at_bound):
        if not at_bound and not sm_done(self.prog, g, self.workload, self.crashed):
            raise PropertyViolation("blocked before the workload finished")


def _explore_sm(cfg, b, checks, rep, out):
    prog, crashed = b.system, _crashed_set(cfg)
    mons, names = [], []
    for c in checks:
        if c == "safe_agreement":
            mons.append(SaMonitor(prog))
        elif c == "linearizable":
            mons.append(_LinSmMonitor(b.spec))
        elif c == "completes":
            mons.append(_Completes(prog, cfg.workload, crashed))
        names.append(c)
    stats = sm_explore(prog, cfg.workload, cfg.depth, _Both(mons), crashed, cfg.max_states)
    for c in names:
        rep.verdict(c, HOLDS)
    if stats.violation is not None:
        # the first failing monitor is the one whose message we got; rerun
        # its witness to attribute the verdict
        culprit = _attribute(cfg, prog, mons, names, stats.witness, crashed)
        rep.verdict(culprit, REFUTED, stats.violation)
        _write(out, "counterexample.txt",
               _counterexample(None, _history_of(prog, cfg.workload, stats.witness),
                               stats.witness, stats.violation), rep, "counterexample")
        rep.counterexample = "counterexample.txt"
    sa = next((m for m in mons if isinstance(m, SaMonitor)), None)
    if sa is not None:
        rep.counts["max_double_collects"] = sa.max_iters
    return stats


def _history_of(prog, workload, schedule):
    g, h = sm_initial(prog), []
    for p in schedule:
        label, g, _ = sm_step(prog, g, p, workload)
        if label is not None:
            h.append(label)
    return h


def _attribute(cfg, prog, mons, names, schedule, crashed):
    states = [m.init() for m in mons]
    g = sm_initial(prog)
    for i, p in enumerate(schedule):
        label, g, port = sm_step(prog, g, p, cfg.workload)
        ev = SmEvent(i, port.rule, p, label, port.key, port.value, g.locs[p], "-")
        for k, m in enumerate(mons):
            try:
                states[k] = m.on_step(states[k], ev, g)
            except PropertyViolation:
                return names[k]
    for k, m in enumerate(mons):
        try:
            m.on_terminal(states[k], g, False)
        except PropertyViolation:
            return names[k]
    return names[0]


# -- replay and check ------------------------------------------------------------

def replay_records(b: Built, tf, workload) -> int:
    """Re-execute the steps of a parsed trace, raising
    :class:`DigestMismatch` at the first step whose digest differs."""
    if tf.kind == "mp":
        if b.kind != "mp":
            raise ConfigError("scenario.impl: trace holds message-passing steps")
        g, d = initial_state(b.system), GENESIS
        for r, st in zip(tf.records, tf.mp_steps()):
            try:
                label, g = apply_step(b.system, g, st)
            except SimError:
                raise DigestMismatch(r.n, r.digest, "<step not enabled>") from None
            d = state_digest(d, g, r.pid)
            if d != r.digest or label != r.label:
                raise DigestMismatch(r.n, r.digest, d)
        return len(tf.records)
    if b.kind != "sm":
        raise ConfigError("scenario.impl: trace holds shared-memory steps")
    prog, g, d = b.system, sm_initial(b.system), GENESIS
    for r in tf.records:
        try:
            label, g, port = sm_step(prog, g, r.pid, workload)
        except SimError:
            raise DigestMismatch(r.n, r.digest, "<step not enabled>") from None
        d = step_digest(d, r.pid, g.locs[r.pid], port.key, port.value)
        if d != r.digest or label != r.label:
            raise DigestMismatch(r.n, r.digest, d)
    return len(tf.records)


def replay_trace(path, out_dir=None) -> Report:
    tf = read_trace(path)
    cfg = config_from_items(tf.config)
    cfg.checks = ()
    b = build(cfg)
    rep = Report(Path(path).name, "replay")
    t0 = time.perf_counter()
    try:
        k = replay_records(b, tf, cfg.workload)
        rep.verdict("replay", HOLDS)
        rep.counts["steps"] = k
    except DigestMismatch as exc:
        rep.verdict("replay", REFUTED, str(exc))
        rep.counts["first_mismatch"] = exc.index
    rep.counts["digest"] = tf.digest
    rep.timing["replay"] = time.perf_counter() - t0
    if out_dir is not None:
        rep.write(out_dir, figure=False)
    return rep


def check_file(path, spec_text: Optional[str] = None, out_dir=None) -> Report:
    """Linearizability of the history in a history file or trace file.
    Trace files supply their own object; history files need ``spec_text``
    (default ``mw_register:0``)."""
    from ..history import parse_history

    text = Path(path).read_text()
    rep = Report(Path(path).name, "check")
    if text.startswith("TRACE "):
        tf = parse_trace(text)
        history = tf.history
        spec = parse_spec(spec_text) if spec_text else build(config_from_items(tf.config)).spec
    else:
        history = parse_history(text)
        spec = parse_spec(spec_text or "mw_register:0")
    t0 = time.perf_counter()
    _lin_verdict(rep, spec, history, out_dir)
    rep.counts["actions"] = len(history)
    rep.timing["check"] = time.perf_counter() - t0
    if out_dir is not None:
        rep.write(out_dir, figure=False)
    return rep

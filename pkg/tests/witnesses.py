"""Hand-built execution trees shared by the checker tests and the
acceptance suite."""
from bgsim.abd import REPLY_SPAN, abd_implementation
from bgsim.checkers import ExecutionTree, ExplicitLTS
from bgsim.history import Call, Ret
from bgsim.mp import Step, apply_step, initial_state
from bgsim.objects import AtomicState, atomic_enabled

W, R1, R2 = 0, 1, 2  # writer and two readers
S1, S2, S3 = 3, 4, 5  # servers


def reply(server, client, seq):
    return (server, client * REPLY_SPAN + seq)


def deliver(dst, uid):
    return Step("INT", dst, None, (uid,))


def sw_abd_witness():
    """Single-writer ABD with one writer and two readers over three servers.

    Up to node ``e`` the write has reached ``s1`` only, R1 holds a reply of
    value 0 from ``s2`` and a second one (also 0) from ``s3`` is in
    transit, and R2 has read 1 (from ``s1``), written it back and
    returned.  From ``e`` the adversary can make R1 return 0 (deliver the
    old reply from ``s3``) or 1 (let ``s1`` answer), and no single
    linearization of ``e`` extends to both.
    """
    impl = abd_implementation(3, 3, init=0, single_writer=True)
    prefix = [
        Step("CALL", W, Call("write", 1, "0.1")),
        Step("CALL", R1, Call("read", None, "1.1")),
        deliver(S2, (R1, 2)), deliver(R1, reply(S2, R1, 2)),
        deliver(S3, (R1, 3)),
        deliver(S1, (W, 1)),
        Step("CALL", R2, Call("read", None, "2.1")),
        deliver(S1, (R2, 1)), deliver(S2, (R2, 2)),
        deliver(R2, reply(S1, R2, 1)), deliver(R2, reply(S2, R2, 2)),
        deliver(S1, (R2, 4)), deliver(S2, (R2, 5)),
        deliver(R2, reply(S1, R2, 4)), deliver(R2, reply(S2, R2, 5)),
        Step("RET", R2),
    ]
    old = [  # R1 completes its quorum with s3's stale reply
        deliver(R1, reply(S3, R1, 3)),
        deliver(S3, (R1, 6)), deliver(S2, (R1, 5)),
        deliver(R1, reply(S3, R1, 6)), deliver(R1, reply(S2, R1, 5)),
        Step("RET", R1),
    ]
    new = [  # s1 answers R1 with the new value
        deliver(S1, (R1, 1)), deliver(R1, reply(S1, R1, 1)),
        deliver(S1, (R1, 4)), deliver(S2, (R1, 5)),
        deliver(R1, reply(S1, R1, 4)), deliver(R1, reply(S2, R1, 5)),
        Step("RET", R1),
    ]

    def apply(g, step):
        return apply_step(impl, g, step)

    tree = ExecutionTree.from_schedules(initial_state(impl), apply, [prefix + old, prefix + new])
    return tree, len(prefix)


def atomic_register_tree(spec, depth=6):
    script = {0: [("write", 1), ("read", None)], 1: [("write", 2)], 2: [("read", None)]}
    return ExecutionTree.build(AtomicState(), lambda s: atomic_enabled(s, spec, script), depth)


# -- three explicit systems for the composition check --------------------------------
#
# A: a register client that calls write(1) and, after a few internal steps,
#    returns; B: the same behaviour with fewer internal steps; C: the
#    atomic object view (call, linearize, return).

CW, RW = Call("write", 1, "a"), Ret("ok", "a")


def lts_chain():
    a = ExplicitLTS.of("a0", [("a0", CW, "a1"), ("a1", "tau", "a2"), ("a2", "tau", "a3"),
                              ("a3", RW, "a4"), ("a1", "tau", "a5"), ("a5", RW, "a6")])
    b = ExplicitLTS.of("b0", [("b0", CW, "b1"), ("b1", "tau", "b2"), ("b2", RW, "b3")])
    c = ExplicitLTS.of("c0", [("c0", CW, "c1"), ("c1", "lin", "c2"), ("c2", RW, "c3")])
    f1 = {("a0", "b0"), ("a1", "b1"), ("a2", "b2"), ("a3", "b2"), ("a4", "b3"),
          ("a5", "b2"), ("a6", "b3")}
    f2 = {("b0", "c0"), ("b1", "c1"), ("b2", "c2"), ("b3", "c3")}
    return a, b, c, f1, f2

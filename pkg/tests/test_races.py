"""Race checker tests, including brute-force oracle comparisons."""

import random

import pytest

from bbfs.races import (
    BUILTIN_MODELS,
    CyclicOrderError,
    ExecutionTrace,
    Program,
    StorageOp,
    TooLargeError,
    UnknownModelError,
    UnknownSyncOpError,
    build_hb,
    builtin_model,
    check_properly_synchronized,
    enumerate_sc_results,
    find_conflicts,
    match_msc,
    races_in,
    read_op,
    sync_op,
    write_op,
)

F = "f"


def w(id, proc, start, end, file=F):
    return StorageOp(id, proc, "write", file, start, end)


def r(id, proc, start, end, file=F):
    return StorageOp(id, proc, "read", file, start, end)


def s(id, proc, name, file=F):
    return StorageOp(id, proc, "sync", file, sync_name=name)


# brute-force oracles shared with the acceptance suite
from oracles import (
    brute_conflicts,
    brute_verdicts,
    checker_verdicts,
    hb_closure_oracle,
    random_trace,
)


# -- hb -----------------------------------------------------------------------


class TestHb:
    def test_single_process_hb_is_po(self):
        trace = ExecutionTrace([w(0, 0, 0, 9), r(1, 0, 0, 9), w(2, 0, 10, 19)], [])
        hb = build_hb(trace)
        assert hb.ordered(0, 1) and hb.ordered(1, 2) and hb.ordered(0, 2)
        assert not hb.ordered(2, 0) and not hb.ordered(0, 0)

    def test_cross_process_release_acquire_shape(self):
        # p0 writes x then flag; p1 reads flag then x; ordering edge between
        # the flag operations orders the x operations.
        trace = ExecutionTrace(
            [w(0, 0, 0, 3), w(1, 0, 8, 8), r(2, 1, 8, 8), r(3, 1, 0, 3)],
            [(1, 2)],
        )
        hb = build_hb(trace)
        assert hb.ordered(0, 3)
        assert not hb.ordered(3, 0)

    def test_random_dags_match_dense_closure(self):
        rng = random.Random(7)
        for _ in range(150):
            trace = random_trace(rng, BUILTIN_MODELS["mpiio"], max_procs=3, max_ops=6)
            hb = build_hb(trace)
            oracle = hb_closure_oracle(trace)
            for a in trace.ops:
                for b in trace.ops:
                    assert hb.ordered(a.id, b.id) == oracle(a.id, b.id)

    def test_cycle_detection(self):
        with pytest.raises(CyclicOrderError):
            ExecutionTrace([w(0, 0, 0, 1), w(1, 1, 0, 1)], [(0, 1), (1, 0)])


# -- conflicts ------------------------------------------------------------------


class TestConflicts:
    def test_two_reads_do_not_conflict(self):
        trace = ExecutionTrace([r(0, 0, 0, 9), r(1, 1, 0, 9)], [])
        assert find_conflicts(trace) == []

    def test_write_read_overlap(self):
        trace = ExecutionTrace([w(0, 0, 0, 9), r(1, 1, 5, 14)], [])
        assert [(a.id, b.id) for a, b in find_conflicts(trace)] == [(0, 1)]

    def test_different_files_do_not_conflict(self):
        trace = ExecutionTrace([w(0, 0, 0, 9, "a"), w(1, 1, 0, 9, "b")], [])
        assert find_conflicts(trace) == []

    def test_matches_brute_force(self):
        rng = random.Random(21)
        for _ in range(100):
            trace = random_trace(rng, BUILTIN_MODELS["session"])
            got = [(a.id, b.id) for a, b in find_conflicts(trace)]
            want = [(a.id, b.id) for a, b in brute_conflicts(trace)]
            assert sorted(got) == sorted(want)


# -- MSC matching ---------------------------------------------------------------


class TestMatchMsc:
    def test_commit_pattern(self):
        trace = ExecutionTrace(
            [w(0, 0, 0, 9), s(1, 0, "commit"), r(2, 1, 0, 9)], [(1, 2)]
        )
        hb = build_hb(trace)
        pattern = BUILTIN_MODELS["commit"].patterns[0]
        witness = match_msc(hb, trace.by_id[0], trace.by_id[2], pattern)
        assert [x.id for x in witness] == [1]

    def test_k0_pattern(self):
        pattern = BUILTIN_MODELS["posix"].patterns[0]
        ordered = ExecutionTrace([w(0, 0, 0, 9), r(1, 1, 0, 9)], [(0, 1)])
        hb = build_hb(ordered)
        assert match_msc(hb, ordered.by_id[0], ordered.by_id[1], pattern) == ()
        unordered = ExecutionTrace([w(0, 0, 0, 9), r(1, 1, 0, 9)], [])
        hb2 = build_hb(unordered)
        assert match_msc(hb2, unordered.by_id[0], unordered.by_id[1], pattern) is None

    def test_session_close_by_third_process_rejected(self):
        trace = ExecutionTrace(
            [
                w(0, 0, 0, 9),
                s(1, 2, "session_close"),  # wrong process for the po edge
                s(2, 1, "session_open"),
                r(3, 1, 0, 9),
            ],
            [(0, 1), (1, 2)],
        )
        hb = build_hb(trace)
        pattern = BUILTIN_MODELS["session"].patterns[0]
        assert match_msc(hb, trace.by_id[0], trace.by_id[3], pattern) is None

    def test_sync_on_other_file_rejected(self):
        trace = ExecutionTrace(
            [w(0, 0, 0, 9), StorageOp(1, 0, "sync", "g", sync_name="commit"), r(2, 1, 0, 9)],
            [(1, 2)],
        )
        hb = build_hb(trace)
        pattern = BUILTIN_MODELS["commit"].patterns[0]
        assert match_msc(hb, trace.by_id[0], trace.by_id[2], pattern) is None


# -- checker ----------------------------------------------------------------------


class TestChecker:
    def session_trace(self, with_edge=True):
        ops = [
            w(0, 0, 0, 9),
            s(1, 0, "session_close"),
            s(2, 1, "session_open"),
            r(3, 1, 0, 9),
        ]
        return ExecutionTrace(ops, [(1, 2)] if with_edge else [])

    def test_session_properly_synchronized(self):
        reports = check_properly_synchronized(self.session_trace(), builtin_model("session"))
        assert [rep.verdict for rep in reports] == ["properly-synchronized"]

    def test_session_without_edge_races(self):
        reports = check_properly_synchronized(
            self.session_trace(with_edge=False), builtin_model("session")
        )
        assert len(races_in(reports)) == 1

    def test_mpiio_sync_barrier_sync(self):
        trace = ExecutionTrace(
            [
                w(0, 0, 0, 9),
                s(1, 0, "MPI_File_sync"),
                s(2, 1, "MPI_File_sync"),
                r(3, 1, 0, 9),
            ],
            [(1, 2)],
        )
        reports = check_properly_synchronized(trace, builtin_model("mpiio"))
        assert not races_in(reports)

    def test_unknown_sync_op_rejected(self):
        trace = ExecutionTrace([w(0, 0, 0, 9), s(1, 0, "commit")], [])
        with pytest.raises(UnknownSyncOpError):
            check_properly_synchronized(trace, builtin_model("posix"))

    def test_read_before_write_clause(self):
        trace = ExecutionTrace([r(0, 0, 0, 9), w(1, 1, 0, 9)], [(0, 1)])
        reports = check_properly_synchronized(trace, builtin_model("commit"))
        assert reports[0].verdict == "properly-synchronized"
        assert reports[0].clause == "read-before"

    def test_verdicts_match_brute_force(self):
        rng = random.Random(99)
        models = [BUILTIN_MODELS[name] for name in ("posix", "commit", "commit-relaxed", "session", "mpiio")]
        for i in range(300):
            model = models[i % len(models)]
            trace = random_trace(rng, model)
            assert checker_verdicts(trace, model) == brute_verdicts(trace, model)

    def test_adding_order_never_creates_races(self):
        rng = random.Random(13)
        for i in range(120):
            model = BUILTIN_MODELS[("posix", "commit", "session")[i % 3]]
            trace = random_trace(rng, model)
            before = {k for k, v in checker_verdicts(trace, model).items() if v == "race"}
            cross = [
                (a.id, b.id)
                for a in trace.ops
                for b in trace.ops
                if a.id < b.id and a.process != b.process
            ]
            if not cross:
                continue
            extra = rng.choice(cross)
            bigger = ExecutionTrace(trace.ops, sorted(set(trace.so_edges) | {extra}))
            after = {k for k, v in checker_verdicts(bigger, model).items() if v == "race"}
            assert after <= before


# -- builtin model table -----------------------------------------------------------


class TestBuiltinModels:
    def test_posix(self):
        m = builtin_model("posix")
        assert m.sync_ops == frozenset()
        assert [p.edges for p in m.patterns] == [("hb",)]

    def test_commit_variants(self):
        assert builtin_model("commit").patterns[0].edges == ("po", "hb")
        assert builtin_model("commit-relaxed").patterns[0].edges == ("hb", "hb")
        for name in ("commit", "commit-relaxed"):
            assert builtin_model(name).sync_ops == frozenset({"commit"})

    def test_session(self):
        m = builtin_model("session")
        assert m.sync_ops == frozenset({"session_close", "session_open"})
        assert m.patterns[0].syncs == ("session_close", "session_open")
        assert m.patterns[0].edges == ("po", "hb", "po")

    def test_mpiio_four_patterns(self):
        m = builtin_model("mpiio")
        assert len(m.patterns) == 4
        firsts = {p.syncs[0] for p in m.patterns}
        seconds = {p.syncs[1] for p in m.patterns}
        assert firsts == {"MPI_File_close", "MPI_File_sync"}
        assert seconds == {"MPI_File_sync", "MPI_File_open"}
        assert all(p.edges == ("po", "hb", "po") for p in m.patterns)

    def test_unknown_model(self):
        with pytest.raises(UnknownModelError):
            builtin_model("nope")


# -- SC enumeration oracle -----------------------------------------------------------


class TestScOracle:
    def test_cross_read_litmus_excludes_zero_zero(self):
        hundred = bytes([100])
        prog = Program(
            [
                [write_op(F, 0, hundred), read_op(F, 1, 1)],
                [write_op(F, 1, hundred), read_op(F, 0, 1)],
            ]
        )
        outcomes = enumerate_sc_results(prog)
        reads = {tuple(v for (_, _, v) in sorted(rd)) for rd, _ in outcomes}
        assert len(outcomes) == 3
        assert (b"\x00", b"\x00") not in reads
        assert reads == {(b"\x00", b"d"), (b"d", b"\x00"), (b"d", b"d")}
        finals = {files for _, files in outcomes}
        assert finals == {((F, b"dd"),)}

    def test_single_process_single_outcome(self):
        prog = Program([[write_op(F, 0, b"ab"), read_op(F, 0, 2)]])
        outcomes = enumerate_sc_results(prog)
        assert len(outcomes) == 1
        (reads, files), = outcomes
        assert reads == ((0, 1, b"ab"),)
        assert files == ((F, b"ab"),)

    def test_disjoint_writers_commute(self):
        prog = Program(
            [[write_op(F, 0, b"xx")], [write_op(F, 2, b"yy")]]
        )
        outcomes = enumerate_sc_results(prog)
        assert len(outcomes) == 1
        assert next(iter(outcomes))[1] == ((F, b"xxyy"),)

    def test_so_edges_restrict_interleavings(self):
        prog = Program(
            [[write_op(F, 0, b"a")], [read_op(F, 0, 1)]],
            so_edges=[(((0, 0)), ((1, 0)))],
        )
        outcomes = enumerate_sc_results(prog)
        assert {rd for rd, _ in outcomes} == {((1, 0, b"a"),)}

    def test_size_guard(self):
        with pytest.raises(TooLargeError):
            enumerate_sc_results(Program([[], [], [], [], []]))
        with pytest.raises(TooLargeError):
            enumerate_sc_results(Program([[read_op(F, 0, 1)] * 9]))

    def test_program_to_trace_roundtrip(self):
        prog = Program(
            [
                [write_op(F, 0, b"ab"), sync_op(F, "commit")],
                [read_op(F, 0, 2)],
            ],
            so_edges=[((0, 1), (1, 0))],
        )
        trace = prog.to_trace()
        assert [op.kind for op in trace.ops] == ["write", "sync", "read"]
        reports = check_properly_synchronized(trace, builtin_model("commit"))
        assert not races_in(reports)

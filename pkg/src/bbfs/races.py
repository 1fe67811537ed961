"""Storage consistency models as data, plus a race checker and SC oracle.

A consistency model is a set of synchronization operation names together
with one or more synchronization chain patterns.  A pattern lists k sync-op
names joined by k+1 edge constraints, each either ``po`` (same process,
earlier in program order) or ``hb`` (happens-before, the transitive closure
of program order and cross-process synchronization order).

Two conflicting data operations are properly synchronized when the earlier
one (in happens-before) is a read, or when some pattern instance links them.
A conflicting pair that is not properly synchronized is a storage race.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


class CyclicOrderError(ValueError):
    """Program order plus synchronization order contains a cycle."""


class UnknownSyncOpError(ValueError):
    """Trace contains a sync operation outside the model's sync set."""


class UnknownModelError(KeyError):
    pass


class TooLargeError(ValueError):
    """Program exceeds the exhaustive-enumeration guard."""


@dataclass(frozen=True, slots=True)
class StorageOp:
    """One executed operation: a ranged data access or a named sync op."""

    id: int
    process: int
    kind: str  # 'read' | 'write' | 'sync'
    file: str
    start: int | None = None
    end: int | None = None
    sync_name: str | None = None

    def __post_init__(self) -> None:
        if self.kind in ("read", "write"):
            if self.start is None or self.end is None or self.start > self.end:
                raise ValueError(f"data op {self.id} needs a valid byte range")
        elif self.kind == "sync":
            if not self.sync_name:
                raise ValueError(f"sync op {self.id} needs a name")
        else:
            raise ValueError(f"unknown op kind {self.kind!r}")

    @property
    def is_data(self) -> bool:
        return self.kind in ("read", "write")


@dataclass(frozen=True)
class MscPattern:
    """k sync-op names joined by k+1 edges drawn from {'po', 'hb'}."""

    edges: tuple[str, ...]
    syncs: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.syncs) + 1:
            raise ValueError("pattern needs one more edge than sync ops")
        for e in self.edges:
            if e not in ("po", "hb"):
                raise ValueError(f"bad edge label {e!r}")

    def describe(self) -> str:
        parts = []
        for e, s in itertools.zip_longest(self.edges, self.syncs):
            parts.append(f"-{e}->")
            if s is not None:
                parts.append(s)
        return " ".join(parts)


@dataclass(frozen=True)
class ModelDef:
    name: str
    sync_ops: frozenset[str]
    patterns: tuple[MscPattern, ...]


_MPIIO_FIRST = ("MPI_File_close", "MPI_File_sync")
_MPIIO_SECOND = ("MPI_File_sync", "MPI_File_open")

BUILTIN_MODELS: dict[str, ModelDef] = {
    "posix": ModelDef("posix", frozenset(), (MscPattern(("hb",), ()),)),
    "commit": ModelDef(
        "commit", frozenset({"commit"}), (MscPattern(("po", "hb"), ("commit",)),)
    ),
    "commit-relaxed": ModelDef(
        "commit-relaxed", frozenset({"commit"}), (MscPattern(("hb", "hb"), ("commit",)),)
    ),
    "session": ModelDef(
        "session",
        frozenset({"session_close", "session_open"}),
        (MscPattern(("po", "hb", "po"), ("session_close", "session_open")),),
    ),
    "mpiio": ModelDef(
        "mpiio",
        frozenset({"MPI_File_sync", "MPI_File_close", "MPI_File_open"}),
        tuple(
            MscPattern(("po", "hb", "po"), (s1, s2))
            for s1 in _MPIIO_FIRST
            for s2 in _MPIIO_SECOND
        ),
    ),
}


def builtin_model(name: str) -> ModelDef:
    try:
        return BUILTIN_MODELS[name]
    except KeyError:
        raise UnknownModelError(name) from None


class ExecutionTrace:
    """Operations plus program order (per-process id order) and so edges."""

    def __init__(self, ops: list[StorageOp], so_edges: list[tuple[int, int]]):
        self.ops = list(ops)
        self.so_edges = list(so_edges)
        self.by_id = {op.id: op for op in self.ops}
        if len(self.by_id) != len(self.ops):
            raise ValueError("duplicate op ids")
        for a, b in self.so_edges:
            if a not in self.by_id or b not in self.by_id:
                raise ValueError(f"so edge ({a}, {b}) references a missing op")
        self.per_process: dict[int, list[StorageOp]] = {}
        for op in sorted(self.ops, key=lambda o: o.id):
            self.per_process.setdefault(op.process, []).append(op)
        self._po_index = {
            op.id: i for seq in self.per_process.values() for i, op in enumerate(seq)
        }
        self._toposort()  # raises CyclicOrderError

    def po_before(self, a: StorageOp, b: StorageOp) -> bool:
        return a.process == b.process and self._po_index[a.id] < self._po_index[b.id]

    def successors(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = {op.id: [] for op in self.ops}
        for seq in self.per_process.values():
            for a, b in zip(seq, seq[1:]):
                succ[a.id].append(b.id)
        for a, b in self.so_edges:
            succ[a].append(b)
        return succ

    def _toposort(self) -> list[int]:
        succ = self.successors()
        indeg = {op.id: 0 for op in self.ops}
        for outs in succ.values():
            for b in outs:
                indeg[b] += 1
        ready = sorted(i for i, d in indeg.items() if d == 0)
        order: list[int] = []
        while ready:
            n = ready.pop()
            order.append(n)
            for b in succ[n]:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        if len(order) != len(self.ops):
            raise CyclicOrderError("po and so edges form a cycle")
        return order


class HbRelation:
    """Strict happens-before reachability over a trace, via bitsets."""

    def __init__(self, trace: ExecutionTrace):
        self.trace = trace
        order = trace._toposort()
        self._bit = {op_id: 1 << i for i, op_id in enumerate(order)}
        succ = trace.successors()
        reach: dict[int, int] = {}
        for op_id in reversed(order):
            mask = 0
            for nxt in succ[op_id]:
                mask |= self._bit[nxt] | reach[nxt]
            reach[op_id] = mask
        self._reach = reach

    def ordered(self, x_id: int, y_id: int) -> bool:
        """True iff x happens strictly before y."""
        return bool(self._reach[x_id] & self._bit[y_id])


def build_hb(trace: ExecutionTrace) -> HbRelation:
    return HbRelation(trace)


def find_conflicts(trace: ExecutionTrace) -> list[tuple[StorageOp, StorageOp]]:
    """Same-file overlapping data-op pairs with at least one write."""
    by_file: dict[str, list[StorageOp]] = {}
    for op in trace.ops:
        if op.is_data:
            by_file.setdefault(op.file, []).append(op)
    out = []
    for ops in by_file.values():
        ops = sorted(ops, key=lambda o: (o.start, o.id))
        for i, a in enumerate(ops):
            for b in ops[i + 1 :]:
                if b.start > a.end:
                    break
                if a.kind == "write" or b.kind == "write":
                    pair = (a, b) if a.id < b.id else (b, a)
                    out.append(pair)
    out.sort(key=lambda p: (p[0].id, p[1].id))
    return out


def match_msc(hb: HbRelation, x: StorageOp, y: StorageOp, pattern: MscPattern):
    """Find sync ops s_1..s_k linking x to y under the pattern, or None.

    Sync ops must target the same file as the conflicting pair; a ``po``
    edge additionally pins the sync op to the adjacent endpoint's process.
    """
    trace = hb.trace

    def edge_ok(label: str, a: StorageOp, b: StorageOp) -> bool:
        if label == "po":
            return trace.po_before(a, b)
        return hb.ordered(a.id, b.id)

    k = len(pattern.syncs)
    if k == 0:
        return () if edge_ok(pattern.edges[0], x, y) else None

    candidates = [
        [
            op
            for op in trace.ops
            if op.kind == "sync" and op.sync_name == name and op.file == x.file
        ]
        for name in pattern.syncs
    ]

    def extend(slot: int, prev: StorageOp, chosen: tuple):
        if slot == k:
            return chosen if edge_ok(pattern.edges[k], prev, y) else None
        for s in candidates[slot]:
            if edge_ok(pattern.edges[slot], prev, s):
                found = extend(slot + 1, s, chosen + (s,))
                if found is not None:
                    return found
        return None

    return extend(0, x, ())


@dataclass(frozen=True)
class RaceReport:
    x: StorageOp
    y: StorageOp
    verdict: str  # 'properly-synchronized' | 'race'
    witness: tuple[StorageOp, ...] | None = None
    clause: str | None = None  # 'read-before' | 'msc' | None

    def describe(self) -> str:
        def fmt(op):
            return f"p{op.process}:{op.kind}[{op.start},{op.end}]@{op.file}(id={op.id})"

        if self.verdict == "race":
            return f"RACE {fmt(self.x)} <-> {fmt(self.y)}: no ordering clause applies"
        via = ""
        if self.clause == "msc" and self.witness:
            via = " via " + ", ".join(f"{s.sync_name}(id={s.id})" for s in self.witness)
        elif self.clause == "read-before":
            via = " (read happens first)"
        return f"ok   {fmt(self.x)} --> {fmt(self.y)}{via}"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "clause": self.clause,
            "x": {"id": self.x.id, "process": self.x.process, "kind": self.x.kind,
                  "file": self.x.file, "start": self.x.start, "end": self.x.end},
            "y": {"id": self.y.id, "process": self.y.process, "kind": self.y.kind,
                  "file": self.y.file, "start": self.y.start, "end": self.y.end},
            "witness": [s.id for s in self.witness] if self.witness else [],
        }


def _directed_ps(hb: HbRelation, model: ModelDef, x: StorageOp, y: StorageOp):
    """Clause satisfied for ordered pair (x, y), or None."""
    if x.kind == "read" and hb.ordered(x.id, y.id):
        return ("read-before", ())
    if x.kind == "write":
        for pattern in model.patterns:
            w = match_msc(hb, x, y, pattern)
            if w is not None:
                return ("msc", w)
    return None


def check_properly_synchronized(trace: ExecutionTrace, model: ModelDef) -> list[RaceReport]:
    """Verdict for every conflicting pair in the trace under the model."""
    for op in trace.ops:
        if op.kind == "sync" and op.sync_name not in model.sync_ops:
            raise UnknownSyncOpError(
                f"sync op {op.sync_name!r} (id={op.id}) is not in model {model.name!r}"
            )
    hb = build_hb(trace)
    reports = []
    for a, b in find_conflicts(trace):
        hit = _directed_ps(hb, model, a, b)
        x, y = a, b
        if hit is None:
            hit = _directed_ps(hb, model, b, a)
            x, y = b, a
        if hit is None:
            reports.append(RaceReport(a, b, "race"))
        else:
            clause, witness = hit
            reports.append(RaceReport(x, y, "properly-synchronized", witness, clause))
    return reports


def races_in(reports: list[RaceReport]) -> list[RaceReport]:
    return [r for r in reports if r.verdict == "race"]


# -- sequential-consistency oracle -------------------------------------------


@dataclass(frozen=True, slots=True)
class ProgramOp:
    kind: str  # 'write' | 'read' | 'sync'
    file: str
    offset: int = 0
    data: bytes | None = None  # writes
    size: int = 0  # reads
    sync_name: str | None = None


def write_op(file: str, offset: int, data: bytes) -> ProgramOp:
    return ProgramOp("write", file, offset, data=data)


def read_op(file: str, offset: int, size: int) -> ProgramOp:
    return ProgramOp("read", file, offset, size=size)


def sync_op(file: str, name: str) -> ProgramOp:
    return ProgramOp("sync", file, sync_name=name)


@dataclass
class Program:
    """A small multiprocess program with fixed cross-process so edges."""

    processes: list[list[ProgramOp]]
    so_edges: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)

    def file_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for ops in self.processes:
            for op in ops:
                if op.kind == "write":
                    hi = op.offset + len(op.data)
                elif op.kind == "read":
                    hi = op.offset + op.size
                else:
                    continue
                sizes[op.file] = max(sizes.get(op.file, 0), hi)
        return sizes

    def to_trace(self) -> ExecutionTrace:
        """Trace form of the program (po from listing order, so as given)."""
        ids: dict[tuple[int, int], int] = {}
        ops = []
        next_id = 0
        for p, seq in enumerate(self.processes):
            for i, op in enumerate(seq):
                ids[(p, i)] = next_id
                if op.kind == "sync":
                    ops.append(StorageOp(next_id, p, "sync", op.file, sync_name=op.sync_name))
                else:
                    size = len(op.data) if op.kind == "write" else op.size
                    ops.append(
                        StorageOp(next_id, p, op.kind, op.file, op.offset, op.offset + size - 1)
                    )
                next_id += 1
        so = [(ids[a], ids[b]) for a, b in self.so_edges]
        return ExecutionTrace(ops, so)


MAX_PROCESSES = 4
MAX_OPS_PER_PROCESS = 8


def enumerate_sc_results(program: Program, max_states: int = 2_000_000) -> frozenset:
    """All (read values, final file contents) outcomes over interleavings.

    Interleavings respect each process's listing order and the program's so
    edges.  Outcomes are deduplicated; each is a pair of tuples:
    ``((proc, op_index, bytes), ...)`` for reads and ``((file, bytes), ...)``
    for final contents.
    """
    if len(program.processes) > MAX_PROCESSES:
        raise TooLargeError(f"more than {MAX_PROCESSES} processes")
    if any(len(seq) > MAX_OPS_PER_PROCESS for seq in program.processes):
        raise TooLargeError(f"more than {MAX_OPS_PER_PROCESS} ops in one process")

    sizes = program.file_sizes()
    init_files = tuple(sorted((f, bytes(n)) for f, n in sizes.items()))
    nproc = len(program.processes)
    blockers: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for src, dst in program.so_edges:
        blockers.setdefault(dst, []).append(src)

    def enabled(positions, target):
        p, i = target
        if positions[p] != i:
            return False
        for (sp, si) in blockers.get(target, ()):
            if positions[sp] <= si:  # source op not yet executed
                return False
        return True

    outcomes = set()
    seen = set()
    start = (tuple([0] * nproc), init_files, ())
    stack = [start]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        if len(seen) > max_states:
            raise TooLargeError("state budget exceeded")
        positions, files, reads = state
        progressed = False
        for p in range(nproc):
            i = positions[p]
            if i >= len(program.processes[p]) or not enabled(positions, (p, i)):
                continue
            progressed = True
            op = program.processes[p][i]
            new_positions = tuple(positions[:p] + (i + 1,) + positions[p + 1 :])
            new_files, new_reads = files, reads
            if op.kind == "write":
                fdict = dict(files)
                buf = bytearray(fdict[op.file])
                buf[op.offset : op.offset + len(op.data)] = op.data
                fdict[op.file] = bytes(buf)
                new_files = tuple(sorted(fdict.items()))
            elif op.kind == "read":
                value = dict(files)[op.file][op.offset : op.offset + op.size]
                new_reads = reads + ((p, i, value),)
            stack.append((new_positions, new_files, new_reads))
        if not progressed:
            if any(positions[p] < len(program.processes[p]) for p in range(nproc)):
                continue  # blocked interleaving prefix; so edges unsatisfiable here
            outcomes.add((tuple(sorted(reads)), files))
    return frozenset(outcomes)

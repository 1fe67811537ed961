"""Random properly-synchronized programs: generator, layer runner, comparison.

Programs are phase structured: in each phase some processes write disjoint
slots and others read slots not written in that phase; a full barrier
separates phases.  Writers publish at the phase end (commit or session
close), so every conflicting pair is linked by the model's synchronization
chain; the checker re-verifies this for every generated program.
"""

from dataclasses import dataclass, field

from bbfs.engine import SimConfig
from bbfs.kernel import World
from bbfs.layers import layer_file
from bbfs.races import (
    Program,
    builtin_model,
    check_properly_synchronized,
    enumerate_sc_results,
    races_in,
    read_op,
    sync_op,
    write_op,
)
from bbfs.trace import TraceWriter

FILE = "f"
SLOT = 4
N_SLOTS = 12
MAX_OPS = 8


@dataclass
class GeneratedProgram:
    model: str
    nproc: int
    phases: list  # per phase: {proc: [("write", slot, data) | ("read", slot)]}
    program: Program = field(default=None)


def _sync_overhead(model):
    # ops a participating process spends on sync calls in one phase
    return 2 if model == "session" else 1


def gen_program(rng, model):
    nproc = rng.randint(1, 4)
    nphases = rng.randint(1, 2 if model == "session" else 3)
    phases = []
    op_counts = [0] * nproc
    for _ in range(nphases):
        plan = {}
        avail = list(range(N_SLOTS))
        rng.shuffle(avail)
        written_now = set()
        for p in range(nproc):
            if rng.random() >= 0.6:
                continue
            budget = MAX_OPS - op_counts[p] - _sync_overhead(model)
            k = min(rng.randint(1, 2), budget, len(avail))
            if k < 1:
                continue
            ops = []
            for _ in range(k):
                slot = avail.pop()
                value = bytes([rng.randint(1, 255)]) * SLOT
                ops.append(("write", slot, value))
                written_now.add(slot)
            plan[p] = ops
        for p in range(nproc):
            if p in plan or rng.random() >= 0.5:
                continue
            overhead = 2 if model == "session" else 0
            budget = MAX_OPS - op_counts[p] - overhead
            k = min(rng.randint(1, 2), budget)
            readable = [s for s in range(N_SLOTS) if s not in written_now]
            if k < 1 or not readable:
                continue
            plan[p] = [("read", rng.choice(readable)) for _ in range(k)]
        for p, ops in plan.items():
            wrote = any(op[0] == "write" for op in ops)
            op_counts[p] += len(ops) + (2 if model == "session" else (1 if wrote else 0))
        phases.append(plan)
    gp = GeneratedProgram(model, nproc, phases)
    gp.program = _to_program(gp)
    return gp


def _to_program(gp):
    """Program form with barrier-shaped so edges between phases."""
    processes = [[] for _ in range(gp.nproc)]
    so_edges = []
    last_op = [None] * gp.nproc
    pending = {}

    def append(p, op):
        idx = len(processes[p])
        processes[p].append(op)
        for src in pending.pop(p, ()):
            so_edges.append((src, (p, idx)))
        last_op[p] = (p, idx)
        return idx

    for plan in gp.phases:
        for p in sorted(plan):
            ops = plan[p]
            if gp.model == "session":
                append(p, sync_op(FILE, "session_open"))
            wrote = False
            for op in ops:
                if op[0] == "write":
                    _, slot, value = op
                    append(p, write_op(FILE, slot * SLOT, value))
                    wrote = True
                else:
                    _, slot = op
                    append(p, read_op(FILE, slot * SLOT, SLOT))
            if gp.model == "session":
                append(p, sync_op(FILE, "session_close"))
            elif wrote:
                append(p, sync_op(FILE, "commit"))
        # full barrier: every process's next op follows every other's last op
        captured = list(last_op)
        for p in range(gp.nproc):
            sources = [captured[q] for q in range(gp.nproc) if q != p and captured[q] is not None]
            if sources:
                pending[p] = sources
    return Program(processes, so_edges)


def run_on_layer(gp, config=None):
    """Execute the program through its layer; returns (reads, final bytes, trace)."""
    trace = TraceWriter()
    world = World(config or SimConfig(), nodes=gp.nproc + 1, procs_per_node=1, trace=trace)
    bar = world.barrier(gp.nproc + 1, order_trace=True)
    reads = {}
    final = {}
    fsize = gp.program.file_sizes().get(FILE, 0)

    def proc_body(p):
        f = layer_file(gp.model, world.clients[p], FILE)
        op_index = 0
        for plan in gp.phases:
            ops = plan.get(p, [])
            if ops:
                if gp.model == "session":
                    yield from f.session_open()
                    op_index += 1
                wrote = False
                for op in ops:
                    if op[0] == "write":
                        _, slot, value = op
                        yield from f.seek(slot * SLOT)
                        yield from f.write(value)
                        wrote = True
                    else:
                        _, slot = op
                        yield from f.seek(slot * SLOT)
                        reads[(p, op_index)] = yield from f.read(SLOT)
                    op_index += 1
                if gp.model == "session":
                    yield from f.session_close()
                    op_index += 1
                elif wrote:
                    yield from f.commit()
                    op_index += 1
            yield bar.arrive()
        f.close()

    def verifier():
        p = gp.nproc
        for _ in gp.phases:
            yield bar.arrive()
        if fsize:
            f = layer_file(gp.model, world.clients[p], FILE)
            if gp.model == "session":
                yield from f.session_open()
            yield from f.seek(0)
            final["content"] = yield from f.read(fsize)
            if gp.model == "session":
                yield from f.session_close()
            f.close()

    for p in range(gp.nproc):
        world.sim.spawn(proc_body(p))
    world.sim.spawn(verifier())
    world.run()
    return reads, final.get("content"), trace


def sim_outcome(gp, reads, final_content):
    """Outcome tuple in the oracle's shape."""
    reads_tuple = tuple(sorted((p, i, v) for (p, i), v in reads.items()))
    fsize = gp.program.file_sizes().get(FILE, 0)
    files = ((FILE, final_content),) if fsize else ()
    return reads_tuple, files


def check_program(gp, config=None):
    """Run on the layer; assert race-free trace and SC-contained outcome."""
    model = builtin_model(gp.model)
    program_races = races_in(check_properly_synchronized(gp.program.to_trace(), model))
    assert not program_races, f"generator produced a racy program: {program_races}"
    reads, final_content, trace = run_on_layer(gp, config)
    recorded = trace.to_execution_trace()
    trace_races = races_in(check_properly_synchronized(recorded, model))
    assert not trace_races, f"recorded trace has races: {trace_races}"
    outcomes = enumerate_sc_results(gp.program)
    got = sim_outcome(gp, reads, final_content)
    assert got in outcomes, f"outcome {got!r} not among {len(outcomes)} SC outcomes"
    return outcomes

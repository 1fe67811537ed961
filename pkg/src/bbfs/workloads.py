"""Benchmark workloads over the consistency layers.

Three families:

* synthetic shared-file phases (``cnw``, ``snw``, ``ccr``, ``csr``): a write
  phase and optionally a read phase over one shared file, with contiguous,
  strided, or random access;
* a checkpoint/restart emulation with partner redundancy: every writer node
  buffers its checkpoint in memory, copies it to its own SSD and a partner
  node's SSD, then surviving nodes restart from the memory buffer while a
  spare node pulls the failed node's copy over the network;
* a preloaded random-read emulation: processes stage disjoint shards of a
  sample set on node-local storage, then every epoch reads a randomly
  assigned subset of all samples, locally or from the owning process.

Phase timing starts after per-process setup (handle opens and, for writers,
the session open) so that write phases compare the publication work itself
across models.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .engine import SimConfig
from .kernel import World
from .layers import MODEL_NAMES, layer_file
from .trace import TraceWriter

SHARED_FILE = "shared"
PATTERNS = ("contiguous", "strided", "random")


@dataclass
class SyntheticConfig:
    shape: str
    writer_nodes: int
    reader_nodes: int
    procs_per_node: int
    writes_per_proc: int
    reads_per_proc: int
    access_size: int
    write_pattern: str = "contiguous"
    read_pattern: str = "contiguous"
    model: str = "commit"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")
        for pat in (self.write_pattern, self.read_pattern):
            if pat not in PATTERNS:
                raise ValueError(f"unknown access pattern {pat!r}")
        if self.writer_nodes + self.reader_nodes < 1:
            raise ValueError("need at least one node")
        if self.access_size < 1:
            raise ValueError("access size must be >= 1")

    @property
    def nodes(self) -> int:
        return self.writer_nodes + self.reader_nodes

    @property
    def writer_procs(self) -> int:
        return self.writer_nodes * self.procs_per_node

    @property
    def reader_procs(self) -> int:
        return self.reader_nodes * self.procs_per_node


def synthetic_shape(shape: str, nodes: int, procs_per_node: int, *,
                    writes_per_proc: int = 10, reads_per_proc: int = 10,
                    access_size: int = 8192, model: str = "commit", seed: int = 0) -> SyntheticConfig:
    """Standard shapes; `nodes` counts nodes per role (read-after-write
    shapes run `nodes` writer nodes plus `nodes` reader nodes)."""
    shape = shape.lower()
    if shape == "cnw":
        return SyntheticConfig(shape, nodes, 0, procs_per_node, writes_per_proc,
                               0, access_size, "contiguous", "contiguous", model, seed)
    if shape == "snw":
        return SyntheticConfig(shape, nodes, 0, procs_per_node, writes_per_proc,
                               0, access_size, "strided", "contiguous", model, seed)
    if shape == "ccr":
        return SyntheticConfig(shape, nodes, nodes, procs_per_node, writes_per_proc,
                               reads_per_proc, access_size, "contiguous", "contiguous", model, seed)
    if shape == "csr":
        return SyntheticConfig(shape, nodes, nodes, procs_per_node, writes_per_proc,
                               reads_per_proc, access_size, "contiguous", "strided", model, seed)
    raise ValueError(f"unknown shape {shape!r}")


def gen_offsets(config: SyntheticConfig, phase: str, proc_index: int) -> list[int]:
    """Byte offsets for one process in the given phase ('write' or 'read')."""
    if phase == "write":
        nprocs, m, pattern = config.writer_procs, config.writes_per_proc, config.write_pattern
    else:
        nprocs, m, pattern = config.reader_procs, config.reads_per_proc, config.read_pattern
    s = config.access_size
    if pattern == "contiguous":
        return [proc_index * m * s + k * s for k in range(m)]
    if pattern == "strided":
        return [(k * nprocs + proc_index) * s for k in range(m)]
    rng = random.Random(config.seed * 31 + (0 if phase == "write" else 1))
    slots = list(range(nprocs * m))
    rng.shuffle(slots)
    return [slot * s for slot in slots[proc_index * m : (proc_index + 1) * m]]


@dataclass
class PhaseResult:
    name: str
    bytes_moved: int
    start: float
    end: float
    rpc: dict = field(default_factory=dict)
    server_busy: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def seconds(self) -> float:
        return self.end - self.start

    @property
    def bandwidth(self) -> float:
        return self.bytes_moved / self.seconds if self.seconds > 0 else 0.0


@dataclass
class BenchResult:
    workload: str
    shape: str
    model: str
    params: dict
    phases: list[PhaseResult]
    final_clock: float
    trace: TraceWriter
    accounting: dict

    def phase(self, name: str) -> PhaseResult:
        for ph in self.phases:
            if ph.name == name:
                return ph
        raise KeyError(name)


class _PhaseTracker:
    """Snapshot accounting at every barrier release; derive phase windows."""

    def __init__(self, world: World):
        self.world = world
        self.marks: list[tuple[float, dict]] = []

    def __call__(self) -> None:
        if self.world.trace is not None:
            self.world.trace.barrier(range(len(self.world.clients)))
        self.marks.append((self.world.sim.now, self.world.sim.accounting.snapshot()))

    def window(self, name: str, i: int, nbytes: int, extra: dict | None = None) -> PhaseResult:
        t0, snap0 = self.marks[i]
        t1, snap1 = self.marks[i + 1]
        delta_kind = {k: v - snap0["rpc_kind"].get(k, 0) for k, v in snap1["rpc_kind"].items()}
        busy0 = sum(v for k, v in snap0["busy_time"].items() if k.startswith("worker:"))
        busy1 = sum(v for k, v in snap1["busy_time"].items() if k.startswith("worker:"))
        return PhaseResult(name, nbytes, t0, t1,
                           {k: v for k, v in delta_kind.items() if v},
                           busy1 - busy0, extra or {})


def run_synthetic(sim_config: SimConfig | None, config: SyntheticConfig) -> BenchResult:
    world = World(sim_config, nodes=config.nodes, procs_per_node=config.procs_per_node,
                  trace=TraceWriter())
    tracker = _PhaseTracker(world)
    nprocs = len(world.clients)
    from .engine import Barrier

    bar = Barrier(world.sim, nprocs, on_release=tracker)
    has_read_phase = config.reader_procs > 0 and config.reads_per_proc > 0

    def writer(i: int):
        client = world.clients[i]
        f = layer_file(config.model, client, SHARED_FILE)
        if config.model == "session":
            yield from f.session_open()
        yield bar.arrive()  # write phase start
        for off in gen_offsets(config, "write", i):
            yield from f.seek(off)
            yield from f.write(config.access_size)
        if config.model == "session":
            yield from f.session_close()
        elif config.model == "commit":
            yield from f.commit()
        yield bar.arrive()  # write phase end
        if has_read_phase:
            yield bar.arrive()  # read phase end
        f.close()

    def reader(j: int):
        client = world.clients[config.writer_procs + j]
        f = layer_file(config.model, client, SHARED_FILE)
        yield bar.arrive()
        yield bar.arrive()  # read phase start
        if config.model == "session":
            yield from f.session_open()
        for off in gen_offsets(config, "read", j):
            yield from f.seek(off)
            yield from f.read(config.access_size)
        if config.model == "session":
            yield from f.session_close()
        yield bar.arrive()
        f.close()

    for i in range(config.writer_procs):
        world.sim.spawn(writer(i))
    for j in range(config.reader_procs):
        world.sim.spawn(reader(j))
    final = world.run()

    write_bytes = config.writer_procs * config.writes_per_proc * config.access_size
    phases = [tracker.window("write", 0, write_bytes)]
    if has_read_phase:
        read_bytes = config.reader_procs * config.reads_per_proc * config.access_size
        phases.append(tracker.window("read", 1, read_bytes))
    params = {
        "writer_nodes": config.writer_nodes, "reader_nodes": config.reader_nodes,
        "nodes": config.nodes, "procs_per_node": config.procs_per_node,
        "writes_per_proc": config.writes_per_proc, "reads_per_proc": config.reads_per_proc,
        "access_size": config.access_size, "seed": config.seed,
    }
    return BenchResult("synthetic", config.shape, config.model, params, phases,
                       final, world.trace, world.sim.accounting.snapshot())


# -- checkpoint/restart emulation ---------------------------------------------


@dataclass
class ScrConfig:
    nodes: int
    procs_per_node: int = 4
    particles_per_rank: int = 500_000
    arrays: int = 9
    value_size: int = 4
    model: str = "session"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.nodes < 3:
            raise ValueError("checkpoint/restart emulation needs nodes >= 3")
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")

    @property
    def bytes_per_proc(self) -> int:
        return self.arrays * self.particles_per_rank * self.value_size


def run_scr(sim_config: SimConfig | None, config: ScrConfig) -> BenchResult:
    """Partner-redundant checkpoint then restart after one node failure.

    Node layout: nodes 0..n-2 compute and checkpoint; node n-1 is the spare.
    Node 0 fails before restart; nodes 1..n-2 restart from their memory
    buffers while the spare receives node 0's checkpoint from its partner.
    """
    world = World(sim_config, nodes=config.nodes, procs_per_node=config.procs_per_node,
                  trace=TraceWriter(), buffer_device="mem")
    tracker = _PhaseTracker(world)
    from .engine import Barrier

    n, p = config.nodes, config.procs_per_node
    writer_nodes = n - 1
    spare, failed = n - 1, 0
    cfg = world.sim.config
    nprocs = len(world.clients)
    bar = Barrier(world.sim, nprocs, on_release=tracker)
    array_bytes = config.particles_per_rank * config.value_size
    ckpt_bytes = config.bytes_per_proc
    node_restart_done: dict[int, float] = {}

    def ckpt_file(node: int, rank: int) -> str:
        return f"ckpt/{node}.{rank}"

    def partner_of(node: int) -> int:
        return (node + 1) % writer_nodes

    def compute_proc(node: int, rank: int):
        client = world.clients[node * p + rank]
        f = layer_file(config.model, client, ckpt_file(node, rank))
        if config.model == "session":
            yield from f.session_open()
        yield bar.arrive()  # checkpoint phase start
        for _ in range(config.arrays):
            yield from f.write(array_bytes)
        if config.model == "session":
            yield from f.session_close()
        elif config.model == "commit":
            yield from f.commit()
        # redundancy copies: local SSD plus the partner node's SSD
        yield world.ssd[node].request("write", ckpt_bytes)
        yield world.sim.timeout(cfg.rpc_latency + ckpt_bytes * cfg.rpc_per_byte)
        world.sim.accounting.bytes_client_to_client[
            (client.name, f"client:{partner_of(node) * p + rank}")
        ] += ckpt_bytes
        yield world.ssd[partner_of(node)].request("write", ckpt_bytes)
        yield bar.arrive()  # checkpoint phase end / restart start
        if node != failed:
            restart = layer_file(config.model, client, ckpt_file(node, rank))
            if config.model == "session":
                yield from restart.session_open()
            yield from restart.seek(0)
            for _ in range(config.arrays):
                yield from restart.read(array_bytes)
            if config.model == "session":
                yield from restart.session_close()
            restart.close()
            prev = node_restart_done.get(node, 0.0)
            node_restart_done[node] = max(prev, world.sim.now)
        yield bar.arrive()  # restart phase end
        f.close()

    def spare_proc(rank: int):
        yield bar.arrive()
        yield bar.arrive()
        # pull the failed node's checkpoint copy from its partner's SSD
        src = partner_of(failed)
        yield world.ssd[src].request("read", ckpt_bytes)
        yield world.sim.timeout(cfg.rpc_latency + ckpt_bytes * cfg.rpc_per_byte)
        world.sim.accounting.bytes_client_to_client[
            (f"client:{src * p + rank}", f"client:{spare * p + rank}")
        ] += ckpt_bytes
        yield world.ssd[spare].request("write", ckpt_bytes)
        yield bar.arrive()

    for node in range(writer_nodes):
        for rank in range(p):
            world.sim.spawn(compute_proc(node, rank))
    for rank in range(p):
        world.sim.spawn(spare_proc(rank))
    final = world.run()

    ckpt_total = writer_nodes * p * ckpt_bytes * 2  # local + partner copy
    restart_readers = (n - 2) * p
    restart_total = restart_readers * ckpt_bytes
    restart_start = tracker.marks[1][0]
    per_node_times = {
        node: done - restart_start for node, done in sorted(node_restart_done.items())
    }
    phases = [tracker.window("checkpoint", 0, ckpt_total)]
    restart_phase = tracker.window("restart", 1, restart_total)
    # metric excludes the spare transfer: clock the surviving readers only
    restart_phase.end = restart_start + max(per_node_times.values())
    restart_phase.extra = {"per_node_seconds": per_node_times}
    phases.append(restart_phase)
    params = {
        "nodes": n, "procs_per_node": p, "particles_per_rank": config.particles_per_rank,
        "arrays": config.arrays, "value_size": config.value_size, "seed": config.seed,
    }
    return BenchResult("scr", "partner", config.model, params, phases, final,
                       world.trace, world.sim.accounting.snapshot())


# -- preloaded random-read emulation --------------------------------------------


@dataclass
class DlConfig:
    nodes: int
    procs_per_node: int = 4
    sample_size: int = 116 * 1024
    samples_per_proc: int = 32
    epochs: int = 1
    model: str = "session"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.samples_per_proc < 1 or self.epochs < 1:
            raise ValueError("need at least one sample and one epoch")

    @property
    def total_samples(self) -> int:
        return self.nodes * self.procs_per_node * self.samples_per_proc


def dl_strong_scaling(nodes: int, total_samples: int = 1024, **kwargs) -> DlConfig:
    procs = nodes * kwargs.get("procs_per_node", 4)
    if total_samples % procs:
        raise ValueError("total samples must divide evenly across processes")
    return DlConfig(nodes, samples_per_proc=total_samples // procs, **kwargs)


def run_dl(sim_config: SimConfig | None, config: DlConfig) -> BenchResult:
    """Preload disjoint shards, then per epoch read a random assignment."""
    world = World(sim_config, nodes=config.nodes, procs_per_node=config.procs_per_node,
                  trace=TraceWriter())
    tracker = _PhaseTracker(world)
    from .engine import Barrier

    nprocs = len(world.clients)
    per = config.samples_per_proc
    ss = config.sample_size
    total = config.total_samples
    bar = Barrier(world.sim, nprocs, on_release=tracker)
    rng = random.Random(config.seed)
    epoch_assignments = []
    for _ in range(config.epochs):
        slots = list(range(total))
        rng.shuffle(slots)
        epoch_assignments.append([slots[i * per : (i + 1) * per] for i in range(nprocs)])

    def proc(i: int):
        client = world.clients[i]
        f = layer_file(config.model, client, "dataset")
        if config.model == "session":
            yield from f.session_open()
        yield bar.arrive()  # preload start
        for k in range(per):
            yield from f.seek((i * per + k) * ss)
            yield from f.write(ss)
        if config.model == "session":
            yield from f.session_close()
        elif config.model == "commit":
            yield from f.commit()
        yield bar.arrive()  # preload end
        for epoch in range(config.epochs):
            if config.model == "session":
                yield from f.session_open()
            for slot in epoch_assignments[epoch][i]:
                yield from f.seek(slot * ss)
                yield from f.read(ss)
            if config.model == "session":
                yield from f.session_close()
            yield bar.arrive()  # epoch end
        f.close()

    for i in range(nprocs):
        world.sim.spawn(proc(i))
    final = world.run()

    phases = [tracker.window("preload", 0, total * ss)]
    for epoch in range(config.epochs):
        phases.append(tracker.window(f"epoch{epoch}", 1 + epoch, total * ss))
    params = {
        "nodes": config.nodes, "procs_per_node": config.procs_per_node,
        "sample_size": ss, "samples_per_proc": per, "epochs": config.epochs,
        "seed": config.seed,
    }
    return BenchResult("dl", "preloaded", config.model, params, phases, final,
                       world.trace, world.sim.accounting.snapshot())


# -- reporting ----------------------------------------------------------------


CSV_HEADER = [
    "workload", "shape", "model", "nodes", "procs_per_node", "access_size",
    "phase", "bytes", "start_s", "end_s", "seconds", "bandwidth_Bps",
    "rpc_query", "rpc_attach", "server_busy_s", "seed",
]


def result_rows(result: BenchResult) -> list[list[str]]:
    rows = []
    params = result.params
    for ph in result.phases:
        rows.append([
            result.workload,
            result.shape,
            result.model,
            str(params.get("nodes", "")),
            str(params.get("procs_per_node", "")),
            str(params.get("access_size", params.get("sample_size", ""))),
            ph.name,
            str(ph.bytes_moved),
            repr(ph.start),
            repr(ph.end),
            repr(ph.seconds),
            repr(ph.bandwidth),
            str(ph.rpc.get("query", 0)),
            str(ph.rpc.get("attach", 0)),
            repr(ph.server_busy),
            str(params.get("seed", 0)),
        ])
    return rows


def to_csv(results: list[BenchResult]) -> str:
    lines = [",".join(CSV_HEADER)]
    for result in results:
        for row in result_rows(result):
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


PLOT_TEMPLATE = """\
# gnuplot script generated by bbfs bench
set datafile separator ","
set key top left
set xlabel "row"
set ylabel "bandwidth (bytes/s)"
set title "{title}"
plot "{csv}" every ::1 using 0:12 with linespoints title "bandwidth"
"""


def plot_script(csv_path: str, title: str = "bbfs benchmark") -> str:
    return PLOT_TEMPLATE.format(csv=csv_path, title=title)

"""Deterministic discrete-event substrate for the simulated cluster.

A single event loop drives coroutine entities (plain generators that yield
``Future`` objects).  Contended resources (storage devices, server workers)
are FIFO: a request is served at ``max(now, free_at)`` and requests are
ordered by (time, sequence number), so identical configurations replay to
byte-identical schedules.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, fields
from importlib import resources as importlib_resources
from pathlib import Path


class DeadlockError(RuntimeError):
    """Event queue drained while coroutines were still waiting."""


class UnknownEntityError(KeyError):
    """Message sent to an entity that was never registered."""


class ConfigError(ValueError):
    """Malformed or unsupported key-value config file."""


CONFIG_VERSION = 1

_INT_FIELDS = {"server_workers", "seed"}


@dataclass
class SimConfig:
    """Cost-model knobs for the simulated cluster.

    Bandwidths are bytes/second, latencies are seconds.  The shipped
    calibration file (``bbfs/data/calibration.cfg``) carries the default
    values; construct with ``SimConfig.default()`` to load it.
    """

    rpc_latency: float = 10e-6
    rpc_per_byte: float = 2.5e-10
    ssd_write_bw: float = 1e9
    ssd_read_bw: float = 2e9
    ssd_op_latency: float = 0.0
    pfs_read_bw: float = 2e9
    pfs_write_bw: float = 2e9
    mem_bw: float = 10e9
    server_workers: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("rpc_per_byte", "rpc_latency", "ssd_op_latency"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("ssd_write_bw", "ssd_read_bw", "pfs_read_bw", "pfs_write_bw", "mem_bw"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.server_workers < 1:
            raise ConfigError("server_workers must be >= 1")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SimConfig":
        kwargs = {}
        for name in cls.field_names():
            if name in mapping:
                raw = mapping[name]
                kwargs[name] = int(raw) if name in _INT_FIELDS else float(raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        return cls.from_mapping(parse_kv_config(Path(path).read_text()))

    @classmethod
    def default(cls) -> "SimConfig":
        text = importlib_resources.files("bbfs").joinpath("data/calibration.cfg").read_text()
        return cls.from_mapping(parse_kv_config(text))


def parse_kv_config(text: str) -> dict:
    """Parse ``key = value`` lines; requires a supported ``version`` key."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    version = out.pop("version", None)
    if version is None:
        raise ConfigError("config file is missing 'version'")
    if int(float(version)) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    return out


class Accounting:
    """Monotone per-entity counters maintained by the event loop."""

    def __init__(self) -> None:
        self.rpc_sent: Counter = Counter()
        self.rpc_recv: Counter = Counter()
        self.rpc_kind: Counter = Counter()
        self.bytes_written_ssd: Counter = Counter()
        self.bytes_read_ssd: Counter = Counter()
        self.bytes_client_to_client: Counter = Counter()
        self.busy_time: Counter = Counter()

    _FIELDS = (
        "rpc_sent",
        "rpc_recv",
        "rpc_kind",
        "bytes_written_ssd",
        "bytes_read_ssd",
        "bytes_client_to_client",
        "busy_time",
    )

    def snapshot(self) -> dict:
        return {name: Counter(getattr(self, name)) for name in self._FIELDS}

    def since(self, snap: dict) -> dict:
        """Counter deltas accumulated after `snap` was taken."""
        out = {}
        for name in self._FIELDS:
            cur = getattr(self, name)
            out[name] = Counter({k: v - snap[name].get(k, 0) for k, v in cur.items() if v - snap[name].get(k, 0)})
        return out


class Future:
    __slots__ = ("_sim", "done", "value", "error", "_waiters")

    def __init__(self, sim: "Simulator") -> None:
        self._sim = sim
        self.done = False
        self.value = None
        self.error = None
        self._waiters: list = []

    def set(self, value=None) -> None:
        if self.done:
            raise RuntimeError("future already set")
        self.done = True
        self.value = value
        for task in self._waiters:
            self._sim._schedule(0.0, task, self.value)
        self._waiters.clear()

    def set_error(self, exc: BaseException) -> None:
        if self.done:
            raise RuntimeError("future already set")
        self.done = True
        self.error = exc
        for task in self._waiters:
            self._sim._schedule_throw(task, exc)
        self._waiters.clear()


class _Task:
    __slots__ = ("gen", "finished", "result")

    def __init__(self, gen) -> None:
        self.gen = gen
        self.finished = False
        self.result = None


class Simulator:
    """Event loop with a virtual clock; see module docstring."""

    def __init__(self, config: SimConfig | None = None) -> None:
        self.config = config or SimConfig.default()
        self.now = 0.0
        self.accounting = Accounting()
        self._heap: list = []
        self._counter = 0
        self._tasks: list[_Task] = []
        self._entities: dict[str, object] = {}

    # -- scheduling core ----------------------------------------------------

    def call_after(self, delay: float, fn) -> None:
        if delay < 0:
            raise ValueError("negative delay")
        self._counter += 1
        heapq.heappush(self._heap, (self.now + delay, self._counter, fn))

    def _schedule(self, delay: float, task: _Task, value) -> None:
        self.call_after(delay, lambda: self._step(task, value))

    def _schedule_throw(self, task: _Task, exc: BaseException) -> None:
        self.call_after(0.0, lambda: self._step(task, None, exc))

    def spawn(self, gen) -> _Task:
        task = _Task(gen)
        self._tasks.append(task)
        self._schedule(0.0, task, None)
        return task

    def _step(self, task: _Task, value, exc: BaseException | None = None) -> None:
        try:
            fut = task.gen.throw(exc) if exc is not None else task.gen.send(value)
        except StopIteration as stop:
            task.finished = True
            task.result = stop.value
            return
        if not isinstance(fut, Future):
            raise TypeError(f"coroutine yielded {fut!r}, expected Future")
        if fut.done:
            if fut.error is not None:
                self._schedule_throw(task, fut.error)
            else:
                self._schedule(0.0, task, fut.value)
        else:
            fut._waiters.append(task)

    def run_until_idle(self) -> float:
        while self._heap:
            time, _, fn = heapq.heappop(self._heap)
            self.now = time
            fn()
        waiting = [t for t in self._tasks if not t.finished]
        if waiting:
            raise DeadlockError(f"{len(waiting)} coroutine(s) waiting with an empty event queue")
        return self.now

    # -- waiting primitives ---------------------------------------------------

    def future(self) -> Future:
        return Future(self)

    def timeout(self, delay: float) -> Future:
        fut = Future(self)
        self.call_after(delay, fut.set)
        return fut

    # -- messaging ------------------------------------------------------------

    def register(self, name: str, handler) -> None:
        self._entities[name] = handler

    def send_rpc(self, src: str, dst: str, payload_bytes: int, message=None, kind: str | None = None) -> float:
        """Deliver `message` to entity `dst`; returns the delivery time."""
        if dst not in self._entities:
            raise UnknownEntityError(dst)
        delivery_delay = self.config.rpc_latency + payload_bytes * self.config.rpc_per_byte
        acct = self.accounting
        acct.rpc_sent[src] += 1
        acct.rpc_recv[dst] += 1
        if kind is not None:
            acct.rpc_kind[kind] += 1
        handler = self._entities[dst]
        self.call_after(delivery_delay, lambda: handler(src, message))
        return self.now + delivery_delay


class Resource:
    """FIFO-serialized resource; requests are served in arrival order."""

    def __init__(self, sim: Simulator, name: str) -> None:
        self.sim = sim
        self.name = name
        self.free_at = 0.0

    def acquire(self, duration: float) -> Future:
        start = max(self.sim.now, self.free_at)
        self.free_at = start + duration
        self.sim.accounting.busy_time[self.name] += duration
        fut = self.sim.future()
        self.sim.call_after(self.free_at - self.sim.now, fut.set)
        return fut


class Device(Resource):
    """Storage device with direction-dependent bandwidth and an op latency."""

    def __init__(self, sim: Simulator, name: str, kind: str, read_bw: float, write_bw: float, op_latency: float) -> None:
        super().__init__(sim, name)
        self.kind = kind
        self.read_bw = read_bw
        self.write_bw = write_bw
        self.op_latency = op_latency

    def io_time(self, direction: str, nbytes: int) -> float:
        if nbytes < 1:
            raise ValueError("nbytes must be >= 1")
        bw = self.read_bw if direction == "read" else self.write_bw
        return self.op_latency + nbytes / bw

    def request(self, direction: str, nbytes: int) -> Future:
        acct = self.sim.accounting
        if self.kind == "ssd":
            if direction == "read":
                acct.bytes_read_ssd[self.name] += nbytes
            else:
                acct.bytes_written_ssd[self.name] += nbytes
        return self.acquire(self.io_time(direction, nbytes))


class Barrier:
    """Rendezvous for n coroutines; all are released at the same instant."""

    def __init__(self, sim: Simulator, n: int, on_release=None) -> None:
        self.sim = sim
        self.n = n
        self.on_release = on_release
        self._arrived = 0
        self._futures: list[Future] = []
        self.fire_times: list[float] = []

    def arrive(self) -> Future:
        fut = self.sim.future()
        self._futures.append(fut)
        self._arrived += 1
        if self._arrived == self.n:
            self.fire_times.append(self.sim.now)
            released, self._futures = self._futures, []
            self._arrived = 0
            if self.on_release is not None:
                self.on_release()
            for f in released:
                f.set()
        return fut

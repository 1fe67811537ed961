"""Buffer-backed file system kernel: client and server state machines.

Every client buffers writes in a node-local cache file and publishes byte
ranges to a single global server by attaching them; reads are sourced from
a named owner client, from the caller's own buffer, or from the backing
store.  Data-path operations (write, read) never contact the server; only
attach/detach/query/stat-style operations do.

All operations that consume simulated time are generators meant to run on
the :class:`bbfs.engine.Simulator` event loop; compose them with
``yield from``.

Payloads may be real ``bytes`` or a plain ``int`` byte count.  Integer
payloads move accounted-but-unmaterialized data, which keeps large
benchmark runs cheap; reads of such data return an int length instead of
bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Barrier, Device, Resource, SimConfig, Simulator
from .intervals import ByteRange, GlobalIntervalTree, LocalIntervalTree

SEEK_SET = 0
SEEK_CUR = 1
SEEK_END = 2

# nominal wire sizes for control messages (bytes)
_MSG_HEADER = 16
_PER_INTERVAL = 24


class ClosedHandleError(RuntimeError):
    pass


class NotOwnerError(RuntimeError):
    """The designated owner does not serve the full requested range."""


class NotAttachedError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class ClientId:
    node: int
    rank: int


@dataclass
class FileHandle:
    file: str
    pos: int = 0
    open: bool = True

    def require_open(self) -> None:
        if not self.open:
            raise ClosedHandleError(f"handle for {self.file!r} is closed")


class _CacheFile:
    """Append-only local cache backing one client's writes to one file."""

    def __init__(self) -> None:
        self.length = 0
        self._chunks: dict[int, bytes] = {}  # buffer offset -> real bytes

    def append(self, data) -> ByteRange:
        size = len(data) if isinstance(data, (bytes, bytearray)) else int(data)
        if size < 1:
            raise ValueError("write size must be >= 1")
        rng = ByteRange.of(self.length, size)
        if isinstance(data, (bytes, bytearray)):
            self._chunks[self.length] = bytes(data)
        self.length += size
        return rng

    def read(self, rng: ByteRange):
        """Bytes for rng, or its length when content was not materialized."""
        out = bytearray(rng.length)
        have = 0
        for start, chunk in self._chunks.items():
            end = start + len(chunk) - 1
            if end < rng.start or start > rng.end:
                continue
            lo = max(start, rng.start)
            hi = min(end, rng.end)
            out[lo - rng.start : hi - rng.start + 1] = chunk[lo - start : hi - start + 1]
            have += hi - lo + 1
        if have == rng.length:
            return bytes(out)
        return rng.length


class _PfsFile:
    """Backing-store image of one file: flushed content, zero elsewhere."""

    def __init__(self) -> None:
        self.content = bytearray()
        self.flushed_size = 0

    def write(self, offset: int, data) -> None:
        if isinstance(data, (bytes, bytearray)):
            end = offset + len(data)
            if end > len(self.content):
                self.content.extend(bytes(end - len(self.content)))
            self.content[offset:end] = data
            self.flushed_size = max(self.flushed_size, end)
        else:
            self.flushed_size = max(self.flushed_size, offset + int(data))

    def read(self, offset: int, size: int) -> bytes:
        out = bytearray(size)
        avail = self.content[offset : offset + size]
        out[: len(avail)] = avail
        return bytes(out)


@dataclass
class _ClientFileState:
    writes: LocalIntervalTree = field(default_factory=LocalIntervalTree)
    served: LocalIntervalTree = field(default_factory=LocalIntervalTree)
    cache: _CacheFile = field(default_factory=_CacheFile)


class Server:
    """Global ownership server: per-file interval tree plus file size.

    State changes apply in message receipt order; a round-robin worker pool
    models response throughput.
    """

    NAME = "server"

    def __init__(self, world: "World") -> None:
        self.world = world
        self.trees: dict[str, GlobalIntervalTree] = {}
        self.eof: dict[str, int] = {}
        cfg = world.sim.config
        self.workers = [Resource(world.sim, f"worker:{i}") for i in range(cfg.server_workers)]
        self._rr = 0
        world.sim.register(self.NAME, self._on_message)

    def tree(self, file: str) -> GlobalIntervalTree:
        return self.trees.setdefault(file, GlobalIntervalTree())

    def _bump_eof(self, file: str, end: int) -> None:
        self.eof[file] = max(self.eof.get(file, 0), end + 1)

    def _on_message(self, src: str, msg) -> None:
        # Effects apply here, in receipt order; workers only pace responses.
        # Each client blocks on its single outstanding request, so the global
        # round-robin cannot reorder one client's stream.
        kind, payload, reply = msg
        result, resp_bytes = self._apply(kind, payload)
        worker = self.workers[self._rr % len(self.workers)]
        self._rr += 1
        self.world.sim.spawn(self._respond(worker, resp_bytes, reply, result))

    def _respond(self, worker: Resource, resp_bytes: int, reply, result):
        cfg = self.world.sim.config
        wire = cfg.rpc_latency + resp_bytes * cfg.rpc_per_byte
        yield worker.acquire(wire)  # worker occupied composing/sending the reply
        self.world.sim.call_after(wire, lambda: reply.set(result))

    def _apply(self, kind: str, payload):
        if kind == "attach":
            file, intervals = payload
            tree = self.tree(file)
            for rng, owner in intervals:
                tree.insert(rng, owner)
                self._bump_eof(file, rng.end)
            return None, _MSG_HEADER
        if kind == "detach":
            file, ranges, owner = payload
            tree = self.tree(file)
            for rng in ranges:
                tree.remove_if_owner(rng, owner)
            return None, _MSG_HEADER
        if kind == "query":
            file, rng = payload
            tree = self.tree(file)
            found = tree.intervals() if rng is None else tree.query(rng)
            result = [(iv.range, iv.owner) for iv in found]
            return result, _MSG_HEADER + _PER_INTERVAL * len(result)
        if kind == "stat":
            (file,) = payload
            return self.eof.get(file, 0), _MSG_HEADER + 8
        if kind == "flush":
            file, end = payload
            self._bump_eof(file, end)
            return None, _MSG_HEADER
        raise ValueError(f"unknown server request {kind!r}")


class Client:
    """One simulated process; holds local write state and open handles."""

    def __init__(self, world: "World", cid: ClientId, index: int, buffer_device: Device):
        self.world = world
        self.id = cid
        self.index = index
        self.name = f"client:{index}"
        self.buffer_device = buffer_device
        self.files: dict[str, _ClientFileState] = {}
        world.sim.register(self.name, self._on_message)

    # -- handle management (no simulated cost) --------------------------------

    def open(self, path: str) -> FileHandle:
        if not path:
            raise ValueError("empty pathname")
        self.files.setdefault(path, _ClientFileState())
        return FileHandle(path)

    def close(self, handle: FileHandle) -> None:
        handle.require_open()
        handle.open = False
        # buffered-but-unpublished data is discarded; published ranges stay served
        self.files[handle.file].writes.drop_unattached()

    def tell(self, handle: FileHandle) -> int:
        handle.require_open()
        return handle.pos

    # -- data path -------------------------------------------------------------

    def write(self, handle: FileHandle, data, record: bool = True):
        handle.require_open()
        state = self.files[handle.file]
        t0 = self.world.sim.now
        file_rng = ByteRange.of(handle.pos, len(data) if isinstance(data, (bytes, bytearray)) else int(data))
        buf_rng = state.cache.append(data)
        state.writes.insert_write(file_rng, buf_rng)
        yield self.buffer_device.request("write", file_rng.length)
        handle.pos = file_rng.end + 1
        self._record_data(record, "write", handle.file, file_rng, t0)
        return file_rng.length

    def read(self, handle: FileHandle, size: int, owner: ClientId | None = None, record: bool = True):
        """Read from `owner`'s buffer, our own buffer, or the backing store."""
        handle.require_open()
        rng = ByteRange.of(handle.pos, size)
        t0 = self.world.sim.now
        note = None
        if owner is None:
            data, note = yield from self._read_pfs(handle.file, rng)
        elif owner == self.id:
            data = yield from self._read_self(handle.file, rng)
        else:
            data = yield from self._read_remote(handle.file, rng, owner)
        handle.pos = rng.end + 1
        self._record_data(record, "read", handle.file, rng, t0, note)
        return data

    def _read_self(self, file: str, rng: ByteRange):
        state = self.files[file]
        if not state.writes.covers(rng):
            raise NotOwnerError(f"{self.name} has not written all of [{rng.start}, {rng.end}]")
        yield self.buffer_device.request("read", rng.length)
        pieces = [state.cache.read(n.buffer_range) for n in state.writes.lookup(rng)]
        return _assemble(pieces, rng.length)

    def _read_remote(self, file: str, rng: ByteRange, owner: ClientId):
        target = self.world.client_for(owner)
        reply = self.world.sim.future()
        self.world.sim.send_rpc(
            self.name, target.name, _MSG_HEADER + _PER_INTERVAL,
            message=(file, rng, reply), kind="read",
        )
        status, data = yield reply
        if status != "ok":
            raise NotOwnerError(f"{target.name} does not own [{rng.start}, {rng.end}] of {file!r}")
        return data

    def _read_pfs(self, file: str, rng: ByteRange):
        yield self.world.pfs.request("read", rng.length)
        pfs_file = self.world.pfs_file(file)
        note = None
        if any(rng.overlaps(r) for r in self.world.active_flushes.get(file, ())):
            note = "unordered-vs-flush"
        elif rng.end + 1 > self.world.server.eof.get(file, 0):
            note = "beyond-eof"
        return pfs_file.read(rng.start, rng.length), note

    def _on_message(self, src: str, msg) -> None:
        self.world.sim.spawn(self._serve_read(src, *msg))

    def _serve_read(self, src: str, file: str, rng: ByteRange, reply):
        """Listener side of owner-sourced reads; serves the published view."""
        cfg = self.world.sim.config
        state = self.files.get(file)
        if state is None or not state.served.covers(rng):
            self.world.sim.call_after(cfg.rpc_latency + _MSG_HEADER * cfg.rpc_per_byte,
                                      lambda: reply.set(("not-owner", None)))
            return
        yield self.buffer_device.request("read", rng.length)
        pieces = [state.cache.read(n.buffer_range) for n in state.served.lookup(rng)]
        data = _assemble(pieces, rng.length)
        self.world.sim.accounting.bytes_client_to_client[(self.name, src)] += rng.length
        wire = cfg.rpc_latency + rng.length * cfg.rpc_per_byte
        self.world.sim.call_after(wire, lambda: reply.set(("ok", data)))

    # -- ownership operations ----------------------------------------------------

    def attach(self, handle: FileHandle, offset: int, size: int):
        handle.require_open()
        rng = ByteRange.of(offset, size)
        state = self.files[handle.file]
        state.writes.mark_attached(rng)  # raises on unwritten or double attach
        for piece in state.writes.lookup(rng):
            state.served.insert_write(piece.file_range, piece.buffer_range)
        yield from self._server_rpc(
            "attach",
            (handle.file, [(rng, self.id)]),
            _MSG_HEADER + _PER_INTERVAL,
        )

    def attach_file(self, handle: FileHandle):
        """Publish all unpublished local writes in one request; no-op if none."""
        handle.require_open()
        state = self.files[handle.file]
        pieces = state.writes.unattached_intervals()
        if not pieces:
            return
        for piece in pieces:
            state.writes.mark_attached(piece.file_range)
            state.served.insert_write(piece.file_range, piece.buffer_range)
        yield from self._server_rpc(
            "attach",
            (handle.file, [(p.file_range, self.id) for p in pieces]),
            _MSG_HEADER + _PER_INTERVAL * len(pieces),
        )

    def detach(self, handle: FileHandle, offset: int, size: int):
        handle.require_open()
        rng = ByteRange.of(offset, size)
        state = self.files[handle.file]
        # the published view decides what counts as attached: a local rewrite
        # clears the flag but the earlier publication stays served until now
        if not state.served.lookup(rng):
            raise NotAttachedError(f"[{rng.start}, {rng.end}] of {handle.file!r} is not attached")
        state.writes.clear_attached(rng)
        state.served.remove(rng)
        yield from self._server_rpc(
            "detach", (handle.file, [rng], self.id), _MSG_HEADER + _PER_INTERVAL
        )

    def detach_file(self, handle: FileHandle):
        handle.require_open()
        state = self.files[handle.file]
        ranges = [n.file_range for n in state.served.intervals()]
        if not ranges:
            return
        for rng in ranges:
            state.writes.clear_attached(rng)
            state.served.remove(rng)
        yield from self._server_rpc(
            "detach", (handle.file, ranges, self.id), _MSG_HEADER + _PER_INTERVAL * len(ranges)
        )

    def query(self, handle: FileHandle, offset: int, size: int):
        handle.require_open()
        rng = ByteRange.of(offset, size)
        result = yield from self._server_rpc("query", (handle.file, rng), _MSG_HEADER + _PER_INTERVAL)
        return result

    def query_file(self, handle: FileHandle):
        handle.require_open()
        result = yield from self._server_rpc("query", (handle.file, None), _MSG_HEADER)
        return result

    def flush(self, handle: FileHandle, offset: int, size: int):
        yield from self._flush_pieces(handle, ByteRange.of(offset, size))

    def flush_file(self, handle: FileHandle):
        yield from self._flush_pieces(handle, None)

    def _flush_pieces(self, handle: FileHandle, rng: ByteRange | None):
        handle.require_open()
        state = self.files[handle.file]
        pieces = state.writes.intervals() if rng is None else state.writes.lookup(rng)
        if not pieces:
            return
        total = sum(p.file_range.length for p in pieces)
        end = max(p.file_range.end for p in pieces)
        marks = self.world.active_flushes.setdefault(handle.file, [])
        flushed = [p.file_range for p in pieces]
        marks.extend(flushed)
        yield self.world.pfs.request("write", total)
        pfs_file = self.world.pfs_file(handle.file)
        for p in pieces:
            pfs_file.write(p.file_range.start, state.cache.read(p.buffer_range))
        yield from self._server_rpc("flush", (handle.file, end), _MSG_HEADER + 8)
        for r in flushed:
            marks.remove(r)

    def seek(self, handle: FileHandle, offset: int, whence: int = SEEK_SET):
        handle.require_open()
        if whence == SEEK_SET:
            base = 0
        elif whence == SEEK_CUR:
            base = handle.pos
        elif whence == SEEK_END:
            base = yield from self._server_rpc("stat", (handle.file,), _MSG_HEADER)
        else:
            raise ValueError(f"bad whence {whence!r}")
        pos = base + offset
        if pos < 0:
            raise ValueError(f"resulting position {pos} is negative")
        handle.pos = pos
        return pos

    def stat(self, handle: FileHandle):
        handle.require_open()
        size = yield from self._server_rpc("stat", (handle.file,), _MSG_HEADER)
        return size

    # -- helpers ---------------------------------------------------------------

    def _server_rpc(self, kind: str, payload, req_bytes: int):
        reply = self.world.sim.future()
        self.world.sim.send_rpc(self.name, Server.NAME, req_bytes,
                                message=(kind, payload, reply), kind=kind)
        result = yield reply
        return result

    def _record_data(self, record: bool, kind: str, file: str, rng: ByteRange, t0: float, note=None) -> None:
        if record and self.world.trace is not None:
            self.world.trace.data_op(self.index, kind, file, rng.start, rng.length,
                                     t0, self.world.sim.now, note)

    def unpublished_ranges(self, file: str, rng: ByteRange) -> list[ByteRange]:
        state = self.files.get(file)
        if state is None:
            return []
        return [n.file_range for n in state.writes.lookup(rng) if not n.attached]


def _assemble(pieces: list, total: int):
    if all(isinstance(p, (bytes, bytearray)) for p in pieces):
        return b"".join(pieces)
    return total


class World:
    """A simulated cluster: devices, one global server, and its clients."""

    def __init__(
        self,
        config: SimConfig | None = None,
        nodes: int = 1,
        procs_per_node: int = 1,
        *,
        buffer_device: str = "ssd",
        trace=None,
    ):
        self.sim = Simulator(config)
        cfg = self.sim.config
        self.nodes = nodes
        self.procs_per_node = procs_per_node
        self.trace = trace
        self.ssd = [
            Device(self.sim, f"ssd:{n}", "ssd", cfg.ssd_read_bw, cfg.ssd_write_bw, cfg.ssd_op_latency)
            for n in range(nodes)
        ]
        self.mem = [
            Device(self.sim, f"mem:{n}", "mem", cfg.mem_bw, cfg.mem_bw, cfg.ssd_op_latency)
            for n in range(nodes)
        ]
        self.pfs = Device(self.sim, "pfs", "pfs", cfg.pfs_read_bw, cfg.pfs_write_bw, cfg.ssd_op_latency)
        self.server = Server(self)
        buffers = self.mem if buffer_device == "mem" else self.ssd
        self.clients: list[Client] = []
        self._by_id: dict[ClientId, Client] = {}
        for node in range(nodes):
            for rank in range(procs_per_node):
                cid = ClientId(node, rank)
                client = Client(self, cid, len(self.clients), buffers[node])
                self.clients.append(client)
                self._by_id[cid] = client
        self.pfs_files: dict[str, _PfsFile] = {}
        self.active_flushes: dict[str, list[ByteRange]] = {}

    def client_for(self, cid: ClientId) -> Client:
        return self._by_id[cid]

    def pfs_file(self, file: str) -> _PfsFile:
        return self.pfs_files.setdefault(file, _PfsFile())

    def barrier(self, n: int, order_trace: bool = False) -> Barrier:
        """A rendezvous; with order_trace, it also emits trace ordering edges."""
        on_release = None
        if order_trace and self.trace is not None:
            on_release = lambda: self.trace.barrier(range(len(self.clients)))
        return Barrier(self.sim, n, on_release)

    def run(self) -> float:
        return self.sim.run_until_idle()

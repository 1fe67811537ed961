"""Consistency layers built purely from kernel primitives.

Each layer decides where ownership publication (attach) and ownership
lookup (query) happen:

* ``PosixFile``: publish on every write, look up on every read.
* ``CommitFile``: writes buffer locally; an explicit ``commit`` publishes
  everything written since the last one; reads look up per call.
* ``SessionFile``: ``session_open`` snapshots the ownership map once;
  reads resolve against the snapshot; ``session_close`` publishes.

Reads are split per byte by source priority: the caller's own unpublished
writes win (they are the caller's freshest data and invisible to everyone
else), then the ownership map, then the backing store for unowned gaps.
"""

from __future__ import annotations

from .intervals import ByteRange
from .kernel import SEEK_SET, Client, ClientId

MODEL_NAMES = ("posix", "commit", "session")


class SessionNotOpenError(RuntimeError):
    pass


def _subtract(base: list[ByteRange], minus: list[ByteRange]) -> list[ByteRange]:
    """Parts of `base` intervals not covered by `minus` (both sorted, disjoint)."""
    out = []
    for rng in base:
        cursor = rng.start
        for m in minus:
            if m.end < cursor or m.start > rng.end:
                continue
            if m.start > cursor:
                out.append(ByteRange(cursor, m.start - 1))
            cursor = max(cursor, m.end + 1)
            if cursor > rng.end:
                break
        if cursor <= rng.end:
            out.append(ByteRange(cursor, rng.end))
    return out


def _intersect(base: list[ByteRange], rng: ByteRange) -> list[ByteRange]:
    return [b.clip(rng) for b in base if b.overlaps(rng)]


def plan_read(rng: ByteRange, own: list[ByteRange], owned: list[tuple[ByteRange, ClientId]]):
    """Split rng into (segment, source) pairs; source None means backing store.

    `owned` entries (from an ownership query or snapshot) are disjoint and
    sorted; the caller's `own` ranges take priority over them.
    """
    plan: list[tuple[ByteRange, ClientId | None | str]] = []
    own_clipped = _intersect(own, rng)
    plan.extend((seg, "self") for seg in own_clipped)
    remaining = _subtract([rng], own_clipped)
    mapped: list[ByteRange] = []
    for r, who in owned:
        if not r.overlaps(rng):
            continue
        for seg in _intersect(remaining, r.clip(rng)):
            plan.append((seg, who))
            mapped.append(seg)
    covered = sorted(own_clipped + mapped, key=lambda s: s.start)
    plan.extend((gap, None) for gap in _subtract([rng], covered))
    plan.sort(key=lambda item: item[0].start)
    return plan


class _LayerFile:
    def __init__(self, client: Client, path: str):
        self.client = client
        self.path = path
        self.handle = client.open(path)

    def close(self) -> None:
        self.client.close(self.handle)

    def tell(self) -> int:
        return self.client.tell(self.handle)

    def seek(self, offset: int):
        yield from self.client.seek(self.handle, offset, SEEK_SET)

    # -- shared read machinery ------------------------------------------------

    def _read_plan(self, size: int, owned):
        pos = self.client.tell(self.handle)
        rng = ByteRange.of(pos, size)
        own = self.client.unpublished_ranges(self.path, rng)
        plan = plan_read(rng, own, owned)
        pieces = []
        for seg, source in plan:
            yield from self.client.seek(self.handle, seg.start, SEEK_SET)
            owner = self.client.id if source == "self" else source
            pieces.append((yield from self.client.read(self.handle, seg.length, owner=owner, record=False)))
        yield from self.client.seek(self.handle, pos + size, SEEK_SET)
        if all(isinstance(p, (bytes, bytearray)) for p in pieces):
            data = b"".join(bytes(p) for p in pieces)
        else:
            data = size
        return data

    def _record(self, kind: str, pos: int, size: int, t0: float) -> None:
        world = self.client.world
        if world.trace is not None:
            world.trace.data_op(self.client.index, kind, self.path, pos, size, t0, world.sim.now)

    def _record_sync(self, name: str, t0: float) -> None:
        world = self.client.world
        if world.trace is not None:
            world.trace.sync_op(self.client.index, name, self.path, t0, world.sim.now)


class PosixFile(_LayerFile):
    """Every write publishes immediately; every read consults the server."""

    def write(self, data):
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        n = yield from self.client.write(self.handle, data, record=False)
        yield from self.client.attach(self.handle, pos, n)
        self._record("write", pos, n, t0)
        return n

    def read(self, size: int):
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        owned = yield from self.client.query(self.handle, pos, size)
        data = yield from self._read_plan(size, owned)
        self._record("read", pos, size, t0)
        return data


class CommitFile(_LayerFile):
    """Writes buffer locally until an explicit commit publishes them."""

    def write(self, data):
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        n = yield from self.client.write(self.handle, data, record=False)
        self._record("write", pos, n, t0)
        return n

    def commit(self):
        t0 = self.client.world.sim.now
        yield from self.client.attach_file(self.handle)
        self._record_sync("commit", t0)

    def read(self, size: int):
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        owned = yield from self.client.query(self.handle, pos, size)
        data = yield from self._read_plan(size, owned)
        self._record("read", pos, size, t0)
        return data


class SessionFile(_LayerFile):
    """Reads and writes happen inside an open session.

    The ownership snapshot taken at session open serves every read in the
    session; closing publishes the session's writes.
    """

    def __init__(self, client: Client, path: str):
        super().__init__(client, path)
        self._session_open = False
        self._snapshot: list = []

    def session_open(self):
        t0 = self.client.world.sim.now
        self._snapshot = yield from self.client.query_file(self.handle)
        self._session_open = True
        self._record_sync("session_open", t0)

    def session_close(self):
        self._require_session()
        t0 = self.client.world.sim.now
        yield from self.client.attach_file(self.handle)
        self._session_open = False
        self._record_sync("session_close", t0)

    # both spellings are supported
    open_session = session_open
    close_session = session_close

    def write(self, data):
        self._require_session()
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        n = yield from self.client.write(self.handle, data, record=False)
        self._record("write", pos, n, t0)
        return n

    def read(self, size: int):
        self._require_session()
        t0 = self.client.world.sim.now
        pos = self.client.tell(self.handle)
        data = yield from self._read_plan(size, self._snapshot)
        self._record("read", pos, size, t0)
        return data

    def _require_session(self) -> None:
        if not self._session_open:
            raise SessionNotOpenError(f"no open session on {self.path!r}")


def layer_file(model: str, client: Client, path: str) -> _LayerFile:
    if model == "posix":
        return PosixFile(client, path)
    if model == "commit":
        return CommitFile(client, path)
    if model == "session":
        return SessionFile(client, path)
    raise ValueError(f"unknown consistency model {model!r}")

"""Byte-range interval maps with split/merge semantics.

Two variants back the file system state:

* ``GlobalIntervalTree`` maps disjoint byte ranges of one file to the client
  that currently owns them (the server-side ownership map).
* ``LocalIntervalTree`` maps disjoint byte ranges of one file to positions in
  one client's local cache file, plus a published/unpublished flag per range
  (the client-side write map).

Ranges are inclusive ``[start, end]`` throughout.  Both containers keep their
node lists sorted by start offset and canonical: no two stored intervals
overlap, and no two adjacent intervals are mergeable.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass


class UnwrittenBytesError(ValueError):
    """A range operation touched bytes that were never written locally."""


class AlreadyAttachedError(ValueError):
    """The entire range is already attached."""


@dataclass(frozen=True, slots=True)
class ByteRange:
    """Inclusive byte range: ``start <= end``, both >= 0."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid byte range [{self.start}, {self.end}]")

    @classmethod
    def of(cls, offset: int, size: int) -> "ByteRange":
        """Build from (offset, size); size must be >= 1."""
        if size < 1:
            raise ValueError(f"range size must be >= 1, got {size}")
        return cls(offset, offset + size - 1)

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "ByteRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def clip(self, other: "ByteRange") -> "ByteRange":
        return ByteRange(max(self.start, other.start), min(self.end, other.end))


@dataclass(frozen=True, slots=True)
class GlobalInterval:
    range: ByteRange
    owner: object  # ClientId; opaque here


@dataclass(frozen=True, slots=True)
class LocalInterval:
    file_range: ByteRange
    buffer_range: ByteRange
    attached: bool

    def __post_init__(self) -> None:
        if self.file_range.length != self.buffer_range.length:
            raise ValueError("file range and buffer range differ in length")


class GlobalIntervalTree:
    """Per-file exclusive ownership map.

    Inserting a range transfers ownership of every byte in it to the new
    owner: fully covered prior intervals are dropped, partially covered ones
    are clipped, and adjacent intervals of the same owner are merged back
    into a single node.
    """

    def __init__(self) -> None:
        self._starts: list[int] = []
        self._nodes: list[GlobalInterval] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes)

    def intervals(self) -> list[GlobalInterval]:
        return list(self._nodes)

    def _overlap_indices(self, rng: ByteRange) -> tuple[int, int]:
        """Half-open index window [i, j) of nodes intersecting rng."""
        i = bisect.bisect_right(self._starts, rng.start)
        if i > 0 and self._nodes[i - 1].range.end >= rng.start:
            i -= 1
        j = i
        while j < len(self._nodes) and self._nodes[j].range.start <= rng.end:
            j += 1
        return i, j

    def insert(self, rng: ByteRange, owner) -> None:
        i, j = self._overlap_indices(rng)
        pieces: list[GlobalInterval] = []
        for node in self._nodes[i:j]:
            r = node.range
            if r.start < rng.start:
                pieces.append(GlobalInterval(ByteRange(r.start, rng.start - 1), node.owner))
            if r.end > rng.end:
                pieces.append(GlobalInterval(ByteRange(rng.end + 1, r.end), node.owner))
        pieces.append(GlobalInterval(rng, owner))
        pieces.sort(key=lambda n: n.range.start)
        self._splice(i, j, pieces)
        self._merge_around(i, i + len(pieces))

    def remove_if_owner(self, rng: ByteRange, owner) -> None:
        """Drop bytes of rng owned by `owner`; other owners are untouched."""
        i, j = self._overlap_indices(rng)
        pieces: list[GlobalInterval] = []
        for node in self._nodes[i:j]:
            if node.owner != owner:
                pieces.append(node)
                continue
            r = node.range
            if r.start < rng.start:
                pieces.append(GlobalInterval(ByteRange(r.start, rng.start - 1), owner))
            if r.end > rng.end:
                pieces.append(GlobalInterval(ByteRange(rng.end + 1, r.end), owner))
        self._splice(i, j, pieces)

    def query(self, rng: ByteRange) -> list[GlobalInterval]:
        """Owned sub-ranges of rng, clipped, disjoint, sorted by start."""
        i, j = self._overlap_indices(rng)
        return [GlobalInterval(node.range.clip(rng), node.owner) for node in self._nodes[i:j]]

    def owned_range(self, rng: ByteRange, owner) -> bool:
        """True iff every byte of rng is owned by `owner`."""
        covered = rng.start
        for node in self.query(rng):
            if node.owner != owner or node.range.start != covered:
                return False
            covered = node.range.end + 1
        return covered == rng.end + 1

    def _splice(self, i: int, j: int, pieces: list[GlobalInterval]) -> None:
        self._nodes[i:j] = pieces
        self._starts[i:j] = [n.range.start for n in pieces]

    def _merge_around(self, lo: int, hi: int) -> None:
        # re-canonicalize the window [lo-1, hi+1): merge same-owner adjacency
        lo = max(lo - 1, 0)
        k = lo
        while k + 1 < len(self._nodes) and k < hi + 1:
            a, b = self._nodes[k], self._nodes[k + 1]
            if a.owner == b.owner and a.range.end + 1 == b.range.start:
                merged = GlobalInterval(ByteRange(a.range.start, b.range.end), a.owner)
                self._splice(k, k + 2, [merged])
                hi -= 1
            else:
                k += 1

    def check_invariants(self) -> None:
        for a, b in zip(self._nodes, self._nodes[1:]):
            assert a.range.end < b.range.start, "overlapping intervals"
            assert not (a.owner == b.owner and a.range.end + 1 == b.range.start), "unmerged neighbors"
        assert self._starts == [n.range.start for n in self._nodes]


class LocalIntervalTree:
    """Per-file, per-client map from written file ranges to cache positions.

    A new write always wins: overlapped older intervals are clipped so the
    file-offset to buffer-offset mapping reflects the newest write for every
    byte.  Neighbors merge only when contiguous in both the file and the
    buffer coordinate and their attached flags agree.
    """

    def __init__(self) -> None:
        self._starts: list[int] = []
        self._nodes: list[LocalInterval] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes)

    def intervals(self) -> list[LocalInterval]:
        return list(self._nodes)

    def _overlap_indices(self, rng: ByteRange) -> tuple[int, int]:
        i = bisect.bisect_right(self._starts, rng.start)
        if i > 0 and self._nodes[i - 1].file_range.end >= rng.start:
            i -= 1
        j = i
        while j < len(self._nodes) and self._nodes[j].file_range.start <= rng.end:
            j += 1
        return i, j

    @staticmethod
    def _clip_node(node: LocalInterval, rng: ByteRange) -> LocalInterval:
        sub = node.file_range.clip(rng)
        shift = sub.start - node.file_range.start
        buf = ByteRange(node.buffer_range.start + shift, node.buffer_range.start + shift + sub.length - 1)
        return LocalInterval(sub, buf, node.attached)

    def _outside_pieces(self, node: LocalInterval, rng: ByteRange) -> list[LocalInterval]:
        out = []
        r = node.file_range
        if r.start < rng.start:
            out.append(self._clip_node(node, ByteRange(r.start, rng.start - 1)))
        if r.end > rng.end:
            out.append(self._clip_node(node, ByteRange(rng.end + 1, r.end)))
        return out

    def insert_write(self, file_range: ByteRange, buffer_range: ByteRange) -> None:
        if file_range.length != buffer_range.length:
            raise ValueError("file range and buffer range differ in length")
        i, j = self._overlap_indices(file_range)
        pieces: list[LocalInterval] = []
        for node in self._nodes[i:j]:
            pieces.extend(self._outside_pieces(node, file_range))
        pieces.append(LocalInterval(file_range, buffer_range, False))
        pieces.sort(key=lambda n: n.file_range.start)
        self._splice(i, j, pieces)
        self._merge_around(i, i + len(pieces))

    def lookup(self, rng: ByteRange) -> list[LocalInterval]:
        """Clipped mappings covering exactly the written bytes of rng."""
        i, j = self._overlap_indices(rng)
        return [self._clip_node(node, rng) for node in self._nodes[i:j]]

    def covers(self, rng: ByteRange) -> bool:
        """True iff every byte of rng has been written."""
        covered = rng.start
        for node in self.lookup(rng):
            if node.file_range.start != covered:
                return False
            covered = node.file_range.end + 1
        return covered == rng.end + 1

    def mark_attached(self, rng: ByteRange) -> None:
        """Set attached on every written byte in rng.

        Raises UnwrittenBytesError if rng has unwritten bytes and
        AlreadyAttachedError if every byte of rng is already attached.
        """
        if not self.covers(rng):
            raise UnwrittenBytesError(f"range [{rng.start}, {rng.end}] has unwritten bytes")
        if all(node.attached for node in self.lookup(rng)):
            raise AlreadyAttachedError(f"range [{rng.start}, {rng.end}] already attached")
        self._set_attached(rng, True)

    def clear_attached(self, rng: ByteRange) -> None:
        """Clear attached on written bytes intersecting rng (no-op on gaps)."""
        self._set_attached(rng, False)

    def unattached_intervals(self) -> list[LocalInterval]:
        return [n for n in self._nodes if not n.attached]

    def attached_intervals(self) -> list[LocalInterval]:
        return [n for n in self._nodes if n.attached]

    def drop_unattached(self) -> None:
        keep = [n for n in self._nodes if n.attached]
        self._nodes = keep
        self._starts = [n.file_range.start for n in keep]

    def remove(self, rng: ByteRange) -> None:
        """Forget mappings for rng; partly covered intervals are clipped."""
        i, j = self._overlap_indices(rng)
        pieces: list[LocalInterval] = []
        for node in self._nodes[i:j]:
            pieces.extend(self._outside_pieces(node, rng))
        self._splice(i, j, pieces)

    def _set_attached(self, rng: ByteRange, value: bool) -> None:
        i, j = self._overlap_indices(rng)
        pieces: list[LocalInterval] = []
        for node in self._nodes[i:j]:
            pieces.extend(self._outside_pieces(node, rng))
            inside = self._clip_node(node, rng)
            pieces.append(LocalInterval(inside.file_range, inside.buffer_range, value))
        pieces.sort(key=lambda n: n.file_range.start)
        self._splice(i, j, pieces)
        self._merge_around(i, i + len(pieces))

    def _splice(self, i: int, j: int, pieces: list[LocalInterval]) -> None:
        self._nodes[i:j] = pieces
        self._starts[i:j] = [n.file_range.start for n in pieces]

    def _merge_around(self, lo: int, hi: int) -> None:
        lo = max(lo - 1, 0)
        k = lo
        while k + 1 < len(self._nodes) and k < hi + 1:
            a, b = self._nodes[k], self._nodes[k + 1]
            if (
                a.attached == b.attached
                and a.file_range.end + 1 == b.file_range.start
                and a.buffer_range.end + 1 == b.buffer_range.start
            ):
                merged = LocalInterval(
                    ByteRange(a.file_range.start, b.file_range.end),
                    ByteRange(a.buffer_range.start, b.buffer_range.end),
                    a.attached,
                )
                self._splice(k, k + 2, [merged])
                hi -= 1
            else:
                k += 1

    def check_invariants(self) -> None:
        for a, b in zip(self._nodes, self._nodes[1:]):
            assert a.file_range.end < b.file_range.start, "overlapping intervals"
            mergeable = (
                a.attached == b.attached
                and a.file_range.end + 1 == b.file_range.start
                and a.buffer_range.end + 1 == b.buffer_range.start
            )
            assert not mergeable, "unmerged neighbors"
        assert self._starts == [n.file_range.start for n in self._nodes]

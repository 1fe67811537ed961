"""Line-delimited execution-trace format.

One record per line, space separated, with a version header::

    bbfs-trace v1
    <seq> <proc> write <file> <offset> <size> <t_start> <t_end> [note]
    <seq> <proc> read  <file> <offset> <size> <t_start> <t_end> [note]
    <seq> <proc> sync  <name> <file> <t_start> <t_end>
    <seq> so <from_seq> <to_seq>

Timestamps are simulated seconds (float repr, exact round trip).  ``so``
lines add cross-process ordering edges between previously defined ops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .races import ExecutionTrace, StorageOp

FORMAT_NAME = "bbfs-trace"
MAJOR_VERSION = 1
HEADER = f"{FORMAT_NAME} v{MAJOR_VERSION}"

_TOKEN = re.compile(r"^[A-Za-z0-9_.:/\-]+$")


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)
        self.lineno = lineno


@dataclass(frozen=True, slots=True)
class TraceRecord:
    seq: int
    kind: str  # 'write' | 'read' | 'sync' | 'so'
    process: int | None = None
    file: str | None = None
    offset: int | None = None
    size: int | None = None
    sync_name: str | None = None
    t_start: float | None = None
    t_end: float | None = None
    note: str | None = None
    from_id: int | None = None
    to_id: int | None = None


def _check_token(value: str, what: str) -> str:
    if not _TOKEN.match(value):
        raise ValueError(f"{what} {value!r} contains unsupported characters")
    return value


def encode(record: TraceRecord) -> str:
    if record.kind in ("write", "read"):
        parts = [
            str(record.seq),
            str(record.process),
            record.kind,
            _check_token(record.file, "file name"),
            str(record.offset),
            str(record.size),
            repr(record.t_start),
            repr(record.t_end),
        ]
        if record.note is not None:
            parts.append(_check_token(record.note, "note"))
        return " ".join(parts)
    if record.kind == "sync":
        return " ".join(
            [
                str(record.seq),
                str(record.process),
                "sync",
                _check_token(record.sync_name, "sync name"),
                _check_token(record.file, "file name"),
                repr(record.t_start),
                repr(record.t_end),
            ]
        )
    if record.kind == "so":
        return f"{record.seq} so {record.from_id} {record.to_id}"
    raise ValueError(f"unknown record kind {record.kind!r}")


def decode(line: str, lineno: int | None = None) -> TraceRecord:
    tokens = line.split()
    try:
        if len(tokens) >= 2 and tokens[1] == "so":
            if len(tokens) != 4:
                raise ValueError("so record needs 4 fields")
            return TraceRecord(
                seq=int(tokens[0]), kind="so", from_id=int(tokens[2]), to_id=int(tokens[3])
            )
        if len(tokens) >= 3 and tokens[2] == "sync":
            if len(tokens) != 7:
                raise ValueError("sync record needs 7 fields")
            return TraceRecord(
                seq=int(tokens[0]),
                process=int(tokens[1]),
                kind="sync",
                sync_name=tokens[3],
                file=tokens[4],
                t_start=float(tokens[5]),
                t_end=float(tokens[6]),
            )
        if len(tokens) >= 3 and tokens[2] in ("write", "read"):
            if len(tokens) not in (8, 9):
                raise ValueError("data record needs 8 or 9 fields")
            return TraceRecord(
                seq=int(tokens[0]),
                process=int(tokens[1]),
                kind=tokens[2],
                file=tokens[3],
                offset=int(tokens[4]),
                size=int(tokens[5]),
                t_start=float(tokens[6]),
                t_end=float(tokens[7]),
                note=tokens[8] if len(tokens) == 9 else None,
            )
        raise ValueError(f"unrecognized record: {line!r}")
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


class TraceWriter:
    """Collects records in event order; converts ordering barriers to so edges."""

    def __init__(self) -> None:
        self.records: list[TraceRecord] = []
        self._next_seq = 0
        self._last_op: dict[int, int] = {}
        self._pending_sources: dict[int, list[int]] = {}

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def _emit_pending(self, process: int, new_id: int) -> None:
        sources = self._pending_sources.pop(process, None)
        if sources:
            for src in sources:
                self.so_edge(src, new_id)

    def data_op(self, process, kind, file, offset, size, t_start, t_end, note=None) -> int:
        seq = self._take_seq()
        self.records.append(
            TraceRecord(seq, kind, process=process, file=file, offset=offset,
                        size=size, t_start=t_start, t_end=t_end, note=note)
        )
        self._emit_pending(process, seq)
        self._last_op[process] = seq
        return seq

    def sync_op(self, process, name, file, t_start, t_end) -> int:
        seq = self._take_seq()
        self.records.append(
            TraceRecord(seq, "sync", process=process, file=file, sync_name=name,
                        t_start=t_start, t_end=t_end)
        )
        self._emit_pending(process, seq)
        self._last_op[process] = seq
        return seq

    def so_edge(self, from_id: int, to_id: int) -> int:
        seq = self._take_seq()
        self.records.append(TraceRecord(seq, "so", from_id=from_id, to_id=to_id))
        return seq

    def barrier(self, processes) -> None:
        """Order every process's next op after every other's last op."""
        processes = list(processes)
        captured = {p: self._last_op.get(p) for p in processes}
        for p in processes:
            sources = [captured[q] for q in processes if q != p and captured[q] is not None]
            if sources:
                self._pending_sources[p] = sources

    def dumps(self) -> str:
        lines = [HEADER]
        lines.extend(encode(r) for r in self.records)
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def to_execution_trace(self) -> ExecutionTrace:
        return records_to_execution_trace(self.records)


def loads(text: str) -> list[TraceRecord]:
    lines = text.splitlines()
    if not lines:
        return []
    header = lines[0].split()
    if len(header) != 2 or header[0] != FORMAT_NAME or not header[1].startswith("v"):
        raise ParseError(f"bad header {lines[0]!r}", 1)
    try:
        major = int(header[1][1:].split(".")[0])
    except ValueError:
        raise ParseError(f"bad version {header[1]!r}", 1) from None
    if major != MAJOR_VERSION:
        raise ParseError(f"unsupported major version {major}", 1)
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        records.append(decode(line, lineno))
    return records


def records_to_execution_trace(records: list[TraceRecord]) -> ExecutionTrace:
    ops = []
    edges = []
    op_ids = set()
    for r in records:
        if r.kind in ("write", "read"):
            ops.append(
                StorageOp(r.seq, r.process, r.kind, r.file, r.offset, r.offset + r.size - 1)
            )
            op_ids.add(r.seq)
        elif r.kind == "sync":
            ops.append(StorageOp(r.seq, r.process, "sync", r.file, sync_name=r.sync_name))
            op_ids.add(r.seq)
        else:
            edges.append((r.from_id, r.to_id))
    for a, b in edges:
        for end in (a, b):
            if end not in op_ids:
                raise ParseError(f"so edge references missing op id {end}")
    return ExecutionTrace(ops, edges)


def read_trace(path) -> ExecutionTrace:
    """Load and validate a trace file (referential and acyclicity checks)."""
    return records_to_execution_trace(loads(Path(path).read_text()))


def read_records(path) -> list[TraceRecord]:
    return loads(Path(path).read_text())

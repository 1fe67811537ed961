"""Burst-buffer file system simulator with pluggable consistency models.

The package stacks five pieces: byte-range interval maps (`intervals`), a
deterministic discrete-event cluster (`engine`), the buffer-backed file
system kernel (`kernel`), POSIX/commit/session layers over it (`layers`),
a storage-race checker with an SC enumeration oracle (`races`), plus a
trace format (`trace`) and benchmark workloads (`workloads`).
"""

from .engine import SimConfig, Simulator
from .intervals import ByteRange, GlobalIntervalTree, LocalIntervalTree
from .kernel import ClientId, World
from .layers import CommitFile, PosixFile, SessionFile, layer_file
from .races import (
    ExecutionTrace,
    ModelDef,
    Program,
    StorageOp,
    builtin_model,
    check_properly_synchronized,
    enumerate_sc_results,
)
from .trace import TraceWriter, read_trace

__version__ = "0.1.0"

__all__ = [
    "ByteRange",
    "ClientId",
    "CommitFile",
    "ExecutionTrace",
    "GlobalIntervalTree",
    "LocalIntervalTree",
    "ModelDef",
    "PosixFile",
    "Program",
    "SessionFile",
    "SimConfig",
    "Simulator",
    "StorageOp",
    "TraceWriter",
    "World",
    "builtin_model",
    "check_properly_synchronized",
    "enumerate_sc_results",
    "layer_file",
    "read_trace",
    "__version__",
]

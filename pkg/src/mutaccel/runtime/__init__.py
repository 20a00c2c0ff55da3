"""Deterministic interpreter state, execute/try/apply, and copy-on-write forking."""

from mutaccel.runtime.cow import FsError, OutputStream, PagedMemory, PageStore, SimFS
from mutaccel.runtime.semantics import (
    AbstractChange,
    BranchTo,
    CallEffect,
    MemWrite,
    NoEffect,
    RegWrite,
    Return,
    Trap,
    apply,
    binop,
    execute,
    fs_open,
    fs_read,
    fs_seek,
    fs_write,
    try_variant,
)
from mutaccel.runtime.state import (
    EXITED,
    RUNNING,
    TIMED_OUT,
    TRAPPED,
    MachineState,
    fork_state,
    output_digest,
    state_bytes,
)

__all__ = [
    "AbstractChange", "BranchTo", "CallEffect", "EXITED", "FsError", "MachineState", "MemWrite",
    "NoEffect", "OutputStream", "PageStore", "PagedMemory", "RUNNING", "RegWrite", "Return",
    "SimFS", "TIMED_OUT", "TRAPPED", "Trap", "apply", "binop", "execute", "fork_state", "fs_open",
    "fs_read", "fs_seek", "fs_write", "output_digest", "state_bytes", "try_variant",
]

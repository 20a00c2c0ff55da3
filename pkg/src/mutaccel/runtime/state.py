"""Interpreter state and copy-on-write forking."""

from __future__ import annotations

import hashlib
import pickle

from mutaccel.ir import Program
from mutaccel.runtime.cow import OutputStream, PagedMemory, PageStore, SimFS

RUNNING = "running"
EXITED = "exited"
TRAPPED = "trapped"
TIMED_OUT = "timed-out"

DEFAULT_MAX_DEPTH = 256


class Frame:
    __slots__ = ("func", "block", "code", "locs", "index", "regs", "ret_dest")

    def __init__(self, func, block, code, locs, index, regs, ret_dest):
        self.func = func
        self.block = block
        self.code = code
        self.locs = locs
        self.index = index
        self.regs = regs
        self.ret_dest = ret_dest

    def copy(self) -> Frame:
        return Frame(self.func, self.block, self.code, self.locs, self.index, list(self.regs), self.ret_dest)


class MachineState:
    __slots__ = (
        "program", "frames", "memory", "output", "fs", "steps", "budget",
        "max_depth", "status", "exit_code", "trap_reason",
    )

    @classmethod
    def initial(
        cls,
        program: Program,
        args=(),
        files: dict[int, bytes] | None = None,
        budget: int | None = None,
        store: PageStore | None = None,
        max_depth: int = DEFAULT_MAX_DEPTH,
    ) -> MachineState:
        store = store if store is not None else PageStore()
        s = cls()
        s.program = program
        s.frames = []
        s.memory = PagedMemory(store, program.memory_size)
        s.output = OutputStream()
        s.fs = SimFS.preload(store, files or {})
        s.steps = 0
        s.budget = budget
        s.max_depth = max_depth
        s.status = RUNNING
        s.exit_code = None
        s.trap_reason = None
        fn = program.functions[program.entry]
        if len(args) != fn.arity:
            raise ValueError(f"{fn.name} takes {fn.arity} argument(s), got {len(args)}")
        s.push_frame(fn, list(args), None)
        return s

    @property
    def store(self) -> PageStore:
        return self.memory.store

    # -- control

    def push_frame(self, fn, args: list[int], ret_dest: int | None) -> None:
        regs = [0] * fn.register_count
        regs[: len(args)] = args
        block = fn.entry_block
        self.frames.append(
            Frame(fn, block, fn.blocks[block], self.program.location_map[fn.name][block], 0, regs, ret_dest)
        )

    def jump(self, label: str) -> None:
        f = self.frames[-1]
        f.block = label
        f.code = f.func.blocks[label]
        f.locs = self.program.location_map[f.func.name][label]
        f.index = 0

    def do_return(self, value: int) -> None:
        if len(self.frames) == 1:
            self.status = EXITED
            self.exit_code = value
            return
        callee = self.frames.pop()
        if callee.ret_dest is not None:
            self.frames[-1].regs[callee.ret_dest] = value

    def trap(self, reason: str) -> None:
        self.status = TRAPPED
        self.trap_reason = reason

    def tick(self) -> None:
        self.steps += 1
        if self.budget is not None and self.steps >= self.budget and self.status == RUNNING:
            self.status = TIMED_OUT

    # -- queries

    def current(self):
        """The next instruction to run, or None once the state has terminated."""
        if self.status != RUNNING:
            return None
        f = self.frames[-1]
        return f.code[f.index]

    def location(self) -> int | None:
        """Location id of the next instruction; None for non-mutable sites and terminated states."""
        if self.status != RUNNING:
            return None
        f = self.frames[-1]
        return f.locs[f.index]

    def snapshot(self) -> tuple:
        frames = tuple(
            (f.func.name, f.block, f.index, tuple(f.regs), f.ret_dest) for f in self.frames
        )
        return (
            self.status, self.exit_code, self.trap_reason, self.steps, self.budget,
            frames, self.memory.cells(), self.output.getvalue(), self.fs.snapshot(),
        )

    def release(self) -> None:
        """Drop this state's page references; the state must not be used afterwards."""
        self.memory.release()
        self.fs.release()


def fork_state(s: MachineState) -> MachineState:
    """Observationally equal copy of ``s`` sharing all pages copy-on-write."""
    c = MachineState()
    c.program = s.program
    c.frames = [f.copy() for f in s.frames]
    c.memory = s.memory.fork()
    c.output = s.output.fork()
    c.fs = s.fs.fork()
    c.steps = s.steps
    c.budget = s.budget
    c.max_depth = s.max_depth
    c.status = s.status
    c.exit_code = s.exit_code
    c.trap_reason = s.trap_reason
    return c


def state_bytes(s: MachineState) -> bytes:
    """Canonical serialization used for bit-equality checks."""
    return pickle.dumps(s.snapshot(), protocol=4)


def output_digest(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=16).hexdigest()

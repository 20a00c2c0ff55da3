"""execute / try / apply over single instructions.

``execute`` mutates the state directly.  ``try_variant`` evaluates the same
instruction without touching the state and returns an abstract change, which
``apply`` later replays.  The two paths are written separately so that the law
``apply(try(s, c), s) == execute(s, c)`` is something the tests can check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from mutaccel.ir import BINARY_OPS, BUILTINS, INT_MIN, Imm, Instruction, Reg, wrap
from mutaccel.runtime.cow import FsError
from mutaccel.runtime.state import RUNNING, MachineState

MASK64 = 0xFFFFFFFFFFFFFFFF


class _Trap(Exception):
    def __init__(self, reason: str):
        self.reason = reason


# ---------------------------------------------------------------- abstract changes


@dataclass(frozen=True)
class RegWrite:
    register: int
    value: int


@dataclass(frozen=True)
class MemWrite:
    address: int
    value: int


@dataclass(frozen=True)
class CallEffect:
    """A call summarized by its target and argument values; the callee is not entered."""

    callee: str
    args: tuple
    dest: int | None


@dataclass(frozen=True)
class BranchTo:
    label: str


@dataclass(frozen=True)
class NoEffect:
    pass


@dataclass(frozen=True)
class Trap:
    reason: str


@dataclass(frozen=True)
class Return:
    value: int | None


AbstractChange = Union[RegWrite, MemWrite, CallEffect, BranchTo, NoEffect, Trap, Return]


# ---------------------------------------------------------------- evaluation helpers


def operand_value(regs: list[int], op) -> int:
    t = type(op)
    if t is Reg:
        return regs[op.index]
    if t is Imm:
        return op.value
    v = regs[op.inner.index]
    if op.kind == "inc":
        return wrap(v + 1)
    if op.kind == "dec":
        return wrap(v - 1)
    return wrap(-v) if v < 0 else v


def _tdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def binop(op: str, a: int, b: int) -> int:
    if op == "add":
        return wrap(a + b)
    if op == "sub":
        return wrap(a - b)
    if op == "mul":
        return wrap(a * b)
    if op == "div" or op == "rem":
        if b == 0:
            raise _Trap("div-by-zero" if op == "div" else "rem-by-zero")
        if a == INT_MIN and b == -1:
            raise _Trap("overflow")
        q = _tdiv(a, b)
        return q if op == "div" else a - b * q
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op in ("shl", "lshr", "ashr"):
        if not 0 <= b <= 63:
            raise _Trap("shift-range")
        if op == "shl":
            return wrap(a << b)
        if op == "lshr":
            return wrap((a & MASK64) >> b)
        return a >> b
    if op == "eq":
        return int(a == b)
    if op == "ne":
        return int(a != b)
    if op == "lt":
        return int(a < b)
    if op == "le":
        return int(a <= b)
    if op == "gt":
        return int(a > b)
    if op == "ge":
        return int(a >= b)
    raise ValueError(f"not a binary opcode: {op}")


def _check_addr(state: MachineState, addr: int) -> None:
    if not 0 <= addr < state.memory.size:
        raise _Trap("memory-bounds")


def _print(state: MachineState, value: int) -> None:
    state.output.append(b"%d\n" % value)


def _builtin(state: MachineState, name: str, args) -> int:
    fs = state.fs
    try:
        if name == "fopen":
            return fs.open(args[0])
        if name == "fread":
            data = fs.read(args[0], 1)
            return data[0] if data else -1
        if name == "fwrite":
            return fs.write(args[0], bytes([args[1] & 0xFF]))
        if name == "fseek":
            fs.seek(args[0], args[1])
            return 0
    except FsError as e:
        raise _Trap(e.reason) from None
    raise ValueError(f"unknown builtin {name}")


def _call(state: MachineState, callee: str, args, dest: int | None) -> None:
    f = state.frames[-1]
    if callee in BUILTINS:
        result = _builtin(state, callee, args)
        if dest is not None:
            f.regs[dest] = result
        f.index += 1
        return
    if len(state.frames) >= state.max_depth:
        raise _Trap("stack-overflow")
    f.index += 1
    state.push_frame(state.program.functions[callee], list(args), dest)


# ---------------------------------------------------------------- execute


def execute(state: MachineState, ins: Instruction) -> None:
    """Run one instruction in place, advancing pc and the step counter."""
    f = state.frames[-1]
    regs = f.regs
    op = ins.op
    try:
        if op in BINARY_OPS:
            a = operand_value(regs, ins.args[0])
            b = operand_value(regs, ins.args[1])
            regs[ins.dest] = binop(op, a, b)
            f.index += 1
        elif op == "const":
            regs[ins.dest] = operand_value(regs, ins.args[0])
            f.index += 1
        elif op == "load":
            addr = operand_value(regs, ins.args[0])
            _check_addr(state, addr)
            regs[ins.dest] = state.memory.read(addr)
            f.index += 1
        elif op == "store":
            addr = operand_value(regs, ins.args[0])
            _check_addr(state, addr)
            state.memory.write(addr, operand_value(regs, ins.args[1]))
            f.index += 1
        elif op == "br":
            state.jump(ins.labels[0])
        elif op == "br_cond":
            state.jump(ins.labels[0] if operand_value(regs, ins.args[0]) != 0 else ins.labels[1])
        elif op == "call":
            _call(state, ins.callee, [operand_value(regs, a) for a in ins.args], ins.dest)
        elif op == "ret":
            state.do_return(operand_value(regs, ins.args[0]) if ins.args else 0)
        elif op == "print":
            _print(state, operand_value(regs, ins.args[0]))
            f.index += 1
        elif op == "nop":
            if ins.dest is not None:
                regs[ins.dest] = 0
            f.index += 1
        else:
            raise ValueError(f"unknown opcode {op}")
    except _Trap as t:
        state.trap(t.reason)
    state.tick()


# ---------------------------------------------------------------- try / apply


def try_variant(state: MachineState, ins: Instruction):
    """Abstract change ``ins`` would make to ``state``; ``state`` is not modified."""
    regs = state.frames[-1].regs
    op = ins.op
    try:
        if op in BINARY_OPS:
            a = operand_value(regs, ins.args[0])
            b = operand_value(regs, ins.args[1])
            return RegWrite(ins.dest, binop(op, a, b))
        if op == "const":
            return RegWrite(ins.dest, operand_value(regs, ins.args[0]))
        if op == "load":
            addr = operand_value(regs, ins.args[0])
            _check_addr(state, addr)
            return RegWrite(ins.dest, state.memory.read(addr))
        if op == "store":
            addr = operand_value(regs, ins.args[0])
            _check_addr(state, addr)
            return MemWrite(addr, operand_value(regs, ins.args[1]))
        if op == "br":
            return BranchTo(ins.labels[0])
        if op == "br_cond":
            return BranchTo(ins.labels[0] if operand_value(regs, ins.args[0]) != 0 else ins.labels[1])
        if op == "call":
            if ins.callee not in BUILTINS and len(state.frames) >= state.max_depth:
                return Trap("stack-overflow")
            return CallEffect(ins.callee, tuple(operand_value(regs, a) for a in ins.args), ins.dest)
        if op == "ret":
            return Return(operand_value(regs, ins.args[0]) if ins.args else None)
        if op == "print":
            return CallEffect("print", (operand_value(regs, ins.args[0]),), None)
        if op == "nop":
            return NoEffect() if ins.dest is None else RegWrite(ins.dest, 0)
    except _Trap as t:
        return Trap(t.reason)
    raise ValueError(f"unknown opcode {op}")


def apply(change, state: MachineState) -> None:
    """Replay a change produced by :func:`try_variant` on this same state."""
    f = state.frames[-1]
    t = type(change)
    try:
        if t is RegWrite:
            f.regs[change.register] = change.value
            f.index += 1
        elif t is MemWrite:
            state.memory.write(change.address, change.value)
            f.index += 1
        elif t is CallEffect:
            if change.callee == "print":
                _print(state, change.args[0])
                f.index += 1
            else:
                _call(state, change.callee, change.args, change.dest)
        elif t is BranchTo:
            state.jump(change.label)
        elif t is NoEffect:
            f.index += 1
        elif t is Trap:
            state.trap(change.reason)
        elif t is Return:
            state.do_return(0 if change.value is None else change.value)
        else:
            raise TypeError(f"not an abstract change: {change!r}")
    except _Trap as tr:
        state.trap(tr.reason)
    state.tick()


def is_running(state: MachineState) -> bool:
    return state.status == RUNNING


# ---------------------------------------------------------------- file system API


def fs_open(state: MachineState, file_id: int) -> int:
    return state.fs.open(file_id)


def fs_read(state: MachineState, handle: int, n: int) -> bytes:
    return state.fs.read(handle, n)


def fs_write(state: MachineState, handle: int, data: bytes) -> int:
    return state.fs.write(handle, data)


def fs_seek(state: MachineState, handle: int, offset: int) -> None:
    state.fs.seek(handle, offset)

"""Three-address register IR: types, text format, parser, printer, validator.

The textual format, one instruction per line (``;`` also separates)::

    # comments run to end of line
    memory 16            # global memory cell count (default 0)
    entry main           # entry function (default "main")

    func main/1 {
    entry:
      r1 = const 7
      r2 = add r0 r1
      r3 = lt r2 10
      br_cond r3 small big
    small:
      print r2
      ret 0
    big:
      r4 = call helper r2 r1
      ret r4
    }

Operands are registers ``r<n>`` or signed 64-bit literals.  Instruction
forms (``D`` a destination register, ``a``/``b`` operands)::

    D = const a
    D = <binop> a b      add sub mul div rem | and or xor | shl lshr ashr
                         | eq ne lt le gt ge  (``arith.add`` style aliases ok)
    D = load a           read memory cell a
    store a b            memory[a] := b
    br L
    br_cond a L_true L_false
    [D =] call f a b ... user function or builtin (fopen fread fwrite fseek)
    ret [a]
    print a              append decimal value and newline to output
    [D =] nop            deleted statement (mutant code only)

Mutant code may additionally use wrapped operands ``inc(rN)``, ``dec(rN)`` and
``abs(rN)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1

ARITH_OPS = ("add", "sub", "mul", "div", "rem")
LOGIC_OPS = ("and", "or", "xor")
SHIFT_OPS = ("shl", "lshr", "ashr")
ICMP_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
BINARY_OPS = ARITH_OPS + LOGIC_OPS + SHIFT_OPS + ICMP_OPS
_OP_FAMILY = {"arith": ARITH_OPS, "logic": LOGIC_OPS, "shift": SHIFT_OPS, "icmp": ICMP_OPS}

TERMINATORS = ("br", "br_cond", "ret")
UNARY_KINDS = ("inc", "dec", "abs")

# name -> argument count
BUILTINS = {"fopen": 1, "fread": 1, "fwrite": 2, "fseek": 2}


def wrap(value: int) -> int:
    """Reduce an integer to two's-complement signed 64-bit."""
    value &= 0xFFFFFFFFFFFFFFFF
    return value - (1 << 64) if value & (1 << 63) else value


class IRError(Exception):
    pass


class ParseError(IRError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


class ValidationError(IRError):
    def __init__(self, diagnostics: list["Diagnostic"]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Reg:
    index: int

    def __str__(self) -> str:
        return f"r{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Unary:
    """A register operand adjusted before use: ``inc``/``dec`` add +-1, ``abs`` takes |x|."""

    kind: str
    inner: Reg

    def __str__(self) -> str:
        return f"{self.kind}({self.inner})"


Operand = Union[Reg, Imm, Unary]


def operand_register(op: Operand) -> int | None:
    if isinstance(op, Reg):
        return op.index
    if isinstance(op, Unary):
        return op.inner.index
    return None


@dataclass(frozen=True)
class Instruction:
    op: str
    args: tuple = ()
    dest: int | None = None
    callee: str | None = None
    labels: tuple = ()

    def __str__(self) -> str:
        return format_instruction(self)

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS


@dataclass(frozen=True)
class Function:
    name: str
    arity: int
    blocks: dict = field(hash=False)  # label -> tuple[Instruction, ...], insertion ordered

    @property
    def entry_block(self) -> str:
        return next(iter(self.blocks))

    @cached_property
    def register_count(self) -> int:
        hi = self.arity - 1
        for instrs in self.blocks.values():
            for ins in instrs:
                if ins.dest is not None:
                    hi = max(hi, ins.dest)
                for a in ins.args:
                    r = operand_register(a)
                    if r is not None:
                        hi = max(hi, r)
        return hi + 1

    def instructions(self) -> Iterator[tuple[str, int, Instruction]]:
        for label, instrs in self.blocks.items():
            for i, ins in enumerate(instrs):
                yield label, i, ins


@dataclass(frozen=True)
class Location:
    id: int
    function: str
    block: str
    index: int


@dataclass(frozen=True)
class Program:
    functions: dict = field(hash=False)  # name -> Function
    entry: str = "main"
    memory_size: int = 0

    @cached_property
    def locations(self) -> tuple[Location, ...]:
        return tuple(enumerate_locations(self))

    @cached_property
    def location_map(self) -> dict:
        """function -> block -> per-instruction location id (None where not mutable)."""
        table: dict = {}
        for name, fn in self.functions.items():
            table[name] = {label: [None] * len(instrs) for label, instrs in fn.blocks.items()}
        for loc in self.locations:
            table[loc.function][loc.block][loc.index] = loc.id
        return table

    def instruction_at(self, loc: Location) -> Instruction:
        return self.functions[loc.function].blocks[loc.block][loc.index]


@dataclass(frozen=True)
class Diagnostic:
    function: str
    block: str | None
    index: int | None
    message: str
    register: int | None = None

    def __str__(self) -> str:
        where = self.function
        if self.block is not None:
            where += f":{self.block}"
            if self.index is not None:
                where += f"[{self.index}]"
        return f"{where}: {self.message}"


# ---------------------------------------------------------------- locations


def is_mutable(ins: Instruction) -> bool:
    """True when at least one mutation operator applies to ``ins``."""
    if ins.op == "br":
        return False
    if ins.op in ("ret", "nop") and not ins.args:
        return False
    return True


def enumerate_locations(p: Program) -> list[Location]:
    out: list[Location] = []
    for name in sorted(p.functions):
        for label, i, ins in p.functions[name].instructions():
            if is_mutable(ins):
                out.append(Location(len(out), name, label, i))
    return out


# ---------------------------------------------------------------- printing


def format_operand(op: Operand) -> str:
    return str(op)


def format_instruction(ins: Instruction) -> str:
    args = " ".join(str(a) for a in ins.args)
    if ins.op == "call":
        body = f"call {ins.callee}" + (f" {args}" if args else "")
    elif ins.op == "br":
        body = f"br {ins.labels[0]}"
    elif ins.op == "br_cond":
        body = f"br_cond {args} {ins.labels[0]} {ins.labels[1]}"
    else:
        body = ins.op + (f" {args}" if args else "")
    if ins.dest is not None:
        return f"r{ins.dest} = {body}"
    return body


def format_program(p: Program) -> str:
    lines = [f"memory {p.memory_size}", f"entry {p.entry}"]
    for name, fn in p.functions.items():
        lines.append("")
        lines.append(f"func {name}/{fn.arity} {{")
        for label, instrs in fn.blocks.items():
            lines.append(f"{label}:")
            lines.extend(f"  {format_instruction(ins)}" for ins in instrs)
        lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>\#[^\n]*)|(?P<nl>\n)"
    r"|(?P<int>-?\d+)|(?P<word>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<punct>[{}:;/=(),])"
)
_REG_RE = re.compile(r"r(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            toks.append(_Tok("sep", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "punct" and m.group() == ";":
            toks.append(_Tok("sep", ";", line, col))
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            self.error(f"expected {want}, got {got}")
        return self.next()

    def skip_seps(self):
        while self.peek().kind == "sep":
            self.pos += 1

    def at_stmt_end(self) -> bool:
        tok = self.peek()
        return tok.kind in ("sep", "eof") or (tok.kind == "punct" and tok.text == "}")

    def end_stmt(self):
        if not self.at_stmt_end():
            self.error(f"unexpected {self.peek().text!r} at end of statement")

    def integer(self) -> int:
        tok = self.expect("int")
        value = int(tok.text)
        if not INT_MIN <= value <= INT_MAX:
            self.error("literal out of 64-bit range", tok)
        return value

    def name(self) -> str:
        tok = self.expect("word")
        if "." in tok.text:
            self.error(f"invalid name {tok.text!r}", tok)
        return tok.text

    def register(self) -> int:
        tok = self.expect("word")
        m = _REG_RE.match(tok.text)
        if not m:
            self.error(f"expected register, got {tok.text!r}", tok)
        return int(m.group(1))

    def operand(self) -> Operand:
        tok = self.peek()
        if tok.kind == "int":
            return Imm(self.integer())
        if tok.kind == "word" and tok.text in UNARY_KINDS and self.peek(1).text == "(":
            self.pos += 2
            inner = Reg(self.register())
            self.expect("punct", ")")
            return Unary(tok.text, inner)
        if tok.kind == "word" and _REG_RE.match(tok.text):
            return Reg(self.register())
        self.error(f"expected operand, got {tok.text or 'end of input'!r}")

    def operands(self) -> tuple:
        out = []
        while not self.at_stmt_end():
            out.append(self.operand())
        return tuple(out)

    def program(self) -> Program:
        functions: dict[str, Function] = {}
        entry, memory = "main", 0
        while True:
            self.skip_seps()
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "word" and tok.text == "func":
                fn = self.function()
                if fn.name in functions:
                    self.error(f"duplicate function {fn.name!r}", tok)
                functions[fn.name] = fn
            elif tok.kind == "word" and tok.text == "memory":
                self.next()
                memory = self.integer()
                if memory < 0:
                    self.error("memory size must be >= 0", tok)
                self.end_stmt()
            elif tok.kind == "word" and tok.text == "entry":
                self.next()
                entry = self.name()
                self.end_stmt()
            else:
                self.error(f"unexpected {tok.text!r} at top level")
        return Program(functions, entry, memory)

    def function(self) -> Function:
        self.expect("word", "func")
        name = self.name()
        self.expect("punct", "/")
        arity = self.integer()
        if arity < 0:
            self.error("negative arity")
        self.expect("punct", "{")
        blocks: dict[str, list[Instruction]] = {}
        current: list[Instruction] | None = None
        while True:
            self.skip_seps()
            tok = self.peek()
            if tok.kind == "eof":
                self.error(f"unterminated function {name!r}")
            if tok.kind == "punct" and tok.text == "}":
                self.next()
                break
            if tok.kind == "word" and self.peek(1).text == ":":
                if tok.text in blocks:
                    self.error(f"duplicate label {tok.text!r}", tok)
                self.pos += 2
                current = blocks[tok.text] = []
                continue
            if current is None:
                self.error("instruction before first label")
            current.append(self.instruction())
            self.end_stmt()
        if not blocks:
            self.error(f"function {name!r} has no blocks")
        return Function(name, arity, {k: tuple(v) for k, v in blocks.items()})

    def instruction(self) -> Instruction:
        dest = None
        if self.peek().kind == "word" and self.peek(1).text == "=":
            dest = self.register()
            self.expect("punct", "=")
        tok = self.expect("word")
        op = tok.text
        if "." in op:
            family, _, base = op.partition(".")
            if base not in _OP_FAMILY.get(family, ()):
                self.error(f"unknown opcode {op!r}", tok)
            op = base
        needs_dest = op in BINARY_OPS or op in ("const", "load")
        if needs_dest and dest is None:
            self.error(f"{op} needs a destination register", tok)
        if op in ("store", "br", "br_cond", "ret", "print") and dest is not None:
            self.error(f"{op} has no result", tok)
        if op == "call":
            callee = self.name()
            return Instruction("call", self.operands(), dest, callee)
        if op == "br":
            return Instruction("br", (), None, None, (self.name(),))
        if op == "br_cond":
            cond = self.operand()
            return Instruction("br_cond", (cond,), None, None, (self.name(), self.name()))
        counts = {"const": 1, "load": 1, "store": 2, "print": 1, "nop": 0}
        if op in BINARY_OPS:
            want = (2,)
        elif op == "ret":
            want = (0, 1)
        elif op in counts:
            want = (counts[op],)
        else:
            self.error(f"unknown opcode {op!r}", tok)
        args = self.operands()
        if len(args) not in want:
            self.error(f"{op} takes {' or '.join(map(str, want))} operand(s), got {len(args)}", tok)
        return Instruction(op, args, dest)


def parse_instruction(text: str) -> Instruction:
    p = _Parser(text)
    ins = p.instruction()
    p.skip_seps()
    if p.peek().kind != "eof":
        p.error("trailing input after instruction")
    return ins


def parse_program(text: str, check: bool = True) -> Program:
    """Parse IR source; with ``check`` also raise ValidationError on any diagnostic."""
    prog = _Parser(text).program()
    if check:
        diags = validate(prog)
        if diags:
            raise ValidationError(diags)
    return prog


# ---------------------------------------------------------------- validation


def _successors(ins: Instruction) -> tuple:
    return ins.labels if ins.op in ("br", "br_cond") else ()


def validate(p: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    if p.memory_size < 0:
        diags.append(Diagnostic("<program>", None, None, "memory size must be >= 0"))
    if p.entry not in p.functions:
        diags.append(Diagnostic("<program>", None, None, f"entry function {p.entry!r} not defined"))
    for name, fn in p.functions.items():
        if name in BUILTINS:
            diags.append(Diagnostic(name, None, None, f"function name {name!r} shadows a builtin"))
        if not fn.blocks:
            diags.append(Diagnostic(name, None, None, "function has no blocks"))
            continue
        for label, instrs in fn.blocks.items():
            if not instrs or not instrs[-1].is_terminator:
                diags.append(Diagnostic(name, label, None, "block does not end in br/br_cond/ret"))
            for i, ins in enumerate(instrs):
                if ins.is_terminator and i != len(instrs) - 1:
                    diags.append(Diagnostic(name, label, i, f"terminator {ins.op} in mid-block"))
                for target in _successors(ins):
                    if target not in fn.blocks:
                        diags.append(Diagnostic(name, label, i, f"undefined label {target!r}"))
                if ins.op == "call":
                    if ins.callee in p.functions:
                        want = p.functions[ins.callee].arity
                    elif ins.callee in BUILTINS:
                        want = BUILTINS[ins.callee]
                    else:
                        diags.append(Diagnostic(name, label, i, f"undefined function {ins.callee!r}"))
                        continue
                    if len(ins.args) != want:
                        diags.append(
                            Diagnostic(name, label, i, f"call {ins.callee} expects {want} argument(s), got {len(ins.args)}")
                        )
        diags.extend(_check_definitions(fn))
    return diags


def _check_definitions(fn: Function) -> list[Diagnostic]:
    """Must-defined dataflow: flag operand registers not assigned on every path."""
    labels = list(fn.blocks)
    everything = frozenset(range(fn.register_count))
    preds: dict[str, list[str]] = {l: [] for l in labels}
    for label, instrs in fn.blocks.items():
        if instrs:
            for t in _successors(instrs[-1]):
                if t in preds:
                    preds[t].append(label)
    entry = labels[0]
    out = {l: everything for l in labels}

    def transfer(label: str, defined: frozenset) -> frozenset:
        d = set(defined)
        for ins in fn.blocks[label]:
            if ins.dest is not None:
                d.add(ins.dest)
        return frozenset(d)

    params = frozenset(range(fn.arity))

    def _block_in(label: str) -> frozenset:
        inn = params if label == entry else everything
        for q in preds[label]:
            inn = inn & out[q]
        return inn

    changed = True
    while changed:
        changed = False
        for label in labels:
            inn = _block_in(label)
            new = transfer(label, inn)
            if new != out[label]:
                out[label] = new
                changed = True

    diags = []
    for label in labels:
        defined = set(_block_in(label))
        for i, ins in enumerate(fn.blocks[label]):
            for a in ins.args:
                r = operand_register(a)
                if r is not None and r not in defined:
                    diags.append(Diagnostic(fn.name, label, i, f"register r{r} used before definition", r))
            if ins.dest is not None:
                defined.add(ins.dest)
    return diags

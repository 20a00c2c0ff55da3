"""Seeded random program/suite generation, plus the canonical foo/test_foo example."""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from mutaccel.harness import SuiteError, TestCase, format_suite, reference_run
from mutaccel.ir import Program, parse_instruction, parse_program, validate
from mutaccel.mutgen import MutationTable, generate_mutants, table_from_variants

# a = a + 1 once, then two loop iterations of a = a / 2; res += time_consuming(a)
FOO_SOURCE = """\
memory 0
entry main

func main/1 {
entry:
  r1 = call foo r0
  print r1
  ret 0
}

func foo/1 {
entry:
  r0 = add r0 1            # a = a + 1        M1: a << 1
  r1 = const 0             # i
  r2 = const 0             # res
  br head
head:
  r3 = lt r1 2
  br_cond r3 body done
body:
  r0 = div r0 2            # a = a / 2        M2: a + 2, M3: a * 2
  r4 = call time_consuming r0
  r2 = add r2 r4
  r1 = add r1 1
  br head
done:
  ret r2
}

func time_consuming/1 {
entry:
  r1 = const 0
  r2 = const 0
  br loop
loop:
  r3 = lt r2 50
  br_cond r3 step out
step:
  r4 = mul r0 r2
  r1 = add r1 r4
  r2 = add r2 1
  br loop
out:
  ret r1
}
"""

FOO_SUITE = "test test_foo 1\n"


def foo_program() -> Program:
    return parse_program(FOO_SOURCE)


def foo_locations(p: Program) -> tuple[int, int]:
    """Location ids of ``a = a + 1`` and ``a = a / 2`` in foo."""
    inc = div = None
    for loc in p.locations:
        if loc.function != "foo":
            continue
        text = str(p.instruction_at(loc))
        if text == "r0 = add r0 1":
            inc = loc.id
        elif text == "r0 = div r0 2":
            div = loc.id
    return inc, div


def foo_table(p: Program | None = None) -> MutationTable:
    """M1 (a << 1), M2 (a + 2), M3 (a * 2) as mutant ids 0, 1, 2."""
    p = p or foo_program()
    inc, div = foo_locations(p)
    return table_from_variants(
        p,
        {
            inc: [parse_instruction("r0 = shl r0 1")],
            div: [parse_instruction("r0 = add r0 2"), parse_instruction("r0 = mul r0 2")],
        },
    )


# ---------------------------------------------------------------- random programs


@dataclass
class GenParams:
    size: int = 60  # target instruction count per program (hard cap 200)
    helpers: int = 2
    tests: int = 3
    memory: int = 16
    equivalent_bias: bool = False  # zero-heavy data so many mutants match the original


class _FnBuilder:
    def __init__(self, rng: random.Random, name: str, arity: int, callees: list, params: GenParams,
                 budget: int, io: bool = False):
        self.rng = rng
        self.name = name
        self.arity = arity
        self.callees = callees  # (name, arity)
        self.params = params
        self.budget = budget
        self.io = io
        self.blocks: list[tuple[str, list[str]]] = [("entry", [])]
        self.defined = set(range(arity))
        self.protected: set[int] = set()
        self.next_reg = arity
        self.n_labels = 0
        self.count = 0
        self.handle = None

    # -- plumbing

    def emit(self, text: str) -> None:
        self.blocks[-1][1].append(text)
        self.count += 1

    def label(self, prefix: str) -> str:
        self.n_labels += 1
        return f"{prefix}{self.n_labels}"

    def start_block(self, label: str) -> None:
        self.blocks.append((label, []))

    def fresh(self) -> int:
        r = self.next_reg
        self.next_reg += 1
        return r

    def dest(self) -> int:
        writable = sorted(self.defined - self.protected - set(range(self.arity)))
        if writable and self.rng.random() < 0.35:
            return self.rng.choice(writable)
        return self.fresh()

    def define(self, r: int) -> None:
        self.defined.add(r)

    def reg(self) -> int:
        return self.rng.choice(sorted(self.defined))

    def literal(self) -> int:
        if self.params.equivalent_bias:
            return self.rng.choice([0, 0, 0, 1])
        return self.rng.choice([0, 1, 2, 3, 5, 7, -1, -3, 10, 100])

    def operand(self) -> str:
        if self.defined and self.rng.random() < 0.75:
            return f"r{self.reg()}"
        return str(self.literal())

    def ensure_value(self) -> None:
        if not self.defined:
            r = self.fresh()
            self.emit(f"r{r} = const {self.literal()}")
            self.define(r)

    # -- statements

    def binop(self) -> None:
        self.ensure_value()
        rng = self.rng
        if self.params.equivalent_bias:
            op = rng.choice(["mul", "mul", "and", "and", "add", "lt", "eq"])
        else:
            op = rng.choice(["add", "add", "sub", "mul", "div", "rem", "and", "or", "xor",
                             "shl", "lshr", "ashr", "eq", "ne", "lt", "le", "gt", "ge"])
        a = self.operand()
        if op in ("div", "rem"):
            b = self.operand()
            if b.startswith("r"):
                t = self.fresh()
                self.emit(f"r{t} = or {b} 1")
                self.define(t)
                b = f"r{t}"
            elif int(b) in (0, -1):
                b = "3"
        elif op in ("shl", "lshr", "ashr"):
            if rng.random() < 0.5:
                b = str(rng.randint(0, 8))
            else:
                t = self.fresh()
                self.emit(f"r{t} = and r{self.reg()} 7")
                self.define(t)
                b = f"r{t}"
        elif self.params.equivalent_bias and op in ("mul", "and") and rng.random() < 0.8:
            b = "0"  # absorbing operand: most mutations of ``a`` leave the result unchanged
        else:
            b = self.operand()
        d = self.dest()
        self.emit(f"r{d} = {op} {a} {b}")
        self.define(d)

    def const(self) -> None:
        d = self.dest()
        self.emit(f"r{d} = const {self.literal()}")
        self.define(d)

    def address(self) -> str:
        if self.defined and self.rng.random() < 0.6:
            t = self.fresh()
            self.emit(f"r{t} = and r{self.reg()} {self.params.memory - 1}")
            self.define(t)
            return f"r{t}"
        return str(self.rng.randrange(self.params.memory))

    def load(self) -> None:
        addr = self.address()
        d = self.dest()
        self.emit(f"r{d} = load {addr}")
        self.define(d)

    def store(self) -> None:
        self.ensure_value()
        addr = self.address()
        self.emit(f"store {addr} {self.operand()}")

    def print_(self) -> None:
        self.ensure_value()
        self.emit(f"print r{self.reg()}")

    def call(self) -> None:
        if not self.callees:
            return self.binop()
        self.ensure_value()
        name, arity = self.rng.choice(self.callees)
        args = " ".join(self.operand() for _ in range(arity))
        d = self.dest()
        self.emit(f"r{d} = call {name} {args}".rstrip())
        self.define(d)

    def file_io(self) -> None:
        if self.handle is None:
            return self.binop()
        self.ensure_value()
        if self.rng.random() < 0.5:
            d = self.dest()
            self.emit(f"r{d} = call fread r{self.handle}")
            self.define(d)
        else:
            self.emit(f"call fwrite r{self.handle} r{self.reg()}")

    def statement(self) -> None:
        rng = self.rng
        roll = rng.random()
        if roll < 0.45:
            self.binop()
        elif roll < 0.52:
            self.const()
        elif roll < 0.62:
            self.load()
        elif roll < 0.72:
            self.store()
        elif roll < 0.80:
            self.print_()
        elif roll < 0.90:
            self.call()
        else:
            self.file_io()

    def segment(self, n: int) -> None:
        for _ in range(n):
            self.statement()

    def loop(self) -> None:
        rng = self.rng
        c = self.fresh()
        self.emit(f"r{c} = const 0")
        self.define(c)
        self.protected.add(c)
        head, body, done = self.label("head"), self.label("body"), self.label("done")
        self.emit(f"br {head}")
        self.start_block(head)
        t = self.fresh()
        self.emit(f"r{t} = lt r{c} {rng.randint(2, 4)}")
        self.emit(f"br_cond r{t} {body} {done}")
        before = set(self.defined) | {t}
        self.start_block(body)
        self.defined.add(t)
        self.segment(rng.randint(2, 4))
        self.emit(f"r{c} = add r{c} 1")
        self.emit(f"br {head}")
        self.start_block(done)
        self.defined = before
        self.protected.discard(c)

    def diamond(self) -> None:
        self.ensure_value()
        rng = self.rng
        t = self.fresh()
        self.emit(f"r{t} = {rng.choice(['lt', 'gt', 'eq', 'ne', 'le', 'ge'])} r{self.reg()} {self.operand()}")
        self.define(t)
        yes, no, join = self.label("then"), self.label("else"), self.label("join")
        self.emit(f"br_cond r{t} {yes} {no}")
        base = set(self.defined)
        self.start_block(yes)
        self.segment(rng.randint(1, 3))
        after_yes = set(self.defined)
        self.emit(f"br {join}")
        self.defined = set(base)
        self.start_block(no)
        self.segment(rng.randint(1, 3))
        after_no = set(self.defined)
        self.emit(f"br {join}")
        self.start_block(join)
        self.defined = after_yes & after_no

    def build(self) -> str:
        rng = self.rng
        if self.io:
            h = self.fresh()
            self.emit(f"r{h} = call fopen 0")
            self.define(h)
            self.handle = h
            self.protected.add(h)
        self.ensure_value()
        if self.params.equivalent_bias and self.name == "main":
            for name, arity in self.callees:  # reach every helper at least once
                args = " ".join(self.operand() for _ in range(arity))
                d = self.dest()
                self.emit(f"r{d} = call {name} {args}")
                self.define(d)
        while self.count < self.budget - 8:
            roll = rng.random()
            if roll < 0.2:
                self.loop()
            elif roll < 0.4 and not self.params.equivalent_bias:
                self.diamond()  # skipped when biased: an untaken arm leaves its mutants uncovered
            else:
                self.segment(rng.randint(2, 5))
        if self.name == "main":
            self.print_()
            t = self.fresh()
            self.emit(f"r{t} = and r{self.reg()} 3")
            self.emit(f"ret r{t}")
        else:
            self.emit(f"ret r{self.reg()}")
        out = [f"func {self.name}/{self.arity} {{"]
        for label, lines in self.blocks:
            out.append(f"{label}:")
            out.extend(f"  {line}" for line in lines)
        out.append("}")
        return "\n".join(out)


@dataclass
class Case:
    name: str
    source: str
    tests: list  # TestCase
    fixtures: dict  # (test name, file id) -> bytes

    def program(self) -> Program:
        return parse_program(self.source)


def _candidate(rng: random.Random, name: str, params: GenParams) -> Case:
    n_help = params.helpers
    helpers = [(f"h{i}", rng.randint(1, 2)) for i in range(1, n_help + 1)]
    main_size = max(16, params.size // 2)
    help_size = max(10, (params.size - main_size) // max(n_help, 1))
    io = rng.random() < 0.5
    parts = [f"memory {params.memory}", "entry main", ""]
    parts.append(_FnBuilder(rng, "main", 2, helpers, params, main_size, io=io).build())
    for i, (hname, arity) in enumerate(helpers):
        parts.append("")
        parts.append(_FnBuilder(rng, hname, arity, helpers[i + 1 :], params, help_size).build())
    source = "\n".join(parts) + "\n"
    tests, fixtures = [], {}
    for k in range(params.tests):
        if params.equivalent_bias:
            args = (rng.choice([0, 0, 1]), rng.choice([0, 0, 1]))
        else:
            args = (rng.randint(-5, 20), rng.randint(-5, 20))
        t = TestCase(f"t{k}", args)
        if io:
            data = bytes(rng.randrange(256) for _ in range(rng.randint(0, 80)))
            t.files[0] = data
            fixtures[(t.name, 0)] = data
        tests.append(t)
    return Case(name, source, tests, fixtures)


def generate_case(seed: int, params: GenParams | None = None, name: str | None = None,
                  min_mutants: int = 50, max_instructions: int = 200) -> Case:
    """Deterministic in ``seed``.  Retries until the program validates, fits the size
    bounds, and every test's reference run exits normally."""
    params = params or GenParams()
    rng = random.Random(seed)
    for _ in range(1000):
        case = _candidate(rng, name or f"prog{seed}", params)
        p = parse_program(case.source, check=False)
        if validate(p):
            continue
        n_instr = sum(len(b) for fn in p.functions.values() for b in fn.blocks.values())
        if n_instr > max_instructions or generate_mutants(p).size < min_mutants:
            continue
        try:
            for t in case.tests:
                reference_run(p, t, cap=200_000)
        except SuiteError:
            continue
        return case
    raise RuntimeError(f"could not generate a valid program for seed {seed}")


def generate_corpus(seed: int, count: int, params: GenParams | None = None) -> list[Case]:
    master = random.Random(seed)
    return [generate_case(master.randrange(1 << 30), params, name=f"prog{i:03d}") for i in range(count)]


def write_corpus(cases: list[Case], out_dir: Path | str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for case in cases:
        paths = {}
        for (tname, fid), data in sorted(case.fixtures.items()):
            rel = f"{case.name}_{tname}_f{fid}.bin"
            (out / rel).write_bytes(data)
            paths[(tname, fid)] = rel
            written.append(out / rel)
        (out / f"{case.name}.ir").write_text(case.source)
        (out / f"{case.name}.suite").write_text(format_suite(case.tests, paths))
        written += [out / f"{case.name}.ir", out / f"{case.name}.suite"]
    return written

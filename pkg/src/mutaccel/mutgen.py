"""Mutation operators and the mutation table (location -> variants)."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, replace

from mutaccel.ir import (
    ARITH_OPS,
    ICMP_OPS,
    LOGIC_OPS,
    SHIFT_OPS,
    Imm,
    Instruction,
    IRError,
    Location,
    Program,
    Reg,
    Unary,
    format_instruction,
    parse_instruction,
    wrap,
)

OPERATORS = ("AOR", "LOR", "ROR", "SOR", "LVR", "UOI", "STDS", "STDC", "ROV", "ABV")
CUSTOM = "CUSTOM"  # hand-written variants loaded from a table file

TABLE_MAGIC = "mutaccel-table"
TABLE_VERSION = 1


class TableError(IRError):
    pass


@dataclass(frozen=True)
class Variant:
    """A code block at a location.  ``owner`` is None for the original variant."""

    code: Instruction
    location: int
    owner: int | None = None
    operator: str | None = None

    @property
    def kind(self) -> str:
        return "original" if self.owner is None else "mutant"


@dataclass(frozen=True)
class MutationTable:
    locations: tuple  # Location per location id
    originals: tuple  # original Variant per location id
    mutants: tuple  # per location id: tuple of mutant Variants, owners ascending

    @property
    def size(self) -> int:
        """Total mutant count M."""
        return sum(len(v) for v in self.mutants)

    @property
    def u(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.mutants)

    @property
    def max_u(self) -> int:
        return max(self.u, default=0)

    def mutant(self, mid: int) -> Variant:
        return self._by_id[mid]

    @property
    def _by_id(self) -> dict[int, Variant]:
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {v.owner: v for vs in self.mutants for v in vs}
            object.__setattr__(self, "_by_id_cache", cache)
        return cache

    def operator_counts(self) -> dict[str, int]:
        counts = Counter(v.operator for vs in self.mutants for v in vs)
        return {op: counts[op] for op in OPERATORS + (CUSTOM,) if counts[op]}

    def restrict(self, keep) -> MutationTable:
        """Table holding only the mutants in ``keep``, renumbered densely in id order."""
        keep = set(keep)
        new_mutants = []
        next_id = 0
        for vs in self.mutants:
            kept = []
            for v in vs:
                if v.owner in keep:
                    kept.append(replace(v, owner=next_id))
                    next_id += 1
            new_mutants.append(tuple(kept))
        return MutationTable(self.locations, self.originals, tuple(new_mutants))


def variants_at(table: MutationTable, loc: int):
    """p(l) as a fresh VariantSet (original included, all mutant variants)."""
    from mutaccel.engines import VariantSet

    if not 0 <= loc < len(table.locations):
        raise IndexError(f"location {loc} out of range 0..{len(table.locations) - 1}")
    return VariantSet(table.originals[loc], True, list(table.mutants[loc]))


# ---------------------------------------------------------------- operators


def _with_arg(ins: Instruction, i: int, op) -> Instruction:
    args = list(ins.args)
    args[i] = op
    return replace(ins, args=tuple(args))


def _replace_opcode(ins: Instruction, family: tuple) -> list[Instruction]:
    if ins.op not in family:
        return []
    return [replace(ins, op=o) for o in family if o != ins.op]


def _lvr(ins: Instruction) -> list[Instruction]:
    out = []
    for i, a in enumerate(ins.args):
        if isinstance(a, Imm):
            seen = {a.value}
            for v in (wrap(a.value + 1), wrap(a.value - 1), 0):
                if v not in seen:
                    seen.add(v)
                    out.append(_with_arg(ins, i, Imm(v)))
    return out


def _uoi(ins: Instruction) -> list[Instruction]:
    out = []
    for i, a in enumerate(ins.args[:2]):
        if isinstance(a, Reg):
            out.append(_with_arg(ins, i, Unary("inc", a)))
            out.append(_with_arg(ins, i, Unary("dec", a)))
    return out


def _stds(ins: Instruction) -> list[Instruction]:
    return [Instruction("nop")] if ins.op == "store" else []


def _stdc(ins: Instruction) -> list[Instruction]:
    if ins.op in ("call", "print"):
        return [Instruction("nop", dest=ins.dest)]
    return []


def _rov(ins: Instruction) -> list[Instruction]:
    if ins.op != "call":
        return []
    out = []
    for i in range(len(ins.args) - 1):
        a, b = ins.args[i], ins.args[i + 1]
        if a != b:
            args = list(ins.args)
            args[i], args[i + 1] = b, a
            out.append(replace(ins, args=tuple(args)))
    return out


def _abv(ins: Instruction) -> list[Instruction]:
    if ins.op != "call":
        return []
    out = []
    for i, a in enumerate(ins.args):
        if isinstance(a, Reg):
            out.append(_with_arg(ins, i, Unary("abs", a)))
        elif isinstance(a, Imm) and a.value < 0:
            out.append(_with_arg(ins, i, Imm(wrap(-a.value))))
    return out


_OPERATOR_FUNCS = {
    "AOR": lambda ins: _replace_opcode(ins, ARITH_OPS),
    "LOR": lambda ins: _replace_opcode(ins, LOGIC_OPS),
    "ROR": lambda ins: _replace_opcode(ins, ICMP_OPS),
    "SOR": lambda ins: _replace_opcode(ins, SHIFT_OPS),
    "LVR": _lvr,
    "UOI": _uoi,
    "STDS": _stds,
    "STDC": _stdc,
    "ROV": _rov,
    "ABV": _abv,
}


def mutate_instruction(ins: Instruction, operators=OPERATORS) -> list[tuple[str, Instruction]]:
    """All (operator, mutated code) pairs for one instruction, in canonical order."""
    chosen = set(operators)
    unknown = chosen - set(OPERATORS)
    if unknown:
        raise ValueError(f"unknown operator(s): {', '.join(sorted(unknown))}")
    return [(name, code) for name in OPERATORS if name in chosen for code in _OPERATOR_FUNCS[name](ins)]


def generate_mutants(p: Program, operators=OPERATORS) -> MutationTable:
    originals, mutants = [], []
    next_id = 0
    for loc in p.locations:
        ins = p.instruction_at(loc)
        originals.append(Variant(ins, loc.id))
        vs = []
        for name, code in mutate_instruction(ins, operators):
            vs.append(Variant(code, loc.id, next_id, name))
            next_id += 1
        mutants.append(tuple(vs))
    return MutationTable(p.locations, tuple(originals), tuple(mutants))


def _check_shape(orig: Instruction, code: Instruction, where: str) -> None:
    # a block must still end in exactly one terminator after substitution
    if orig.is_terminator != code.is_terminator:
        kind = "terminator" if orig.is_terminator else "non-terminator"
        raise TableError(f"{where}: replacement for a {kind} must also be a {kind}")


def table_from_variants(p: Program, chosen: dict[int, list[Instruction]]) -> MutationTable:
    """Build a table from hand-chosen mutant code per location id (operator tag CUSTOM)."""
    originals, mutants = [], []
    next_id = 0
    for loc in p.locations:
        originals.append(Variant(p.instruction_at(loc), loc.id))
        vs = []
        for code in chosen.get(loc.id, ()):
            _check_shape(originals[-1].code, code, f"location {loc.id}")
            vs.append(Variant(code, loc.id, next_id, CUSTOM))
            next_id += 1
        mutants.append(tuple(vs))
    extra = set(chosen) - {l.id for l in p.locations}
    if extra:
        raise TableError(f"reference to nonexistent location(s) {sorted(extra)}")
    return MutationTable(p.locations, tuple(originals), tuple(mutants))


def check_table(table: MutationTable, p: Program) -> None:
    """Raise TableError unless ``table`` was generated for a program with ``p``'s locations."""
    if tuple(table.locations) != tuple(p.locations):
        raise TableError("table locations do not match the program")
    for loc, orig in zip(p.locations, table.originals):
        if orig.code != p.instruction_at(loc):
            raise TableError(f"location {loc.id}: original instruction differs from program")


# ---------------------------------------------------------------- serialization
#
#   mutaccel-table 1
#   mutants M
#   locations L
#   loc <id> <function> <block> <index> | <original instruction>
#   mut <id> <location> <operator> | <mutant instruction>
#   checksum <sha256 hex of every preceding byte>


def save_table(t: MutationTable) -> bytes:
    lines = [f"{TABLE_MAGIC} {TABLE_VERSION}", f"mutants {t.size}", f"locations {len(t.locations)}"]
    for loc, orig in zip(t.locations, t.originals):
        lines.append(f"loc {loc.id} {loc.function} {loc.block} {loc.index} | {format_instruction(orig.code)}")
    for vs in t.mutants:
        for v in vs:
            lines.append(f"mut {v.owner} {v.location} {v.operator} | {format_instruction(v.code)}")
    body = ("\n".join(lines) + "\n").encode()
    return body + f"checksum {hashlib.sha256(body).hexdigest()}\n".encode()


def load_table(data: bytes) -> MutationTable:
    text = data.decode("utf-8", errors="replace")
    lines = text.split("\n")
    if not lines or not lines[0].startswith(TABLE_MAGIC + " "):
        raise TableError("not a mutation table file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise TableError("malformed version line") from None
    if version != TABLE_VERSION:
        raise TableError(f"version mismatch: file has {version}, expected {TABLE_VERSION}")
    idx = data.rfind(b"checksum ")
    if idx < 0 or not data.endswith(b"\n"):
        raise TableError("checksum mismatch: file truncated")
    body, trailer = data[:idx], data[idx:].decode().split()
    if len(trailer) != 2 or trailer[1] != hashlib.sha256(body).hexdigest():
        raise TableError("checksum mismatch")

    rows = body.decode().splitlines()
    try:
        n_mut = int(rows[1].split()[1])
        n_loc = int(rows[2].split()[1])
    except (IndexError, ValueError):
        raise TableError("malformed header") from None
    locations, originals = [], []
    per_loc: list[list[Variant]] = [[] for _ in range(n_loc)]
    seen_ids = set()
    for row in rows[3:]:
        head, sep, code_text = row.partition(" | ")
        if not sep:
            raise TableError(f"malformed row: {row!r}")
        parts = head.split()
        code = parse_instruction(code_text)
        if parts[0] == "loc":
            lid, fn, block, index = int(parts[1]), parts[2], parts[3], int(parts[4])
            if lid != len(locations):
                raise TableError(f"location ids not dense at {lid}")
            locations.append(Location(lid, fn, block, index))
            originals.append(Variant(code, lid))
        elif parts[0] == "mut":
            mid, lid, op = int(parts[1]), int(parts[2]), parts[3]
            if not 0 <= lid < n_loc or lid >= len(locations):
                raise TableError(f"mutant {mid} references nonexistent location {lid}")
            if op not in OPERATORS and op != CUSTOM:
                raise TableError(f"unknown operator tag {op!r}")
            if mid in seen_ids:
                raise TableError(f"duplicate mutant id {mid}")
            seen_ids.add(mid)
            _check_shape(originals[lid].code, code, f"mutant {mid}")
            per_loc[lid].append(Variant(code, lid, mid, op))
        else:
            raise TableError(f"unknown row kind {parts[0]!r}")
    if len(locations) != n_loc:
        raise TableError(f"header declares {n_loc} locations, found {len(locations)}")
    if seen_ids != set(range(n_mut)):
        raise TableError(f"header declares {n_mut} mutants, ids found do not form 0..{n_mut - 1}")
    mutants = tuple(tuple(sorted(vs, key=lambda v: v.owner)) for vs in per_loc)
    return MutationTable(tuple(locations), tuple(originals), mutants)


def summary(t: MutationTable) -> str:
    lines = [f"mutants: {t.size}", f"locations: {len(t.locations)}", f"max u: {t.max_u}"]
    mutated = [n for n in t.u if n]
    if mutated:
        lines.append(f"mean u (mutated locations): {sum(mutated) / len(mutated):.2f}")
    lines.append("mutants per operator:")
    for op, n in t.operator_counts().items():
        lines.append(f"  {op:5s} {n}")
    return "\n".join(lines)

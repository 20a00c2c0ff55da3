"""Standard (mutant schemata), split-stream, and AccMut mutation analysis.

All three engines share the interpreter in :mod:`mutaccel.runtime`.  A
"process" is a logical fork of the machine state; children run to completion
before their parent resumes, so at most one process is live at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mutaccel.ir import Program
from mutaccel.mutgen import MutationTable, Variant
from mutaccel.runtime import (
    MachineState,
    PageStore,
    apply,
    execute,
    fork_state,
    output_digest,
    try_variant,
)
from mutaccel.runtime.state import RUNNING

ENGINES = ("standard", "sse", "accmut")
ABORTED_DEPTH = "aborted-depth"
DEFAULT_FORK_DEPTH = 64


class InvariantViolation(RuntimeError):
    """Internal consistency failure (e.g. a mutant saved twice)."""


class OpCounter:
    """Counts elementary set/list operations performed by the filters."""

    __slots__ = ("ops",)

    def __init__(self):
        self.ops = 0


# ---------------------------------------------------------------- mutant id sets


class BitVectorIds:
    """All-mutant set of the main process: one byte per id plus a cardinality counter."""

    __slots__ = ("bits", "count")

    def __init__(self, m: int, full: bool = True):
        self.bits = bytearray(b"\x01" * m if full else m)
        self.count = m if full else 0

    def __contains__(self, i: int) -> bool:
        try:
            return i >= 0 and self.bits[i] == 1
        except IndexError:
            return False

    def __len__(self) -> int:
        return self.count

    def add(self, i: int) -> None:
        if not self.bits[i]:
            self.bits[i] = 1
            self.count += 1

    def remove(self, i: int) -> None:
        if self.bits[i]:
            self.bits[i] = 0
            self.count -= 1

    def __iter__(self):
        return (i for i, b in enumerate(self.bits) if b)


class SmallListIds(list):
    """Bounded id list used by forked processes (length <= max u)."""

    __slots__ = ("bound",)

    def __init__(self, items=(), bound: int | None = None):
        super().__init__()
        self.bound = bound
        for i in items:
            self.add(i)

    def add(self, i: int) -> None:
        if i in self:
            return
        if self.bound is not None and len(self) >= self.bound:
            raise InvariantViolation(f"small id list exceeds bound {self.bound}")
        self.append(i)

    def remove(self, i: int) -> None:
        if i in self:
            super().remove(i)

    def __iter__(self):
        return iter(list.copy(self))


MutantIdSet = BitVectorIds | SmallListIds


# ---------------------------------------------------------------- variant sets and filters


@dataclass(slots=True)
class VariantSet:
    ori_variant: Variant
    ori_included: bool
    mut_variants: list

    def variants(self) -> list[Variant]:
        head = [self.ori_variant] if self.ori_included else []
        return head + list(self.mut_variants)

    def __len__(self) -> int:
        return len(self.mut_variants) + (1 if self.ori_included else 0)


def filter_variants(V: VariantSet, I, counter: OpCounter | None = None) -> None:
    """Keep the variants enabled for some id in I.  Cost is O(u), independent of M."""
    muts = V.mut_variants
    kept = [v for v in muts if v.owner in I]
    V.mut_variants = kept
    V.ori_included = len(kept) < len(I)
    if counter is not None:
        # per mutant variant: iteration + membership; per kept: append; then size compare
        counter.ops += 2 * len(muts) + len(kept) + 2


def filter_mutants(I, V: VariantSet, all_mutants, counter: OpCounter | None = None, bound: int | None = None):
    """Narrow I to the ids some variant of V is enabled for; returns the (possibly new) set.

    ``all_mutants`` is the location's full mutant-variant list.
    """
    ops = 0
    if V.ori_included:
        keep = {v.owner for v in V.mut_variants}
        ops += len(V.mut_variants)
        for v in all_mutants:
            ops += 2
            if v.owner not in keep:
                I.remove(v.owner)
                ops += 1
        result = I
    else:
        result = SmallListIds(bound=bound)
        ops += 1
        for v in V.mut_variants:
            result.add(v.owner)
            ops += 2
    if counter is not None:
        counter.ops += ops
    return result


def _only_variant(V: VariantSet) -> Variant | None:
    muts = V.mut_variants
    if V.ori_included:
        return V.ori_variant if not muts else None
    return muts[0] if len(muts) == 1 else None


# ---------------------------------------------------------------- clustering


@dataclass
class ChangeCluster:
    change: object
    members: list = field(default_factory=list)

    @property
    def has_original(self) -> bool:
        return any(v.owner is None for v in self.members)

    @property
    def min_owner(self) -> int:
        return min((-1 if v.owner is None else v.owner) for v in self.members)


def cluster_changes(X) -> list[ChangeCluster]:
    """Partition (variant, change) pairs by structural change equality.

    Classes are ordered by smallest owner id, the original variant counting as -1,
    so the original's class (if present) comes first.
    """
    classes: dict = {}
    for v, x in X:
        c = classes.get(x)
        if c is None:
            c = classes[x] = ChangeCluster(x)
        c.members.append(v)
    return sorted(classes.values(), key=lambda c: c.min_owner)


# ---------------------------------------------------------------- records and metrics


@dataclass(frozen=True)
class Record:
    status: str
    exit_code: int | None
    output_digest: str
    steps: int
    detail: str | None = None  # trap reason

    @classmethod
    def of(cls, s: MachineState) -> Record:
        return cls(s.status, s.exit_code, output_digest(s.output.getvalue()), s.steps, s.trap_reason)


@dataclass
class RunMetrics:
    engine: str
    forks: int = 0
    processes: int = 0
    forked_ids: int = 0  # ids carried into child processes, summed over forks
    variant_trials: int = 0
    instructions: int = 0  # executed instructions (execute/apply), all processes
    overhead: int = 0  # filter + clustering elementary operations
    page_copies: int = 0
    aborted: int = 0
    max_depth: int = 0

    def counters(self) -> dict[str, int]:
        return {
            "forks": self.forks, "processes": self.processes, "forked_ids": self.forked_ids,
            "variant_trials": self.variant_trials, "instructions": self.instructions,
            "overhead": self.overhead, "page_copies": self.page_copies, "aborted": self.aborted,
            "max_depth": self.max_depth,
        }


@dataclass
class ForkEvent:
    parent: int
    child: int
    depth: int
    location: int
    step: int
    ids: tuple


@dataclass
class ProcessContext:
    state: MachineState
    ids: object
    pid: int
    depth: int = 0

    @property
    def is_main(self) -> bool:
        return isinstance(self.ids, BitVectorIds)


def save(ctx: ProcessContext, mid: int, store: dict, record: Record | None = None) -> None:
    if mid in store:
        raise InvariantViolation(f"mutant {mid} saved twice (pid {ctx.pid})")
    store[mid] = record if record is not None else Record.of(ctx.state)


# ---------------------------------------------------------------- engine


@dataclass
class TestInput:
    __test__ = False
    args: tuple = ()
    files: dict = field(default_factory=dict)
    budget: int | None = None


class Analysis:
    """One (program, table, test) run under one strategy."""

    def __init__(self, program: Program, table: MutationTable, test: TestInput,
                 engine: str, fork_depth: int = DEFAULT_FORK_DEPTH, trace: bool = False):
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}; choose from {', '.join(ENGINES)}")
        self.program = program
        self.table = table
        self.test = test
        self.engine = engine
        self.fork_depth = fork_depth
        self.metrics = RunMetrics(engine)
        self.counter = OpCounter()
        self.store = PageStore()
        self.records: dict[int, Record] = {}
        self.trace: list[ForkEvent] | None = [] if trace else None
        self.completion: list[int] = []  # pids in termination order
        self.main_record: Record | None = None
        self._next_pid = 0

    def initial_state(self) -> MachineState:
        return MachineState.initial(self.program, self.test.args, self.test.files, self.test.budget, self.store)

    def run(self) -> dict[int, Record]:
        if self.engine == "standard":
            self._run_standard()
        else:
            self._run_split(self.proceed_sse if self.engine == "sse" else self.proceed_accmut)
        m = self.metrics
        m.overhead += self.counter.ops
        m.page_copies = self.store.copies
        if len(self.records) != self.table.size:
            raise InvariantViolation(f"{len(self.records)} records for {self.table.size} mutants")
        return self.records

    # -- mutant schemata: one full execution per mutant

    def _run_standard(self) -> None:
        table = self.table
        base = self.initial_state()
        for mid in range(table.size):
            # filter_variants(p(phi(s)), {mid}) selects the mutant's code at its own
            # location and the original everywhere else.
            mv = table.mutant(mid)
            s = fork_state(base)
            steps = s.steps
            while s.status == RUNNING:
                f = s.frames[-1]
                if f.locs[f.index] == mv.location:
                    execute(s, mv.code)
                else:
                    execute(s, f.code[f.index])
            self.metrics.instructions += s.steps - steps
            self.metrics.processes += 1
            save(ProcessContext(s, None, mid), mid, self.records)
            s.release()
        base.release()

    # -- split-stream main loop, shared with AccMut

    def _new_pid(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    def _run_split(self, proceed) -> None:
        self._proceed = proceed
        if self.table.size == 0:
            return
        # The main process also carries a reference id (M) that no mutant variant owns,
        # so it always keeps the original variant and finishes as the reference run.
        ids = BitVectorIds(self.table.size + 1)
        ctx = ProcessContext(self.initial_state(), ids, self._new_pid())
        self.metrics.processes += 1
        self.run_process(ctx)

    def run_process(self, ctx: ProcessContext) -> None:
        s = ctx.state
        table = self.table
        proceed = self._proceed
        start = s.steps
        mutants = table.mutants
        while s.status == RUNNING:
            f = s.frames[-1]
            loc = f.locs[f.index]
            if loc is None or not mutants[loc]:
                execute(s, f.code[f.index])
            else:
                proceed(VariantSet(table.originals[loc], True, list(mutants[loc])), ctx)
        self.metrics.instructions += s.steps - start
        reference = table.size
        for mid in ctx.ids:
            if mid == reference:
                self.main_record = Record.of(s)
            else:
                save(ctx, mid, self.records)
        self.completion.append(ctx.pid)
        s.release()

    def schedule_fork(self, parent: ProcessContext, ids, init) -> None:
        """Fork a child for ``ids``, run ``init`` on its state, and run it to completion."""
        m = self.metrics
        depth = parent.depth + 1
        if depth > self.fork_depth:
            rec = Record(ABORTED_DEPTH, None, output_digest(b""), parent.state.steps)
            for mid in ids:
                save(parent, mid, self.records, rec)
            m.aborted += len(ids)
            return
        child = ProcessContext(fork_state(parent.state), ids, self._new_pid(), depth)
        m.forks += 1
        m.processes += 1
        m.forked_ids += len(ids)
        m.max_depth = max(m.max_depth, depth)
        if self.trace is not None:
            f = parent.state.frames[-1]
            self.trace.append(
                ForkEvent(parent.pid, child.pid, depth, f.locs[f.index], parent.state.steps, tuple(sorted(ids)))
            )
        init(child.state)
        self.run_process(child)

    def proceed_sse(self, V: VariantSet, ctx: ProcessContext) -> None:
        loc = V.ori_variant.location
        filter_variants(V, ctx.ids, self.counter)
        only = _only_variant(V)
        if only is not None:
            execute(ctx.state, only.code)
            return
        variants = V.variants()
        keep = variants[0]  # the original when included, else the smallest owner
        all_mut = self.table.mutants[loc]
        for v in variants[1:]:
            single = VariantSet(V.ori_variant, False, [v])
            ids = filter_mutants(ctx.ids, single, all_mut, self.counter, self.table.max_u)
            self.schedule_fork(ctx, ids, lambda s, code=v.code: execute(s, code))
        retained = VariantSet(V.ori_variant, keep.owner is None, [] if keep.owner is None else [keep])
        ctx.ids = filter_mutants(ctx.ids, retained, all_mut, self.counter, self.table.max_u)
        execute(ctx.state, keep.code)

    def proceed_accmut(self, V: VariantSet, ctx: ProcessContext) -> None:
        loc = V.ori_variant.location
        filter_variants(V, ctx.ids, self.counter)
        only = _only_variant(V)
        if only is not None:
            execute(ctx.state, only.code)
            return
        variants = V.variants()
        s = ctx.state
        X = [(v, try_variant(s, v.code)) for v in variants]
        self.metrics.variant_trials += len(X)
        classes = cluster_changes(X)
        self.counter.ops += len(X)
        current, others = classes[0], classes[1:]
        all_mut = self.table.mutants[loc]
        for cls in others:
            sub = VariantSet(V.ori_variant, False, list(cls.members))
            ids = filter_mutants(ctx.ids, sub, all_mut, self.counter, self.table.max_u)
            self.schedule_fork(ctx, ids, lambda st, x=cls.change: apply(x, st))
        cur = VariantSet(
            V.ori_variant, current.has_original, [v for v in current.members if v.owner is not None]
        )
        ctx.ids = filter_mutants(ctx.ids, cur, all_mut, self.counter, self.table.max_u)
        apply(current.change, s)


def run_engine(program: Program, table: MutationTable, test: TestInput, engine: str,
               fork_depth: int = DEFAULT_FORK_DEPTH, trace: bool = False) -> Analysis:
    a = Analysis(program, table, test, engine, fork_depth, trace)
    a.run()
    return a


def run_standard(program, table, test: TestInput, **kw) -> dict[int, Record]:
    return run_engine(program, table, test, "standard", **kw).records


def run_split_stream(program, table, test: TestInput, **kw) -> dict[int, Record]:
    return run_engine(program, table, test, "sse", **kw).records


def run_accmut(program, table, test: TestInput, **kw) -> dict[int, Record]:
    return run_engine(program, table, test, "accmut", **kw).records

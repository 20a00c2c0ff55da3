"""Test-suite execution, kill matrices, and metrics reporting.

Suite file format (``#`` comments, shell-style quoting)::

    test small 1
    test big 40 2
      expect exit 0
      expect output "42\\n"
      file 3 fixtures/input.bin

Each ``test NAME ARGS...`` line starts a test; indented ``expect`` and
``file`` lines attach to the test above.  ``file ID PATH`` preloads the
simulated file ``ID`` with the bytes at ``PATH`` (relative to the suite file).
Explicit expectations are checked against the reference run; a test whose
reference run traps, times out, or misses its expectations is a suite error.
"""

from __future__ import annotations

import io
import shlex
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from mutaccel.engines import ABORTED_DEPTH, DEFAULT_FORK_DEPTH, Analysis, Record, TestInput
from mutaccel.ir import Program
from mutaccel.mutgen import MutationTable
from mutaccel.runtime import EXITED, TIMED_OUT, TRAPPED, MachineState, execute

VERDICTS = ("survived", "killed-output", "killed-exit", "killed-trap", "killed-timeout", ABORTED_DEPTH)
DEFAULT_BUDGET_FACTOR = 10
BUDGET_SLACK = 10_000
REFERENCE_STEP_CAP = 50_000_000


class SuiteError(Exception):
    pass


@dataclass
class TestCase:
    __test__ = False
    name: str
    args: tuple = ()
    files: dict = field(default_factory=dict)  # file id -> bytes
    expect_output: bytes | None = None
    expect_exit: int | None = None


def parse_suite(text: str, base_dir: Path | str = ".") -> list[TestCase]:
    base_dir = Path(base_dir)
    tests: list[TestCase] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        try:
            words = shlex.split(raw, comments=True)
        except ValueError as e:
            raise SuiteError(f"line {lineno}: {e}") from None
        if not words:
            continue
        kind = words[0]
        try:
            if kind == "test":
                if len(words) < 2:
                    raise SuiteError(f"line {lineno}: test needs a name")
                name = words[1]
                if any(t.name == name for t in tests):
                    raise SuiteError(f"line {lineno}: duplicate test name {name!r}")
                tests.append(TestCase(name, tuple(int(w) for w in words[2:])))
                continue
            if not tests:
                raise SuiteError(f"line {lineno}: {kind!r} before any test")
            t = tests[-1]
            if kind == "expect" and len(words) == 3 and words[1] == "exit":
                t.expect_exit = int(words[2])
            elif kind == "expect" and len(words) == 3 and words[1] == "output":
                t.expect_output = words[2].encode().decode("unicode_escape").encode("latin-1")
            elif kind == "file" and len(words) == 3:
                path = base_dir / words[2]
                try:
                    t.files[int(words[1])] = path.read_bytes()
                except OSError as e:
                    raise SuiteError(f"line {lineno}: cannot read fixture {path}: {e.strerror}") from None
            else:
                raise SuiteError(f"line {lineno}: cannot parse {raw.strip()!r}")
        except ValueError:
            raise SuiteError(f"line {lineno}: expected integer in {raw.strip()!r}") from None
    return tests


def load_suite(path: Path | str) -> list[TestCase]:
    path = Path(path)
    return parse_suite(path.read_text(), path.parent)


def format_suite(tests: list[TestCase], fixture_paths: dict | None = None) -> str:
    """Suite text for ``tests``; ``fixture_paths`` maps (test name, file id) -> relative path."""
    lines = []
    for t in tests:
        lines.append(" ".join(["test", t.name, *map(str, t.args)]))
        if t.expect_exit is not None:
            lines.append(f"  expect exit {t.expect_exit}")
        if t.expect_output is not None:
            esc = t.expect_output.decode("latin-1").encode("unicode_escape").decode()
            lines.append(f"  expect output {shlex.quote(esc)}")
        for fid in sorted(t.files):
            lines.append(f"  file {fid} {fixture_paths[(t.name, fid)]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- reference runs


@dataclass
class Reference:
    record: Record
    output: bytes


def reference_run(program: Program, test: TestCase, cap: int = REFERENCE_STEP_CAP) -> Reference:
    s = MachineState.initial(program, test.args, test.files, budget=cap)
    while s.status == "running":
        f = s.frames[-1]
        execute(s, f.code[f.index])
    rec = Record.of(s)
    out = s.output.getvalue()
    if s.status == TRAPPED:
        raise SuiteError(f"test {test.name}: reference run trapped ({s.trap_reason})")
    if s.status == TIMED_OUT:
        raise SuiteError(f"test {test.name}: reference run exceeded {cap} steps")
    if test.expect_exit is not None and s.exit_code != test.expect_exit:
        raise SuiteError(f"test {test.name}: reference exit {s.exit_code}, expected {test.expect_exit}")
    if test.expect_output is not None and out != test.expect_output:
        raise SuiteError(f"test {test.name}: reference output differs from expected")
    return Reference(rec, out)


def verdict(rec: Record, ref: Record) -> str:
    if rec.status == ABORTED_DEPTH:
        return ABORTED_DEPTH
    if rec.status == TRAPPED:
        return "killed-trap"
    if rec.status == TIMED_OUT:
        return "killed-timeout"
    if rec.status != EXITED:
        raise ValueError(f"unexpected final status {rec.status!r}")
    if rec.output_digest != ref.output_digest:
        return "killed-output"
    if rec.exit_code != ref.exit_code:
        return "killed-exit"
    return "survived"


# ---------------------------------------------------------------- kill matrix


@dataclass
class KillMatrix:
    mutants: int
    tests: list
    cells: dict = field(default_factory=dict)  # (mutant, test) -> verdict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("mutant_id,test,verdict\n")
        for mid in range(self.mutants):
            for t in self.tests:
                buf.write(f"{mid},{t},{self.cells[(mid, t)]}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> KillMatrix:
        lines = text.strip().splitlines()
        if not lines or lines[0] != "mutant_id,test,verdict":
            raise ValueError("not a kill matrix CSV")
        tests: list[str] = []
        cells = {}
        mutants = 0
        for row in lines[1:]:
            mid_s, test, v = row.split(",")
            mid = int(mid_s)
            if test not in tests:
                tests.append(test)
            cells[(mid, test)] = v
            mutants = max(mutants, mid + 1)
        return cls(mutants, tests, cells)

    def killed(self, mid: int) -> bool:
        return any(self.cells[(mid, t)].startswith("killed") for t in self.tests)

    def score(self) -> float:
        if not self.mutants:
            return 0.0
        return sum(self.killed(m) for m in range(self.mutants)) / self.mutants


def compare_matrices(a: KillMatrix, b: KillMatrix) -> list[tuple]:
    """(mutant, test, a-verdict, b-verdict) for every differing cell."""
    if a.mutants != b.mutants or sorted(a.tests) != sorted(b.tests):
        raise ValueError(
            f"dimension mismatch: {a.mutants}x{len(a.tests)} vs {b.mutants}x{len(b.tests)}"
        )
    return [
        (m, t, a.cells[(m, t)], b.cells[(m, t)])
        for m in range(a.mutants)
        for t in a.tests
        if a.cells[(m, t)] != b.cells[(m, t)]
    ]


def format_differences(diffs: list[tuple]) -> str:
    return "".join(f"mutant {m} test {t}: {va} != {vb}\n" for m, t, va, vb in diffs)


# ---------------------------------------------------------------- running


@dataclass
class TestRun:
    __test__ = False
    test: str
    engine: str
    verdicts: dict  # mutant -> verdict
    records: dict  # mutant -> Record
    counters: dict
    wall_time: float
    trace: list | None = None
    completion: list | None = None


@dataclass
class SuiteResult:
    engine: str
    matrix: KillMatrix
    runs: list  # TestRun per test, suite order
    errors: dict  # test name -> message

    def metrics_text(self) -> str:
        return format_metrics(self.runs)


def test_budget(ref_steps: int, factor: int = DEFAULT_BUDGET_FACTOR) -> int:
    return factor * ref_steps + BUDGET_SLACK


def run_test(program: Program, table: MutationTable, test: TestCase, engine: str, ref: Reference,
             budget_factor: int = DEFAULT_BUDGET_FACTOR, fork_depth: int = DEFAULT_FORK_DEPTH,
             trace: bool = False) -> TestRun:
    budget = test_budget(ref.record.steps, budget_factor)
    start = time.perf_counter()
    a = Analysis(program, table, TestInput(test.args, test.files, budget), engine, fork_depth, trace)
    records = a.run()
    elapsed = time.perf_counter() - start
    verdicts = {m: verdict(r, ref.record) for m, r in records.items()}
    return TestRun(test.name, engine, verdicts, records, a.metrics.counters(), elapsed, a.trace, a.completion)


def _run_one(job):
    return run_test(*job)


def run_suite(program: Program, table: MutationTable, suite: list[TestCase], engine: str,
              budget_factor: int = DEFAULT_BUDGET_FACTOR, fork_depth: int = DEFAULT_FORK_DEPTH,
              jobs: int = 1, trace: bool = False) -> SuiteResult:
    """Reference-run each test, then analyse every mutant under ``engine``.

    Tests whose reference run fails are reported in ``errors`` and left out of the matrix.
    """
    errors: dict[str, str] = {}
    work = []
    for t in suite:
        try:
            ref = reference_run(program, t)
        except SuiteError as e:
            errors[t.name] = str(e)
            continue
        work.append((program, table, t, engine, ref, budget_factor, fork_depth, trace))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    by_name = {r.test: r for r in results}
    runs = [by_name[t.name] for t in suite if t.name in by_name]
    matrix = KillMatrix(table.size, [r.test for r in runs])
    for r in runs:
        for m, v in r.verdicts.items():
            matrix.cells[(m, r.test)] = v
    return SuiteResult(engine, matrix, runs, errors)


# ---------------------------------------------------------------- metrics


def format_metrics(runs: list[TestRun]) -> str:
    """Deterministic counters, one ``key=value`` record per (test, engine)."""
    lines = []
    for r in runs:
        fields = [f"test={r.test}", f"engine={r.engine}"] + [f"{k}={v}" for k, v in r.counters.items()]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n" if lines else ""


def parse_metrics(text: str) -> list[dict]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = dict(kv.split("=", 1) for kv in line.split())
        for k, v in rec.items():
            if k not in ("test", "engine"):
                rec[k] = int(v)
        out.append(rec)
    return out


def format_timing(runs: list[TestRun]) -> str:
    return "".join(f"test={r.test} engine={r.engine} wall_time={r.wall_time:.6f}\n" for r in runs)


def format_trace(runs: list[TestRun]) -> str:
    lines = []
    for r in runs:
        lines.append(f"test={r.test} engine={r.engine} forks={len(r.trace or [])}")
        for e in r.trace or []:
            ids = ",".join(map(str, e.ids))
            lines.append(
                f"  fork parent={e.parent} child={e.child} depth={e.depth} location={e.location} "
                f"step={e.step} ids={ids}"
            )
        if r.completion is not None:
            lines.append("  completion " + " ".join(map(str, r.completion)))
    return "\n".join(lines) + "\n"


RATIO_KEYS = ("processes", "forks", "instructions")


def _ratio(num: int, den: int) -> float:
    if den == 0:
        return 1.0 if num == 0 else float("inf")
    return num / den


def summarize(metrics: dict) -> dict:
    """Per-test and aggregate ratios accmut/sse and sse/standard.

    ``metrics`` maps engine -> list of per-test counter dicts (each with a ``test`` key).
    These are measurements only.
    """
    pairs = [("accmut", "sse"), ("sse", "standard")]
    report: dict = {"per_test": {}, "aggregate": {}}
    index = {e: {r["test"]: r for r in rows} for e, rows in metrics.items()}
    tests = []
    for rows in metrics.values():
        for r in rows:
            if r["test"] not in tests:
                tests.append(r["test"])
    for num, den in pairs:
        if num not in index or den not in index:
            continue
        label = f"{num}/{den}"
        for key in RATIO_KEYS:
            tot_n = tot_d = 0
            for t in tests:
                if t in index[num] and t in index[den]:
                    n, d = index[num][t][key], index[den][t][key]
                    report["per_test"].setdefault(t, {})[f"{label} {key}"] = _ratio(n, d)
                    tot_n += n
                    tot_d += d
            report["aggregate"][f"{label} {key}"] = _ratio(tot_n, tot_d)
    return report


def format_summary(report: dict) -> str:
    lines = ["# measured ratios (not targets)"]
    for t, ratios in report["per_test"].items():
        for k, v in ratios.items():
            lines.append(f"test={t} {k.replace(' ', ' ratio_')}={v:.4f}")
    for k, v in report["aggregate"].items():
        lines.append(f"aggregate {k.replace(' ', ' ratio_')}={v:.4f}")
    return "\n".join(lines) + "\n"

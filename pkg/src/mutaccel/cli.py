"""Command-line entry point: mutate, run, diff, stats, gen-corpus.

Exit codes: 0 ok, 1 usage / unreadable input, 2 subject or reference-run
failure, 3 internal invariant violation (including engines disagreeing).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from mutaccel import corpus, harness
from mutaccel.engines import DEFAULT_FORK_DEPTH, ENGINES, InvariantViolation
from mutaccel.ir import IRError, parse_program
from mutaccel.mutgen import OPERATORS, TableError, check_table, generate_mutants, load_table, save_table, summary

EXIT_OK, EXIT_USAGE, EXIT_SUBJECT, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class Config:
    program: Path
    suite: Path
    operators: tuple = OPERATORS
    engines: tuple = ("accmut",)
    budget_factor: int = harness.DEFAULT_BUDGET_FACTOR
    fork_depth: int = DEFAULT_FORK_DEPTH
    out: Path = Path("mutaccel-out")
    jobs: int = 1
    table: Path | None = None
    trace_forks: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _operators(text: str) -> tuple:
    if text.strip().lower() == "all":
        return OPERATORS
    ops = tuple(o.strip().upper() for o in text.split(",") if o.strip())
    bad = [o for o in ops if o not in OPERATORS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown operator(s) {', '.join(bad)}; known: {', '.join(OPERATORS)}")
    return ops


def _engines(text: str) -> tuple:
    if text == "all":
        return ENGINES
    names = tuple(e.strip() for e in text.split(","))
    bad = [e for e in names if e not in ENGINES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown engine(s) {', '.join(bad)}; choose from {', '.join(ENGINES)} or all")
    return names


def _read(path: Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {e.strerror}") from None


def _load_program(path: Path):
    try:
        return parse_program(_read(path))
    except IRError as e:
        raise _Fail(EXIT_SUBJECT, f"{path}: {e}") from None


def cmd_mutate(program: Path, operators: tuple, out: Path | None) -> int:
    p = _load_program(program)
    table = generate_mutants(p, operators)
    out = out or Path(program).with_suffix(".mt")
    out.write_bytes(save_table(table))
    print(summary(table))
    print(f"table written to {out}")
    return EXIT_OK


def cmd_run(cfg: Config) -> int:
    p = _load_program(cfg.program)
    if not Path(cfg.suite).is_file():
        raise _Fail(EXIT_USAGE, f"suite file {cfg.suite} not found")
    try:
        suite = harness.load_suite(cfg.suite)
    except harness.SuiteError as e:
        raise _Fail(EXIT_USAGE, f"{cfg.suite}: {e}") from None
    if cfg.table is not None:
        try:
            table = load_table(Path(cfg.table).read_bytes())
            check_table(table, p)
        except OSError as e:
            raise _Fail(EXIT_USAGE, f"cannot read {cfg.table}: {e.strerror}") from None
        except (TableError, IRError) as e:
            raise _Fail(EXIT_SUBJECT, f"{cfg.table}: {e}") from None
    else:
        table = generate_mutants(p, cfg.operators)

    results = {}
    for engine in cfg.engines:
        results[engine] = harness.run_suite(
            p, table, suite, engine, cfg.budget_factor, cfg.fork_depth, cfg.jobs, cfg.trace_forks
        )

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for engine, res in results.items():
        (out / f"matrix-{engine}.csv").write_text(res.matrix.to_csv())
        (out / f"metrics-{engine}.txt").write_text(res.metrics_text())
        (out / f"timing-{engine}.txt").write_text(harness.format_timing(res.runs))
        if cfg.trace_forks:
            (out / f"forks-{engine}.txt").write_text(harness.format_trace(res.runs))
        killed = sum(res.matrix.killed(m) for m in range(table.size))
        print(f"{engine}: {table.size} mutants x {len(res.runs)} tests, {killed} killed "
              f"(score {res.matrix.score():.3f})")

    code = EXIT_OK
    if len(results) > 1:
        names = list(results)
        base = results[names[0]].matrix
        report = []
        for other in names[1:]:
            diffs = harness.compare_matrices(base, results[other].matrix)
            report.append(f"# {names[0]} vs {other}: {len(diffs)} differing cell(s)\n")
            report.append(harness.format_differences(diffs))
            if diffs:
                code = EXIT_INTERNAL
        (out / "comparison.txt").write_text("".join(report))
        metrics = {e: harness.parse_metrics(r.metrics_text()) for e, r in results.items()}
        (out / "summary.txt").write_text(harness.format_summary(harness.summarize(metrics)))
        if code:
            print("engines disagree; see comparison.txt", file=sys.stderr)

    errors = next(iter(results.values())).errors
    if errors:
        for name, msg in errors.items():
            print(f"reference failure: {msg}", file=sys.stderr)
        code = code or EXIT_SUBJECT
    return code


def cmd_diff(a: Path, b: Path) -> int:
    try:
        ma = harness.KillMatrix.from_csv(_read(a))
        mb = harness.KillMatrix.from_csv(_read(b))
        diffs = harness.compare_matrices(ma, mb)
    except ValueError as e:
        raise _Fail(EXIT_USAGE, str(e)) from None
    sys.stdout.write(harness.format_differences(diffs))
    return EXIT_INTERNAL if diffs else EXIT_OK


def cmd_stats(directory: Path) -> int:
    files = sorted(Path(directory).glob("metrics-*.txt"))
    if not files:
        raise _Fail(EXIT_USAGE, f"no metrics-*.txt files in {directory}")
    metrics = {f.stem.removeprefix("metrics-"): harness.parse_metrics(f.read_text()) for f in files}
    for engine, rows in metrics.items():
        totals = {k: sum(r[k] for r in rows) for k in rows[0] if k not in ("test", "engine")} if rows else {}
        print(f"{engine}: " + " ".join(f"{k}={v}" for k, v in totals.items()))
    sys.stdout.write(harness.format_summary(harness.summarize(metrics)))
    return EXIT_OK


def cmd_gen_corpus(seed: int, count: int, size: int, out: Path, equivalent_bias: bool = False) -> int:
    params = corpus.GenParams(size=size, equivalent_bias=equivalent_bias)
    cases = corpus.generate_corpus(seed, count, params)
    corpus.write_corpus(cases, out)
    print(f"wrote {len(cases)} program/suite pairs to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mutaccel", description="Mutation analysis with split-stream and AccMut acceleration.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("mutate", help="generate a mutation table")
    m.add_argument("program", type=Path)
    m.add_argument("--operators", type=_operators, default=OPERATORS, help="comma list or 'all'")
    m.add_argument("--out", type=Path)

    r = sub.add_parser("run", help="run a suite under one or more engines")
    r.add_argument("program", type=Path)
    r.add_argument("suite", type=Path)
    r.add_argument("--table", type=Path, help="mutation table file (default: generate)")
    r.add_argument("--operators", type=_operators, default=OPERATORS)
    r.add_argument("--engine", type=_engines, default=("accmut",), help="standard|sse|accmut, comma list, or all")
    r.add_argument("--budget-factor", type=int, default=harness.DEFAULT_BUDGET_FACTOR)
    r.add_argument("--fork-depth", type=int, default=DEFAULT_FORK_DEPTH)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", type=Path, default=Path("mutaccel-out"))
    r.add_argument("--trace-forks", action="store_true", help="write the fork tree per engine")

    d = sub.add_parser("diff", help="compare two kill-matrix CSV files")
    d.add_argument("a", type=Path)
    d.add_argument("b", type=Path)

    s = sub.add_parser("stats", help="ratio report from a run output directory")
    s.add_argument("directory", type=Path)

    g = sub.add_parser("gen-corpus", help="generate random programs and suites")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--size", type=int, default=60)
    g.add_argument("--equivalent-bias", action="store_true")
    g.add_argument("--out", type=Path, default=Path("corpus-out"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "mutate":
            return cmd_mutate(args.program, args.operators, args.out)
        if args.command == "run":
            cfg = Config(
                program=args.program, suite=args.suite, operators=args.operators, engines=args.engine,
                budget_factor=args.budget_factor, fork_depth=args.fork_depth, out=args.out,
                jobs=args.jobs, table=args.table, trace_forks=args.trace_forks,
            )
            return cmd_run(cfg)
        if args.command == "diff":
            return cmd_diff(args.a, args.b)
        if args.command == "stats":
            return cmd_stats(args.directory)
        if args.command == "gen-corpus":
            return cmd_gen_corpus(args.seed, args.count, args.size, args.out, args.equivalent_bias)
    except _Fail as e:
        print(f"mutaccel: {e}", file=sys.stderr)
        return e.code
    except InvariantViolation as e:
        print(f"mutaccel: internal invariant violation: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line in REPORT (shown in the pytest terminal summary
and printed when this file is run directly) before asserting.
"""

import random
import time

import pytest

from _support import covered_locations, machine_points, naive_filter_mutants, naive_filter_variants, random_ids, random_location, variant_set
from mutaccel import harness
from mutaccel.cli import main as cli_main
from mutaccel.corpus import GenParams, foo_program, generate_corpus, write_corpus
from mutaccel.engines import BitVectorIds, OpCounter, TestInput, cluster_changes, filter_mutants, filter_variants, run_engine
from mutaccel.ir import parse_instruction, parse_program
from mutaccel.mutgen import Variant, generate_mutants
from mutaccel.runtime import MachineState, apply, execute, fork_state, state_bytes, try_variant
from mutaccel.runtime.cow import FILE_PAGE, MEMORY_PAGE, FsError

pytestmark = pytest.mark.acceptance

REPORT: list[str] = []
CORPUS_SEED = 2026
CORPUS_SIZE = 20


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)


# ---------------------------------------------------------------- shared corpus run


_CORPUS_CACHE: dict = {}


def corpus_results():
    """Run the seeded corpus under every engine once; reused by criteria 1 and 6."""
    if not _CORPUS_CACHE:
        start = time.perf_counter()
        cases = generate_corpus(CORPUS_SEED, CORPUS_SIZE)
        rows = []
        for case in cases:
            p = case.program()
            t = generate_mutants(p)
            n_instr = sum(len(b) for fn in p.functions.values() for b in fn.blocks.values())
            res = {e: harness.run_suite(p, t, case.tests, e) for e in ("standard", "sse", "accmut")}
            covered = {}
            for test in case.tests:
                locs = covered_locations(p, test.args, test.files)
                covered[test.name] = sum(t.u[loc] for loc in locs)
            rows.append((case, p, t, n_instr, res, covered))
        _CORPUS_CACHE["rows"] = rows
        _CORPUS_CACHE["seconds"] = time.perf_counter() - start
    return _CORPUS_CACHE["rows"], _CORPUS_CACHE["seconds"]


# ---------------------------------------------------------------- 1


def test_criterion_1_engines_agree_on_corpus():
    rows, seconds = corpus_results()
    sizes_ok = all(n <= 200 and t.size >= 50 for _, _, t, n, _, _ in rows)
    diffs = 0
    errors = 0
    for _, _, _, _, res, _ in rows:
        base = res["standard"]
        errors += len(base.errors)
        for e in ("sse", "accmut"):
            diffs += len(harness.compare_matrices(base.matrix, res[e].matrix))
    ok = len(rows) >= 20 and sizes_ok and diffs == 0 and errors == 0 and seconds < 120
    mutants = sum(t.size for _, _, t, _, _, _ in rows)
    report(1, ok, f"{len(rows)} programs, {mutants} mutants, {diffs} differing cells, {seconds:.1f}s (limit 120s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_try_apply_law():
    rng = random.Random(2)
    trials = failures = 0
    for s, variants in machine_points(rng, 10_000):
        for v in variants:
            a, b = fork_state(s), fork_state(s)
            execute(a, v.code)
            apply(try_variant(b, v.code), b)
            if state_bytes(a) != state_bytes(b):
                failures += 1
            trials += 1
            a.release()
            b.release()
        if trials >= 10_000:
            break
    ok = trials >= 10_000 and failures == 0
    report(2, ok, f"{trials} trials, {failures} mismatches")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_filter_oracles_and_flat_cost():
    rng = random.Random(3)
    mismatches = 0
    for k in range(1000):
        m = rng.randint(1, 200)
        u = rng.randint(0, min(m, 10))
        orig, muts = random_location(rng, m, u)
        bound = max(u, 10)
        I = random_ids(rng, m, [v.owner for v in muts] or [0], bitvector=k % 2 == 0, bound=bound)
        I_set, all_ids = set(I), set(range(m))
        V = variant_set(orig, muts)
        filter_variants(V, I)
        if V.variants() != naive_filter_variants(orig, muts, I_set, all_ids):
            mismatches += 1
            continue
        if not len(V):
            continue
        sub = rng.sample(V.variants(), rng.randint(1, len(V)))
        W = variant_set(orig, [v for v in sub if v.owner is not None])
        W.ori_included = any(v.owner is None for v in sub)
        if set(filter_mutants(I, W, muts, bound=bound)) != naive_filter_mutants(I_set, sub, muts, all_ids):
            mismatches += 1

    flat = True
    for u in (1, 3, 6, 10):
        costs = []
        for m in (500, 5000):
            r = random.Random(u)
            orig, muts = random_location(r, 500, u)
            scale = m // 500
            muts = [Variant(v.code, v.location, v.owner * scale, v.operator) for v in muts]
            c = OpCounter()
            ids = BitVectorIds(m)
            V = variant_set(orig, muts)
            filter_variants(V, ids, c)
            for v in V.mut_variants:
                single = variant_set(orig, [v])
                single.ori_included = False
                filter_mutants(ids, single, muts, c, bound=u)
            filter_mutants(ids, variant_set(orig, []), muts, c)
            costs.append(c.ops)
        flat &= costs[0] == costs[1]
    ok = mismatches == 0 and flat
    report(3, ok, f"1000 (I, V) pairs, {mismatches} oracle mismatches; op counts flat under 10x M: {flat}")
    assert ok


# ---------------------------------------------------------------- 4


CALL_SRC = """\
func foo/2 {
entry:
  r2 = sub r0 r1
  ret r2
}
func main/2 {
entry:
  r2 = call foo r0 r1
  ret r2
}
"""


def _quadratic_partition(X):
    groups = []
    for v, x in X:
        for g in groups:
            if g[0][1] == x:
                g.append((v, x))
                break
        else:
            groups.append([(v, x)])
    return {frozenset(v.owner for v, _ in g) for g in groups}


def test_criterion_4_clustering():
    rng = random.Random(4)
    unsound = partition_errors = points = nontrivial = 0
    for s, variants in machine_points(rng, 1000):
        points += 1
        X = [(v, try_variant(s, v.code)) for v in variants]
        classes = cluster_changes(X)
        if {frozenset(v.owner for v in c.members) for c in classes} != _quadratic_partition(X):
            partition_errors += 1
        for c in classes:
            if len(c.members) > 1:
                nontrivial += 1
            posts = set()
            for v in c.members:
                f = fork_state(s)
                execute(f, v.code)
                posts.add(state_bytes(f))
                f.release()
            if len(posts) != 1:
                unsound += 1

    p = parse_program(CALL_SRC)
    orig = parse_instruction("r2 = call foo r0 r1")
    swapped = parse_instruction("r2 = call foo r1 r0")
    deleted = parse_instruction("r2 = nop")
    call_errors = 0
    for _ in range(300):
        a, b = rng.randint(-3, 3), rng.randint(-3, 3)
        st = MachineState.initial(p, (a, b))
        vs = [Variant(orig, 0), Variant(swapped, 0, 0, "ROV"), Variant(deleted, 0, 1, "STDC")]
        classes = cluster_changes([(v, try_variant(st, v.code)) for v in vs])
        groups = [{v.owner for v in c.members} for c in classes]
        together = {None, 0} in groups or {None, 0, 1} in groups
        deleted_joined = any(1 in g and len(g) > 1 for g in groups)
        if together != (a == b) or deleted_joined:
            call_errors += 1
    ok = points == 1000 and unsound == 0 and partition_errors == 0 and call_errors == 0
    report(4, ok, f"{points} proceed points ({nontrivial} multi-member classes): {unsound} unsound classes, "
                  f"{partition_errors} partition mismatches, {call_errors} call-example errors")
    assert ok


# ---------------------------------------------------------------- 5


def _parse_trace(text):
    forks = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("fork "):
            kv = dict(w.split("=", 1) for w in line.split()[1:])
            forks.append({
                "parent": int(kv["parent"]), "location": int(kv["location"]), "step": int(kv["step"]),
                "ids": tuple(int(x) for x in kv["ids"].split(",") if x),
            })
    return forks


def test_criterion_5_foo_fork_counts(tmp_path):
    from pathlib import Path

    corpus = Path(__file__).resolve().parent.parent / "corpus"
    out = tmp_path / "foo"
    code = cli_main(["run", str(corpus / "foo.ir"), str(corpus / "foo.suite"), "--table", str(corpus / "foo.mt"),
                     "--engine", "sse,accmut", "--trace-forks", "--out", str(out)])
    sse = _parse_trace((out / "forks-sse.txt").read_text())
    acc = _parse_trace((out / "forks-accmut.txt").read_text())

    # step at which the unmutated run first reaches the div location
    s = MachineState.initial(foo_program(), (1,))
    while s.location() != 5:
        execute(s, s.current())
    first_step = s.steps

    at_m1 = [f for f in acc if f["location"] == 0]
    main_at_div = [f for f in acc if f["location"] == 5 and f["parent"] == 0]
    shared = len(main_at_div) == 1 and main_at_div[0]["ids"] == (1, 2) and main_at_div[0]["step"] == first_step
    ok = code == 0 and len(sse) == 3 and not at_m1 and shared
    report(5, ok, f"SSE forks={len(sse)} (want 3); AccMut forks at M1 location={len(at_m1)} (want 0), "
                  f"main forks at M2/M3 location={[f['ids'] for f in main_at_div]} at step "
                  f"{[f['step'] for f in main_at_div]} (want [(1, 2)] at {first_step}); AccMut total={len(acc)}")
    assert ok


# ---------------------------------------------------------------- 6


def _equivalent_at_first_location(p, t, test) -> int:
    s = MachineState.initial(p, test.args, test.files)
    seen = set()
    n = 0
    while s.status == "running":
        loc = s.location()
        if loc is not None and loc not in seen:
            seen.add(loc)
            x0 = try_variant(s, t.originals[loc].code)
            n += sum(try_variant(s, v.code) == x0 for v in t.mutants[loc])
        execute(s, s.current())
    return n


def test_criterion_6_fork_dominance_and_reduction():
    rows, _ = corpus_results()
    violations = 0
    tests = 0
    for _, _, _, _, res, covered in rows:
        sse = {r.test: r.counters["forks"] for r in res["sse"].runs}
        acc = {r.test: r.counters["forks"] for r in res["accmut"].runs}
        for name, cov in covered.items():
            tests += 1
            if not acc[name] <= sse[name] <= cov:
                violations += 1

    crafted = generate_corpus(7, 10, GenParams(equivalent_bias=True))
    equivalent = total = proc_sse = proc_acc = 0
    for case in crafted:
        p = case.program()
        t = generate_mutants(p)
        for test in case.tests:
            ref = harness.reference_run(p, test)
            equivalent += _equivalent_at_first_location(p, t, test)
            total += t.size
            ti = TestInput(test.args, test.files, harness.test_budget(ref.record.steps))
            proc_sse += run_engine(p, t, ti, "sse").metrics.processes
            proc_acc += run_engine(p, t, ti, "accmut").metrics.processes
    share = equivalent / total
    ratio = proc_acc / proc_sse
    ok = violations == 0 and share >= 0.30 and ratio < 0.9
    report(6, ok, f"{tests} corpus tests, {violations} dominance violations; crafted corpus: "
                  f"{share:.1%} equivalent-modulo-state (need >= 30%), AccMut/SSE processes {ratio:.3f} (need < 0.9)")
    assert ok


# ---------------------------------------------------------------- 7


class _Shadow:
    """Plain-Python model of one state's memory, output and files."""

    def __init__(self, mem_size, files):
        self.mem = [0] * mem_size
        self.out = b""
        self.files = {fid: bytearray(data) for fid, data in files.items()}
        self.handles = {}
        self.next_handle = 3

    def copy(self):
        c = _Shadow(0, {})
        c.mem = list(self.mem)
        c.out = self.out
        c.files = {fid: bytearray(d) for fid, d in self.files.items()}
        c.handles = {h: list(v) for h, v in self.handles.items()}
        c.next_handle = self.next_handle
        return c

    def open(self, fid):
        self.files.setdefault(fid, bytearray())
        h = self.next_handle
        self.next_handle += 1
        self.handles[h] = [fid, 0]
        return h

    def write(self, h, data):
        fid, pos = self.handles[h]
        f = self.files[fid]
        if len(f) < pos:
            f.extend(bytes(pos - len(f)))
        f[pos : pos + len(data)] = data
        self.handles[h][1] = pos + len(data)

    def read(self, h, n):
        fid, pos = self.handles[h]
        f = self.files[fid]
        data = bytes(f[pos : pos + n]) if pos < len(f) else b""
        self.handles[h][1] = pos + len(data)
        return data


def test_criterion_7_cow_isolation():
    rng = random.Random(7)
    mem_size = 3 * MEMORY_PAGE
    src = f"memory {mem_size}\nfunc main/0 {{ entry: ret }}"
    p = parse_program(src)
    contaminated = 0
    copy_after_fork = 0
    for _ in range(1000):
        files = {0: bytes(rng.randrange(256) for _ in range(rng.randint(0, 3 * FILE_PAGE)))}
        states = [MachineState.initial(p, (), files)]
        shadows = [_Shadow(mem_size, files)]
        for _ in range(rng.randint(5, 40)):
            i = rng.randrange(len(states))
            s, sh = states[i], shadows[i]
            op = rng.random()
            if op < 0.2 and len(states) < 8:
                before = s.store.copies
                states.append(fork_state(s))
                shadows.append(sh.copy())
                if s.store.copies != before:
                    copy_after_fork += 1
            elif op < 0.5:
                addr, val = rng.randrange(mem_size), rng.randint(-100, 100)
                s.memory.write(addr, val)
                sh.mem[addr] = val
            elif op < 0.65:
                data = b"%d\n" % rng.randint(0, 10**6) * rng.randint(1, 30)
                s.output.append(data)
                sh.out += data
            elif op < 0.75 or not sh.handles:
                fid = rng.choice([0, 1])
                assert s.fs.open(fid) == sh.open(fid)
            else:
                h = rng.choice(sorted(sh.handles))
                r = rng.random()
                if r < 0.4:
                    data = bytes(rng.randrange(256) for _ in range(rng.randint(1, 80)))
                    s.fs.write(h, data)
                    sh.write(h, data)
                elif r < 0.7:
                    n = rng.randint(0, 90)
                    if s.fs.read(h, n) != sh.read(h, n):
                        contaminated += 1
                else:
                    off = rng.randint(-2, 3 * FILE_PAGE)
                    try:
                        s.fs.seek(h, off)
                        sh.handles[h][1] = off
                    except FsError:
                        assert off < 0
            for st, model in zip(states, shadows):
                if (list(st.memory.cells()) != model.mem or st.output.getvalue() != model.out
                        or {fid: st.fs.contents(fid) for fid in st.fs.files} != {k: bytes(v) for k, v in model.files.items()}):
                    contaminated += 1
        for st in states:
            st.release()
    ok = contaminated == 0 and copy_after_fork == 0
    report(7, ok, f"1000 interleavings, {contaminated} contaminated observations, {copy_after_fork} copies at fork time")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_jobs_determinism(tmp_path):
    cases = generate_corpus(88, 2, GenParams(tests=4))
    write_corpus(cases, tmp_path / "c")
    differing = []
    for case in cases:
        outs = []
        for jobs in ("1", "4"):
            out = tmp_path / f"{case.name}-j{jobs}"
            code = cli_main(["run", str(tmp_path / "c" / f"{case.name}.ir"), str(tmp_path / "c" / f"{case.name}.suite"),
                             "--engine", "all", "--jobs", jobs, "--out", str(out)])
            assert code == 0
            outs.append(out)
        for e in ("standard", "sse", "accmut"):
            for name in (f"matrix-{e}.csv", f"metrics-{e}.txt"):
                if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                    differing.append(f"{case.name}/{name}")
    ok = not differing
    report(8, ok, f"--jobs 1 vs --jobs 4 on {len(cases)} programs: {len(differing)} differing files {differing}")
    assert ok


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for fn in (
        test_criterion_1_engines_agree_on_corpus, test_criterion_2_try_apply_law,
        test_criterion_3_filter_oracles_and_flat_cost, test_criterion_4_clustering,
        test_criterion_5_foo_fork_counts, test_criterion_6_fork_dominance_and_reduction,
        test_criterion_7_cow_isolation, test_criterion_8_jobs_determinism,
    ):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)

import pytest
from hypothesis import given, strategies as st

from mutaccel import harness
from mutaccel.corpus import foo_program, foo_table
from mutaccel.engines import ABORTED_DEPTH, Record
from mutaccel.harness import (
    KillMatrix,
    SuiteError,
    TestCase,
    compare_matrices,
    format_differences,
    format_suite,
    parse_metrics,
    parse_suite,
    reference_run,
    run_suite,
    summarize,
    verdict,
)
from mutaccel.ir import parse_instruction, parse_program
from mutaccel.mutgen import generate_mutants, table_from_variants


def test_parse_suite(tmp_path):
    (tmp_path / "in.bin").write_bytes(b"\x00\x01")
    text = """
    # comment
    test first 1 -2
      expect exit 3
      expect output "a\\nb"
      file 0 in.bin
    test second
    """
    tests = parse_suite(text, tmp_path)
    assert [t.name for t in tests] == ["first", "second"]
    assert tests[0].args == (1, -2) and tests[0].expect_exit == 3
    assert tests[0].expect_output == b"a\nb"
    assert tests[0].files == {0: b"\x00\x01"}
    assert tests[1].args == ()


@pytest.mark.parametrize(
    "text",
    ["expect exit 1", "test a x", "test a\n  file 0 missing.bin", "test a\ntest a", "test a\n  bogus 1"],
)
def test_parse_suite_errors(text, tmp_path):
    with pytest.raises(SuiteError):
        parse_suite(text, tmp_path)


def test_format_suite_round_trip(tmp_path):
    tests = [TestCase("t0", (1, 2), {0: b"xyz"}, b"1\n", 0), TestCase("t1", (-4,))]
    (tmp_path / "t0.bin").write_bytes(b"xyz")
    text = format_suite(tests, {("t0", 0): "t0.bin"})
    assert parse_suite(text, tmp_path) == tests


def _rec(status="exited", code=0, out="d", steps=5):
    return Record(status, code, out, steps)


def test_verdicts():
    ref = _rec()
    assert verdict(_rec(), ref) == "survived"
    assert verdict(_rec(steps=900), ref) == "survived"
    assert verdict(_rec(out="e"), ref) == "killed-output"
    assert verdict(_rec(code=1), ref) == "killed-exit"
    assert verdict(_rec(out="e", code=1), ref) == "killed-output"
    assert verdict(_rec("trapped", None), ref) == "killed-trap"
    assert verdict(_rec("timed-out", None), ref) == "killed-timeout"
    assert verdict(_rec(ABORTED_DEPTH, None), ref) == ABORTED_DEPTH


def test_reference_failures():
    p = parse_program("func main/1 { entry: r1 = div 1 r0; ret r1 }")
    with pytest.raises(SuiteError, match="trapped"):
        reference_run(p, TestCase("z", (0,)))
    with pytest.raises(SuiteError, match="exit"):
        reference_run(p, TestCase("e", (1,), expect_exit=5))
    loop = parse_program("func main/0 { entry: br entry }")
    with pytest.raises(SuiteError, match="exceeded"):
        reference_run(loop, TestCase("l"), cap=100)


def test_budget_rule():
    assert harness.test_budget(100) == 10 * 100 + harness.BUDGET_SLACK
    assert harness.test_budget(100, 3) == 300 + harness.BUDGET_SLACK


def _matrix(n=3, tests=("a", "b"), v="survived"):
    return KillMatrix(n, list(tests), {(m, t): v for m in range(n) for t in tests})


def test_compare_matrices():
    a, b = _matrix(), _matrix()
    assert compare_matrices(a, b) == []
    b.cells[(1, "b")] = "killed-output"
    diffs = compare_matrices(a, b)
    assert diffs == [(1, "b", "survived", "killed-output")]
    assert format_differences(diffs).count("\n") == 1
    with pytest.raises(ValueError, match="dimension"):
        compare_matrices(a, _matrix(4))
    with pytest.raises(ValueError, match="dimension"):
        compare_matrices(a, _matrix(tests=("a",)))


def test_kill_matrix_csv_round_trip():
    m = _matrix()
    m.cells[(0, "a")] = "killed-trap"
    back = KillMatrix.from_csv(m.to_csv())
    assert back == m
    assert back.killed(0) and not back.killed(1)
    assert back.score() == pytest.approx(1 / 3)
    assert m.to_csv().splitlines()[0] == "mutant_id,test,verdict"
    with pytest.raises(ValueError):
        KillMatrix.from_csv("nope\n")


@given(counters=st.dictionaries(st.sampled_from(["processes", "forks", "instructions"]), st.integers(0, 10**6), min_size=3))
def test_summarize_equal_counters_give_one(counters):
    rows = [dict(counters, test="t")]
    report = summarize({"standard": rows, "sse": rows, "accmut": rows})
    assert all(v == 1.0 for v in report["aggregate"].values())
    assert len(report["aggregate"]) == 6


def test_summarize_ratios():
    m = {
        "sse": [{"test": "t", "processes": 4, "forks": 3, "instructions": 100}],
        "accmut": [{"test": "t", "processes": 3, "forks": 0, "instructions": 50}],
    }
    agg = summarize(m)["aggregate"]
    assert agg["accmut/sse processes"] == 0.75
    assert agg["accmut/sse forks"] == 0.0
    assert agg["accmut/sse instructions"] == 0.5
    assert "sse/standard forks" not in agg


def test_metrics_text_round_trip():
    p = foo_program()
    res = run_suite(p, foo_table(p), [TestCase("t", (1,))], "sse")
    rows = parse_metrics(res.metrics_text())
    assert rows[0]["test"] == "t" and rows[0]["forks"] == 3


def test_run_suite_skips_failing_reference():
    p = parse_program("func main/1 { entry: r1 = div 10 r0; print r1; ret 0 }")
    t = generate_mutants(p)
    res = run_suite(p, t, [TestCase("ok", (2,)), TestCase("bad", (0,))], "accmut")
    assert res.matrix.tests == ["ok"] and "bad" in res.errors


def test_uncovered_mutant_survives():
    src = """
    func main/1 {
    entry:
      r1 = gt r0 100
      br_cond r1 big small
    big:
      r2 = mul r0 2
      print r2
      ret r2
    small:
      ret 0
    }
    """
    p = parse_program(src)
    t = table_from_variants(p, {2: [parse_instruction("r2 = add r0 2")]})
    for e in ("standard", "sse", "accmut"):
        res = run_suite(p, t, [TestCase("low", (3,)), TestCase("high", (200,))], e)
        assert res.matrix.cells[(0, "low")] == "survived"
        assert res.matrix.cells[(0, "high")] == "killed-output"


def test_verdicts_deterministic_across_runs():
    p = foo_program()
    t = generate_mutants(p)
    suite = [TestCase("a", (1,)), TestCase("b", (4,))]
    first = run_suite(p, t, suite, "accmut").matrix.to_csv()
    assert run_suite(p, t, suite, "accmut").matrix.to_csv() == first

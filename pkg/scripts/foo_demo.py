"""Run the three-mutant loop example under SSE and AccMut and print both fork trees."""

from mutaccel.corpus import foo_program, foo_table
from mutaccel.engines import TestInput, run_engine


def main():
    p = foo_program()
    t = foo_table(p)
    for i in range(t.size):
        v = t.mutant(i)
        print(f"M{i + 1} (id {i}) at location {v.location}: {v.code}")
    for engine in ("standard", "sse", "accmut"):
        a = run_engine(p, t, TestInput((1,)), engine, trace=True)
        m = a.metrics
        print(f"\n{engine}: processes={m.processes} forks={m.forks} instructions={m.instructions}")
        for e in a.trace or []:
            print(f"  pid {e.parent} -> {e.child} at location {e.location}, step {e.step}, ids {list(e.ids)}")
        for mid, rec in sorted(a.records.items()):
            print(f"  M{mid + 1}: {rec.status} exit={rec.exit_code} steps={rec.steps}")


if __name__ == "__main__":
    main()

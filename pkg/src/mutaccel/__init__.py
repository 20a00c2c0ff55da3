"""Mutation analysis engine for a small three-address IR.

Three strategies produce identical kill matrices: mutant schemata (one run per
mutant), split-stream execution (fork at a mutant's first mutated statement),
and AccMut (fork only when trial changes differ modulo the current state).
"""

from mutaccel.engines import ENGINES, run_accmut, run_split_stream, run_standard
from mutaccel.harness import KillMatrix, TestCase, compare_matrices, run_suite
from mutaccel.ir import Program, enumerate_locations, parse_program, validate
from mutaccel.mutgen import MutationTable, generate_mutants, load_table, save_table

__version__ = "0.1.0"

__all__ = [
    "ENGINES", "KillMatrix", "MutationTable", "Program", "TestCase", "compare_matrices",
    "enumerate_locations", "generate_mutants", "load_table", "parse_program", "run_accmut",
    "run_split_stream", "run_standard", "run_suite", "save_table", "validate",
]

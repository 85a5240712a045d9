"""Shared fixtures: the worked-example problems and their solved relaxations.

The SOS solves are session-scoped because the k=6 level of the box-upper
example takes tens of seconds; every criterion that needs a solved level
reads from the same cache.
"""

import time
from pathlib import Path

import pytest

import rbsos
from rbsos.bilevel import build_single_level, load_problem
from rbsos.sos import build_relaxation, solve_relaxation

FIXTURES = Path(rbsos.__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def ep1():
    return load_problem(FIXTURES / "ep1.json")


@pytest.fixture(scope="session")
def ep2():
    return load_problem(FIXTURES / "ep2.json")


@pytest.fixture(scope="session")
def ep3():
    return load_problem(FIXTURES / "ep3.json")


@pytest.fixture(scope="session")
def solved_levels(ep2, ep3):
    """(name, k) -> (RelaxationLevel, LevelSolution, wall seconds)."""
    plan = [("ep2", ep2, "scalar", (4, 6)), ("ep3", ep3, "null", (4,))]
    out = {}
    for name, prob, prune, ks in plan:
        slp = build_single_level(prob, prune=prune)
        for k in ks:
            level = build_relaxation(slp, prob.f, prob.kappa, k)
            t0 = time.perf_counter()
            sol = solve_relaxation(level)
            out[(name, k)] = (level, sol, time.perf_counter() - t0)
    return out

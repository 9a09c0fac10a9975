import numpy as np
import pytest

from hslevy.coefficients import (ClampedLinearSmallJump, DistributionCoefficientSet, TanhLargeJump)
from hslevy.engine import SolveProblem
from hslevy.hermite import ExpansionVector
from hslevy.noise import LargeJumpSampler, LevyModel

CUTOFF = 16
REGULARITY = 1.0


def builtin_parts(large_rate: float = 0.0, cutoff: int = CUTOFF):
    """Coefficients, jump families, Levy model and parameter of the built-in lifted problem."""
    h0 = ExpansionVector.basis((0,), cutoff)
    coeffs = DistributionCoefficientSet.build([[h0 * 0.3]], [h0], REGULARITY)
    small = ClampedLinearSmallJump(h0, slope=1.0, intercept=0.25, clamp=1.0, regularity=REGULARITY)
    large = TanhLargeJump(h0)
    model = LevyModel(1, (((0.5,), 1.0), ((-0.5,), 1.0)), large_rate,
                      LargeJumpSampler("fixed", ((1.0,), (-1.0,))))
    parameter = ExpansionVector.delta((0.0,), cutoff, -REGULARITY)
    return coeffs, small, large, model, parameter


def builtin_problem(large_rate: float = 0.0, steps: int = 1024, initial=(0.0,)) -> SolveProblem:
    coeffs, small, large, model, parameter = builtin_parts(large_rate)
    return SolveProblem(coeffs, small, large, parameter, np.array(initial), model, 1.0, steps)


@pytest.fixture
def builtin():
    return builtin_parts()


@pytest.fixture
def problem():
    return builtin_problem()


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[number])

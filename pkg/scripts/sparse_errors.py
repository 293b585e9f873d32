#!/usr/bin/env python3
"""
Sparsebench Error Types
Exception hierarchy shared by the solvers, the RIC tools and the command line
"""

import logging

logger = logging.getLogger(__name__)

# Exit codes used by the command line
EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_SOLVER_ERROR = 2
EXIT_BUDGET_EXCEEDED = 3


class SparseBenchError(Exception):
    """Base class for every error raised by sparsebench"""
    exit_code = EXIT_INPUT_ERROR


class InputError(SparseBenchError):
    """Malformed or inconsistent input"""
    exit_code = EXIT_INPUT_ERROR


class DimensionMismatch(InputError):
    pass


class InvalidDimensions(InputError):
    pass


class InvalidSparsity(InputError):
    pass


class ColumnsNotNormalized(InputError):
    pass


class KTooSmall(InputError):
    pass


class ConfigError(InputError):
    pass


class RicIndexMissing(InputError):
    """A guarantee check needs an RIC order the table does not hold"""

    def __init__(self, order, available=()):
        self.order = order
        self.available = tuple(available)
        super().__init__(f"RIC table has no entry for order {order} (available: {list(self.available)})")


class SolverError(SparseBenchError):
    """Numeric failure inside a solver"""
    exit_code = EXIT_SOLVER_ERROR


class RankDeficient(SolverError):
    """Least-squares system lost full column rank

    When raised from a greedy solver, ``trace`` holds the iterations completed
    before the failing column was appended.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class Infeasible(SolverError):
    pass


class NotConverged(SolverError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class DegenerateData(SolverError):
    """Logistic fit impossible; ``estimate`` holds a fallback value when one exists"""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BudgetExceeded(SparseBenchError):
    """Exact RIC enumeration would visit more subsets than allowed"""
    exit_code = EXIT_BUDGET_EXCEEDED

    def __init__(self, required, budget, k, suggestion=None):
        self.required = required
        self.budget = budget
        self.k = k
        self.suggestion = suggestion or f"ric --mode mc --k {k} --samples {min(required, budget)}"
        super().__init__(
            f"exact RIC at order {k} needs {required} subsets, budget is {budget}; "
            f"try: {self.suggestion}"
        )


def exit_code_for(error):
    """Map any exception to the command-line exit code"""
    if isinstance(error, SparseBenchError):
        return error.exit_code
    if isinstance(error, (FileNotFoundError, ValueError, KeyError)):
        return EXIT_INPUT_ERROR
    logger.error(f"Unexpected error type {type(error).__name__}: {error}")
    return EXIT_SOLVER_ERROR

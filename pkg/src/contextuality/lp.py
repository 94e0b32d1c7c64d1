"""Exact rational linear programming.

``solve_simplex`` maximizes ``c . x`` subject to ``A x <= p`` and ``x >= 0``
with a dense two-phase tableau over `fractions.Fraction`.  Pivoting follows
Bland's rule (smallest-index entering and leaving variable), which rules out
cycling, so every solve terminates.  Optimal solutions carry an exact dual
vector; ``verify_certificate`` re-checks feasibility of both sides and strong
duality from scratch.  ``fm_oracle`` recomputes the optimum by Fourier-Motzkin
elimination and exists purely to cross-check the simplex on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence


class TooLargeError(Exception):
    """Raised when an instance exceeds the Fourier-Motzkin size guard."""


class LpStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpProblem:
    """maximize objective . x  s.t.  rows . x <= rhs,  x >= 0"""

    objective: tuple[Fraction, ...]
    rows: tuple[tuple[Fraction, ...], ...]
    rhs: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        n = len(self.objective)
        if len(self.rows) != len(self.rhs):
            raise ValueError("row/rhs count mismatch")
        for row in self.rows:
            if len(row) != n:
                raise ValueError("row width does not match objective length")


def lp_problem(
    objective: Iterable[Fraction | int],
    rows: Iterable[Iterable[Fraction | int]],
    rhs: Iterable[Fraction | int],
) -> LpProblem:
    return LpProblem(
        tuple(Fraction(c) for c in objective),
        tuple(tuple(Fraction(a) for a in row) for row in rows),
        tuple(Fraction(b) for b in rhs),
    )


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    value: Fraction | None = None
    primal: tuple[Fraction, ...] | None = None
    dual: tuple[Fraction, ...] | None = None


_ZERO = Fraction(0)
_ONE = Fraction(1)


def _pivot(tableau: list[list[Fraction]], basis: list[int], row: int, col: int) -> None:
    piv = tableau[row][col]
    if piv == 0:
        raise ArithmeticError("zero pivot")
    if piv != 1:
        inv = _ONE / piv
        tableau[row] = [a * inv for a in tableau[row]]
    pivot_row = tableau[row]
    for i, other in enumerate(tableau):
        if i == row:
            continue
        factor = other[col]
        if factor:
            tableau[i] = [a - factor * b for a, b in zip(other, pivot_row)]
    basis[row] = col


def _run_simplex(
    tableau: list[list[Fraction]],
    basis: list[int],
    allowed: Sequence[int],
) -> str:
    """Bland iterations on a tableau whose last row is the (negated) objective.

    Returns "optimal" or "unbounded".  ``allowed`` lists the columns that may
    enter the basis.
    """
    obj = tableau[-1]
    m = len(tableau) - 1
    while True:
        entering = -1
        for j in allowed:
            if obj[j] < 0:  # obj holds c_B B^-1 A_j - c_j
                entering = j
                break
        if entering < 0:
            return "optimal"
        leaving = -1
        best: Fraction | None = None
        for i in range(m):
            coeff = tableau[i][entering]
            if coeff > 0:
                ratio = tableau[i][-1] / coeff
                if best is None or ratio < best or (
                    ratio == best and basis[i] < basis[leaving]
                ):
                    best = ratio
                    leaving = i
        if leaving < 0:
            return "unbounded"
        _pivot(tableau, basis, leaving, entering)


def solve_simplex(problem: LpProblem) -> LpSolution:
    """Exact optimum with dual certificate, or Infeasible/Unbounded status."""
    m = len(problem.rows)
    n = len(problem.objective)
    flipped = [problem.rhs[i] < 0 for i in range(m)]
    artificial_rows = [i for i in range(m) if flipped[i]]
    k = len(artificial_rows)
    width = n + m + k + 1  # x | slack | artificial | rhs

    tableau: list[list[Fraction]] = []
    basis: list[int] = []
    art_col = {row: n + m + j for j, row in enumerate(artificial_rows)}
    for i in range(m):
        sign = -1 if flipped[i] else 1
        line = [sign * a for a in problem.rows[i]]
        line += [_ONE * sign if j == i else _ZERO for j in range(m)]
        line += [_ONE if art_col.get(i) == n + m + j else _ZERO for j in range(k)]
        line.append(sign * problem.rhs[i])
        tableau.append(line)
        basis.append(art_col[i] if flipped[i] else n + i)

    structural = list(range(n + m))

    if k:
        # Phase I: maximize minus the artificial total.  The bottom row holds
        # z_j - c_j, which for the starting artificial basis is the negated
        # sum of the artificial rows with zeros in the artificial block.
        phase1 = [_ZERO] * width
        for i in artificial_rows:
            phase1 = [a - b for a, b in zip(phase1, tableau[i])]
        for col in art_col.values():
            phase1[col] += _ONE
        tableau.append(phase1)
        if _run_simplex(tableau, basis, structural) != "optimal":
            raise ArithmeticError("phase I cannot be unbounded")
        if tableau[-1][-1] != 0:
            return LpSolution(LpStatus.INFEASIBLE)
        tableau.pop()
        # Drive any artificial still basic at zero out of the basis.
        for i in range(m):
            if basis[i] >= n + m:
                swap = next((j for j in structural if tableau[i][j] != 0), None)
                if swap is None:
                    tableau[i] = [_ZERO] * width  # redundant constraint
                    basis[i] = -1
                else:
                    _pivot(tableau, basis, i, swap)

    objective = [_ZERO] * width
    for j in range(n):
        objective[j] = -problem.objective[j]
    tableau.append(objective)
    for i in range(m):
        if basis[i] >= 0 and basis[i] < n and problem.objective[basis[i]]:
            factor = problem.objective[basis[i]]
            tableau[-1] = [a + factor * b for a, b in zip(tableau[-1], tableau[i])]

    if _run_simplex(tableau, basis, structural) == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED)

    primal = [_ZERO] * n
    for i in range(m):
        if 0 <= basis[i] < n:
            primal[basis[i]] = tableau[i][-1]
    dual = [tableau[-1][n + i] for i in range(m)]
    value = tableau[-1][-1]
    return LpSolution(LpStatus.OPTIMAL, value, tuple(primal), tuple(dual))


def verify_certificate(problem: LpProblem, solution: LpSolution) -> bool:
    """Exact primal feasibility, dual feasibility, and strong duality check."""
    if solution.status is not LpStatus.OPTIMAL:
        return False
    if solution.primal is None or solution.dual is None or solution.value is None:
        return False
    x, y = solution.primal, solution.dual
    if len(x) != len(problem.objective) or len(y) != len(problem.rows):
        return False
    if any(v < 0 for v in x) or any(v < 0 for v in y):
        return False
    for row, bound in zip(problem.rows, problem.rhs):
        if sum(a * v for a, v in zip(row, x)) > bound:
            return False
    for j, cost in enumerate(problem.objective):
        if sum(y[i] * problem.rows[i][j] for i in range(len(y))) < cost:
            return False
    primal_value = sum(c * v for c, v in zip(problem.objective, x))
    dual_value = sum(b * v for b, v in zip(problem.rhs, y))
    return primal_value == solution.value and dual_value == solution.value


def _normalize_inequality(row: tuple[Fraction, ...]) -> tuple[Fraction, ...]:
    lead = next((a for a in row[:-1] if a != 0), None)
    if lead is None:
        return row
    scale = _ONE / abs(lead)
    return tuple(a * scale for a in row)


def fm_oracle(problem: LpProblem, max_variables: int = 8) -> LpSolution:
    """Optimum by Fourier-Motzkin elimination; mirrors the simplex statuses.

    Encodes the objective as an extra variable ``t <= c . x`` and eliminates
    the decision variables one at a time.  Exponential in the worst case,
    hence the size guard.
    """
    n = len(problem.objective)
    if n > max_variables:
        raise TooLargeError(f"{n} variables exceed the oracle cap {max_variables}")

    # Row layout: coefficients of x_0..x_{n-1}, then t, then the constant:
    # sum(coeffs * vars) + coeff_t * t <= constant.
    rows: set[tuple[Fraction, ...]] = set()
    for row, bound in zip(problem.rows, problem.rhs):
        rows.add(_normalize_inequality(row + (_ZERO, bound)))
    for j in range(n):
        nonneg = [_ZERO] * (n + 2)
        nonneg[j] = Fraction(-1)
        rows.add(tuple(nonneg))
    hook = tuple(-c for c in problem.objective) + (_ONE, _ZERO)
    rows.add(_normalize_inequality(hook))

    for j in range(n):
        uppers, lowers, rest = [], [], []
        for row in rows:
            if row[j] > 0:
                uppers.append(row)
            elif row[j] < 0:
                lowers.append(row)
            else:
                rest.append(row)
        combined: set[tuple[Fraction, ...]] = set(rest)
        for up in uppers:
            up_scaled = tuple(a / up[j] for a in up)
            for low in lowers:
                low_scaled = tuple(a / -low[j] for a in low)
                merged = tuple(a + b for a, b in zip(up_scaled, low_scaled))
                combined.add(_normalize_inequality(merged))
        rows = combined
        for row in rows:
            if all(a == 0 for a in row[:-1]) and row[-1] < 0:
                return LpSolution(LpStatus.INFEASIBLE)

    best: Fraction | None = None
    for row in rows:
        coeff_t, const = row[-2], row[-1]
        if coeff_t > 0:
            bound = const / coeff_t
            if best is None or bound < best:
                best = bound
        elif coeff_t == 0 and const < 0:
            return LpSolution(LpStatus.INFEASIBLE)
    if best is None:
        return LpSolution(LpStatus.UNBOUNDED)
    return LpSolution(LpStatus.OPTIMAL, best)

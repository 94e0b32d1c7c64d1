"""Contextual fraction, contextuality classes, and the dimension hierarchy.

The non-contextual fraction is the optimum of an exact linear program over
the incidence matrix of global assignments against local events; its dual
certificate is verified on every solve.  Classification combines that value
with a backtracking search over outcome supports, and the hierarchy probes
how the fraction changes under skeleton restriction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import product
from typing import Mapping

from .lp import LpStatus, lp_problem, solve_simplex, verify_certificate
from .model import (
    DEFAULT_ASSIGNMENT_CAP,
    DisturbingModelError,
    EmpiricalModel,
    disturbance_report,
    global_assignments,
    restrict_assignment,
    restrict_to_skeleton,
    support,
)
from .scenario import Context, dimension


class ContextualityClass(Enum):
    NON_CONTEXTUAL = "NonContextual"
    PROBABILISTIC = "Probabilistic"
    POSSIBILISTIC = "Possibilistic"
    STRONG = "Strong"


@dataclass(frozen=True)
class IncidenceMatrix:
    """0/1 matrix: local events of maximal contexts against global assignments."""

    rows: tuple[tuple[Context, tuple[str, ...]], ...]
    columns: tuple[tuple[str, ...], ...]
    entries: tuple[tuple[int, ...], ...]


def incidence_matrix(
    m: EmpiricalModel, cap: int = DEFAULT_ASSIGNMENT_CAP
) -> IncidenceMatrix:
    """Rows ordered by (sorted context, lexicographic tuple); columns by assignment."""
    order = sorted(m.scenario.vertices)
    columns = global_assignments(m.scenario, m.fibers, cap)
    rows: list[tuple[Context, tuple[str, ...]]] = []
    for ctx in sorted(m.scenario.maximal_contexts):
        rows.extend((ctx, t) for t in m.distributions[ctx].weights)
    entries = []
    for ctx, t in rows:
        entries.append(
            tuple(
                1 if restrict_assignment(g, order, ctx) == t else 0 for g in columns
            )
        )
    return IncidenceMatrix(tuple(rows), tuple(columns), tuple(entries))


@dataclass(frozen=True)
class FractionResult:
    ncf: Fraction
    cf: Fraction
    witness_b: tuple[Fraction, ...]
    certified: bool


def contextual_fraction(
    m: EmpiricalModel, cap: int = DEFAULT_ASSIGNMENT_CAP
) -> FractionResult:
    """Maximize the total weight of a sub-distribution over global assignments."""
    matrix = incidence_matrix(m, cap)
    p = [m.distributions[ctx].weights[t] for ctx, t in matrix.rows]
    problem = lp_problem([1] * len(matrix.columns), matrix.entries, p)
    solution = solve_simplex(problem)
    if solution.status is not LpStatus.OPTIMAL:
        raise ArithmeticError(f"fraction LP ended {solution.status}")
    ncf = solution.value
    return FractionResult(
        ncf=ncf,
        cf=1 - ncf,
        witness_b=solution.primal,
        certified=verify_certificate(problem, solution),
    )


def _search_supports(
    m: EmpiricalModel, forced: Mapping[str, str] | None = None
) -> bool:
    """Is there a global assignment consistent with every context support?"""
    sup = support(m)
    supports = {ctx: sup.supported(ctx) for ctx in m.scenario.maximal_contexts}
    order = sorted(m.scenario.vertices)
    position = {v: i for i, v in enumerate(order)}
    by_context = {ctx: [position[v] for v in ctx] for ctx in supports}

    def consistent(partial: list[str | None]) -> bool:
        for ctx, indices in by_context.items():
            picked = [partial[i] for i in indices]
            if not any(
                all(p is None or p == t[k] for k, p in enumerate(picked))
                for t in supports[ctx]
            ):
                return False
        return True

    assignment: list[str | None] = [None] * len(order)
    if forced:
        for v, label in forced.items():
            assignment[position[v]] = label
    if not consistent(assignment):
        return False

    free = [i for i in range(len(order)) if assignment[i] is None]

    def extend(k: int) -> bool:
        if k == len(free):
            return True
        i = free[k]
        for label in m.fibers[order[i]].labels:
            assignment[i] = label
            if consistent(assignment) and extend(k + 1):
                return True
            assignment[i] = None
        return False

    return extend(0)


def possibilistic_extendable(
    m: EmpiricalModel,
) -> dict[tuple[Context, tuple[str, ...]], bool]:
    """For each supported local event, whether a support-consistent global
    assignment restricts to it."""
    result: dict[tuple[Context, tuple[str, ...]], bool] = {}
    sup = support(m)
    for ctx in sorted(m.scenario.maximal_contexts):
        for t in sorted(sup.supported(ctx)):
            forced = dict(zip(ctx, t))
            result[(ctx, t)] = _search_supports(m, forced)
    return result


def classify(m: EmpiricalModel, cap: int = DEFAULT_ASSIGNMENT_CAP) -> ContextualityClass:
    """Strong / Possibilistic / Probabilistic / NonContextual, in that order."""
    if not _search_supports(m):
        return ContextualityClass.STRONG
    if not all(possibilistic_extendable(m).values()):
        return ContextualityClass.POSSIBILISTIC
    if contextual_fraction(m, cap).cf > 0:
        return ContextualityClass.PROBABILISTIC
    return ContextualityClass.NON_CONTEXTUAL


@dataclass(frozen=True)
class HierarchyProfile:
    cf_by_dim: Mapping[int, Fraction]
    monotone_nondecreasing: bool


def hierarchy(m: EmpiricalModel, cap: int = DEFAULT_ASSIGNMENT_CAP) -> HierarchyProfile:
    """Contextual fraction of each skeleton restriction, up to the top dimension."""
    if not disturbance_report(m).is_nondisturbing:
        raise DisturbingModelError("the hierarchy needs a non-disturbing model")
    top = max(dimension(c) for c in m.scenario.maximal_contexts)
    cf_by_dim: dict[int, Fraction] = {}
    for n in range(1, top + 1):
        restricted = restrict_to_skeleton(m, n)
        cf_by_dim[n] = contextual_fraction(restricted, cap).cf
    values = [cf_by_dim[n] for n in range(1, top + 1)]
    monotone = all(a <= b for a, b in zip(values, values[1:]))
    return HierarchyProfile(cf_by_dim, monotone)

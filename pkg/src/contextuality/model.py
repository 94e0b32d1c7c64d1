"""Empirical models: exact rational joint distributions on maximal contexts.

Probabilities are `fractions.Fraction` end to end; nothing here ever rounds.
Distributions live only on maximal contexts and every sub-context measure is
derived by marginalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping

from .scenario import (
    Context,
    SimplicialScenario,
    build_scenario,
    dimension,
    make_context,
)

DEFAULT_ASSIGNMENT_CAP = 2**20


class ModelError(Exception):
    """Base class for empirical-model errors."""


class NotASubcontextError(ModelError):
    pass


class DisturbingModelError(ModelError):
    pass


class DimensionTooLargeError(ModelError):
    pass


class TooManyAssignmentsError(ModelError):
    pass


class BadWeightsError(ModelError):
    pass


@dataclass(frozen=True)
class OutcomeFiber:
    """Ordered outcome labels of one vertex; the order fixes every basis."""

    vertex: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ModelError(f"fiber of {self.vertex!r} has no outcomes")
        if len(set(self.labels)) != len(self.labels):
            raise ModelError(f"fiber of {self.vertex!r} has duplicate labels")

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class JointDistribution:
    """Exact distribution over the full outcome product of one context."""

    context: Context
    weights: Mapping[tuple[str, ...], Fraction]


def outcome_tuples(
    context: Context, fibers: Mapping[str, OutcomeFiber]
) -> list[tuple[str, ...]]:
    """Cartesian product of the fibers, lexicographic in fiber-label order."""
    return [tuple(t) for t in product(*(fibers[v].labels for v in context))]


def joint_distribution(
    context: Iterable[str],
    fibers: Mapping[str, OutcomeFiber],
    weights: Mapping[tuple[str, ...], Fraction],
) -> JointDistribution:
    """Validate and normalize: explicit zeros, nonnegativity, unit total."""
    ctx = make_context(context)
    labels = {v: set(fibers[v].labels) for v in ctx}
    full: dict[tuple[str, ...], Fraction] = {
        t: Fraction(0) for t in outcome_tuples(ctx, fibers)
    }
    total = Fraction(0)
    for key, value in weights.items():
        key = tuple(key)
        if len(key) != len(ctx) or any(o not in labels[v] for v, o in zip(ctx, key)):
            raise ModelError(f"outcome tuple {key!r} does not match context {ctx!r}")
        weight = Fraction(value)
        if weight < 0:
            raise ModelError(f"negative weight {weight} at {ctx!r} -> {key!r}")
        full[key] = weight
        total += weight
    if total != 1:
        raise ModelError(f"weights on {ctx!r} sum to {total}, expected 1")
    return JointDistribution(ctx, full)


@dataclass(frozen=True)
class EmpiricalModel:
    scenario: SimplicialScenario
    fibers: Mapping[str, OutcomeFiber]
    distributions: Mapping[Context, JointDistribution]


def empirical_model(
    scenario: SimplicialScenario,
    fibers: Mapping[str, OutcomeFiber],
    distributions: Mapping[Context, Mapping[tuple[str, ...], Fraction]],
) -> EmpiricalModel:
    """Validating constructor: one normalized distribution per maximal context."""
    for v in scenario.vertices:
        if v not in fibers:
            raise ModelError(f"vertex {v!r} has no outcome fiber")
    table: dict[Context, JointDistribution] = {}
    for ctx in sorted(scenario.maximal_contexts):
        if ctx not in distributions:
            raise ModelError(f"maximal context {ctx!r} has no distribution")
        table[ctx] = joint_distribution(ctx, fibers, distributions[ctx])
    extra = set(distributions) - set(table)
    if extra:
        raise ModelError(f"distributions on non-maximal contexts: {sorted(extra)}")
    return EmpiricalModel(scenario, dict(fibers), table)


def marginalize(d: JointDistribution, sub: Iterable[str]) -> JointDistribution:
    """Sum out the vertices of ``d.context`` not in ``sub``; exact."""
    target = make_context(sub)
    if not set(target) <= set(d.context):
        raise NotASubcontextError(f"{target!r} is not a sub-context of {d.context!r}")
    keep = [d.context.index(v) for v in target]
    out: dict[tuple[str, ...], Fraction] = {}
    for key, weight in d.weights.items():
        short = tuple(key[i] for i in keep)
        out[short] = out.get(short, Fraction(0)) + weight
    return JointDistribution(target, out)


@dataclass(frozen=True)
class DisturbancePair:
    first: Context
    second: Context
    intersection: Context
    discrepancy: Fraction


@dataclass(frozen=True)
class DisturbanceReport:
    pairs: tuple[DisturbancePair, ...]

    @property
    def is_nondisturbing(self) -> bool:
        return all(p.discrepancy == 0 for p in self.pairs)

    @property
    def max_discrepancy(self) -> Fraction:
        return max((p.discrepancy for p in self.pairs), default=Fraction(0))


def disturbance_report(m: EmpiricalModel) -> DisturbanceReport:
    """Exact marginal comparison on every intersecting pair of maximal contexts."""
    pairs = []
    maximal = sorted(m.scenario.maximal_contexts)
    for i, u1 in enumerate(maximal):
        for u2 in maximal[i + 1 :]:
            shared = sorted(set(u1) & set(u2))
            if not shared:
                continue
            meet = make_context(shared)
            m1 = marginalize(m.distributions[u1], meet)
            m2 = marginalize(m.distributions[u2], meet)
            gap = max(abs(m1.weights[t] - m2.weights[t]) for t in m1.weights)
            pairs.append(DisturbancePair(u1, u2, meet, gap))
    return DisturbanceReport(tuple(pairs))


def restrict_to_skeleton(m: EmpiricalModel, n: int) -> EmpiricalModel:
    """Replace maximal contexts of dimension >= ``n`` by their ``n``-faces.

    Smaller maximal contexts are kept at their own level.  Requires a
    non-disturbing model, otherwise the marginal on a shared face would be
    ambiguous.
    """
    if n < 1:
        raise DimensionTooLargeError("skeleton level must be at least 1")
    if all(dimension(c) < n for c in m.scenario.maximal_contexts):
        raise DimensionTooLargeError(
            f"no maximal context has dimension {n} or above"
        )
    if not disturbance_report(m).is_nondisturbing:
        raise DisturbingModelError("skeleton restriction needs a non-disturbing model")

    from itertools import combinations

    candidates: set[Context] = set()
    for ctx in m.scenario.maximal_contexts:
        if dimension(ctx) >= n:
            candidates.update(combinations(ctx, n + 1))
        else:
            candidates.add(ctx)
    new_maximal = {
        c
        for c in candidates
        if not any(c != d and set(c) < set(d) for d in candidates)
    }
    scenario = build_scenario(
        sorted(set().union(*(set(c) for c in new_maximal))), new_maximal
    )
    distributions: dict[Context, Mapping[tuple[str, ...], Fraction]] = {}
    for ctx in new_maximal:
        if ctx in m.distributions:
            distributions[ctx] = m.distributions[ctx].weights
        else:
            source = min(c for c in m.scenario.maximal_contexts if set(ctx) <= set(c))
            distributions[ctx] = marginalize(m.distributions[source], ctx).weights
    fibers = {v: m.fibers[v] for v in scenario.vertices}
    return empirical_model(scenario, fibers, distributions)


@dataclass(frozen=True)
class SupportModel:
    """Possibilistic coarse-graining: Boolean weights on the same shape."""

    scenario: SimplicialScenario
    fibers: Mapping[str, OutcomeFiber]
    supports: Mapping[Context, Mapping[tuple[str, ...], bool]]

    def supported(self, context: Context) -> set[tuple[str, ...]]:
        return {t for t, ok in self.supports[context].items() if ok}


def support(m: EmpiricalModel) -> SupportModel:
    supports = {
        ctx: {t: w > 0 for t, w in d.weights.items()}
        for ctx, d in m.distributions.items()
    }
    return SupportModel(m.scenario, m.fibers, supports)


def global_assignments(
    scenario: SimplicialScenario,
    fibers: Mapping[str, OutcomeFiber],
    cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> list[tuple[str, ...]]:
    """All outcome assignments over the sorted vertices, lexicographically."""
    order = sorted(scenario.vertices)
    count = 1
    for v in order:
        count *= len(fibers[v].labels)
        if count > cap:
            raise TooManyAssignmentsError(
                f"assignment space exceeds cap {cap} ({count}+ assignments)"
            )
    return [tuple(t) for t in product(*(fibers[v].labels for v in order))]


def restrict_assignment(
    assignment: tuple[str, ...], order: list[str], context: Context
) -> tuple[str, ...]:
    positions = {v: i for i, v in enumerate(order)}
    return tuple(assignment[positions[v]] for v in context)


def synthesize_noncontextual(
    scenario: SimplicialScenario,
    fibers: Mapping[str, OutcomeFiber],
    weighted_assignments: Mapping[tuple[str, ...], Fraction],
) -> EmpiricalModel:
    """Pushforward of a mixture of global assignments; non-disturbing by construction.

    Assignment keys are outcome tuples aligned with the sorted vertex order.
    """
    order = sorted(scenario.vertices)
    labels = {v: set(fibers[v].labels) for v in order}
    total = Fraction(0)
    for key, value in weighted_assignments.items():
        if len(key) != len(order) or any(
            o not in labels[v] for v, o in zip(order, key)
        ):
            raise BadWeightsError(f"assignment {key!r} does not match the fibers")
        weight = Fraction(value)
        if weight < 0:
            raise BadWeightsError(f"negative weight {weight} on {key!r}")
        total += weight
    if total != 1:
        raise BadWeightsError(f"assignment weights sum to {total}, expected 1")

    distributions: dict[Context, dict[tuple[str, ...], Fraction]] = {}
    for ctx in scenario.maximal_contexts:
        row: dict[tuple[str, ...], Fraction] = {}
        for key, weight in weighted_assignments.items():
            local = restrict_assignment(tuple(key), order, ctx)
            row[local] = row.get(local, Fraction(0)) + Fraction(weight)
        distributions[ctx] = row
    return empirical_model(scenario, fibers, distributions)


def binary_fibers(vertices: Iterable[str]) -> dict[str, OutcomeFiber]:
    """Convenience: the ubiquitous {0,1} fiber on every vertex."""
    return {v: OutcomeFiber(v, ("0", "1")) for v in vertices}

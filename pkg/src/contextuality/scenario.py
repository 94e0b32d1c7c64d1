"""Measurement scenarios as finite simplicial complexes.

A scenario is a set of vertices (measurements) together with the downward
closure of its declared maximal contexts.  This module also houses the
hypergraph machinery used downstream: Graham reduction for acyclicity,
skeleton extraction, fundamental cycle bases, and oriented face boundaries.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from random import Random
from typing import Iterable, Mapping, Sequence

Context = tuple[str, ...]

_VERTEX_TOKEN = re.compile(r"^[^\s,]+$")


class ScenarioError(Exception):
    """Base class for scenario construction and query errors."""


class UnknownVertexError(ScenarioError):
    pass


class UncoveredVertexError(ScenarioError):
    pass


class RedundantMaximalContextError(ScenarioError):
    pass


class WrongDimensionError(ScenarioError):
    pass


class DisconnectedGraphError(ScenarioError):
    pass


def make_context(vertices: Iterable[str]) -> Context:
    """Canonical context: sorted, duplicate-free tuple of vertex labels."""
    items = tuple(sorted(vertices))
    if not items:
        raise ScenarioError("a context must contain at least one vertex")
    if len(set(items)) != len(items):
        raise ScenarioError(f"duplicate vertices in context {items!r}")
    return items


def _check_vertex_label(label: str) -> None:
    if not isinstance(label, str) or not _VERTEX_TOKEN.match(label):
        raise ScenarioError(
            f"vertex label {label!r} must be a nonempty token without commas or whitespace"
        )


def dimension(context: Context) -> int:
    return len(context) - 1


@dataclass(frozen=True)
class SimplicialScenario:
    """Vertices plus the downward closure of the declared maximal contexts."""

    vertices: frozenset[str]
    maximal_contexts: frozenset[Context]
    complex: frozenset[Context]

    @property
    def dim(self) -> int:
        return max(dimension(c) for c in self.maximal_contexts)

    def contexts_containing(self, context: Context) -> list[Context]:
        """Maximal contexts containing the given one, in sorted order."""
        sub = set(context)
        return sorted(c for c in self.maximal_contexts if sub.issubset(c))


def build_scenario(
    vertices: Iterable[str], maximal_contexts: Iterable[Iterable[str]]
) -> SimplicialScenario:
    """Validate the declaration and derive the full complex.

    The derived complex contains every nonempty subset of a maximal context,
    so intersection closure holds automatically.
    """
    vertex_set = frozenset(vertices)
    if not vertex_set:
        raise ScenarioError("a scenario needs at least one vertex")
    for v in vertex_set:
        _check_vertex_label(v)

    maximal = frozenset(make_context(c) for c in maximal_contexts)
    if not maximal:
        raise ScenarioError("a scenario needs at least one maximal context")
    for ctx in maximal:
        for v in ctx:
            if v not in vertex_set:
                raise UnknownVertexError(f"context {ctx!r} uses undeclared vertex {v!r}")
    covered = set().union(*(set(c) for c in maximal))
    for v in sorted(vertex_set - covered):
        raise UncoveredVertexError(f"vertex {v!r} lies in no maximal context")
    for small, large in combinations(sorted(maximal), 2):
        if set(small) <= set(large) or set(large) <= set(small):
            raise RedundantMaximalContextError(
                f"declared maximal contexts {small!r} and {large!r} are nested"
            )

    closure: set[Context] = set()
    for ctx in maximal:
        for size in range(1, len(ctx) + 1):
            closure.update(combinations(ctx, size))
    return SimplicialScenario(vertex_set, maximal, frozenset(closure))


def faces(scenario: SimplicialScenario, n: int) -> set[Context]:
    """All contexts of dimension exactly ``n`` (empty set beyond the top)."""
    if n < 0:
        raise WrongDimensionError("dimension must be nonnegative")
    return {c for c in scenario.complex if dimension(c) == n}


@dataclass(frozen=True)
class ReductionStep:
    kind: str  # "delete_vertex" | "delete_hyperedge"
    vertex: str | None
    hyperedge: Context


@dataclass
class ReductionTrace:
    steps: list[ReductionStep] = field(default_factory=list)
    residual: frozenset[Context] = frozenset()

    @property
    def acyclic(self) -> bool:
        return not self.residual


def _legal_actions(edges: set[Context]) -> list[tuple[str, str | Context, Context]]:
    actions: list[tuple[str, str | Context, Context]] = []
    counts: dict[str, list[Context]] = {}
    for edge in edges:
        for v in edge:
            counts.setdefault(v, []).append(edge)
    for v in sorted(counts):
        if len(counts[v]) == 1:
            actions.append(("delete_vertex", v, counts[v][0]))
    for small in sorted(edges):
        if any(small != large and set(small) < set(large) for large in edges):
            actions.append(("delete_hyperedge", small, small))
    return actions


def graham_reduce(
    hyperedges: Iterable[Iterable[str]], rng: Random | None = None
) -> ReductionTrace:
    """Run Graham's two deletion rules to exhaustion.

    The deterministic order deletes the lexicographically smallest applicable
    vertex first, then the smallest properly contained hyperedge.  Passing an
    ``rng`` instead picks uniformly among all currently legal actions, which
    the confluence tests use to randomize rule order.  A hyperedge emptied by
    vertex deletions is dropped as part of the same step.
    """
    edges = {make_context(e) for e in hyperedges}
    trace = ReductionTrace()
    while True:
        actions = _legal_actions(edges)
        if not actions:
            break
        if rng is None:
            kind, subject, edge = actions[0]
        else:
            kind, subject, edge = actions[rng.randrange(len(actions))]
        if kind == "delete_vertex":
            edges.discard(edge)
            remainder = tuple(v for v in edge if v != subject)
            if remainder:
                edges.add(remainder)
            trace.steps.append(ReductionStep("delete_vertex", subject, edge))
        else:
            edges.discard(edge)
            trace.steps.append(ReductionStep("delete_hyperedge", None, edge))
    trace.residual = frozenset(edges)
    return trace


def is_acyclic(scenario: SimplicialScenario) -> bool:
    """Voroby'ev-style verdict: Graham reduction of the maximal contexts empties."""
    return graham_reduce(scenario.maximal_contexts).acyclic


def one_skeleton(scenario: SimplicialScenario) -> dict[str, tuple[str, ...]]:
    """Undirected graph on the vertices with the 1-faces as edges."""
    adjacency: dict[str, set[str]] = {v: set() for v in scenario.vertices}
    for a, b in faces(scenario, 1):
        adjacency[a].add(b)
        adjacency[b].add(a)
    return {v: tuple(sorted(adjacency[v])) for v in sorted(adjacency)}


def cycle_basis(graph: Mapping[str, Sequence[str]], base: str) -> list[list[str]]:
    """Fundamental cycles of the BFS spanning tree from ``base``.

    Neighbors are visited in lexicographic order, so the basis is
    deterministic.  Each cycle is returned as a closed vertex path starting
    and ending at ``base``; there are ``|E| - |V| + 1`` of them.
    """
    if base not in graph:
        raise UnknownVertexError(f"base vertex {base!r} not in graph")
    parent: dict[str, str | None] = {base: None}
    order = [base]
    queue = deque([base])
    while queue:
        u = queue.popleft()
        for w in graph[u]:
            if w not in parent:
                parent[w] = u
                order.append(w)
                queue.append(w)
    if len(parent) != len(graph):
        missing = sorted(set(graph) - set(parent))
        raise DisconnectedGraphError(f"vertices unreachable from {base!r}: {missing}")

    def path_from_base(v: str) -> list[str]:
        path = []
        node: str | None = v
        while node is not None:
            path.append(node)
            node = parent[node]
        path.reverse()
        return path

    tree_edges = {
        tuple(sorted((v, p))) for v, p in parent.items() if p is not None
    }
    all_edges = {
        tuple(sorted((u, w))) for u in graph for w in graph[u]
    }
    cycles = []
    for u, w in sorted(all_edges - tree_edges):
        to_u = path_from_base(u)
        to_w = path_from_base(w)
        cycles.append(to_u + list(reversed(to_w)))
    return cycles


def boundary(face: Context) -> list[tuple[str, str]]:
    """Oriented edge loop of a 2-simplex in cyclic vertex order."""
    if dimension(face) != 2:
        raise WrongDimensionError(f"boundary needs a 2-simplex, got {face!r}")
    a, b, c = face
    return [(a, b), (b, c), (c, a)]

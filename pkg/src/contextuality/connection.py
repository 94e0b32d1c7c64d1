"""The contextual connection on the 1-skeleton of a scenario.

Each directed edge carries the column-stochastic kernel of its joint
distribution; the orthogonal factor of that kernel (via singular value
decomposition) drives parallel transport, holonomy groups, and per-face
curvature.  Kernels stay exact rationals; floats appear only inside the
SVD.  Disturbing models are handled through transition kernels at the
vertices, either looked up in a user atlas or synthesized canonically.

Orientation convention: for an edge transporting from ``s`` to ``t`` the
kernel has rows indexed by ``t`` outcomes and columns by ``s`` outcomes,
entry ``p(t | s)``, so ``K @ mu_s = mu_t`` for non-disturbing models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .model import (
    DisturbingModelError,
    EmpiricalModel,
    JointDistribution,
    OutcomeFiber,
    empirical_model,
    marginalize,
)
from .scenario import (
    Context,
    WrongDimensionError,
    boundary,
    build_scenario,
    cycle_basis,
    faces,
    make_context,
    one_skeleton,
)

DEFAULT_TOL = 1e-9
DEFAULT_SVD_TOL = 1e-12
GROUP_CLOSURE_CAP = 64
_JACOBI_SWEEP_CAP = 60


class TransportError(Exception):
    """Base class for connection-layer errors."""


class SingularKernelError(TransportError):
    def __init__(self, message: str, min_singular_value: float):
        super().__init__(message)
        self.min_singular_value = min_singular_value


class NoDistributionForEdgeError(TransportError):
    pass


class MissingEdgeError(TransportError):
    pass


class MissingTransitionError(TransportError):
    pass


class NoConvergenceError(TransportError):
    pass


class IncompleteAtlasError(TransportError):
    pass


Matrix = list[list[float]]


def _identity(d: int) -> Matrix:
    return [[1.0 if i == j else 0.0 for j in range(d)] for i in range(d)]


def _mat_mul(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> Matrix:
    return [
        [sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
        for i in range(len(a))
    ]


def _transpose(a: Sequence[Sequence[float]]) -> Matrix:
    return [list(col) for col in zip(*a)]


def _max_abs_diff(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> float:
    return max(
        abs(x - y) for row_a, row_b in zip(a, b) for x, y in zip(row_a, row_b)
    )


def _det(a: Sequence[Sequence[float]]) -> float:
    # Gaussian elimination with partial pivoting; d <= 8 here.
    d = len(a)
    work = [list(row) for row in a]
    det = 1.0
    for col in range(d):
        pivot = max(range(col, d), key=lambda r: abs(work[r][col]))
        if abs(work[pivot][col]) == 0.0:
            return 0.0
        if pivot != col:
            work[col], work[pivot] = work[pivot], work[col]
            det = -det
        det *= work[col][col]
        for r in range(col + 1, d):
            factor = work[r][col] / work[col][col]
            if factor:
                for c in range(col, d):
                    work[r][c] -= factor * work[col][c]
    return det


@dataclass(frozen=True)
class StochasticKernel:
    """Column-stochastic matrix realizing transport along a directed edge."""

    source: str
    target: str
    source_labels: tuple[str, ...]
    target_labels: tuple[str, ...]
    matrix: tuple[tuple[Fraction, ...], ...]  # rows: target outcomes, cols: source
    padded_columns: frozenset[str] = frozenset()

    def column(self, source_label: str) -> tuple[Fraction, ...]:
        j = self.source_labels.index(source_label)
        return tuple(row[j] for row in self.matrix)

    def apply(self, distribution: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(
            sum(row[j] * distribution[j] for j in range(len(distribution)))
            for row in self.matrix
        )

    def as_floats(self) -> Matrix:
        return [[float(x) for x in row] for row in self.matrix]


@dataclass(frozen=True)
class OrthogonalPart:
    """Orthogonal factor U V^T extracted from a stochastic kernel."""

    matrix: tuple[tuple[float, ...], ...]
    det_sign: int
    tol: float

    def as_lists(self) -> Matrix:
        return [list(row) for row in self.matrix]


@dataclass
class TransitionAtlas:
    """User-supplied transition kernels, keyed by (vertex, incoming, outgoing)."""

    entries: dict[tuple[str, Context, Context], StochasticKernel] = field(
        default_factory=dict
    )

    def add(self, vertex: str, incoming: Context, outgoing: Context,
            kernel: StochasticKernel) -> None:
        self.entries[(vertex, make_context(incoming), make_context(outgoing))] = kernel

    def lookup(
        self, vertex: str, incoming: Context, outgoing: Context
    ) -> StochasticKernel | None:
        return self.entries.get((vertex, incoming, outgoing))


def edge_joint(m: EmpiricalModel, edge: Iterable[str]) -> JointDistribution:
    """Joint distribution on a 1-face: direct if maximal, else marginalized.

    Marginalizing is only unambiguous when every maximal context containing
    the edge agrees, so disagreement raises for disturbing models.
    """
    ctx = make_context(edge)
    if len(ctx) != 2:
        raise MissingEdgeError(f"{ctx!r} is not an edge")
    if ctx in m.distributions:
        return m.distributions[ctx]
    owners = m.scenario.contexts_containing(ctx)
    if not owners:
        raise NoDistributionForEdgeError(f"no maximal context contains edge {ctx!r}")
    candidates = [marginalize(m.distributions[u], ctx) for u in owners]
    first = candidates[0]
    for other in candidates[1:]:
        if other.weights != first.weights:
            raise DisturbingModelError(
                f"maximal contexts disagree on the marginal of edge {ctx!r}"
            )
    return first


def _kernel_from_joint(
    joint: JointDistribution,
    fibers: Mapping[str, OutcomeFiber],
    source: str,
    target: str,
) -> StochasticKernel:
    s_labels = fibers[source].labels
    t_labels = fibers[target].labels
    si = joint.context.index(source)
    ti = joint.context.index(target)
    marginal = {s: Fraction(0) for s in s_labels}
    for key, w in joint.weights.items():
        marginal[key[si]] += w
    padded = frozenset(s for s in s_labels if marginal[s] == 0)
    uniform = Fraction(1, len(t_labels))
    matrix = []
    for t in t_labels:
        row = []
        for s in s_labels:
            if s in padded:
                row.append(uniform)
            else:
                pair = {si: s, ti: t}
                w = sum(
                    wt
                    for key, wt in joint.weights.items()
                    if key[si] == s and key[ti] == t
                )
                row.append(w / marginal[s])
        matrix.append(tuple(row))
    return StochasticKernel(source, target, s_labels, t_labels, tuple(matrix), padded)


def edge_kernels(
    m: EmpiricalModel, edge: Iterable[str]
) -> tuple[StochasticKernel, StochasticKernel]:
    """Both directed kernels of an edge (a, b): (K_{b<-a}, K_{a<-b})."""
    a, b = make_context(edge)
    joint = edge_joint(m, (a, b))
    return (
        _kernel_from_joint(joint, m.fibers, a, b),
        _kernel_from_joint(joint, m.fibers, b, a),
    )


def _jacobi_rotation(w: Matrix, v: Matrix, i: int, j: int) -> float:
    """Orthogonalize columns i and j of w (and rotate v along); returns |off|."""
    d = len(w)
    alpha = sum(w[k][i] * w[k][i] for k in range(d))
    beta = sum(w[k][j] * w[k][j] for k in range(d))
    gamma = sum(w[k][i] * w[k][j] for k in range(d))
    if gamma == 0.0:
        return 0.0
    off = abs(gamma) / math.sqrt(alpha * beta) if alpha * beta > 0 else abs(gamma)
    theta = 0.5 * math.atan2(2.0 * gamma, alpha - beta)
    c, s = math.cos(theta), math.sin(theta)
    for mat in (w, v):
        for k in range(len(mat)):
            x, y = mat[k][i], mat[k][j]
            mat[k][i] = c * x + s * y
            mat[k][j] = -s * x + c * y
    return off


def svd(
    matrix: Sequence[Sequence[float]], tol: float = DEFAULT_SVD_TOL
) -> tuple[Matrix, list[float], Matrix]:
    """One-sided Jacobi SVD of a small square matrix: A = U diag(S) V^T.

    For d = 2 a single rotation is exact (the closed form); larger sizes
    sweep until the columns are orthogonal to machine precision.
    """
    d = len(matrix)
    if any(len(row) != d for row in matrix):
        raise ValueError("svd expects a square matrix")
    w = [list(row) for row in matrix]
    v = _identity(d)
    if d == 1:
        pass
    elif d == 2:
        _jacobi_rotation(w, v, 0, 1)
    else:
        for sweep in range(_JACOBI_SWEEP_CAP):
            worst = 0.0
            for i in range(d):
                for j in range(i + 1, d):
                    worst = max(worst, _jacobi_rotation(w, v, i, j))
            if worst <= 1e-15:
                break
        else:
            raise NoConvergenceError("Jacobi sweeps did not converge")

    norms = [math.sqrt(sum(w[k][j] ** 2 for k in range(d))) for j in range(d)]
    order = sorted(range(d), key=lambda j: -norms[j])
    sigma = [norms[j] for j in order]
    u_cols: list[list[float]] = []
    v_cols = [[v[k][j] for k in range(d)] for j in order]
    for rank, j in enumerate(order):
        if norms[j] > tol:
            u_cols.append([w[k][j] / norms[j] for k in range(d)])
        else:
            u_cols.append([0.0] * d)
    # Complete columns lost to zero singular values into an orthonormal basis.
    for idx in range(d):
        if any(u_cols[idx]):
            continue
        for k in range(d):
            candidate = [1.0 if r == k else 0.0 for r in range(d)]
            for col in u_cols:
                dot = sum(a * b for a, b in zip(candidate, col))
                candidate = [a - dot * b for a, b in zip(candidate, col)]
            norm = math.sqrt(sum(a * a for a in candidate))
            if norm > 0.5:
                u_cols[idx] = [a / norm for a in candidate]
                break
    u = [[u_cols[j][k] for j in range(d)] for k in range(d)]
    v_sorted = [[v_cols[j][k] for j in range(d)] for k in range(d)]
    return u, sigma, v_sorted


def orthogonal_part_of(
    matrix: Sequence[Sequence[float]], tol: float = DEFAULT_TOL
) -> OrthogonalPart:
    """U V^T of a square matrix; refuses when the least singular value is ~0."""
    u, sigma, v = svd(matrix)
    if sigma[-1] <= tol:
        raise SingularKernelError(
            f"kernel is singular (min singular value {sigma[-1]:.3e})", sigma[-1]
        )
    q = _mat_mul(u, _transpose(v))
    det = _det(q)
    return OrthogonalPart(tuple(tuple(row) for row in q), 1 if det > 0 else -1, tol)


def phi(kernel: StochasticKernel, tol: float = DEFAULT_TOL) -> OrthogonalPart:
    """Orthogonal factor of a stochastic kernel."""
    return orthogonal_part_of(kernel.as_floats(), tol)


def vertex_transition(
    m: EmpiricalModel, vertex: str, ctx_in: Iterable[str], ctx_out: Iterable[str]
) -> StochasticKernel:
    """Canonical transition kernel at a vertex between two of its contexts.

    Identity (padded on unsupported outcomes) when the two marginals agree;
    otherwise the rank-one kernel whose every column is the outgoing marginal.
    """
    cin, cout = make_context(ctx_in), make_context(ctx_out)
    if vertex not in cin or vertex not in cout:
        raise MissingEdgeError(f"vertex {vertex!r} not shared by {cin!r} and {cout!r}")
    point = make_context([vertex])
    mu_in = _maximal_marginal(m, cin, point)
    mu_out = _maximal_marginal(m, cout, point)
    labels = m.fibers[vertex].labels
    if mu_in.weights == mu_out.weights:
        uniform = Fraction(1, len(labels))
        padded = frozenset(s for s in labels if mu_in.weights[(s,)] == 0)
        matrix = tuple(
            tuple(
                uniform if s in padded else (Fraction(1) if s == t else Fraction(0))
                for s in labels
            )
            for t in labels
        )
        return StochasticKernel(vertex, vertex, labels, labels, matrix, padded)
    matrix = tuple(
        tuple(mu_out.weights[(t,)] for _ in labels) for t in labels
    )
    return StochasticKernel(vertex, vertex, labels, labels, matrix, frozenset())


def _maximal_marginal(
    m: EmpiricalModel, context: Context, sub: Context
) -> JointDistribution:
    if context in m.distributions:
        return marginalize(m.distributions[context], sub)
    raise NoDistributionForEdgeError(f"{context!r} carries no distribution")


def _marginals_agree(m: EmpiricalModel, vertex: str, cin: Context, cout: Context) -> bool:
    point = make_context([vertex])
    return (
        _maximal_marginal(m, cin, point).weights
        == _maximal_marginal(m, cout, point).weights
    )


def _rational_product(
    a: Sequence[Sequence[Fraction]], b: Sequence[Sequence[Fraction]]
) -> list[list[Fraction]]:
    return [
        [
            sum(a[i][k] * b[k][j] for k in range(len(b)))
            for j in range(len(b[0]))
        ]
        for i in range(len(a))
    ]


def transport(
    m: EmpiricalModel,
    path: Sequence[str],
    atlas: TransitionAtlas | None = None,
    tol: float = DEFAULT_TOL,
) -> OrthogonalPart:
    """Ordered product of per-step orthogonal factors along a vertex path.

    For non-disturbing models the vertex transitions are identities.  On a
    disturbed crossing the step kernel becomes K @ t, the transition kernel
    feeding the edge kernel, and the atlas must supply t.  A closed path
    (first vertex = last) also applies the basepoint crossing between the
    final and the first edge.
    """
    if len(path) < 2:
        raise MissingEdgeError("a transport path needs at least two vertices")
    steps = [(path[i], path[i + 1]) for i in range(len(path) - 1)]
    closed = path[0] == path[-1]
    d = len(m.fibers[path[0]].labels)
    accumulated = _identity(d)
    for index, (u, v) in enumerate(steps):
        ctx_out = make_context((u, v))
        if ctx_out not in faces(m.scenario, 1):
            raise MissingEdgeError(f"{u!r} and {v!r} do not share an edge")
        joint = edge_joint(m, ctx_out)
        kernel = _kernel_from_joint(joint, m.fibers, u, v)
        step_matrix = [list(row) for row in kernel.matrix]
        if index > 0 or closed:
            prev = steps[index - 1][0] if index > 0 else path[-2]
            ctx_in = make_context((prev, u))
            if not _marginals_agree(m, u, ctx_in, ctx_out):
                entry = atlas.lookup(u, ctx_in, ctx_out) if atlas else None
                if entry is None:
                    raise MissingTransitionError(
                        f"disturbed crossing at {u!r} from {ctx_in!r} to {ctx_out!r}"
                        " has no transition kernel"
                    )
                step_matrix = _rational_product(step_matrix, entry.matrix)
        q = orthogonal_part_of(
            [[float(x) for x in row] for row in step_matrix], tol
        )
        accumulated = _mat_mul(q.as_lists(), accumulated)
    det = _det(accumulated)
    return OrthogonalPart(
        tuple(tuple(row) for row in accumulated), 1 if det > 0 else -1, tol
    )


@dataclass(frozen=True)
class HolonomyGroupReport:
    basepoint: str
    generators: tuple[OrthogonalPart, ...]
    classification: str
    singular_edges: tuple[Context, ...]
    applicable: bool


def _group_closure(
    generators: list[Matrix], d: int, tol: float, cap: int
) -> list[Matrix] | None:
    elements: list[Matrix] = [_identity(d)]

    def find(candidate: Matrix) -> bool:
        return any(_max_abs_diff(candidate, e) <= tol for e in elements)

    frontier = []
    for g in generators:
        if not find(g):
            elements.append(g)
            frontier.append(g)
    while frontier:
        nxt = []
        for g in frontier:
            for e in list(elements):
                for candidate in (_mat_mul(g, e), _mat_mul(e, g)):
                    if not find(candidate):
                        if len(elements) >= cap:
                            return None
                        elements.append(candidate)
                        nxt.append(candidate)
        frontier = nxt
    return elements


def _element_order(g: Matrix, tol: float, cap: int) -> int | None:
    d = len(g)
    power = g
    for k in range(1, cap + 1):
        if _max_abs_diff(power, _identity(d)) <= tol:
            return k
        power = _mat_mul(power, g)
    return None


def _classify_group(elements: list[Matrix] | None, tol: float) -> str:
    if elements is None:
        return "NotClosedWithinCap"
    k = len(elements)
    if k == 1:
        return "Trivial"
    if any(_element_order(g, tol, k) == k for g in elements):
        return f"CyclicOfOrder({k})"
    return f"FiniteOfOrder({k})"


def singular_edges(
    m: EmpiricalModel, tol: float = DEFAULT_TOL
) -> list[Context]:
    """Edges whose kernel (either direction) has a vanishing singular value."""
    flagged = []
    for edge in sorted(faces(m.scenario, 1)):
        forward, backward = edge_kernels(m, edge)
        smallest = min(
            svd(forward.as_floats())[1][-1], svd(backward.as_floats())[1][-1]
        )
        if smallest <= tol:
            flagged.append(edge)
    return flagged


def holonomy(
    m: EmpiricalModel,
    basepoint: str,
    atlas: TransitionAtlas | None = None,
    tol: float = DEFAULT_TOL,
    cap: int = GROUP_CLOSURE_CAP,
) -> HolonomyGroupReport:
    """Group generated by transports around the fundamental cycles at a basepoint.

    Cycles through singular edges cannot contribute a generator; their edges
    are reported and flip ``applicable`` off, mirroring the non-singularity
    hypothesis of the transport theorems.
    """
    graph = one_skeleton(m.scenario)
    cycles = cycle_basis(graph, basepoint)
    bad = set(singular_edges(m, tol))
    generators = []
    skipped = False
    for cycle in cycles:
        edges = {make_context(pair) for pair in zip(cycle, cycle[1:])}
        if edges & bad:
            skipped = True
            continue
        generators.append(transport(m, cycle, atlas, tol))
    elements = _group_closure([g.as_lists() for g in generators],
                              len(m.fibers[basepoint].labels), tol, cap)
    classification = _classify_group(elements, tol)
    if skipped and elements is not None and len(elements) == 1:
        # No surviving generator may just mean every cycle was singular.
        classification = "Trivial"
    return HolonomyGroupReport(
        basepoint=basepoint,
        generators=tuple(generators),
        classification=classification,
        singular_edges=tuple(sorted(bad)),
        applicable=not bad,
    )


@dataclass(frozen=True)
class CurvatureReport:
    per_face: Mapping[Context, OrthogonalPart]
    flat: bool


def curvature(
    m: EmpiricalModel,
    atlas: TransitionAtlas | None = None,
    tol: float = DEFAULT_TOL,
) -> CurvatureReport:
    """Boundary holonomy of every 2-simplex; flat when all are identities."""
    per_face: dict[Context, OrthogonalPart] = {}
    flat = True
    for face in sorted(faces(m.scenario, 2)):
        loop = boundary(face)
        path = [loop[0][0]] + [edge[1] for edge in loop]
        part = transport(m, path, atlas, tol)
        per_face[face] = part
        d = len(part.matrix)
        if _max_abs_diff(part.as_lists(), _identity(d)) > tol:
            flat = False
    return CurvatureReport(per_face, flat)


def _fresh_label(base: str, taken: set[str]) -> str:
    label = base + "'"
    while label in taken:
        label += "'"
    return label


def extend_with_transitions(
    m: EmpiricalModel, atlas: TransitionAtlas
) -> EmpiricalModel:
    """Resolve a disturbing edge model into a non-disturbing one.

    Every disturbed vertex (which must sit between exactly two edge
    contexts) is split: the incoming edge keeps the vertex, the outgoing
    edge is rewired to a fresh virtual vertex, and the transition kernel
    becomes the joint distribution of the new virtual edge.
    """
    if any(len(c) != 2 for c in m.scenario.maximal_contexts):
        raise WrongDimensionError("transition extension expects an edge model")
    if disturbance_free := disturbance_report(m).is_nondisturbing:
        return m

    edges: dict[Context, tuple[Context, dict[tuple[str, ...], Fraction]]] = {
        c: (c, dict(m.distributions[c].weights)) for c in m.scenario.maximal_contexts
    }
    fibers: dict[str, OutcomeFiber] = dict(m.fibers)
    vertices = set(m.scenario.vertices)

    def incident(vertex: str) -> list[Context]:
        return sorted(c for c in edges if vertex in c)

    for vertex in sorted(m.scenario.vertices):
        around = incident(vertex)
        if len(around) < 2:
            continue
        marginals = []
        for current in around:
            original, weights = edges[current]
            idx = current.index(vertex)
            mu: dict[str, Fraction] = {}
            for key, w in weights.items():
                mu[key[idx]] = mu.get(key[idx], Fraction(0)) + w
            marginals.append(mu)
        if all(mu == marginals[0] for mu in marginals[1:]):
            continue
        if len(around) != 2:
            raise IncompleteAtlasError(
                f"disturbed vertex {vertex!r} joins {len(around)} contexts;"
                " transition insertion needs exactly two"
            )
        # Resolve orientation from whichever atlas entry exists.
        entry = None
        for cin, cout in ((around[0], around[1]), (around[1], around[0])):
            entry = atlas.lookup(vertex, edges[cin][0], edges[cout][0])
            if entry is not None:
                break
        if entry is None:
            raise IncompleteAtlasError(
                f"atlas has no transition for disturbed vertex {vertex!r}"
            )
        incoming, outgoing = cin, cout
        labels = fibers[vertex].labels
        mu_in = marginals[around.index(incoming)]
        virtual = _fresh_label(vertex, vertices)
        vertices.add(virtual)
        fibers[virtual] = OutcomeFiber(virtual, labels)
        # Virtual edge: couple the incoming marginal through the transition.
        virtual_ctx = make_context((vertex, virtual))
        coupling: dict[tuple[str, ...], Fraction] = {}
        for j, s in enumerate(labels):
            for i, t in enumerate(labels):
                w = mu_in.get(s, Fraction(0)) * entry.matrix[i][j]
                key = (s, t) if virtual_ctx == (vertex, virtual) else (t, s)
                coupling[key] = coupling.get(key, Fraction(0)) + w
        edges[virtual_ctx] = (virtual_ctx, coupling)
        # Rewire the outgoing edge onto the virtual vertex.
        original, weights = edges.pop(outgoing)
        other = outgoing[0] if outgoing[1] == vertex else outgoing[1]
        new_ctx = make_context((virtual, other))
        old_pos = outgoing.index(vertex)
        new_pos = new_ctx.index(virtual)
        remapped: dict[tuple[str, ...], Fraction] = {}
        for key, w in weights.items():
            pair = [None, None]
            pair[new_pos] = key[old_pos]
            pair[1 - new_pos] = key[1 - old_pos]
            remapped[tuple(pair)] = w
        edges[new_ctx] = (original, remapped)

    scenario = build_scenario(sorted(vertices), list(edges))
    distributions = {ctx: weights for ctx, (_, weights) in edges.items()}
    extended = empirical_model(
        scenario, {v: fibers[v] for v in scenario.vertices}, distributions
    )
    if not disturbance_report(extended).is_nondisturbing:
        raise IncompleteAtlasError("extension left the model disturbing")
    return extended

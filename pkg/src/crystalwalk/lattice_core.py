"""Quotient-graph data model, builtin lattices, validation and file I/O.

A crystal lattice X is represented implicitly by its finite quotient
X0 = Γ\\X.  Every directed edge of X0 carries an integer translation
τ(e) ∈ Γ ≅ ℤᵈ and a transition probability p(e); the inverse edge ē is
listed explicitly.
"""
from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ._jsonio import dumps
from .errors import GraphFormatError, ParameterError

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class QuotientEdge:
    id: str
    origin: str
    terminus: str
    translation: tuple[int, ...]
    p: float
    inverse: str


@dataclass(frozen=True, eq=False)
class QuotientGraph:
    """Finite quotient graph with translation labels and probabilities.

    Construction only checks referential integrity (known vertices, unique
    ids, existing inverse ids, translation length).  The probabilistic
    invariants are reported by :func:`validate`.
    """

    dim: int
    vertices: tuple[str, ...]
    edges: tuple[QuotientEdge, ...]

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise GraphFormatError("dimension must be a positive integer", "dim")
        verts = tuple(sorted(str(v) for v in self.vertices))
        if len(set(verts)) != len(verts):
            raise GraphFormatError("duplicate vertex id", "vertices")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(self.edges))
        known = set(verts)
        ids = set()
        for k, e in enumerate(self.edges):
            where = f"edges[{k}]"
            if e.id in ids:
                raise GraphFormatError(f"duplicate edge id {e.id!r}", f"{where}.id")
            ids.add(e.id)
            if e.origin not in known:
                raise GraphFormatError(f"unknown vertex {e.origin!r}", f"{where}.from")
            if e.terminus not in known:
                raise GraphFormatError(f"unknown vertex {e.terminus!r}", f"{where}.to")
            if len(e.translation) != self.dim:
                raise GraphFormatError(
                    f"translation has length {len(e.translation)}, expected {self.dim}",
                    f"{where}.translation")
        for k, e in enumerate(self.edges):
            if e.inverse not in ids:
                raise GraphFormatError(f"dangling inverse reference {e.inverse!r}",
                                       f"edges[{k}].inverse")

    # ---- indexed views -------------------------------------------------
    @cached_property
    def vertex_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.edges)}

    @cached_property
    def out_edges(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e in self.edges:
            out[e.origin].append(e.id)
        return {v: tuple(ids) for v, ids in out.items()}

    @cached_property
    def origin_idx(self) -> np.ndarray:
        return np.array([self.vertex_index[e.origin] for e in self.edges], dtype=int)

    @cached_property
    def terminus_idx(self) -> np.ndarray:
        return np.array([self.vertex_index[e.terminus] for e in self.edges], dtype=int)

    @cached_property
    def inverse_idx(self) -> np.ndarray:
        return np.array([self.edge_index[e.inverse] for e in self.edges], dtype=int)

    @cached_property
    def prob(self) -> np.ndarray:
        return np.array([e.p for e in self.edges], dtype=float)

    @cached_property
    def tau(self) -> np.ndarray:
        return np.array([e.translation for e in self.edges], dtype=np.int64).reshape(
            len(self.edges), self.dim)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def base_vertex(self) -> str:
        return self.vertices[0]

    def edge(self, edge_id: str) -> QuotientEdge:
        return self.edges[self.edge_index[edge_id]]

    def transition_matrix(self) -> np.ndarray:
        """L[x][y] = Σ_{e: x→y} p(e)."""
        n = self.n_vertices
        L = np.zeros((n, n))
        np.add.at(L, (self.origin_idx, self.terminus_idx), self.prob)
        return L

    def with_probabilities(self, p: Sequence[float]) -> "QuotientGraph":
        edges = tuple(QuotientEdge(e.id, e.origin, e.terminus, e.translation, float(q), e.inverse)
                      for e, q in zip(self.edges, p))
        return QuotientGraph(self.dim, self.vertices, edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuotientGraph):
            return NotImplemented
        return (self.dim == other.dim and self.vertices == other.vertices
                and sorted(self.edges, key=lambda e: e.id) == sorted(other.edges, key=lambda e: e.id))

    def __hash__(self) -> int:
        return hash((self.dim, self.vertices, tuple(sorted(e.id for e in self.edges))))


def make_graph(dim: int, vertices: Iterable[str],
               edges: Iterable[tuple[str, str, str, Sequence[int], float, str]]) -> QuotientGraph:
    """Build a graph from plain ``(id, from, to, translation, p, inverse)`` tuples."""
    es = tuple(QuotientEdge(str(i), str(o), str(t), tuple(int(c) for c in tau), float(p), str(inv))
               for i, o, t, tau, p, inv in edges)
    return QuotientGraph(int(dim), tuple(vertices), es)


def _pair(eid: str, v0: str, v1: str, tau: Sequence[int], p: float, p_inv: float):
    tau = tuple(tau)
    neg = tuple(-t for t in tau)
    return [(eid, v0, v1, tau, p, eid + "bar"), (eid + "bar", v1, v0, neg, p_inv, eid)]


BUILTIN_KEYS = {
    "square": ("alpha", "alpha_p", "beta", "beta_p"),
    "triangular": ("alpha", "alpha_p", "beta", "beta_p", "gamma", "gamma_p"),
    "hexagonal": ("alpha", "alpha_p", "beta", "beta_p", "gamma", "gamma_p"),
}

_SIMPLE = {
    "square": dict.fromkeys(BUILTIN_KEYS["square"], 0.25),
    "triangular": dict.fromkeys(BUILTIN_KEYS["triangular"], 1 / 6),
    "hexagonal": dict.fromkeys(BUILTIN_KEYS["hexagonal"], 1 / 3),
}


def build_builtin(name: str, params: Mapping[str, float] | None = None) -> QuotientGraph:
    """Square, triangular or hexagonal lattice with the given parameters.

    Missing parameters default to the simple random walk.  Keys are
    ``alpha, alpha_p, beta, beta_p`` (and ``gamma, gamma_p``), where the
    ``_p`` suffix denotes the primed symbol.
    """
    if name not in BUILTIN_KEYS:
        raise ParameterError(f"unknown builtin lattice {name!r}; choose from {sorted(BUILTIN_KEYS)}")
    params = dict(params or {})
    unknown = set(params) - set(BUILTIN_KEYS[name])
    if unknown:
        raise ParameterError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    v = {**_SIMPLE[name], **{k: float(x) for k, x in params.items()}}
    for k, x in v.items():
        if not (x >= 0):
            raise ParameterError(f"parameter {k} must be nonnegative, got {x}")

    def check(total: float, what: str):
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ParameterError(f"normalization violated: {what} = {total!r} != 1")

    a, ap, b, bp = v["alpha"], v["alpha_p"], v["beta"], v["beta_p"]
    if name == "square":
        check(a + ap + b + bp, "alpha+alpha_p+beta+beta_p")
        edges = _pair("e1", "x", "x", (1, 0), a, ap) + _pair("e2", "x", "x", (0, 1), b, bp)
        return make_graph(2, ["x"], edges)
    g, gp = v["gamma"], v["gamma_p"]
    if name == "triangular":
        check(a + ap + b + bp + g + gp, "alpha_hat+beta_hat+gamma_hat")
        edges = (_pair("e1", "x", "x", (1, 0), a, ap) + _pair("e2", "x", "x", (0, 1), bp, b)
                 + _pair("e3", "x", "x", (-1, 1), g, gp))
        return make_graph(2, ["x"], edges)
    check(a + b + g, "alpha+beta+gamma")
    check(ap + bp + gp, "alpha_p+beta_p+gamma_p")
    edges = (_pair("e1", "x1", "x2", (1, 0), a, ap) + _pair("e2", "x1", "x2", (0, 0), b, bp)
             + _pair("e3", "x1", "x2", (0, 1), g, gp))
    return make_graph(2, ["x1", "x2"], edges)


# ---- validation ---------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def _strongly_connected(n: int, arcs: Iterable[tuple[int, int]]) -> bool:
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for a, b in arcs:
        fwd[a].append(b)
        bwd[b].append(a)
    return all(len(_reach(0, adj)) == n for adj in (fwd, bwd))


def _reach(start: int, adj: list[list[int]]) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if b not in seen:
                seen.add(b)
                queue.append(b)
    return seen


def validate(g: QuotientGraph) -> ValidationReport:
    """List every violated edge or graph invariant; empty iff all hold."""
    out: list[str] = []
    for e in g.edges:
        inv = g.edge(e.inverse)
        if e.inverse == e.id:
            out.append(f"self-inverse edge unsupported at {e.id}")
        if inv.inverse != e.id:
            out.append(f"inverse is not an involution at {e.id}")
        if inv.origin != e.terminus or inv.terminus != e.origin:
            out.append(f"inverse endpoints mismatch at {e.id}")
        if tuple(-t for t in e.translation) != inv.translation:
            out.append(f"inverse translation is not negated at {e.id}")
        if not (0.0 <= e.p <= 1.0) or math.isnan(e.p):
            out.append(f"probability outside [0,1] at {e.id}")
        if not (e.p + inv.p > 0):
            out.append(f"p(e)+p(ē)>0 violated at {e.id}")
    for v in g.vertices:
        s = sum(g.edge(i).p for i in g.out_edges[v])
        if abs(s - 1.0) > ROW_SUM_TOL:
            out.append(f"row sum {s!r} != 1 at {v}")
    n = g.n_vertices
    undirected = [(g.vertex_index[e.origin], g.vertex_index[e.terminus]) for e in g.edges]
    undirected += [(b, a) for a, b in undirected]
    if not _strongly_connected(n, undirected):
        out.append("undirected support graph is not connected")
    elif not _strongly_connected(n, [(g.vertex_index[e.origin], g.vertex_index[e.terminus])
                                     for e in g.edges if e.p > 0]):
        out.append("quotient walk is not irreducible")
    return ValidationReport(out)


# ---- file I/O ---------------------------------------------------------------

def _parse_probability(value: Any, where: str) -> float:
    if isinstance(value, bool):
        raise GraphFormatError("probability must be a number or 'a/b' string", where)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise GraphFormatError(f"cannot parse probability {value!r}", where) from None
    raise GraphFormatError("probability must be a number or 'a/b' string", where)


def _require(doc: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in doc:
        raise GraphFormatError(f"missing field {key!r}", where)
    return doc[key]


def load_graph(doc: Mapping[str, Any] | str | bytes) -> QuotientGraph:
    """Parse a quotient-graph document (mapping or JSON text)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(doc, Mapping):
        raise GraphFormatError("document must be a JSON object", "$")
    dim = _require(doc, "dim", "$")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise GraphFormatError("dim must be a positive integer", "dim")
    vertices = _require(doc, "vertices", "$")
    if not isinstance(vertices, list) or not all(isinstance(v, str) for v in vertices):
        raise GraphFormatError("vertices must be an array of strings", "vertices")
    raw_edges = _require(doc, "edges", "$")
    if not isinstance(raw_edges, list):
        raise GraphFormatError("edges must be an array", "edges")
    edges = []
    for k, raw in enumerate(raw_edges):
        where = f"edges[{k}]"
        if not isinstance(raw, Mapping):
            raise GraphFormatError("edge must be an object", where)
        tau = _require(raw, "translation", where)
        if not isinstance(tau, list) or not all(isinstance(t, int) and not isinstance(t, bool)
                                                for t in tau):
            raise GraphFormatError("translation must be an array of integers",
                                   f"{where}.translation")
        if len(tau) != dim:
            raise GraphFormatError(f"dimension mismatch: translation {tau} in a dim-{dim} graph",
                                   f"{where}.translation")
        fields = {}
        for key in ("id", "from", "to", "inverse"):
            val = _require(raw, key, where)
            if not isinstance(val, str):
                raise GraphFormatError(f"{key} must be a string", f"{where}.{key}")
            fields[key] = val
        p = _parse_probability(_require(raw, "p", where), f"{where}.p")
        edges.append(QuotientEdge(fields["id"], fields["from"], fields["to"], tuple(tau), p,
                                  fields["inverse"]))
    return QuotientGraph(dim, tuple(vertices), tuple(edges))


def save_graph(g: QuotientGraph) -> dict[str, Any]:
    """Document form of ``g``; floats are emitted at 17 digits by :func:`graph_to_json`."""
    return {
        "dim": g.dim,
        "vertices": list(g.vertices),
        "edges": [{"id": e.id, "from": e.origin, "to": e.terminus,
                   "translation": list(e.translation), "p": e.p, "inverse": e.inverse}
                  for e in g.edges],
    }


def graph_to_json(g: QuotientGraph) -> str:
    return dumps(save_graph(g))


def read_graph(path: str) -> QuotientGraph:
    with open(path, encoding="utf-8") as fh:
        return load_graph(fh.read())


def write_graph(g: QuotientGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(graph_to_json(g) + "\n")


def reversal_multisets(g: QuotientGraph) -> tuple[Counter, Counter]:
    """(origin, terminus, -τ) over inverse edges vs (terminus, origin, τ) over edges."""
    left = Counter((g.edge(e.inverse).origin, g.edge(e.inverse).terminus,
                    tuple(-t for t in g.edge(e.inverse).translation)) for e in g.edges)
    right = Counter((e.terminus, e.origin, e.translation) for e in g.edges)
    return left, right

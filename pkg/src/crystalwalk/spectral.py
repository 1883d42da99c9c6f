"""Invariant measure, transition operators, periods, quotient refinement
and twisted transition operators."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import reduce
from typing import Mapping, Sequence

import numpy as np

from ._grid import clipped_slices
from .errors import BranchAmbiguityError, PeriodError, RefinementError, SingularSystemError
from .lattice_core import QuotientGraph, make_graph, validate


# ---- invariant measure and transition operators --------------------------

@dataclass(frozen=True)
class InvariantMeasure:
    vertices: tuple[str, ...]
    values: np.ndarray
    residual: float

    def __getitem__(self, v: str) -> float:
        return float(self.values[self.vertices.index(v)])

    def as_dict(self) -> dict[str, float]:
        return {v: float(x) for v, x in zip(self.vertices, self.values)}


def invariant_measure(g: QuotientGraph) -> InvariantMeasure:
    """Unique normalized solution of ᵗL m = m (ᵗL is the transpose of L)."""
    Lt = g.transition_matrix().T
    n = g.n_vertices
    M = Lt - np.eye(n)
    M[0, :] = 1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    try:
        m = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError("invariant-measure system is singular; "
                                  "is the quotient walk irreducible?") from None
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise SingularSystemError("invariant measure is not strictly positive; "
                                  "is the quotient walk irreducible?")
    residual = float(np.max(np.abs(Lt @ m - m)))
    return InvariantMeasure(g.vertices, m, residual)


def _as_vector(g: QuotientGraph, f) -> np.ndarray:
    if isinstance(f, Mapping):
        return np.array([f[v] for v in g.vertices], dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n_vertices,):
        raise ValueError(f"function must have one value per vertex ({g.n_vertices})")
    return f


def apply_transition(g: QuotientGraph, f, transpose: bool = False):
    """Lf(x) = Σ_{e∈E_x} p(e) f(t(e)); with ``transpose`` ᵗLf(x) = Σ p(ē) f(t(e))."""
    L = g.transition_matrix()
    vec = _as_vector(g, f)
    out = (L.T if transpose else L) @ vec
    if isinstance(f, Mapping):
        return dict(zip(g.vertices, out.tolist()))
    return out


def ergodic_average(g: QuotientGraph, f, x: str, N: int) -> float:
    """(1/N) Σ_{j<N} (Lʲ f)(x)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    L = g.transition_matrix()
    vec = _as_vector(g, f)
    i = g.vertex_index[x]
    total = 0.0
    for _ in range(N):
        total += vec[i]
        vec = L @ vec
    return total / N


# ---- periods --------------------------------------------------------------

def _positive_arcs(g: QuotientGraph) -> list[int]:
    return [k for k, e in enumerate(g.edges) if e.p > 0]


def _quotient_levels(g: QuotientGraph) -> np.ndarray:
    adj: list[list[int]] = [[] for _ in g.vertices]
    for k in _positive_arcs(g):
        adj[g.origin_idx[k]].append(g.terminus_idx[k])
    level = np.full(g.n_vertices, -1, dtype=np.int64)
    level[0] = 0
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if level[b] < 0:
                level[b] = level[a] + 1
                queue.append(b)
    if np.any(level < 0):
        raise SingularSystemError("quotient walk is not irreducible")
    return level


def quotient_period(g: QuotientGraph) -> int:
    """gcd of positive-probability closed-walk lengths on the finite quotient."""
    level = _quotient_levels(g)
    gaps = [abs(int(level[g.origin_idx[k]] + 1 - level[g.terminus_idx[k]]))
            for k in _positive_arcs(g)]
    return reduce(math.gcd, gaps, 0)


def default_depth(g: QuotientGraph) -> int:
    return max(32, 4 * g.n_vertices)


def _step_support(g: QuotientGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arcs = _positive_arcs(g)
    return g.origin_idx[arcs], g.terminus_idx[arcs], g.tau[arcs]


def _max_jump(g: QuotientGraph) -> int:
    _, _, tau = _step_support(g)
    return int(np.abs(tau).max()) if tau.size else 0


def _reach_step(g: QuotientGraph, cur: np.ndarray) -> np.ndarray:
    """One step of boolean reachability on a clipped box (leading axis = vertex)."""
    orig, term, tau = _step_support(g)
    nxt = np.zeros_like(cur)
    shape = cur.shape[1:]
    lo = np.zeros(len(shape), dtype=int)
    hi = np.array(shape) - 1
    for o, t, s in zip(orig, term, tau):
        sl = clipped_slices(shape, lo, hi, s)
        if sl is None:
            continue
        src, dst = sl
        nxt[(t,) + dst] |= cur[(o,) + src]
    return nxt


def _lifted_box(g: QuotientGraph, radius: int) -> np.ndarray:
    shape = (g.n_vertices,) + (2 * radius + 1,) * g.dim
    box = np.zeros(shape, dtype=bool)
    box[(0,) + (radius,) * g.dim] = True
    return box


def lifted_period(g: QuotientGraph, search_depth: int | None = None) -> int:
    """gcd of n ≤ 2·depth at which (base, 0) is revisited on the lifted lattice.

    A return path of length ≤ 2·depth never leaves the box of radius
    depth·max|τ|, so clipping the DP to that box is exact.
    """
    depth = search_depth or default_depth(g)
    radius = depth * _max_jump(g)
    cur = _lifted_box(g, radius)
    origin = (0,) + (radius,) * g.dim
    K = 0
    for n in range(1, 2 * depth + 1):
        cur = _reach_step(g, cur)
        if cur[origin]:
            K = math.gcd(K, n)
    if K == 0:
        raise PeriodError(f"no return found within {2 * depth} steps")
    return K


# ---- Hermite normal form --------------------------------------------------

def _egcd(a: int, b: int) -> tuple[int, int, int]:
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def hermite_normal_form(vectors: Sequence[Sequence[int]], dim: int | None = None) -> np.ndarray:
    """Row-style HNF of the lattice generated by ``vectors``.

    Basis vectors are the rows; the matrix is upper triangular (echelon
    for rank-deficient input) with positive pivots, and entries above each
    pivot reduced into [0, pivot).
    """
    vectors = [[int(x) for x in v] for v in vectors]
    d = dim if dim is not None else (len(vectors[0]) if vectors else 0)
    piv: dict[int, list[int]] = {}
    for v in vectors:
        for j in range(d):
            if v[j] == 0:
                continue
            if j not in piv:
                piv[j] = v if v[j] > 0 else [-x for x in v]
                break
            P = piv[j]
            a, b = P[j], v[j]
            gcd, x, y = _egcd(a, b)
            newP = [x * p + y * q for p, q in zip(P, v)]
            v = [(b // gcd) * p - (a // gcd) * q for p, q in zip(P, v)]
            piv[j] = newP if newP[j] > 0 else [-c for c in newP]
        _reduce_hnf(piv)
    return np.array([piv[j] for j in sorted(piv)], dtype=np.int64).reshape(len(piv), d)


def _reduce_hnf(piv: dict[int, list[int]]) -> None:
    cols = sorted(piv)
    for j in cols:
        P = piv[j]
        for i in cols:
            if i >= j:
                break
            R = piv[i]
            q = R[j] // P[j]
            if q:
                piv[i] = [r - q * p for r, p in zip(R, P)]


def reduce_mod_hnf(v: Sequence[int], hnf: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split v = c + Σ k_i·hnf[i] with 0 ≤ c_i < hnf[i][i]; returns (c, k)."""
    c = [int(x) for x in v]
    k = []
    for i in range(len(hnf)):
        q = c[i] // int(hnf[i][i])
        k.append(q)
        c = [a - q * int(b) for a, b in zip(c, hnf[i])]
    return tuple(c), tuple(k)


# ---- refinement -------------------------------------------------------------

@dataclass(frozen=True)
class RefinedQuotient:
    period_K: int
    quotient_period_K0: int
    sublattice_basis: np.ndarray
    index: int
    coset_reps: tuple[tuple[int, ...], ...]
    refined_graph: QuotientGraph
    partition_label: dict[str, int]
    original_graph: QuotientGraph

    @property
    def is_identity(self) -> bool:
        return self.index == 1

    def to_refined(self, vertex: str, tau: Sequence[int]) -> tuple[str, tuple[int, ...]]:
        """Map an original state (vertex, τ ∈ Γ) to (refined vertex, cell ∈ Γ₁)."""
        if self.is_identity:
            return vertex, tuple(int(t) for t in tau)
        c, k = reduce_mod_hnf(tau, self.sublattice_basis)
        return refined_name(vertex, c), k

    def to_original(self, vertex: str, cell: Sequence[int]) -> tuple[str, tuple[int, ...]]:
        if self.is_identity:
            return vertex, tuple(int(t) for t in cell)
        base, c = parse_refined_name(vertex)
        tau = np.array(c, dtype=np.int64) + np.asarray(cell, dtype=np.int64) @ self.sublattice_basis
        return base, tuple(int(t) for t in tau)

    def resolve_vertex(self, name: str) -> str:
        """Accept either a refined vertex name or an original one (coset 0)."""
        if name in self.refined_graph.vertex_index:
            return name
        if name in self.original_graph.vertex_index:
            return self.to_refined(name, (0,) * self.original_graph.dim)[0]
        raise KeyError(f"unknown vertex {name!r}")

    def sidecar(self) -> dict:
        return {"K": self.period_K, "K0": self.quotient_period_K0,
                "hnf": self.sublattice_basis.tolist(), "index": self.index,
                "labels": dict(self.partition_label)}


def refined_name(vertex: str, c: Sequence[int]) -> str:
    return f"{vertex}@[{','.join(str(int(x)) for x in c)}]"


def parse_refined_name(name: str) -> tuple[str, tuple[int, ...]]:
    base, _, rest = name.rpartition("@[")
    return base, tuple(int(x) for x in rest.rstrip("]").split(","))


def partition_labels(g: QuotientGraph, K: int) -> dict[str, int]:
    level = _quotient_levels(g)
    return {v: int(level[i] % K) for i, v in enumerate(g.vertices)}


def _identity_refinement(g: QuotientGraph, K: int, K0: int) -> RefinedQuotient:
    return RefinedQuotient(K, K0, np.eye(g.dim, dtype=np.int64), 1, ((0,) * g.dim,), g,
                           partition_labels(g, K), g)


def refine_quotient(g: QuotientGraph, search_depth: int | None = None,
                    K: int | None = None) -> RefinedQuotient:
    """Refine Γ to Γ₁ so that the quotient walk has the lifted period K."""
    depth = search_depth or default_depth(g)
    K0 = quotient_period(g)
    if K is None:
        K = lifted_period(g, depth)
    if K == K0:
        return _identity_refinement(g, K, K0)
    radius = depth * _max_jump(g)
    cur = _lifted_box(g, radius)
    label = np.full(cur.shape, -1, dtype=np.int64)
    label[cur] = 0
    for n in range(1, depth + 1):
        cur = _reach_step(g, cur)
        new = cur & (label < 0)
        if np.any(cur & (label >= 0) & (label != n % K)):
            raise RefinementError(f"label conflict at step {n}: period {K} overestimated; "
                                  "increase the search depth")
        label[new] = n % K
    zero = np.argwhere(label[0] == 0) - radius
    zero = zero[np.argsort(np.abs(zero).max(axis=1), kind="stable")]
    hnf = hermite_normal_form(zero, g.dim)
    if hnf.shape[0] < g.dim:
        raise RefinementError("rank deficient: zero-label translations do not generate a "
                              "finite-index sublattice; increase the search depth")
    index = int(round(np.prod(np.diag(hnf))))
    diag = [int(h) for h in np.diag(hnf)]
    reps = [tuple(int(x) for x in c) for c in np.ndindex(*diag)]
    vertices = [refined_name(v, c) for v in g.vertices for c in reps]
    edges = []
    for e in g.edges:
        for c in reps:
            c2, k = reduce_mod_hnf(np.add(c, e.translation), hnf)
            edges.append((f"{e.id}@[{','.join(map(str, c))}]", refined_name(e.origin, c),
                          refined_name(e.terminus, c2), k, e.p,
                          f"{e.inverse}@[{','.join(map(str, c2))}]"))
    refined = make_graph(g.dim, vertices, edges)
    report = validate(refined)
    if not report.ok:
        raise RefinementError("refined graph invalid: " + "; ".join(report.violations))
    if quotient_period(refined) != K:
        raise RefinementError("refined quotient period differs from the lifted period")
    return RefinedQuotient(K, K0, hnf, index, tuple(reps), refined, partition_labels(refined, K), g)


# ---- irreducibility -------------------------------------------------------

def check_irreducibility(g: QuotientGraph, radius: int) -> dict:
    """Exact quotient verdict plus a heuristic lifted verdict on a finite box."""
    quotient_ok = True
    try:
        _quotient_levels(g)
    except SingularSystemError:
        quotient_ok = False
    cur = _lifted_box(g, radius)
    seen = cur.copy()
    steps = 0
    while True:
        cur = _reach_step(g, cur) & ~seen
        if not cur.any():
            break
        seen |= cur
        steps += 1
    inner = radius // 2
    core = (slice(None),) + (slice(radius - inner, radius + inner + 1),) * g.dim
    return {"quotient_irreducible": quotient_ok,
            "lifted_irreducible": bool(seen[core].all()),
            "heuristic": True, "radius": radius, "steps_to_fixpoint": steps}


# ---- twisted operator -------------------------------------------------------

def twisted_operator(g: QuotientGraph, omega: Sequence[float],
                     dphi: np.ndarray | None = None) -> np.ndarray:
    """H_ω[x][y] = Σ_{e:x→y} p(e) exp(2πi ⟨ω, dΦ(e)⟩).

    ``dphi`` (edges × d, Γ-coordinates) defaults to the translations τ,
    which is the realization Φ ≡ 0; any other realization gives a
    diagonally similar matrix.
    """
    d = g.tau.astype(float) if dphi is None else np.asarray(dphi, dtype=float)
    phase = np.exp(2j * np.pi * (d @ np.asarray(omega, dtype=float)))
    H = np.zeros((g.n_vertices, g.n_vertices), dtype=complex)
    np.add.at(H, (g.origin_idx, g.terminus_idx), g.prob * phase)
    return H


@dataclass(frozen=True)
class PerronData:
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray


def _closest(values: np.ndarray, target: complex) -> int:
    dist = np.abs(values - target)
    order = np.argsort(dist)
    if len(values) > 1 and dist[order[1]] - dist[order[0]] < 1e-8:
        raise BranchAmbiguityError(f"two eigenvalues within 1e-8 of the branch near {target}")
    return int(order[0])


def perron_eigendata(g: QuotientGraph, omega: Sequence[float], dphi: np.ndarray | None = None,
                     measure: np.ndarray | None = None, steps: int = 8) -> PerronData:
    """Eigenvalue branch through μ₀(0) = 1 with normalized eigenvectors.

    The branch is followed from ω = 0 along the segment in ``steps`` steps.
    The right eigenvector φ has its largest-modulus entry real positive and
    ⟨φ,φ⟩ = 1; the left eigenvector ψ (eigenvector of H^†) has ⟨φ,ψ⟩ = 1.
    """
    omega = np.asarray(omega, dtype=float)
    n = g.n_vertices
    m = invariant_measure(g).values if measure is None else np.asarray(measure)
    if not np.any(omega):
        return PerronData(1.0 + 0j, np.full(n, n ** -0.5, dtype=complex),
                          (n ** 0.5 * m).astype(complex))
    mu = 1.0 + 0j
    for s in range(1, steps + 1):
        H = twisted_operator(g, omega * (s / steps), dphi)
        vals, vecs = np.linalg.eig(H)
        k = _closest(vals, mu)
        mu = vals[k]
    phi = vecs[:, k]
    j = int(np.argmax(np.abs(phi)))
    phi = phi * (abs(phi[j]) / phi[j])
    phi = phi / np.sqrt(np.vdot(phi, phi).real)
    lvals, lvecs = np.linalg.eig(H.conj().T)
    psi = lvecs[:, _closest(lvals, np.conj(mu))]
    s = np.sum(phi * np.conj(psi))
    psi = psi * np.conj(1.0 / s)
    return PerronData(complex(mu), phi, psi)

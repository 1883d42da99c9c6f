"""Homological data, modified harmonic realization, Albanese metric and
the ε-interpolation family."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CrystalWalkError, NegativeProbabilityError, NonSPDError, SingularSystemError
from .lattice_core import QuotientGraph, validate
from .spectral import (InvariantMeasure, RefinedQuotient, _identity_refinement, default_depth,
                       invariant_measure, lifted_period, quotient_period, refine_quotient)


def _mvec(g: QuotientGraph, m) -> np.ndarray:
    if isinstance(m, InvariantMeasure):
        return np.asarray(m.values, dtype=float)
    return np.asarray(m, dtype=float)


# ---- homological data -----------------------------------------------------

@dataclass(frozen=True)
class HomologicalData:
    edge_weight: np.ndarray
    cycle_coefficients: dict[str, float]
    asymptotic_direction: np.ndarray
    boundary_residual: float


def homological_data(g: QuotientGraph, m) -> HomologicalData:
    """m̃(e) = p(e)m(o(e)), coefficients of γ_p and ρ = Σ m̃(e)τ(e)."""
    mv = _mvec(g, m)
    mt = g.prob * mv[g.origin_idx]
    coeff: dict[str, float] = {}
    for k, e in enumerate(g.edges):
        if e.inverse not in coeff:
            coeff[e.id] = float(mt[k] - mt[g.inverse_idx[k]])
    rho = mt @ g.tau.astype(float)
    flow = np.zeros(g.n_vertices)
    np.add.at(flow, g.terminus_idx, mt)
    np.add.at(flow, g.origin_idx, -mt)
    return HomologicalData(mt, coeff, rho, float(np.max(np.abs(flow))))


# ---- harmonic realization -------------------------------------------------

@dataclass(frozen=True)
class HarmonicRealization:
    vertices: tuple[str, ...]
    positions: np.ndarray
    base_vertex: str
    residual: float

    def __getitem__(self, v: str) -> np.ndarray:
        return self.positions[self.vertices.index(v)]


def edge_differential(g: QuotientGraph, positions: np.ndarray) -> np.ndarray:
    """dΦ(e) = Φ(t(e)) + τ(e) − Φ(o(e)), one row per edge."""
    return positions[g.terminus_idx] + g.tau - positions[g.origin_idx]


def modified_harmonic_realization(g: QuotientGraph, m, base: str | None = None,
                                  rho: np.ndarray | None = None) -> HarmonicRealization:
    """Solve Σ_{e∈E_x} p(e)(Φ(t(e)) + τ(e) − Φ(x)) = ρ with Φ(base) = 0."""
    mv = _mvec(g, m)
    if rho is None:
        rho = homological_data(g, mv).asymptotic_direction
    base = g.base_vertex if base is None else base
    b = g.vertex_index[base]
    n = g.n_vertices
    L = g.transition_matrix()
    drift = np.zeros((n, g.dim))
    np.add.at(drift, g.origin_idx, g.prob[:, None] * g.tau)
    rhs = rho[None, :] - drift
    consistency = np.abs(mv @ rhs).max() if n else 0.0
    if consistency > 1e-10:
        raise SingularSystemError(f"harmonic system inconsistent (m-weighted residual {consistency:.3g})")
    M = L - np.eye(n)
    M[b, :] = 0.0
    M[b, b] = 1.0
    rhs[b, :] = 0.0
    try:
        pos = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError("harmonic system is singular; is the walk irreducible?") from None
    pos[b] = 0.0
    res = drift + (L - np.eye(n)) @ pos - rho[None, :]
    return HarmonicRealization(g.vertices, pos, base, float(np.max(np.abs(res))) if n else 0.0)


# ---- Albanese structure ---------------------------------------------------

@dataclass(frozen=True)
class AlbaneseStructure:
    gram: np.ndarray
    metric: np.ndarray
    volume: float
    embedding: np.ndarray

    def embed(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.embedding.T


def albanese_structure(g: QuotientGraph, m, realization: HarmonicRealization,
                       rho: np.ndarray | None = None) -> AlbaneseStructure:
    """Gram matrix G, metric g₀ = G⁻¹, vol = det(G)^{-1/2}, embedding A = R⁻¹ (G = RRᵀ)."""
    hom = homological_data(g, m)
    rho = hom.asymptotic_direction if rho is None else rho
    dphi = edge_differential(g, realization.positions)
    G = (dphi * hom.edge_weight[:, None]).T @ dphi - np.outer(rho, rho)
    G = 0.5 * (G + G.T)
    try:
        R = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise NonSPDError("Albanese Gram matrix is not positive definite "
                          "(degenerate walk or support not spanning)") from None
    A = np.linalg.solve(R, np.eye(g.dim))
    A = np.tril(A)
    return AlbaneseStructure(G, np.linalg.inv(G), float(np.linalg.det(G)) ** -0.5, A)


def metric_norm(S: AlbaneseStructure, x: Sequence[float]) -> float:
    """√(xᵀ g₀ x) = |A x|."""
    return float(np.linalg.norm(S.embedding @ np.asarray(x, dtype=float)))


# ---- ε-family -----------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonFamily:
    base: QuotientGraph
    p0: np.ndarray
    q: np.ndarray
    measure: np.ndarray


def epsilon_family(g: QuotientGraph, m=None) -> EpsilonFamily:
    """p₀(e) = (p(e) + p(ē)m(t)/m(o))/2, q(e) = (p(e) − p(ē)m(t)/m(o))/2."""
    mv = invariant_measure(g).values if m is None else _mvec(g, m)
    back = g.prob[g.inverse_idx] * mv[g.terminus_idx] / mv[g.origin_idx]
    return EpsilonFamily(g, 0.5 * (g.prob + back), 0.5 * (g.prob - back), mv)


def family_member(F: EpsilonFamily, eps: float) -> QuotientGraph:
    """Graph with p_ε = p₀ + ε q."""
    p = F.p0 + eps * F.q
    if np.any(p < -1e-14):
        k = int(np.argmin(p))
        raise NegativeProbabilityError(f"p_eps < 0 at edge {F.base.edges[k].id} (eps={eps})")
    return F.base.with_probabilities(np.clip(p, 0.0, None))


# ---- pipeline -----------------------------------------------------------------

@dataclass(frozen=True)
class LatticeAnalysis:
    graph: QuotientGraph
    refinement: RefinedQuotient
    measure: InvariantMeasure
    homology: HomologicalData
    realization: HarmonicRealization
    albanese: AlbaneseStructure
    period_K: int

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def rho(self) -> np.ndarray:
        return self.homology.asymptotic_direction

    @property
    def dphi(self) -> np.ndarray:
        return edge_differential(self.graph, self.realization.positions)

    @property
    def labels(self) -> dict[str, int]:
        return self.refinement.partition_label

    def m(self, v: str) -> float:
        return self.measure[v]

    def resolve_vertex(self, name: str) -> str:
        return self.refinement.resolve_vertex(name)

    def position(self, vertex: str, cell: Sequence[int]) -> np.ndarray:
        """Φ(v) + cell in Γ-coordinates of the analysed graph."""
        return self.realization[vertex] + np.asarray(cell, dtype=float)

    def displacement(self, x, y, n: int) -> np.ndarray:
        """Orthonormal z = A(Φ(y)+τ_y − Φ(x)−τ_x − nρ)."""
        zg = self.position(*y) - self.position(*x) - n * self.rho
        return self.albanese.embedding @ zg


class StageError(CrystalWalkError):
    """Component error tagged with the pipeline stage that raised it."""


def analyze(g: QuotientGraph, refine: bool = True, search_depth: int | None = None,
            base: str | None = None) -> LatticeAnalysis:
    """validate → period → refinement → m → γ_p → Φ → Albanese."""
    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except CrystalWalkError as exc:
            raise StageError(f"[{name}] {exc}") from exc

    report = validate(g)
    if not report.ok:
        raise StageError("[validate] " + "; ".join(report.violations))
    depth = search_depth or default_depth(g)
    K = stage("lifted_period", lifted_period, g, depth)
    if refine:
        ref = stage("refine_quotient", refine_quotient, g, depth, K=K)
    else:
        ref = _identity_refinement(g, K, quotient_period(g))
    h = ref.refined_graph
    m = stage("invariant_measure", invariant_measure, h)
    hom = homological_data(h, m)
    if base is not None:
        base = ref.resolve_vertex(base)
    real = stage("harmonic_realization", modified_harmonic_realization, h, m, base,
                 hom.asymptotic_direction)
    alb = stage("albanese_structure", albanese_structure, h, m, real, hom.asymptotic_direction)
    return LatticeAnalysis(h, ref, m, hom, real, alb, K)


# ---- realization export -------------------------------------------------------

def export_realization(A: LatticeAnalysis, window: Sequence[tuple[int, int]]):
    """Embedded points A(Φ(v) + cell) for cells in the window, plus edges between them.

    ``window`` is one inclusive ``(lo, hi)`` range per dimension.  Returns
    ``(points, edges)`` where points are ``(vertex, cell, coords)`` rows and
    edges are ``(from_row, to_row)`` pairs.
    """
    window = list(window)
    if len(window) != A.dim:
        raise ValueError(f"window needs {A.dim} ranges")
    ranges = [range(int(lo), int(hi) + 1) for lo, hi in window]
    points = []
    row_of = {}
    for cell in itertools.product(*ranges):
        for v in A.graph.vertices:
            coords = A.albanese.embedding @ A.position(v, cell)
            row_of[(v, cell)] = len(points)
            points.append((v, cell, coords))
    edges = []
    for (v, cell), i in row_of.items():
        for eid in A.graph.out_edges[v]:
            e = A.graph.edge(eid)
            target = (e.terminus, tuple(c + t for c, t in zip(cell, e.translation)))
            j = row_of.get(target)
            if j is not None and i < j:
                edges.append((i, j))
    return points, sorted(set(edges))

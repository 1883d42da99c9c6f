"""Seeded path sampling and statistical checks of the CLTs of the first
and second kind."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .albanese import (LatticeAnalysis, albanese_structure, epsilon_family, family_member,
                       homological_data, modified_harmonic_realization)
from .errors import ModeMismatchError
from .heat_kernel import exact_transition
from .lattice_core import QuotientGraph
from .spectral import invariant_measure

MODES = ("first_kind", "second_kind")
SIGMA = 5.0


@dataclass(frozen=True)
class PathStatistics:
    n: int
    t_values: tuple[float, ...]
    n_paths: int
    seed: int
    mode: str
    scaled_points: np.ndarray    # (len(t_values), n_paths, d)


@dataclass(frozen=True)
class _Frame:
    graph: QuotientGraph
    positions: np.ndarray
    embedding: np.ndarray
    center: np.ndarray           # per-step drift removed from ξ


def _frame(A: LatticeAnalysis, n: int, mode: str) -> _Frame:
    if mode == "first_kind":
        return _Frame(A.graph, A.realization.positions, A.albanese.embedding, A.rho)
    F = epsilon_family(A.graph, A.measure.values)
    g_eps = family_member(F, n ** -0.5)
    g0 = family_member(F, 0.0)
    m = A.measure.values
    base = A.realization.base_vertex
    phi_eps = modified_harmonic_realization(g_eps, m, base)
    phi0 = modified_harmonic_realization(g0, m, base)
    A0 = albanese_structure(g0, m, phi0).embedding
    return _Frame(g_eps, phi_eps.positions, A0, np.zeros(A.dim))


def _cdf_tables(g: QuotientGraph):
    tables = []
    for v in g.vertices:
        ids = [g.edge_index[e] for e in g.out_edges[v] if g.edge(e).p > 0]
        cdf = np.cumsum(g.prob[ids])
        cdf[-1] = 1.0
        tables.append((np.array(ids), cdf))
    return tables


def _uniforms(seed: int, first: int, count: int, steps: int) -> np.ndarray:
    """Per-path streams seeded by (seed, path index); independent of chunking."""
    out = np.empty((count, steps))
    for i in range(count):
        out[i] = np.random.default_rng([seed, first + i]).random(steps)
    return out


def _simulate(g: QuotientGraph, start: int, uniforms: np.ndarray, record: Sequence[int]):
    """Run paths; return vertex index and integer translation at each recorded step."""
    count, steps = uniforms.shape
    tables = _cdf_tables(g)
    vert = np.full(count, start, dtype=np.int64)
    tau = np.zeros((count, g.dim), dtype=np.int64)
    rec = {k: i for i, k in enumerate(record)}
    out_v = np.empty((len(record), count), dtype=np.int64)
    out_t = np.empty((len(record), count, g.dim), dtype=np.int64)
    if 0 in rec:
        out_v[rec[0]], out_t[rec[0]] = vert, tau
    for k in range(1, steps + 1):
        u = uniforms[:, k - 1]
        edge = np.empty(count, dtype=np.int64)
        for v, (ids, cdf) in enumerate(tables):
            mask = vert == v
            if mask.any():
                j = np.minimum(np.searchsorted(cdf, u[mask], side="right"), len(ids) - 1)
                edge[mask] = ids[j]
        tau += g.tau[edge]
        vert = g.terminus_idx[edge]
        if k in rec:
            out_v[rec[k]], out_t[rec[k]] = vert, tau
    return out_v, out_t


def sample_paths(A: LatticeAnalysis, n: int, t_values: Sequence[float], n_paths: int,
                 seed: int, mode: str = "first_kind", chunk: int = 8192) -> PathStatistics:
    """Scaled positions at the given times for ``n_paths`` seeded trajectories.

    first kind: n^{-1/2} A(ξ_{[nt]} − [nt]ρ); second kind: n^{-1/2} A⁽⁰⁾ ξ⁽ᵋ⁾_{[nt]}
    with ε = n^{-1/2}.  Paths start at the base vertex, where Φ = 0.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n < 4:
        raise ValueError("n must be >= 4")
    t_values = tuple(float(t) for t in t_values)
    steps_at = [int(math.floor(n * t)) for t in t_values]
    d = A.dim
    pts = np.zeros((len(t_values), n_paths, d))
    if n_paths == 0:
        return PathStatistics(n, t_values, 0, seed, mode, pts)
    fr = _frame(A, n, mode)
    start = fr.graph.vertex_index[A.realization.base_vertex]
    total = max(steps_at) if steps_at else 0
    for first in range(0, n_paths, chunk):
        count = min(chunk, n_paths - first)
        U = _uniforms(seed, first, count, max(total, 1))
        vs, ts = _simulate(fr.graph, start, U[:, :total], steps_at)
        for i, k in enumerate(steps_at):
            xi = fr.positions[vs[i]] + ts[i] - k * fr.center
            pts[i, first:first + count] = (xi @ fr.embedding.T) / math.sqrt(n)
    return PathStatistics(n, t_values, n_paths, seed, mode, pts)


@dataclass(frozen=True)
class MCReport:
    mode: str
    t_values: tuple[float, ...]
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    expected_mean: np.ndarray
    expected_cov: np.ndarray
    mean_margin: np.ndarray
    cov_margin: np.ndarray
    passed: bool
    note: str = f"{SIGMA:g}-sigma per entry, no Bonferroni correction applied"

    def as_dict(self) -> dict:
        return {"mode": self.mode, "t_values": list(self.t_values),
                "empirical_mean": self.empirical_mean, "empirical_cov": self.empirical_cov,
                "expected_mean": self.expected_mean, "expected_cov": self.expected_cov,
                "margins": {"mean": self.mean_margin, "cov": self.cov_margin},
                "pass": self.passed, "note": self.note}


def expected_drift(A: LatticeAnalysis) -> np.ndarray:
    """ρ in the orthonormal frame of the ε = 0 member."""
    F = epsilon_family(A.graph, A.measure.values)
    g0 = family_member(F, 0.0)
    m = A.measure.values
    A0 = albanese_structure(g0, m, modified_harmonic_realization(g0, m)).embedding
    return A0 @ A.rho


def _moment_margins(X: np.ndarray):
    N = X.shape[0]
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(N - 1, 1)
    mean_se = np.sqrt(np.diag(cov) / max(N, 1))
    prod = Xc[:, :, None] * Xc[:, None, :]
    cov_se = prod.std(axis=0, ddof=1) / math.sqrt(max(N, 1)) if N > 1 else np.zeros_like(cov)
    return mean, cov, SIGMA * mean_se, SIGMA * cov_se


def clt_report(S: PathStatistics, A: LatticeAnalysis, mode: str) -> MCReport:
    """Compare empirical moments at each t with the Brownian limit."""
    if S.mode != mode:
        raise ModeMismatchError(f"statistics sampled as {S.mode}, reported as {mode}")
    d = A.dim
    drift = expected_drift(A) if mode == "second_kind" else np.zeros(d)
    T = len(S.t_values)
    em, ec = np.zeros((T, d)), np.zeros((T, d, d))
    xm, xc = np.zeros((T, d)), np.zeros((T, d, d))
    mm, cm = np.zeros((T, d)), np.zeros((T, d, d))
    for i, t in enumerate(S.t_values):
        em[i], ec[i], mm[i], cm[i] = _moment_margins(S.scaled_points[i])
        xm[i] = t * drift
        xc[i] = t * np.eye(d)
    ok = bool(np.all(np.abs(em - xm) <= mm) and np.all(np.abs(ec - xc) <= cm))
    return MCReport(mode, S.t_values, em, ec, xm, xc, mm, cm, ok)


def increment_report(S: PathStatistics, i: int, j: int) -> MCReport:
    """Moments of X_{t_j} − X_{t_i} against mean 0 and covariance (t_j − t_i)·I."""
    D = S.scaled_points[j] - S.scaled_points[i]
    dt = S.t_values[j] - S.t_values[i]
    d = D.shape[1]
    m, c, mm, cm = _moment_margins(D)
    ok = bool(np.all(np.abs(m) <= mm) and np.all(np.abs(c - dt * np.eye(d)) <= cm))
    return MCReport(S.mode, (S.t_values[i], S.t_values[j]), m[None], c[None], np.zeros((1, d)),
                    dt * np.eye(d)[None], mm[None], cm[None], ok)


def fourth_moment_constant(S: PathStatistics) -> float:
    """max over recorded s < t of E|X_t − X_s|⁴ / (t − s)²."""
    best = 0.0
    for i in range(len(S.t_values)):
        for j in range(i + 1, len(S.t_values)):
            D = S.scaled_points[j] - S.scaled_points[i]
            dt = S.t_values[j] - S.t_values[i]
            best = max(best, float(np.mean(np.sum(D ** 2, axis=1) ** 2)) / dt ** 2)
    return best


def step_drift_residual(A: LatticeAnalysis) -> float:
    """max_x |Σ_{e∈E_x} p(e) A dΦ(e) − Aρ| (exact, no sampling)."""
    g = A.graph
    jump = (A.dphi @ A.albanese.embedding.T) * g.prob[:, None]
    per_vertex = np.zeros((g.n_vertices, g.dim))
    np.add.at(per_vertex, g.origin_idx, jump)
    return float(np.abs(per_vertex - A.albanese.embedding @ A.rho).max())


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    p_value: float
    bins: int
    passed: bool


def endpoint_chi2(A: LatticeAnalysis, n: int, n_paths: int, seed: int,
                  level: float = 0.01, min_expected: float = 5.0) -> Chi2Result:
    """χ² test of sampled n-step endpoints against the exact heat kernel."""
    g = A.graph
    start = g.vertex_index[A.realization.base_vertex]
    vs, ts = [], []
    for first in range(0, n_paths, 8192):
        count = min(8192, n_paths - first)
        v, t = _simulate(g, start, _uniforms(seed, first, count, n), [n])
        vs.append(v[0])
        ts.append(t[0])
    v = np.concatenate(vs)
    t = np.concatenate(ts)
    table = exact_transition(A, A.realization.base_vertex, n)
    observed: dict[tuple, int] = {}
    for vi, ti in zip(v.tolist(), map(tuple, t.tolist())):
        observed[(vi, ti)] = observed.get((vi, ti), 0) + 1
    exp_big, obs_big = [], []
    exp_rest, obs_rest = 0.0, 0
    for vname, tau, p in table.items():
        key = (g.vertex_index[vname], tau)
        e = p * n_paths
        o = observed.pop(key, 0)
        if e >= min_expected:
            exp_big.append(e)
            obs_big.append(o)
        else:
            exp_rest += e
            obs_rest += o
    obs_rest += sum(observed.values())  # states with zero exact mass
    if exp_rest > 0:
        exp_big.append(exp_rest)
        obs_big.append(obs_rest)
    exp_arr = np.array(exp_big)
    exp_arr *= n_paths / exp_arr.sum()
    res = stats.chisquare(np.array(obs_big), exp_arr)
    return Chi2Result(float(res.statistic), float(res.pvalue), len(exp_big),
                      bool(res.pvalue > level))

"""Exact n-step transition probabilities, Gaussian leading terms, LCLT
ratios and numeric estimates of a₁."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .albanese import LatticeAnalysis
from .errors import CrystalWalkError, MemoryBudgetError

DEFAULT_CELL_CAP = 10 ** 8
FLUSH = 1e-300


@dataclass(frozen=True)
class HeatKernelTable:
    """Exact law of (vertex, translation) after n steps from (start, 0).

    ``mass[v][τ + radius]`` holds p(n, (start,0), (v,τ)).
    """

    n: int
    start: str
    vertices: tuple[str, ...]
    radius: int
    mass: np.ndarray

    @property
    def dim(self) -> int:
        return self.mass.ndim - 1

    def mass_at(self, vertex: str, tau: Sequence[int]) -> float:
        idx = np.asarray(tau, dtype=int) + self.radius
        if np.any(idx < 0) or np.any(idx >= self.mass.shape[1]):
            return 0.0
        return float(self.mass[(self.vertices.index(vertex),) + tuple(idx)])

    def total(self) -> float:
        return float(self.mass.sum())

    def marginal(self) -> np.ndarray:
        """Distribution over quotient vertices."""
        return self.mass.reshape(len(self.vertices), -1).sum(axis=1)

    def items(self) -> Iterator[tuple[str, tuple[int, ...], float]]:
        for idx in zip(*np.nonzero(self.mass)):
            tau = tuple(int(i) - self.radius for i in idx[1:])
            yield self.vertices[idx[0]], tau, float(self.mass[idx])

    def support_radius(self) -> int:
        nz = np.argwhere(self.mass > 0)
        return int(np.abs(nz[:, 1:] - self.radius).max()) if len(nz) else 0

    def grid(self) -> np.ndarray:
        """Translation coordinates of every cell, shape (*box, d)."""
        ax = np.arange(-self.radius, self.radius + 1)
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)


def _support(A: LatticeAnalysis):
    g = A.graph
    keep = [k for k, e in enumerate(g.edges) if e.p > 0]
    return g.origin_idx[keep], g.terminus_idx[keep], g.tau[keep], g.prob[keep]


def _iterate(A: LatticeAnalysis, start: str, n_max: int,
             cell_cap: int = DEFAULT_CELL_CAP) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield (n, radius, buffer) for n = 0..n_max; the buffer is reused."""
    g = A.graph
    orig, term, tau, prob = _support(A)
    jump = int(np.abs(tau).max()) if tau.size else 0
    radius = n_max * jump
    cells = g.n_vertices * (2 * radius + 1) ** g.dim
    if cells > cell_cap:
        raise MemoryBudgetError(f"DP would need {cells} cells (cap {cell_cap})")
    shape = (g.n_vertices,) + (2 * radius + 1,) * g.dim
    cur = np.zeros(shape)
    nxt = np.zeros(shape)
    cur[(g.vertex_index[start],) + (radius,) * g.dim] = 1.0
    yield 0, radius, cur
    for k in range(1, n_max + 1):
        r_old, r_new = (k - 1) * jump, k * jump
        src_box = tuple(slice(radius - r_old, radius + r_old + 1) for _ in range(g.dim))
        new_box = (slice(None),) + tuple(slice(radius - r_new, radius + r_new + 1)
                                         for _ in range(g.dim))
        nxt[new_box] = 0.0
        for o, t, s, p in zip(orig, term, tau, prob):
            dst = tuple(slice(b.start + int(c), b.stop + int(c)) for b, c in zip(src_box, s))
            nxt[(t,) + dst] += p * cur[(o,) + src_box]
        region = nxt[new_box]
        region[region < FLUSH] = 0.0
        cur, nxt = nxt, cur
        yield k, radius, cur


def transition_series(A: LatticeAnalysis, start: str, n_values: Iterable[int],
                      cell_cap: int = DEFAULT_CELL_CAP) -> Iterator[HeatKernelTable]:
    """Tables for every requested n (ascending), from one DP sweep."""
    start = A.resolve_vertex(start)
    wanted = sorted(set(int(n) for n in n_values))
    if not wanted:
        return
    if wanted[0] < 0:
        raise ValueError("n must be >= 0")
    targets = set(wanted)
    for k, radius, buf in _iterate(A, start, wanted[-1], cell_cap):
        if k in targets:
            yield HeatKernelTable(k, start, A.graph.vertices, radius, buf.copy())


def exact_transition(A: LatticeAnalysis, start: str, n: int,
                     cell_cap: int = DEFAULT_CELL_CAP) -> HeatKernelTable:
    """p(n, (start,0), ·) by n sparse convolution sweeps over (vertex, τ)."""
    return next(transition_series(A, start, [n], cell_cap))


def table_moments(A: LatticeAnalysis, table: HeatKernelTable) -> tuple[np.ndarray, np.ndarray]:
    """Mean of Φ(v)+τ (Γ-coordinates) and covariance of A(Φ(v)+τ)."""
    d = table.dim
    cells = table.grid().reshape(-1, d).astype(float)
    weights = table.mass.reshape(len(table.vertices), -1)
    mean = np.zeros(d)
    second = np.zeros((d, d))
    for i, v in enumerate(table.vertices):
        w = weights[i]
        keep = w > 0
        if not keep.any():
            continue
        x = cells[keep] + A.realization[v]
        mean += w[keep] @ x
        y = x @ A.albanese.embedding.T
        second += (y * w[keep, None]).T @ y
    emb_mean = A.albanese.embedding @ mean
    return mean, second - np.outer(emb_mean, emb_mean)


# ---- Gaussian leading term and LCLT -------------------------------------------

def _state(A: LatticeAnalysis, s) -> tuple[str, tuple[int, ...]]:
    v, cell = s
    return A.resolve_vertex(v), tuple(int(c) for c in cell)


def admissible(A: LatticeAnalysis, n: int, x, y) -> bool:
    """Whether n lies in the residue class mod K where p(n, x, y) can be nonzero."""
    x, y = _state(A, x), _state(A, y)
    lab = A.labels
    return (n - (lab[y[0]] - lab[x[0]])) % A.period_K == 0


def gaussian_leading(A: LatticeAnalysis, n: int, x, y) -> float:
    """K·vol·m(y)·(2πn)^{-d/2}·exp(−|z|²/2n), or 0 off the admissible class."""
    x, y = _state(A, x), _state(A, y)
    if not admissible(A, n, x, y):
        return 0.0
    z = A.displacement(x, y, n)
    return (A.period_K * A.albanese.volume * A.m(y[0]) * (2 * math.pi * n) ** (-A.dim / 2)
            * math.exp(-float(z @ z) / (2 * n)))


def _prob(A: LatticeAnalysis, table: HeatKernelTable, x, y) -> float:
    tau = np.subtract(y[1], x[1])
    return table.mass_at(y[0], tau)


def lclt_ratio(A: LatticeAnalysis, n: int, x, y, table: HeatKernelTable | None = None) -> float:
    """U_n = p(n,x,y) / gaussian_leading(n,x,y)."""
    x, y = _state(A, x), _state(A, y)
    lead = gaussian_leading(A, n, x, y)
    if lead == 0.0:
        raise CrystalWalkError(f"n={n} is not in the admissible residue class for {x}→{y}")
    if table is None:
        table = exact_transition(A, x[0], n)
    return _prob(A, table, x, y) / lead


def lclt_sup_error(A: LatticeAnalysis, n: int, window: Sequence[tuple[int, int]],
                   start: str | None = None, table: HeatKernelTable | None = None) -> float:
    """max over y in the window of |(2πn)^{d/2} p(n,x,y)/m(y) − K vol e^{−|z|²/2n}|.

    ``window`` gives inclusive cell ranges relative to the rounded drift nρ;
    x = (start, 0).
    """
    start = A.resolve_vertex(start or A.graph.base_vertex)
    if table is None:
        table = exact_transition(A, start, n)
    shift = np.rint(n * A.rho).astype(int)
    x = (start, (0,) * A.dim)
    worst = 0.0
    for cell in itertools.product(*[range(lo, hi + 1) for lo, hi in window]):
        c = tuple(int(a) + int(b) for a, b in zip(cell, shift))
        for v in A.graph.vertices:
            y = (v, c)
            scaled = (2 * math.pi * n) ** (A.dim / 2) * _prob(A, table, x, y) / A.m(v)
            lead = (2 * math.pi * n) ** (A.dim / 2) * gaussian_leading(A, n, x, y) / A.m(v)
            worst = max(worst, abs(scaled - lead))
    return worst


@dataclass(frozen=True)
class NumericA1:
    value: float
    residual: float
    method: str
    n_list: tuple[int, ...]
    f_values: tuple[float, ...]
    u_values: tuple[float, ...]
    warning: str | None = None

    def __float__(self) -> float:
        return self.value


def a1_numeric(A: LatticeAnalysis, x, y, n_list: Sequence[int],
               y_of_n: Callable[[int], tuple] | None = None) -> NumericA1:
    """Extrapolate f(n) = n(U_n − 1) to n → ∞ under f = a₁ + c n^{-1/2}.

    Returns 2f(n_max) − f(n_max/4) when n_max/4 is in ``n_list``, otherwise
    the least-squares fit of (1, n^{-1/2}).  ``y_of_n`` supplies the target
    per n when the walk drifts.
    """
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 2:
        raise ValueError("need at least two values of n")
    x = _state(A, x)
    targets = {n: _state(A, y_of_n(n) if y_of_n else y) for n in n_list}
    for n in n_list:
        if not admissible(A, n, x, targets[n]):
            raise ValueError(f"n={n} is not admissible")
    U = []
    for table in transition_series(A, x[0], n_list):
        U.append(lclt_ratio(A, table.n, x, targets[table.n], table))
    nn = np.array(n_list, dtype=float)
    f = nn * (np.array(U) - 1.0)
    design = np.column_stack([np.ones_like(nn), nn ** -0.5])
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    fit_res = float(np.sqrt(np.mean((design @ coef - f) ** 2)))
    n_max = n_list[-1]
    if n_max % 4 == 0 and n_max // 4 in n_list:
        value = 2 * f[-1] - f[n_list.index(n_max // 4)]
        method = "richardson"
    else:
        value = float(coef[0])
        method = "least_squares"
    warn = None
    if fit_res > 0.1 * abs(value):
        warn = f"ill-conditioned fit: residual {fit_res:.3g} vs estimate {value:.3g}"
        warnings.warn(warn, RuntimeWarning, stacklevel=2)
    return NumericA1(float(value), fit_res, method, tuple(n_list), tuple(f.tolist()),
                     tuple(U), warn)

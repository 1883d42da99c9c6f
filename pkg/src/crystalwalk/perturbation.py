"""Eigen-derivatives of the twisted Perron root, q-tensors and the
analytic first correction a₁ of the local CLT.

Every polynomial in the covector u is stored as a full symmetric tensor.
Forms are taken in the Albanese-orthonormal frame ω_i(e) = (A dΦ(e))_i
unless another frame is supplied.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .albanese import LatticeAnalysis
from .errors import InconsistentSystemError
from .spectral import perron_eigendata

TWO_PI = 2.0 * math.pi
A_I = 2j * math.pi  # the constant 2π√−1


def sym(t: np.ndarray) -> np.ndarray:
    """Average of ``t`` over all permutations of its axes."""
    r = t.ndim
    if r < 2:
        return t
    return sum(np.transpose(t, p) for p in itertools.permutations(range(r))) / math.factorial(r)


def sprod(*ts: np.ndarray) -> np.ndarray:
    """Symmetrized tensor product (product of homogeneous polynomials)."""
    out = ts[0]
    for t in ts[1:]:
        out = np.multiply.outer(out, t)
    return sym(out)


def poly_eval(t: np.ndarray, u: Sequence[float]):
    """Evaluate the homogeneous polynomial with coefficient tensor ``t`` at ``u``."""
    u = np.asarray(u, dtype=float)
    out = t
    for _ in range(t.ndim):
        out = out @ u
    return out


@dataclass(frozen=True)
class PerturbationData:
    vertices: tuple[str, ...]
    forms: np.ndarray          # ω_i(e), edges × d
    psi1: np.ndarray           # r_i(x): ψ₀′ = 2π√−1 |V|^{1/2} Σ r_i u_i
    phi2: np.ndarray           # φ₀″ coefficients, V × d × d
    psi2: np.ndarray           # ψ₀″ coefficients, V × d × d
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray           # ψ-route
    lam3_phi: np.ndarray       # φ-route
    lam4: np.ndarray
    side_residuals: dict[str, float]
    system_residual: float

    def vertex(self, v: str) -> int:
        return self.vertices.index(v)


def _solve_pinned(M: np.ndarray, rhs: np.ndarray, null_left: np.ndarray,
                  pin_row: np.ndarray, pin_value: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    """Solve the singular-consistent M x = rhs together with pin_row·x = pin_value."""
    n = M.shape[0]
    flat = rhs.reshape(n, -1)
    scale = max(1.0, float(np.abs(flat).max()))
    if np.abs(null_left @ flat).max() > 1e-10 * scale:
        raise InconsistentSystemError(f"{what}: right-hand side not orthogonal to the cokernel")
    aug = np.vstack([M, pin_row[None, :]])
    b = np.vstack([flat, np.reshape(pin_value, (1, -1))])
    x, *_ = np.linalg.lstsq(aug, b, rcond=None)
    res = float(np.abs(aug @ x - b).max()) / scale
    if res > 1e-10:
        raise InconsistentSystemError(f"{what}: residual {res:.3g}")
    return x.reshape(rhs.shape), res


def eigen_derivatives(A: LatticeAnalysis, frame: np.ndarray | None = None) -> PerturbationData:
    """Solve the derivative systems at ω = 0 and assemble λ′ … λ⁽⁴⁾.

    ``frame`` maps Γ-coordinates to the coordinates of u (default: the
    Albanese-orthonormal embedding).  Passing the identity gives the
    Γ-dual frame ω(e) = ⟨u, dΦ(e)⟩.
    """
    g = A.graph
    B = A.albanese.embedding if frame is None else np.asarray(frame, dtype=float)
    W = A.dphi @ B.T
    V, d = g.n_vertices, g.dim
    m = A.measure.values
    p = g.prob
    o, t, inv = g.origin_idx, g.terminus_idx, g.inverse_idx
    p_bar = p[inv]
    mt = p * m[o]
    c, C = V ** -0.5, V ** 0.5
    L = g.transition_matrix()
    I = np.eye(V)
    ones = np.ones(V)

    def vsum(values: np.ndarray) -> np.ndarray:
        """Σ over e ∈ E_x grouped by origin vertex x."""
        out = np.zeros((V,) + values.shape[1:], dtype=values.dtype)
        np.add.at(out, o, values)
        return out

    T1 = mt @ W
    T2 = np.einsum("e,ei,ej->ij", mt, W, W)
    T3 = np.einsum("e,ei,ej,ek->ijk", mt, W, W, W)
    T4 = np.einsum("e,ei,ej,ek,el->ijkl", mt, W, W, W, W)
    N = T2 - np.outer(T1, T1)

    # ψ₀′ = 2π√−1·C·y with (I − ᵗL) y_i = Σ_{E_x} p(ē)ω_i m(t) + m(x)⟨γ_p, ω_i⟩, Σ y = 0
    rhs = vsum(p_bar[:, None] * W * m[t][:, None]) + m[:, None] * T1[None, :]
    y, r1 = _solve_pinned(I - L.T, rhs, ones, ones, np.zeros(d), "psi'")

    # (I − L) φ₀″ = −4π² c (Σ_{E_x} p ω_iω_j − Σ m̃ ω_iω_j), Σ φ₀″ = 0
    rhs = -4 * math.pi ** 2 * c * (vsum(np.einsum("e,ei,ej->eij", p, W, W)) - T2[None])
    phi2, r2 = _solve_pinned(I - L, rhs, m, ones, np.zeros((d, d)), "phi''")

    # (I − ᵗL) ψ₀″ = 4π√−1 (Σ p(ē)ω ψ′(t) + ⟨γ_p,ω⟩ψ′(x)) − 4π²C(Σ p(ē)ω² m(t) − m(x)Σ m̃ω²)
    cross = vsum(np.einsum("e,ei,ej->eij", p_bar, W, y[t])) + np.einsum("i,xj->xij", T1, y)
    cross = 0.5 * (cross + cross.transpose(0, 2, 1))
    rhs = (-8 * math.pi ** 2 * C * cross
           - 4 * math.pi ** 2 * C * (vsum(np.einsum("e,ei,ej,e->eij", p_bar, W, W, m[t]))
                                     - m[:, None, None] * T2[None]))
    pin = -V * np.einsum("x,xij->ij", m, phi2)
    psi2, r3 = _solve_pinned(I - L.T, rhs, ones, ones, pin, "psi''")

    # derivatives E_k of e^{-λ} and cumulant-style conversion f = −λ
    a = A_I
    E1 = a * T1
    E2 = a ** 2 * T2
    S = sym(np.einsum("e,ei,ejk->ijk", mt, W, phi2[t]))
    M2 = np.einsum("x,xjk->jk", m, phi2)
    E3_phi = a ** 3 * T3 + 3 * C * a * (S - sprod(T1, M2))
    P3 = sym(np.einsum("e,ei,ej,ek->ijk", p, W, W, y[o]))
    E3 = a ** 3 * T3 - 3 * a ** 3 * P3
    P4 = sym(np.einsum("e,ei,ej,ek,el->ijkl", p, W, W, W, y[o]))
    Q4 = sym(np.einsum("e,ei,ej,ekl->ijkl", p, W, W, psi2[o]))
    S2 = psi2.sum(axis=0)
    E4 = a ** 4 * T4 - 4 * a ** 4 * P4 + (6 * a ** 2 / C) * (Q4 - sprod(T2, S2))

    f1 = E1
    f2 = E2 - sprod(f1, f1)
    f3 = E3 - 3 * sprod(f1, f2) - sprod(f1, f1, f1)
    f3_phi = E3_phi - 3 * sprod(f1, f2) - sprod(f1, f1, f1)
    f4 = (E4 - 4 * sprod(f1, f3) - 3 * sprod(f2, f2) - 6 * sprod(f1, f1, f2)
          - sprod(f1, f1, f1, f1))

    side = {
        "sum_psi1": float(np.abs(y.sum(axis=0)).max()),
        "sum_phi2": float(np.abs(phi2.sum(axis=0)).max()),
        "sum_psi2": float(np.abs(S2 - pin).max()),
    }
    lam2 = -f2
    if np.abs(lam2.imag).max() > 1e-9:
        raise InconsistentSystemError("λ″ has a nonzero imaginary part")
    return PerturbationData(g.vertices, W, y, phi2, psi2, -f1, lam2.real, -f3, -f3_phi,
                            (-f4).real, side, max(r1, r2, r3))


# ---- q-tensors and a₁ ---------------------------------------------------------

@dataclass(frozen=True)
class QTensors:
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    q4: np.ndarray


def q_tensors(A: LatticeAnalysis, P: PerturbationData, x0: str, y0: str,
              printed: bool = False) -> QTensors:
    """Coefficient tensors of the polynomials Q₁ … Q₄.

    Q₁ comes from ψ₀′(y0), Q₂ from φ₀″(x0) and ψ₀″(y0), Q₃ = √−1·λ⁽³⁾ and
    Q₄ = λ⁽⁴⁾.  The φ₀″ contribution to Q₂ carries the factor m(y0), since
    it multiplies ψ₀(y0) = |V|^{1/2}m(y0) in the product φ(x0)·conj(ψ(y0)).
    ``printed=True`` drops that factor, as in the literal statement.
    """
    V = len(P.vertices)
    ix, iy = P.vertex(x0), P.vertex(y0)
    my = 1.0 if printed else A.measure.values[iy]
    q1 = -TWO_PI * P.psi1[iy]
    q2 = -(V ** 0.5 * my * P.phi2[ix] + V ** -0.5 * P.psi2[iy])
    q3c = 1j * P.lam3
    if np.abs(q3c.imag).max() > 1e-8 * max(1.0, np.abs(q3c).max()):
        raise InconsistentSystemError("λ⁽³⁾ is not purely imaginary")
    return QTensors(q1, sym(q2), q3c.real, P.lam4.copy())


@dataclass(frozen=True)
class A1Terms:
    value: float
    terms: dict[str, float]
    z: np.ndarray


def a1_terms(A: LatticeAnalysis, P: PerturbationData, x: tuple, y: tuple, n: int,
             form: str = "derived") -> A1Terms:
    """Analytic a₁ with its individual contributions.

    ``form="derived"`` (default) uses the index pattern Σ q_iij z_j, the
    Gaussian fourth-moment contraction (3Σq_iij q_jkk + 2Σq_ijk²) for the
    squared cubic term and Q₂ with the m(y) factor.  ``form="printed"``
    evaluates the literal closed form (Σ q_ij z_j, 5Σq_iij q_jkk, no m(y)).
    """
    if form not in ("derived", "printed"):
        raise ValueError("form must be 'derived' or 'printed'")
    x = (A.resolve_vertex(x[0]), tuple(x[1]))
    y = (A.resolve_vertex(y[0]), tuple(y[1]))
    Q = q_tensors(A, P, x[0], y[0], printed=(form == "printed"))
    my = A.m(y[0])
    z = A.displacement(x, y, n)
    pi = math.pi
    tr3 = np.einsum("iij->j", Q.q3)
    terms = {"linear_q1": float(Q.q1 @ z) / (2 * pi * my)}
    if form == "derived":
        terms["linear_q3"] = float(tr3 @ z) / (16 * pi ** 3)
    else:
        terms["linear_q2"] = float(np.einsum("ij,j->", Q.q2, z)) / (16 * pi ** 3)
    terms["trace_q2"] = -float(np.trace(Q.q2)) / (8 * pi ** 2 * my)
    terms["q1_q3"] = -float(Q.q1 @ tr3) / (32 * pi ** 4 * my)
    terms["q4"] = -float(np.einsum("iijj->", Q.q4)) / (128 * pi ** 4)
    if form == "derived":
        terms["q3_sq"] = -(3 * float(tr3 @ tr3) + 2 * float(np.sum(Q.q3 ** 2))) / (1536 * pi ** 6)
    else:
        terms["q3_sq"] = -5 * float(tr3 @ tr3) / (1536 * pi ** 6)
    return A1Terms(sum(terms.values()), terms, z)


def a1_analytic(A: LatticeAnalysis, P: PerturbationData, x: tuple, y: tuple, n: int,
                form: str = "derived") -> float:
    """a₁(π(x), π(y), γ_p; z) with z = A(Φ(y)+τ_y − Φ(x)−τ_x − nρ)."""
    return a1_terms(A, P, x, y, n, form).value


# ---- finite-difference cross-check -------------------------------------------

_FD = {
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _neg_log_mu(A: LatticeAnalysis, P: PerturbationData, u: np.ndarray, t: float,
                frame: np.ndarray) -> complex:
    omega = frame.T @ (t * u)
    mu = perron_eigendata(A.graph, omega, A.dphi, A.measure.values).eigenvalue
    return -np.log(mu)


def fd_crosscheck(A: LatticeAnalysis, P: PerturbationData, direction: Sequence[float],
                  h: float = 1e-2, frame: np.ndarray | None = None) -> dict:
    """Central differences of −log μ₀(tu) against λ′ … λ⁽⁴⁾ along ``direction``.

    Errors are reported at h and h/2; ``order_ratio`` ≈ 4 confirms O(h²).
    ``error_extrapolated`` is the error of the Richardson combination of
    the two estimates, which is O(h⁴).
    """
    if not 1e-4 <= h <= 1e-2:
        raise ValueError("h must lie in [1e-4, 1e-2]")
    frame = A.albanese.embedding if frame is None else np.asarray(frame, dtype=float)
    u = np.asarray(direction, dtype=float)
    exact = {1: poly_eval(P.lam1, u), 2: poly_eval(P.lam2, u),
             3: poly_eval(P.lam3, u), 4: poly_eval(P.lam4, u)}
    cache: dict[float, complex] = {}

    def f(t):
        if t not in cache:
            cache[t] = _neg_log_mu(A, P, u, t, frame)
        return cache[t]

    report = {"direction": u.tolist(), "h": h, "orders": {}}
    for k, (offs, wts) in _FD.items():
        ests = [sum(w * f(j * hh) for j, w in zip(offs, wts)) / hh ** k for hh in (h, h / 2)]
        errs = [abs(e - exact[k]) for e in ests]
        ratio = errs[0] / errs[1] if errs[1] > 0 else math.inf
        richardson = (4 * ests[1] - ests[0]) / 3
        report["orders"][k] = {"exact": complex(exact[k]), "error_h": errs[0],
                               "error_h2": errs[1], "order_ratio": ratio,
                               "error_extrapolated": abs(richardson - exact[k])}
    return report

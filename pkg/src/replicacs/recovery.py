"""Finite-size regularized least-squares solver.

Minimizes, over J terminal blocks jointly,

    sum_j ||y_j - A_j v_j||^2 / (2 lambda_j) + sum_n weight * u(v_n)

by accelerated proximal gradient descent with backtracking and restart on
objective increase.  The penalty decouples per column, so the prox step is
exact via the regularizers module.  Acceleration is disabled for nonconvex
penalties, where a plain monotone descent is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .regularizers import RegularizerSpec, penalty_block, prox_block
from .signal_model import distortion

_GRAM_MAX_N = 4096  # precompute A^T A below this size


class SolverDiverged(RuntimeError):
    """Raised when the objective becomes non-finite (nonconvex runs)."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class Instance:
    """One finite-N recovery problem (shared N across terminals)."""

    A: list          # J matrices, M_j x N
    y: list          # J vectors, M_j
    lam: np.ndarray  # J positive
    spec: RegularizerSpec
    x_true: np.ndarray | None = None

    def __post_init__(self):
        self.A = [np.asarray(a, dtype=float) for a in self.A]
        self.y = [np.asarray(v, dtype=float).reshape(-1) for v in self.y]
        self.lam = np.asarray(self.lam, dtype=float).reshape(-1)
        J = len(self.A)
        if not (len(self.y) == len(self.lam) == J):
            raise ValueError("A, y, lam must agree on the number of terminals")
        if np.any(self.lam <= 0):
            raise ValueError("lambda must be positive")
        Ns = {a.shape[1] for a in self.A}
        if len(Ns) != 1:
            raise ValueError("all terminals must share the same N")
        for a, v in zip(self.A, self.y):
            if a.shape[0] != v.shape[0]:
                raise ValueError("y_j length must match the rows of A_j")
        self.N = Ns.pop()
        self.J = J
        if self.x_true is not None:
            self.x_true = np.atleast_2d(np.asarray(self.x_true, dtype=float))
            if self.x_true.shape != (J, self.N):
                raise ValueError("x_true must be J x N")


@dataclass
class SolveReport:
    xhat: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_step: float = 0.0


def objective(inst: Instance, V: np.ndarray) -> float:
    """Exact objective at a J x N iterate."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape != (inst.J, inst.N):
        raise ValueError(f"expected shape {(inst.J, inst.N)}, got {V.shape}")
    total = 0.0
    for j in range(inst.J):
        r = inst.y[j] - inst.A[j] @ V[j]
        total += float(r @ r) / (2.0 * inst.lam[j])
    return total + float(np.sum(penalty_block(inst.spec, V)))


def _operator_norm_sq(apply_gram, n: int) -> float:
    """Largest eigenvalue of the PSD Gramian via power iteration."""
    v = np.ones(n) + 1e-3 * np.linspace(0.0, 1.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(50):
        w = apply_gram(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        if abs(norm - lam) <= 1e-10 * max(1.0, norm):
            return norm
        lam, v = norm, v_new
    return lam


class _Smooth:
    """Quadratic part with an optional precomputed Gram representation."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.use_gram = inst.N <= _GRAM_MAX_N
        if self.use_gram:
            self.G = [a.T @ a for a in inst.A]
            self.b = [a.T @ v for a, v in zip(inst.A, inst.y)]
            self.y2 = [float(v @ v) for v in inst.y]
            self.op2 = [_operator_norm_sq(lambda v, g=g: g @ v, inst.N)
                        for g in self.G]
        else:
            self.op2 = [_operator_norm_sq(lambda v, a=a: a.T @ (a @ v), inst.N)
                        for a in inst.A]

    @property
    def lipschitz(self) -> float:
        return float(sum(o / l for o, l in zip(self.op2, self.inst.lam)))

    def value(self, V):
        inst = self.inst
        total = 0.0
        for j in range(inst.J):
            if self.use_gram:
                r2 = V[j] @ (self.G[j] @ V[j]) - 2.0 * (self.b[j] @ V[j]) + self.y2[j]
                r2 = max(r2, 0.0)
            else:
                r = inst.y[j] - inst.A[j] @ V[j]
                r2 = float(r @ r)
            total += r2 / (2.0 * inst.lam[j])
        return total

    def grad(self, V):
        inst = self.inst
        out = np.empty_like(V)
        for j in range(inst.J):
            if self.use_gram:
                out[j] = (self.G[j] @ V[j] - self.b[j]) / inst.lam[j]
            else:
                out[j] = inst.A[j].T @ (inst.A[j] @ V[j] - inst.y[j]) / inst.lam[j]
        return out


def rls_solve(inst: Instance, *, max_iter: int = 5000, tol: float = 1e-10,
              v0: np.ndarray | None = None) -> SolveReport:
    """Solve the joint recovery problem to the stated relative tolerance.

    Deterministic: the same instance and options produce a bit-identical
    iterate path.  For convex penalties the objective trace is monotone
    (acceleration restarts whenever it would overshoot).
    """
    smooth = _Smooth(inst)
    accelerate = inst.spec.convex
    eta = 1.0 / max(smooth.lipschitz, 1e-300)

    v = np.zeros((inst.J, inst.N)) if v0 is None else \
        np.array(np.atleast_2d(v0), dtype=float, copy=True)
    if inst.spec.box is not None:
        v = np.clip(v, -inst.spec.box, inst.spec.box)
    f_v = smooth.value(v) + float(np.sum(penalty_block(inst.spec, v)))
    trace = [f_v]
    w = v.copy()
    t = 1.0
    converged = False
    it = 0

    def _step(point, eta):
        # backtracked prox-gradient step from `point`
        g = smooth.grad(point)
        f_point = smooth.value(point)
        while True:
            cand = prox_block(point - eta * g, np.full(inst.J, eta), inst.spec)
            d = cand - point
            bound = f_point + float(np.sum(g * d)) + float(np.sum(d * d)) / (2 * eta)
            if smooth.value(cand) <= bound + 1e-12 * max(1.0, abs(bound)):
                return cand, eta
            eta *= 0.5
            if eta < 1e-18:
                return cand, eta

    for it in range(1, max_iter + 1):
        cand, eta = _step(w, eta)
        f_c = smooth.value(cand) + float(np.sum(penalty_block(inst.spec, cand)))
        if not np.isfinite(f_c):
            raise SolverDiverged("objective became non-finite", trace)
        if f_c > f_v + 1e-12 * max(1.0, abs(f_v)):
            # momentum overshoot: restart from the current iterate
            t = 1.0
            cand, eta = _step(v, eta)
            f_c = smooth.value(cand) + float(np.sum(penalty_block(inst.spec, cand)))
            if not np.isfinite(f_c):
                raise SolverDiverged("objective became non-finite", trace)
        decrease = abs(f_v - f_c) / max(1.0, abs(f_v))
        v_old, v, f_v = v, cand, min(f_c, f_v)
        trace.append(f_v)
        if accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            w = v + ((t - 1.0) / t_next) * (v - v_old)
            t = t_next
        else:
            w = v
        if decrease < tol:
            converged = True
            break

    return SolveReport(xhat=v, objective_trace=trace, iterations=it,
                       converged=converged, final_step=eta)


def score(inst: Instance, report: SolveReport, kind: str = "mse") -> float:
    """Distortion of the recovered block against the stored truth."""
    if inst.x_true is None:
        raise ValueError("instance carries no x_true to score against")
    return distortion(report.xhat, inst.x_true, kind)

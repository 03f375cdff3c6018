"""Replica-symmetric fixed-point solver for the asymptotic distortion.

The high-dimensional recovery problem decouples, per terminal, into the
scalar channel y_j = x_j + z_j with z_j ~ N(0, xi_j^2) and the estimator

    xhat = argmin_v  sum_j (y_j - v_j)^2 / (2 tau_j) + u(v),

where, writing R_j for the R-transform of terminal j's spectral law and
w_j = -chi_j / lambda_j,

    tau_j  = lambda_j / R_j(w_j),
    xi_j^2 = R_j(w_j)^{-2} * d/dchi_j [ (sigma_j^2 chi_j - lambda_j q_j) R_j(w_j) ]

with q_j held fixed under the derivative.  The order parameters satisfy

    q_j   = E[(xhat_j - x_j)^2],
    chi_j = (tau_j / xi_j^2) E[(xhat_j - x_j) z_j],

and the predicted distortion is D = E[Delta(xhat; x)].  Expectations are
evaluated by exact prior enumeration combined with quadrature over the
observation (kink-aligned Gauss-Legendre panels for J = 1, a Gauss-Hermite
tensor rule for J = 2), and by seeded Monte Carlo for J > 2.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_hermitenorm

from .regularizers import RegularizerSpec, prox_block
from .signal_model import JointSparsityPrior, prior_mixture, sample_joint, second_moment
from .spectra import SpectralLaw, SpectrumDomainError, r_transform, r_transform_derivative

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

TUNABLE = ("lambda", "weight", "phi", "alpha", "box")


class RsDomainError(ValueError):
    """A transform left its domain or xi^2 went negative; carries the state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class RsProblem:
    prior: JointSparsityPrior
    spec: RegularizerSpec
    laws: tuple[SpectralLaw, ...]
    lam: tuple[float, ...]
    sigma2: tuple[float, ...]
    distortion: str = "mse"

    def __post_init__(self):
        J = self.prior.J
        laws = tuple(self.laws)
        lam = tuple(float(x) for x in self.lam)
        sigma2 = tuple(float(x) for x in self.sigma2)
        if not (len(laws) == len(lam) == len(sigma2) == J):
            raise ValueError("laws, lam, sigma2 must all have length J")
        if any(x <= 0 for x in lam):
            raise ValueError("lambda must be positive")
        if any(x < 0 for x in sigma2):
            raise ValueError("sigma2 must be nonnegative")
        if self.distortion not in ("mse", "support_error"):
            raise ValueError(f"unknown distortion {self.distortion!r}")
        object.__setattr__(self, "laws", laws)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def J(self) -> int:
        return self.prior.J


@dataclass(frozen=True)
class RsState:
    q: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "chi", np.asarray(self.chi, dtype=float).reshape(-1))


@dataclass(frozen=True)
class DecoupledSystem:
    tau: np.ndarray
    xi2: np.ndarray


@dataclass
class RsSolution:
    state: RsState
    system: DecoupledSystem
    D: float
    iterations: int
    residual: float
    converged: bool
    branches: list | None = None


def decouple(state: RsState, problem: RsProblem) -> DecoupledSystem:
    """Effective channel parameters (tau_j, xi_j^2) at the given state."""
    J = problem.J
    tau = np.empty(J)
    xi2 = np.empty(J)
    for j in range(J):
        lam, s2 = problem.lam[j], problem.sigma2[j]
        q, chi = state.q[j], state.chi[j]
        omega = -chi / lam
        try:
            R = r_transform(problem.laws[j], omega)
            Rp = r_transform_derivative(problem.laws[j], omega)
        except SpectrumDomainError as exc:
            raise RsDomainError(f"terminal {j + 1}: {exc}", state) from exc
        tau[j] = lam / R
        val = (s2 * R + (s2 * chi - lam * q) * Rp * (-1.0 / lam)) / R**2
        if val < 0:
            if val > -1e-14:
                val = 0.0
            else:
                raise RsDomainError(
                    f"terminal {j + 1}: xi^2 = {val} < 0 (state out of domain)",
                    state)
        xi2[j] = val
    return DecoupledSystem(tau=tau, xi2=xi2)


# ---------------------------------------------------------------------------
# Expectation engines

_GL_ORDER = 15      # Gauss-Legendre nodes per panel (1D engine)
_GL_WIDTH = 0.5     # max panel width in standard deviations
_GL_SPAN = 8.5      # truncation of the Gaussian tail, in std devs


def _prox_kinks(spec: RegularizerSpec, tau: float) -> list[float]:
    """Nondifferentiability points of the J=1 estimator y -> xhat(y).

    Panel boundaries placed here keep the 1D integrands piecewise smooth,
    so composite Gauss-Legendre converges spectrally despite thresholding.
    """
    w = spec.weight
    wt = w * tau
    box = spec.box
    kind = spec.kind
    if kind == "lpq":
        if spec.q == 1:
            kind = "l1"
        elif spec.q == 2 and spec.p == 2:
            kind = "ridge"
    if kind == "group_l21":
        kind = "l1"  # single terminal: ||v||_2 = |v|
    out = []
    if kind in ("l1",):
        out += [-wt, wt]
        if box is not None:
            out += [-(wt + box), wt + box]
    elif kind == "ridge":
        if box is not None:
            edge = box * (1.0 + wt)
            out += [-edge, edge]
    elif kind == "zero":
        if box is not None:
            out += [-box, box]
    elif kind == "l0":
        edge = math.sqrt(2.0 * wt) if wt > 0 else 0.0
        out += [-edge, edge]
        if box is not None:
            out += [-box, box]
    # general lpq: kink set not known in closed form; dense panels only
    return out


def _line_nodes(mean: float, sd: float, kinks) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-weighted 1D nodes: kink-aligned composite Gauss-Legendre."""
    gl_x, gl_w = leggauss(_GL_ORDER)
    cuts = {-_GL_SPAN, _GL_SPAN}
    for k in kinks:
        u = (k - mean) / sd
        if -_GL_SPAN < u < _GL_SPAN:
            cuts.add(float(u))
    bounds = sorted(cuts)
    nodes, weights = [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        n_panels = max(1, int(math.ceil((b - a) / _GL_WIDTH)))
        edges = np.linspace(a, b, n_panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            u = 0.5 * (hi + lo) + half * gl_x
            nodes.append(u)
            weights.append(half * gl_w * np.exp(-0.5 * u * u)
                           / math.sqrt(2.0 * math.pi))
    u = np.concatenate(nodes)
    return mean + sd * u, np.concatenate(weights)


@functools.lru_cache(maxsize=16)
def _gh_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, w = roots_hermitenorm(order)
    return nodes, w / math.sqrt(2.0 * math.pi)


@functools.lru_cache(maxsize=16)
def _gh_tensor(order: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    nodes1, w1 = _gh_rule(order)
    grids = np.meshgrid(*([nodes1] * r), indexing="ij")
    G = np.stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*([w1] * r), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wgrids]), axis=0)
    return G, wts


def quadrature_expectations(system: DecoupledSystem, problem: RsProblem,
                            quad_order: int = 61, _comps=None):
    """Exact-mixture quadrature evaluation of the update map (J <= 2).

    For each gate configuration the pair (x, y) is jointly Gaussian, so the
    inner expectations reduce to integrals over y alone via conditioning:
    E[(xhat - x_j)^2 | y] = (xhat_j - E[x_j|y])^2 + Var[x_j|y] and
    E[(xhat_j - x_j) z_j] = E[xhat_j E[z_j|y]].  One-dimensional problems
    use kink-aligned Gauss-Legendre panels (machine-precision accurate for
    thresholding estimators); two-dimensional ones use a Gauss-Hermite
    tensor rule of the given order.
    """
    if quad_order < 3:
        raise ValueError("quadrature order must be >= 3")
    J = problem.J
    if J > 2:
        raise ValueError("quadrature engine supports J <= 2")
    xi2 = system.xi2
    if np.any(xi2 < 0):
        raise RsDomainError("negative xi^2")
    if J == 1:
        kinks = _prox_kinks(problem.spec, float(system.tau[0]))
    comps = prior_mixture(problem.prior) if _comps is None else _comps

    # nodes and conditioning operators per component, then one prox call
    pieces = []
    for comp in comps:
        Cy = comp.cov + np.diag(xi2)
        evals, evecs = np.linalg.eigh(Cy)
        cutoff = 1e-13 * max(1.0, float(evals.max(initial=0.0)))
        active = evals > cutoff
        r = int(active.sum())
        if r == 0:
            y = comp.mean[:, None]
            wts = np.ones(1)
        elif J == 1:
            y_nodes, wts = _line_nodes(float(comp.mean[0]),
                                       math.sqrt(float(evals[active][0])), kinks)
            y = y_nodes[None, :]
        else:
            G, wts = _gh_tensor(quad_order, r)
            scale = np.sqrt(evals[active])
            y = comp.mean[:, None] + evecs[:, active] @ (scale[:, None] * G)
        if r:
            pinv = (evecs[:, active] / evals[active]) @ evecs[:, active].T
        else:
            pinv = np.zeros((J, J))
        Kx = comp.cov @ pinv
        Vx = comp.cov - Kx @ comp.cov
        Kz = np.diag(xi2) @ pinv
        pieces.append((comp, y, wts, Kx, Vx, Kz))

    Y = np.concatenate([p[1] for p in pieces], axis=1)
    xhat_all = prox_block(Y, system.tau, problem.spec)

    q = np.zeros(J)
    cross = np.zeros(J)
    d_support = 0.0
    offset = 0
    for comp, y, wts, Kx, Vx, Kz in pieces:
        K = y.shape[1]
        xhat = xhat_all[:, offset:offset + K]
        offset += K
        dy = y - comp.mean[:, None]
        ex = comp.mean[:, None] + Kx @ dy
        ez = Kz @ dy
        q += comp.prob * (((xhat - ex) ** 2) @ wts + np.diag(Vx) * wts.sum())
        cross += comp.prob * ((xhat * ez) @ wts)
        if problem.distortion == "support_error":
            mismatch = np.sum((xhat != 0) != comp.nonzero[:, None], axis=0)
            d_support += comp.prob * float(mismatch @ wts)

    chi = np.where(xi2 > 0, system.tau * cross / np.where(xi2 > 0, xi2, 1.0), 0.0)
    D = float(q.sum()) if problem.distortion == "mse" else d_support
    return q, chi, D


def mc_expectations(system: DecoupledSystem, problem: RsProblem,
                    draws: int = 1_000_000, seed: int = 0, chunk: int = 1 << 18):
    """Seeded Monte Carlo update map with standard errors.

    Returns a dict with q, chi, D and matching se_* entries.  Used as the
    expectation engine for J > 2 and as an independent cross-check of the
    quadrature engine.
    """
    J = problem.J
    xi = np.sqrt(system.xi2)
    sums = {k: 0.0 for k in ("d",)}
    sq = {k: 0.0 for k in ("d",)}
    qs = np.zeros(J)
    qs2 = np.zeros(J)
    cs = np.zeros(J)
    cs2 = np.zeros(J)
    done = 0
    idx = 0
    while done < draws:
        n = min(chunk, draws - done)
        block = sample_joint(problem.prior, n, [seed, idx, 0])
        zrng = np.random.default_rng([seed, idx, 1])
        z = xi[:, None] * zrng.standard_normal((J, n))
        y = block.X + z
        xhat = prox_block(y, system.tau, problem.spec)
        err = xhat - block.X
        e2 = err**2
        qs += e2.sum(axis=1)
        qs2 += (e2**2).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cstat = np.where(system.xi2[:, None] > 0,
                             system.tau[:, None] * err * z
                             / np.where(system.xi2[:, None] > 0,
                                        system.xi2[:, None], 1.0),
                             0.0)
        cs += cstat.sum(axis=1)
        cs2 += (cstat**2).sum(axis=1)
        if problem.distortion == "mse":
            d = e2.sum(axis=0)
        else:
            d = np.sum((xhat != 0) != (block.X != 0), axis=0).astype(float)
        sums["d"] += d.sum()
        sq["d"] += (d**2).sum()
        done += n
        idx += 1

    def _mean_se(s, s2):
        mean = s / draws
        var = np.maximum(s2 / draws - mean**2, 0.0)
        return mean, np.sqrt(var / draws)

    q, se_q = _mean_se(qs, qs2)
    chi, se_chi = _mean_se(cs, cs2)
    D, se_D = _mean_se(sums["d"], sq["d"])
    return dict(q=q, chi=chi, D=float(D), se_q=se_q, se_chi=se_chi,
                se_D=float(se_D))


def rs_expectations(system: DecoupledSystem, problem: RsProblem, *,
                    quad_order: int = 61, mc_draws: int = 1_000_000,
                    mc_seed: int = 0, _comps=None):
    """One application of the fixed-point update map: (q_new, chi_new, D)."""
    if problem.J <= 2:
        return quadrature_expectations(system, problem, quad_order,
                                       _comps=_comps)
    out = mc_expectations(system, problem, draws=mc_draws, seed=mc_seed)
    return out["q"], out["chi"], out["D"]


# ---------------------------------------------------------------------------
# Fixed-point iteration


def default_init(problem: RsProblem) -> RsState:
    """q at the prior second moment, chi at lambda."""
    return RsState(q=second_moment(problem.prior), chi=np.asarray(problem.lam))


def rs_solve(problem: RsProblem, init: RsState | None = None, *,
             damping: float = 0.5, tol: float = 1e-9, max_iter: int = 500,
             quad_order: int = 61, mc_draws: int = 1_000_000, mc_seed: int = 0,
             scan: bool = False) -> RsSolution:
    """Damped iteration of the replica-symmetric fixed point.

    The residual is measured on the exact (undamped) update, so a converged
    solution moves by less than tol under one further exact iteration.
    Non-convergence is reported through the flag, not an exception; domain
    errors propagate with the offending state attached.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    comps = prior_mixture(problem.prior) if problem.J <= 2 else None

    def _iterate(state: RsState) -> RsSolution:
        residual = math.inf
        for it in range(1, max_iter + 1):
            system = decouple(state, problem)
            q_new, chi_new, D = rs_expectations(
                system, problem, quad_order=quad_order,
                mc_draws=mc_draws, mc_seed=mc_seed, _comps=comps)
            scale = np.maximum(1.0, np.abs(state.q) + np.abs(state.chi))
            residual = float(np.max(
                (np.abs(q_new - state.q) + np.abs(chi_new - state.chi)) / scale))
            if residual < tol:
                return RsSolution(state, system, D, it, residual, True)
            q_d = (1.0 - damping) * state.q + damping * q_new
            chi_d = (1.0 - damping) * state.chi + damping * chi_new
            state = RsState(np.maximum(q_d, 0.0), np.maximum(chi_d, 0.0))
        system = decouple(state, problem)
        q_new, chi_new, D = rs_expectations(
            system, problem, quad_order=quad_order,
            mc_draws=mc_draws, mc_seed=mc_seed, _comps=comps)
        return RsSolution(state, system, D, max_iter, residual, False)

    base_init = init if init is not None else default_init(problem)
    primary = _iterate(base_init)
    if not scan:
        return primary
    branches = [primary] if primary.converged else []
    for f in np.logspace(-2.0, 2.0, 8):
        try:
            sol = _iterate(RsState(base_init.q * f, base_init.chi * f))
        except RsDomainError:
            continue
        if not sol.converged:
            continue
        duplicate = any(
            np.max(np.abs(sol.state.q - b.state.q)
                   + np.abs(sol.state.chi - b.state.chi))
            <= 10.0 * tol * max(1.0, float(np.max(np.abs(b.state.q)
                                                  + np.abs(b.state.chi))))
            for b in branches)
        if not duplicate:
            branches.append(sol)
    primary.branches = branches
    return primary


# ---------------------------------------------------------------------------
# Regularizer tuning


def _apply_free(problem: RsProblem, name: str, value: float) -> RsProblem:
    if name == "lambda":
        return dataclasses.replace(problem, lam=tuple([value] * problem.J))
    if name == "weight":
        spec = dataclasses.replace(problem.spec, weight=value)
    elif name == "phi":
        spec = dataclasses.replace(problem.spec, phi=value)
    elif name == "alpha":
        spec = dataclasses.replace(problem.spec, alpha=value)
    elif name == "box":
        spec = dataclasses.replace(problem.spec, box=value)
    else:
        raise ValueError(f"unknown tunable {name!r}; expected one of {TUNABLE}")
    return dataclasses.replace(problem, spec=spec)


def _golden_min(f, lo: float, hi: float, rel_tol: float):
    """Deterministic golden-section minimization on [lo, hi]."""
    a, b = float(lo), float(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(200):
        if (b - a) <= rel_tol * max(abs(a), abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def tune_regularizer(problem: RsProblem, free, bounds, *, rel_tol: float = 1e-3,
                     damping: float = 0.5, tol: float = 1e-9,
                     max_iter: int = 500, quad_order: int = 61,
                     mc_draws: int = 200_000, mc_seed: int = 0):
    """Minimize the predicted distortion over 1 or 2 free scalars.

    Golden-section search on one variable, coordinate descent of golden
    sections on two.  Non-converged or out-of-domain inner solves count as
    D = +inf.  Returns ({name: optimum}, D*).
    """
    free = list(free)
    if not (1 <= len(free) <= 2):
        raise ValueError("tune_regularizer handles 1 or 2 free variables")
    for name in free:
        if name not in TUNABLE:
            raise ValueError(f"unknown tunable {name!r}")
        lo, hi = bounds[name]
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"bounds for {name!r} must be finite and ordered")

    warm: dict[str, RsState | None] = {"state": None}
    n_ok = {"count": 0}

    def evaluate(values: dict[str, float]) -> float:
        prob = problem
        for name, value in values.items():
            prob = _apply_free(prob, name, value)
        try:
            sol = rs_solve(prob, init=warm["state"], damping=damping, tol=tol,
                           max_iter=max_iter, quad_order=quad_order,
                           mc_draws=mc_draws, mc_seed=mc_seed)
        except RsDomainError:
            return math.inf
        if not sol.converged:
            return math.inf
        warm["state"] = sol.state
        n_ok["count"] += 1
        return sol.D

    current = {name: 0.5 * (bounds[name][0] + bounds[name][1]) for name in free}
    if len(free) == 1:
        name = free[0]
        x, d = _golden_min(lambda v: evaluate({name: v}), *bounds[name], rel_tol)
        current[name] = x
    else:
        d = math.inf
        for _ in range(12):
            moved = 0.0
            for name in free:
                others = {k: v for k, v in current.items() if k != name}
                x, d = _golden_min(lambda v: evaluate({**others, name: v}),
                                   *bounds[name], rel_tol)
                moved = max(moved, abs(x - current[name]) / max(1e-12, abs(x)))
                current[name] = x
            if moved <= rel_tol:
                break
    if n_ok["count"] == 0:
        raise RuntimeError("all inner solves failed during tuning")
    return current, d

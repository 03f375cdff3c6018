"""Sensing-matrix ensembles and their asymptotic spectral laws.

A law describes the limiting eigenvalue distribution of the Gramian A^T A
for a right rotationally invariant ensemble.  Two named ensembles carry
closed forms (iid Gaussian entries with variance 1/N, and matrices with
orthonormal rows); arbitrary atomic spectra are supported numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VALID_KINDS = ("iid_gaussian", "row_orthogonal", "custom_spectrum")

_ATOM_MASS_TOL = 1e-12


class SpectrumDomainError(ValueError):
    """Raised when a transform is evaluated outside its valid domain."""


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of a sensing-matrix ensemble.

    rho is the compression ratio M/N.  Values above 1 are rejected unless
    allow_wide is set (tall measurement stacks are unusual but legal).
    """

    kind: str
    rho: float
    custom_atoms: tuple[tuple[float, float], ...] | None = None
    allow_wide: bool = False

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")
        if self.rho > 1 and not self.allow_wide:
            raise ValueError("rho > 1 requires allow_wide=True")
        if self.kind == "custom_spectrum":
            if not self.custom_atoms:
                raise ValueError("custom_spectrum requires custom_atoms")
            atoms = tuple((float(e), float(m)) for e, m in self.custom_atoms)
            if any(e < 0 for e, _ in atoms):
                raise ValueError("eigenvalue atoms must be nonnegative")
            if any(m < 0 for _, m in atoms):
                raise ValueError("atom masses must be nonnegative")
            total = sum(m for _, m in atoms)
            if abs(total - 1.0) > _ATOM_MASS_TOL:
                raise ValueError(f"atom masses sum to {total}, expected 1")
            object.__setattr__(self, "custom_atoms", atoms)
        elif self.custom_atoms is not None:
            raise ValueError("custom_atoms only valid for custom_spectrum")


@dataclass(frozen=True)
class SpectralLaw:
    """Asymptotic density of states of a Gramian, with transform evaluators.

    family "mp" uses the closed-form bulk law of the iid Gaussian ensemble
    (ratio rho, mean rho, atom of mass 1-rho at zero when rho < 1);
    family "atoms" is a finite mixture of point masses.  closed_r selects
    a closed-form R-transform ("mp", "projector", "const") when one exists,
    otherwise R is obtained by numeric inversion of the Stieltjes transform.
    """

    family: str
    support_min: float
    support_max: float
    mean_eigenvalue: float
    rho: float | None = None
    atoms: tuple[tuple[float, float], ...] | None = None
    closed_r: str | None = None

    @property
    def variance(self) -> float:
        if self.family == "mp":
            return self.rho  # second free cumulant of the MP bulk law
        m2 = sum(m * e * e for e, m in self.atoms)
        return m2 - self.mean_eigenvalue**2

    # convenience method forms of the module-level operations
    def stieltjes(self, s):
        return stieltjes(self, s)

    def r(self, omega):
        return r_transform(self, omega)

    def r_prime(self, omega):
        return r_transform_derivative(self, omega)


def spectral_law(spec: EnsembleSpec) -> SpectralLaw:
    """Build the asymptotic spectral law of an ensemble."""
    rho = spec.rho
    if spec.kind == "iid_gaussian":
        sq = math.sqrt(rho)
        return SpectralLaw(
            family="mp",
            support_min=0.0 if rho <= 1 else (1 - sq) ** 2,
            support_max=(1 + sq) ** 2,
            mean_eigenvalue=rho,
            rho=rho,
            closed_r="mp",
        )
    if spec.kind == "row_orthogonal":
        if rho > 1:
            raise ValueError("row_orthogonal requires rho <= 1")
        if rho == 1.0:
            atoms = ((1.0, 1.0),)
            return SpectralLaw("atoms", 1.0, 1.0, 1.0, rho=rho, atoms=atoms,
                               closed_r="const")
        atoms = ((0.0, 1.0 - rho), (1.0, rho))
        return SpectralLaw("atoms", 0.0, 1.0, rho, rho=rho, atoms=atoms,
                           closed_r="projector")
    atoms = tuple(sorted(spec.custom_atoms))
    mean = sum(m * e for e, m in atoms)
    law = SpectralLaw(
        family="atoms",
        support_min=atoms[0][0],
        support_max=atoms[-1][0],
        mean_eigenvalue=mean,
        atoms=atoms,
        closed_r="const" if len(atoms) == 1 else None,
    )
    return law


def atom_law(atoms) -> SpectralLaw:
    """Spectral law from explicit (eigenvalue, mass) pairs."""
    return spectral_law(EnsembleSpec("custom_spectrum", rho=1.0,
                                     custom_atoms=tuple(atoms), allow_wide=True))


# ---------------------------------------------------------------------------
# Stieltjes transform


def _stieltjes_any(law: SpectralLaw, s: float) -> float:
    """G(s) for real s strictly outside the spectral support (either side)."""
    if law.family == "atoms":
        return float(sum(m / (e - s) for e, m in law.atoms))
    # MP bulk with ratio rho; algebraically stable forms on both branches
    rho = law.rho
    x = s + 1.0 - rho
    disc = x * x - 4.0 * s
    if disc < 0:
        raise SpectrumDomainError(f"s={s} lies inside the spectral support")
    root = math.sqrt(disc)
    if s < law.support_min:
        return 2.0 / (root - x)
    return -2.0 / (root + x)


def _stieltjes_deriv_any(law: SpectralLaw, s: float) -> float:
    """G'(s) = integral of dF(t) / (t-s)^2, s outside the support."""
    if law.family == "atoms":
        return float(sum(m / (e - s) ** 2 for e, m in law.atoms))
    h = 1e-7 * max(1.0, abs(s))
    return (_stieltjes_any(law, s + h) - _stieltjes_any(law, s - h)) / (2 * h)


def stieltjes(law: SpectralLaw, s: float) -> float:
    """G(s) = integral of dF(t)/(t - s) for s strictly below the support.

    Strictly positive and strictly increasing in s on (-inf, support_min).
    """
    if s >= law.support_min:
        raise SpectrumDomainError(
            f"stieltjes requires s < support_min={law.support_min}, got {s}")
    return _stieltjes_any(law, s)


# ---------------------------------------------------------------------------
# R-transform


def _g_inverse(law: SpectralLaw, target: float) -> float:
    """Solve G(s) = target by bisection on the monotone branch.

    target > 0 inverts below the support, target < 0 above it.  G is
    strictly increasing on both branches, which makes the bracketing safe.
    """
    scale = max(1.0, abs(law.support_max), abs(law.support_min))
    if target > 0:
        hi = law.support_min - 1e-12 * scale
        # push hi toward the support until G(hi) >= target (or give up)
        step = 1e-12 * scale
        while _stieltjes_any(law, hi) < target:
            step *= 0.5
            new_hi = law.support_min - step
            if new_hi == hi or step < 1e-300:
                raise SpectrumDomainError(
                    f"target {target} above the range of G below the support")
            hi = new_hi
        lo = -max(1e9, 10.0 * (scale + 1.0) / target)
        while _stieltjes_any(law, lo) > target:
            lo *= 8.0
            if not math.isfinite(lo):
                raise SpectrumDomainError("bisection bracket exhausted")
    else:
        lo = law.support_max + 1e-12 * scale
        step = 1e-12 * scale
        while _stieltjes_any(law, lo) > target:
            step *= 0.5
            new_lo = law.support_max + step
            if new_lo == lo or step < 1e-300:
                raise SpectrumDomainError(
                    f"target {target} below the range of G above the support")
            lo = new_lo
        hi = max(1e9, 10.0 * (scale + 1.0) / (-target))
        while _stieltjes_any(law, hi) < target:
            hi *= 8.0
            if not math.isfinite(hi):
                raise SpectrumDomainError("bisection bracket exhausted")
    # bisect to float exhaustion; stopping at |G(s)-target| <= 1e-12 would
    # leave s with O(1e-4) error where G is nearly flat (tiny omega)
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _stieltjes_any(law, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def omega_bounds(law: SpectralLaw) -> tuple[float, float]:
    """Open interval of omega on which R(omega) is defined.

    An atom at a support edge sends G to infinity there, so the matching
    side of the domain is unbounded.  The MP bulk has a soft upper edge,
    which caps positive omega at 1/(1 + sqrt(rho)).
    """
    if law.family == "atoms":
        return (-math.inf, math.inf)
    rho = law.rho
    hi = 1.0 / (1.0 + math.sqrt(rho))
    lo = -math.inf if rho <= 1 else 1.0 / (1.0 - math.sqrt(rho))
    return (lo, hi)


def _check_omega(law: SpectralLaw, omega: float) -> None:
    lo, hi = omega_bounds(law)
    if not (lo < omega < hi):
        raise SpectrumDomainError(
            f"omega={omega} outside the R-transform domain ({lo}, {hi})")


def _r_numeric(law: SpectralLaw, omega: float) -> float:
    if omega == 0.0:
        return law.mean_eigenvalue
    s = _g_inverse(law, -omega)
    return s - 1.0 / omega


def _projector_r(rho: float, omega):
    # two-atom {0: 1-rho, 1: rho}; cancellation-free at omega = 0
    root = np.sqrt((1.0 - omega) ** 2 + 4.0 * rho * omega)
    return 2.0 * rho / (root + 1.0 - omega)


def _projector_r_prime(rho: float, omega):
    root = np.sqrt((1.0 - omega) ** 2 + 4.0 * rho * omega)
    dr = (omega + 2.0 * rho - 1.0) / root
    return -2.0 * rho * (dr - 1.0) / (root + 1.0 - omega) ** 2


def law_cdf(law: SpectralLaw, x) -> np.ndarray:
    """CDF of the spectral law, P(eigenvalue <= x).

    Atomic laws are step functions; the MP bulk is integrated numerically
    (plus the zero atom of mass 1 - rho when rho < 1).
    """
    from scipy.integrate import quad

    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    if law.family == "atoms":
        for e, m in law.atoms:
            out += m * (x >= e)
        return out
    rho = law.rho
    sq = math.sqrt(rho)
    a, b = (1 - sq) ** 2, (1 + sq) ** 2
    atom = max(0.0, 1.0 - rho)

    def density(t):
        return math.sqrt(max((b - t) * (t - a), 0.0)) / (2.0 * math.pi * t)

    for i, xi in enumerate(x):
        if xi < 0:
            out[i] = 0.0
        elif xi <= a:
            out[i] = atom
        elif xi >= b:
            out[i] = 1.0
        else:
            bulk, _ = quad(density, a, xi, limit=200)
            out[i] = atom + bulk
    return out


def r_transform(law: SpectralLaw, omega: float) -> float:
    """R(omega) = G^{-1}(-omega) - 1/omega, continuously extended at 0.

    R(0) equals the mean eigenvalue of the law.
    """
    omega = float(omega)
    _check_omega(law, omega)
    if law.closed_r == "mp":
        return law.rho / (1.0 - omega)
    if law.closed_r == "const":
        return law.atoms[0][0]
    if law.closed_r == "projector":
        return float(_projector_r(law.rho, omega))
    return _r_numeric(law, omega)


def r_transform_derivative(law: SpectralLaw, omega: float) -> float:
    """dR/domega; closed form where available, else central difference."""
    omega = float(omega)
    _check_omega(law, omega)
    if law.closed_r == "mp":
        return law.rho / (1.0 - omega) ** 2
    if law.closed_r == "const":
        return 0.0
    if law.closed_r == "projector":
        return float(_projector_r_prime(law.rho, omega))
    h = 1e-6 * max(1.0, abs(omega))
    lo, hi = omega_bounds(law)
    if omega + h >= hi:
        return (r_transform(law, omega) - r_transform(law, omega - h)) / h
    if omega - h <= lo:
        return (r_transform(law, omega + h) - r_transform(law, omega)) / h
    return (r_transform(law, omega + h) - r_transform(law, omega - h)) / (2 * h)


def matrix_r_transform(law: SpectralLaw, S: np.ndarray) -> np.ndarray:
    """Apply R eigenvalue-wise to a symmetric matrix argument."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(S, S.T, atol=1e-10):
        raise ValueError("S must be symmetric")
    evals, evecs = np.linalg.eigh(S)
    mapped = np.array([r_transform(law, ev) for ev in evals])
    out = (evecs * mapped) @ evecs.T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# Finite-size sampling


def _haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def sample_matrix(spec: EnsembleSpec, N: int, seed) -> np.ndarray:
    """Draw an M x N sensing matrix, M = round(rho * N), deterministically.

    iid_gaussian entries have variance 1/N; row_orthogonal matrices satisfy
    A A^T = I exactly; custom_spectrum realizes the requested Gramian
    spectrum in a Haar-random eigenbasis.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    M = int(round(spec.rho * N))
    if M < 1:
        raise ValueError("round(rho * N) must be >= 1")
    rng = np.random.default_rng(seed)
    if spec.kind == "iid_gaussian":
        return rng.standard_normal((M, N)) / math.sqrt(N)
    if spec.kind == "row_orthogonal":
        if M > N:
            raise ValueError("row_orthogonal requires M <= N")
        return _haar_orthogonal(N, rng)[:M]
    eigs = np.array([e for e, _ in spec.custom_atoms])
    masses = np.array([m for _, m in spec.custom_atoms])
    lam = rng.choice(eigs, size=N, p=masses / masses.sum())
    nonzero = lam > 0
    k = int(nonzero.sum())
    if k > M:
        raise ValueError(
            f"drew {k} nonzero eigenvalues but only M={M} rows are available")
    V = _haar_orthogonal(N, rng)
    rows = np.sqrt(lam[nonzero])[:, None] * V[:, nonzero].T
    A = np.zeros((M, N))
    A[:k] = rows
    return _haar_orthogonal(M, rng) @ A


@dataclass(frozen=True)
class EmpiricalDos:
    """Sorted Gramian eigenvalues of a sampled matrix."""

    eigenvalues: np.ndarray
    N: int


def empirical_dos(A: np.ndarray) -> EmpiricalDos:
    """Density of states of A^T A (sorted eigenvalues).

    Roundoff negatives within eigensolver noise are snapped to zero; the
    Gramian is positive semidefinite.
    """
    A = np.asarray(A, dtype=float)
    evals = np.linalg.eigvalsh(A.T @ A)
    tol = 1e-10 * max(1.0, float(np.abs(evals).max(initial=0.0)))
    evals[np.abs(evals) < tol] = 0.0
    return EmpiricalDos(eigenvalues=np.sort(evals), N=A.shape[1])

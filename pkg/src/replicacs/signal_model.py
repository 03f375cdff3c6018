"""Jointly sparse source model, prior enumeration, and distortion functions.

Each sample of terminal j is a superposition of three gated components:
a value shared by all terminals, a value with shared on/off support but
independent amplitude, and a fully independent innovation:

    x_j = c * w0 + s0 * w_j + s_j * u_j,
    c ~ Bern(mu_c), s0 ~ Bern(mu_0), s_j ~ Bern(mu_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

DISTORTION_KINDS = ("mse", "support_error")


@dataclass(frozen=True)
class ValueDist:
    """Amplitude distribution of a nonzero component.

    Supported kinds: gaussian(mean, var) and point_mass(value).  A point
    mass at 0 is rejected: gated components must be nonzero when active.
    """

    kind: str
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.var <= 0:
                raise ValueError("gaussian amplitude needs var > 0")
        elif self.kind == "point_mass":
            if self.mean == 0.0:
                raise ValueError("point_mass(0) is not a valid amplitude")
            object.__setattr__(self, "var", 0.0)
        else:
            raise ValueError(f"unknown ValueDist kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, size):
        if self.kind == "gaussian":
            return rng.normal(self.mean, np.sqrt(self.var), size)
        return np.full(size, self.mean)


def gaussian(mean: float = 0.0, var: float = 1.0) -> ValueDist:
    return ValueDist("gaussian", mean=float(mean), var=float(var))


def point_mass(value: float) -> ValueDist:
    return ValueDist("point_mass", mean=float(value))


@dataclass(frozen=True)
class JointSparsityPrior:
    J: int
    mu_c: float
    mu_0: float
    mu: tuple[float, ...]
    dist_w0: ValueDist = field(default_factory=gaussian)
    dist_wj: ValueDist = field(default_factory=gaussian)
    dist_uj: ValueDist = field(default_factory=gaussian)

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        mu = tuple(float(m) for m in self.mu)
        if len(mu) != self.J:
            raise ValueError(f"need {self.J} innovation probabilities, got {len(mu)}")
        for name, p in [("mu_c", self.mu_c), ("mu_0", self.mu_0), *zip(
                [f"mu_{j + 1}" for j in range(self.J)], mu)]:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name}={p} outside [0, 1]")
        object.__setattr__(self, "mu", mu)

    def nonzero_probability(self, j: int) -> float:
        """P(x_j != 0) when amplitudes are continuous (inclusion-exclusion)."""
        return 1.0 - (1.0 - self.mu_c) * (1.0 - self.mu_0) * (1.0 - self.mu[j])


@dataclass(frozen=True)
class SampleBlock:
    """Finite-N draw from the prior, with latents kept for diagnostics."""

    X: np.ndarray          # J x N
    c: np.ndarray          # N bool
    s0: np.ndarray         # N bool
    s: np.ndarray          # J x N bool
    w0: np.ndarray
    w: np.ndarray
    u: np.ndarray


def sample_joint(prior: JointSparsityPrior, N: int, seed) -> SampleBlock:
    """Draw N i.i.d. columns of the J-terminal source."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    J = prior.J
    c = rng.random(N) < prior.mu_c
    s0 = rng.random(N) < prior.mu_0
    s = rng.random((J, N)) < np.asarray(prior.mu)[:, None]
    w0 = prior.dist_w0.sample(rng, N)
    w = prior.dist_wj.sample(rng, (J, N))
    u = prior.dist_uj.sample(rng, (J, N))
    X = c * w0 + s0 * w + s * u
    return SampleBlock(X=X, c=c, s0=s0, s=s, w0=w0, w=w, u=u)


SPECIAL_CASES = ("classical_cs", "mmv_common_support", "dcs_common_innovation")


def special_case(kind: str, *, J: int = 1, mu: float | None = None,
                 mu_c: float | None = None, mu_0: float | None = None,
                 dist_w0: ValueDist | None = None,
                 dist_wj: ValueDist | None = None,
                 dist_uj: ValueDist | None = None) -> JointSparsityPrior:
    """Construct the prior of a named sparse-recovery setting.

    classical_cs zeroes the shared components (single terminal, only the
    independent innovation survives); mmv_common_support keeps only the
    shared-support component; dcs_common_innovation keeps the common value
    plus the shared-support innovation and zeroes the independent one.
    """
    dists = dict(
        dist_w0=dist_w0 or gaussian(),
        dist_wj=dist_wj or gaussian(),
        dist_uj=dist_uj or gaussian(),
    )
    if kind == "classical_cs":
        if J != 1:
            raise ValueError("classical_cs is a single-terminal setting")
        if mu is None:
            raise ValueError("classical_cs needs the innovation probability mu")
        if mu_c not in (None, 0.0) or mu_0 not in (None, 0.0):
            raise ValueError("classical_cs forces mu_c = mu_0 = 0")
        return JointSparsityPrior(J=1, mu_c=0.0, mu_0=0.0, mu=(mu,), **dists)
    if kind == "mmv_common_support":
        if mu_0 is None:
            raise ValueError("mmv_common_support needs mu_0")
        if mu_c not in (None, 0.0) or mu not in (None, 0.0):
            raise ValueError("mmv_common_support forces mu_c = mu_j = 0")
        return JointSparsityPrior(J=J, mu_c=0.0, mu_0=mu_0, mu=(0.0,) * J, **dists)
    if kind == "dcs_common_innovation":
        if mu_c is None or mu_0 is None:
            raise ValueError("dcs_common_innovation needs mu_c and mu_0")
        if mu not in (None, 0.0):
            raise ValueError("dcs_common_innovation forces mu_j = 0")
        return JointSparsityPrior(J=J, mu_c=mu_c, mu_0=mu_0, mu=(0.0,) * J, **dists)
    raise ValueError(f"unknown special case {kind!r}")


@dataclass(frozen=True)
class MixtureComponent:
    """Conditional joint law of one column given the gate indicators.

    Given (c, s0, s_1..s_J) the column is Gaussian with the stated mean and
    covariance; a zero covariance row marks a deterministic terminal value.
    The shared w0 draw couples terminals whenever c = 1.
    """

    prob: float
    mean: np.ndarray       # J
    cov: np.ndarray        # J x J
    indicators: tuple      # (c, s0, (s_1, ..., s_J))

    @property
    def deterministic(self) -> np.ndarray:
        return np.diag(self.cov) <= 0.0

    @property
    def nonzero(self) -> np.ndarray:
        """Whether x_j != 0 (a.s.) under this component."""
        return (np.diag(self.cov) > 0.0) | (self.mean != 0.0)


def prior_mixture(prior: JointSparsityPrior, *, drop_null: bool = True
                  ) -> list[MixtureComponent]:
    """Enumerate the 2^(J+2) gate configurations with their joint laws.

    Exact enumeration is limited to J <= 4; larger J should fall back to
    Monte Carlo.  With drop_null, zero-probability configurations are
    omitted (masses still sum to 1).
    """
    J = prior.J
    if 2 ** (J + 2) > 64:
        raise ValueError("exact enumeration limited to J <= 4")
    out = []
    for c, s0, *s in product((0, 1), repeat=J + 2):
        p = (prior.mu_c if c else 1 - prior.mu_c) * \
            (prior.mu_0 if s0 else 1 - prior.mu_0)
        for j in range(J):
            p *= prior.mu[j] if s[j] else 1 - prior.mu[j]
        if drop_null and p == 0.0:
            continue
        sj = np.asarray(s, dtype=float)
        mean = np.full(J, c * prior.dist_w0.mean + s0 * prior.dist_wj.mean) \
            + sj * prior.dist_uj.mean
        cov = c * prior.dist_w0.var * np.ones((J, J)) \
            + np.diag(s0 * prior.dist_wj.var + sj * prior.dist_uj.var)
        out.append(MixtureComponent(prob=p, mean=mean, cov=cov,
                                    indicators=(c, s0, tuple(s))))
    return out


def second_moment(prior: JointSparsityPrior) -> np.ndarray:
    """E[x_j^2] per terminal."""
    J = prior.J
    m2 = np.zeros(J)
    for comp in prior_mixture(prior):
        m2 += comp.prob * (comp.mean**2 + np.diag(comp.cov))
    return m2


def distortion(xhat: np.ndarray, x: np.ndarray, kind: str = "mse") -> float:
    """Per-column distortion averaged over N.

    mse sums squared errors over terminals; support_error counts, per
    column and terminal, disagreements between the zero/nonzero patterns.
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch: {xhat.shape} vs {x.shape}")
    N = x.shape[1]
    if kind == "mse":
        return float(np.sum((xhat - x) ** 2) / N)
    if kind == "support_error":
        return float(np.sum((xhat != 0) != (x != 0)) / N)
    raise ValueError(f"unknown distortion kind {kind!r}")

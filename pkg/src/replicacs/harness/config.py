"""Flat key-value experiment configs: parsing, validation, hashing.

One experiment per file.  Lines are `key = value`; `#` starts a comment.
Keys are dotted paths (`prior.mu_c`, `terminal.1.rho`); the full schema is
documented in the README.  The canonical serialized form (sorted lines) is
what gets hashed into each result record.
"""

from __future__ import annotations

import hashlib
import os
import re
import warnings

from ..regularizers import RegularizerSpec
from ..signal_model import JointSparsityPrior, ValueDist, gaussian, point_mass, special_case
from ..spectra import EnsembleSpec

MODES = ("predict", "simulate", "sweep_region", "tune", "spectrum")

_EXACT_KEYS = {
    "mode", "terminals", "seed",
    "prior.special_case", "prior.mu_c", "prior.mu_0", "prior.mu",
    "prior.dist_w0", "prior.dist_wj", "prior.dist_uj",
    "reg.kind", "reg.weight", "reg.p", "reg.q", "reg.phi", "reg.alpha",
    "reg.box",
    "solver.damping", "solver.tol", "solver.max_iter", "solver.quad_order",
    "solver.scan", "solver.mc_draws",
    "simulate.n", "simulate.trials", "simulate.solver_tol",
    "simulate.solver_max_iter",
    "sweep.rho_1", "sweep.rho_2", "sweep.threshold",
    "tune.free", "tune.snr_db", "tune.rel_tol",
    "spectrum.n",
    "output.path", "output.format",
}
_PATTERN_KEYS = (
    re.compile(r"^prior\.mu_\d+$"),
    re.compile(r"^terminal\.(\d+|all)\.(ensemble|rho|lambda|sigma2|atoms|allow_wide)$"),
    re.compile(r"^tune\.(lower|upper)\.(lambda|weight|phi|alpha|box)$"),
)


class ConfigError(ValueError):
    """Schema violation, reported with the offending key path."""


def _known(key: str) -> bool:
    return key in _EXACT_KEYS or any(p.match(key) for p in _PATTERN_KEYS)


def _parse_dist(text: str, key: str) -> ValueDist:
    m = re.fullmatch(r"gaussian\(([^,]+),([^)]+)\)", text.replace(" ", ""))
    if m:
        return gaussian(float(m.group(1)), float(m.group(2)))
    m = re.fullmatch(r"point_mass\(([^)]+)\)", text.replace(" ", ""))
    if m:
        return point_mass(float(m.group(1)))
    raise ConfigError(f"{key}: cannot parse distribution {text!r}")


def _parse_atoms(text: str, key: str):
    atoms = []
    for part in text.split(";"):
        try:
            eig, mass = part.split(":")
            atoms.append((float(eig), float(mass)))
        except ValueError as exc:
            raise ConfigError(f"{key}: bad atom entry {part!r}") from exc
    return tuple(atoms)


def _parse_grid(text: str, key: str):
    text = text.strip()
    if "," in text:
        return [float(x) for x in text.split(",")]
    if text.count(":") == 2:
        lo, hi, n = text.split(":")
        n = int(n)
        if n < 1:
            raise ConfigError(f"{key}: grid needs at least one point")
        if n == 1:
            return [float(lo)]
        step = (float(hi) - float(lo)) / (n - 1)
        return [float(lo) + i * step for i in range(n)]
    return [float(text)]


class ExperimentConfig:
    """Parsed config: raw canonical items plus typed accessors."""

    def __init__(self, items: dict[str, str], source: str = "<memory>"):
        self.items = dict(items)
        self.source = source
        self._validate()

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.items == other.items

    # -- low-level accessors ------------------------------------------------

    def _get(self, key, default=None, required=False, convert=str):
        if key not in self.items:
            if required:
                raise ConfigError(f"missing required key {key!r} (mode={self.mode})")
            return default
        raw = self.items[key]
        try:
            return convert(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r}") from exc

    def _get_bool(self, key, default=False):
        raw = self.items.get(key)
        if raw is None:
            return default
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")

    def _terminal_get(self, j, field, default=None, required=False, convert=str):
        for key in (f"terminal.{j}.{field}", f"terminal.all.{field}"):
            if key in self.items:
                return self._get(key, convert=convert)
        if required:
            raise ConfigError(f"missing required key terminal.{j}.{field}")
        return default

    # -- typed views ---------------------------------------------------------

    @property
    def mode(self) -> str:
        return self._get("mode", required=True)

    @property
    def J(self) -> int:
        return self._get("terminals", default=1, convert=int)

    @property
    def seed(self) -> int:
        return self._get("seed", default=0, convert=int)

    def prior(self) -> JointSparsityPrior:
        dists = dict(
            dist_w0=self._get("prior.dist_w0", gaussian(),
                              convert=lambda t: _parse_dist(t, "prior.dist_w0")),
            dist_wj=self._get("prior.dist_wj", gaussian(),
                              convert=lambda t: _parse_dist(t, "prior.dist_wj")),
            dist_uj=self._get("prior.dist_uj", gaussian(),
                              convert=lambda t: _parse_dist(t, "prior.dist_uj")),
        )
        case = self._get("prior.special_case")
        mu_c = self._get("prior.mu_c", 0.0, convert=float)
        mu_0 = self._get("prior.mu_0", 0.0, convert=float)
        mu_all = self._get("prior.mu", None, convert=float)
        mu = []
        for j in range(1, self.J + 1):
            mu_j = self._get(f"prior.mu_{j}", None, convert=float)
            if mu_j is None:
                mu_j = mu_all if mu_all is not None else 0.0
            mu.append(mu_j)
        if case is None:
            return JointSparsityPrior(J=self.J, mu_c=mu_c, mu_0=mu_0,
                                      mu=tuple(mu), **dists)
        if case == "classical_cs":
            return special_case(case, J=self.J, mu=mu[0], **dists)
        if case == "mmv_common_support":
            return special_case(case, J=self.J, mu_0=mu_0, **dists)
        if case == "dcs_common_innovation":
            return special_case(case, J=self.J, mu_c=mu_c, mu_0=mu_0, **dists)
        raise ConfigError(f"prior.special_case: unknown case {case!r}")

    def reg_spec(self) -> RegularizerSpec:
        kind = self._get("reg.kind", required=True)
        kwargs = dict(weight=self._get("reg.weight", 1.0, convert=float))
        for name in ("p", "q", "phi", "alpha", "box"):
            val = self._get(f"reg.{name}", None, convert=float)
            if val is not None:
                kwargs[name] = val
        try:
            return RegularizerSpec(kind, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"reg.kind: {exc}") from exc

    def ensemble(self, j: int, rho: float | None = None) -> EnsembleSpec:
        kind = self._terminal_get(j, "ensemble", required=True)
        if rho is None:
            rho = self._terminal_get(j, "rho", required=True, convert=float)
        atoms = self._terminal_get(
            j, "atoms", convert=lambda t: _parse_atoms(t, f"terminal.{j}.atoms"))
        allow = self._terminal_get(j, "allow_wide", default="false") in ("true", "1")
        try:
            return EnsembleSpec(kind, rho=rho, custom_atoms=atoms, allow_wide=allow)
        except ValueError as exc:
            raise ConfigError(f"terminal.{j}.ensemble: {exc}") from exc

    def lam(self) -> tuple[float, ...]:
        return tuple(self._terminal_get(j, "lambda", required=True, convert=float)
                     for j in range(1, self.J + 1))

    def sigma2(self) -> tuple[float, ...]:
        return tuple(self._terminal_get(j, "sigma2", required=True, convert=float)
                     for j in range(1, self.J + 1))

    def solver_opts(self) -> dict:
        return dict(
            damping=self._get("solver.damping", 0.5, convert=float),
            tol=self._get("solver.tol", 1e-9, convert=float),
            max_iter=self._get("solver.max_iter", 500, convert=int),
            quad_order=self._get("solver.quad_order", 61, convert=int),
            mc_draws=self._get("solver.mc_draws", 1_000_000, convert=int),
            scan=self._get_bool("solver.scan"),
        )

    def tune_free(self) -> list[str]:
        raw = self._get("tune.free", required=True)
        return [x.strip() for x in raw.split(",") if x.strip()]

    def tune_bounds(self) -> dict:
        bounds = {}
        for name in self.tune_free():
            lo = self._get(f"tune.lower.{name}", None, convert=float)
            hi = self._get(f"tune.upper.{name}", None, convert=float)
            if lo is None or hi is None:
                raise ConfigError(f"tune.lower/upper.{name} required for tuning")
            bounds[name] = (lo, hi)
        return bounds

    def grid(self, key: str, required=False):
        return self._get(key, required=required,
                         convert=lambda t: _parse_grid(t, key))

    @property
    def output_path(self) -> str | None:
        return self._get("output.path")

    @property
    def output_format(self) -> str:
        fmt = self._get("output.format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.format: expected csv or json, got {fmt!r}")
        return fmt

    # -- validation and provenance -------------------------------------------

    def _validate(self):
        for key in self.items:
            if not _known(key):
                raise ConfigError(f"unknown config key {key!r}")
        mode = self.mode
        if mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")
        if mode in ("predict", "simulate", "sweep_region", "tune"):
            self.prior()
            self.reg_spec()
            self.lam()
            self.sigma2()
            for j in range(1, self.J + 1):
                self.ensemble(j)
        if mode == "simulate":
            n = self._get("simulate.n", required=True, convert=int)
            if n < 64:
                raise ConfigError("simulate.n must be >= 64")
            if n < 256:
                warnings.warn(f"simulate.n = {n} is small; results may be noisy",
                              stacklevel=3)
            self._get("simulate.trials", required=True, convert=int)
        if mode == "sweep_region":
            if self.J != 2:
                raise ConfigError("sweep_region requires terminals = 2")
            self.grid("sweep.rho_1", required=True)
            self.grid("sweep.rho_2", required=True)
            self._get("sweep.threshold", required=True, convert=float)
            self.tune_bounds()
        if mode == "tune":
            self.tune_bounds()
        if mode == "spectrum":
            self._get("spectrum.n", required=True, convert=int)
            self.ensemble(1)

    def to_lines(self) -> list[str]:
        return [f"{k} = {self.items[k]}" for k in sorted(self.items)]

    @property
    def config_hash(self) -> str:
        text = "\n".join(self.to_lines())
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def read_config(path: str) -> ExperimentConfig:
    """Parse a config file; schema violations name the offending key."""
    items = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key in items:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            items[key] = value
    return ExperimentConfig(items, source=path)


def write_config(cfg: ExperimentConfig, path: str) -> None:
    """Emit the canonical serialized form (atomic replace)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("\n".join(cfg.to_lines()) + "\n")
    os.replace(tmp, path)

"""Experiment runners: prediction, simulation, region sweeps, tuning, spectra.

Each runner consumes an ExperimentConfig and returns a list of flat result
records.  Point-level failures become records with status="failed"; runners
keep going.  All randomness is derived from the master seed through
counter-based child streams, so trial counts can grow without reshuffling
earlier trials and reruns are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import __version__
from ..recovery import Instance, SolverDiverged, rls_solve, score
from ..replica_rs import RsDomainError, RsProblem, rs_solve, tune_regularizer
from ..signal_model import sample_joint, second_moment
from ..spectra import empirical_dos, law_cdf, sample_matrix, spectral_law
from .config import ExperimentConfig


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": cfg.config_hash,
            "version": __version__}


def _inputs(cfg: ExperimentConfig, rho=None, lam=None, sigma2=None) -> dict:
    prior = cfg.prior()
    spec = cfg.reg_spec()
    lam = lam if lam is not None else cfg.lam()
    sigma2 = sigma2 if sigma2 is not None else cfg.sigma2()
    rec = {"mode": cfg.mode, "J": cfg.J, "mu_c": prior.mu_c, "mu_0": prior.mu_0,
           "reg_kind": spec.kind, "reg_weight": spec.weight}
    for name in ("p", "q", "phi", "alpha", "box"):
        val = getattr(spec, name)
        if val is not None:
            rec[f"reg_{name}"] = val
    for j in range(1, cfg.J + 1):
        rec[f"mu_{j}"] = prior.mu[j - 1]
        rec[f"ensemble_{j}"] = cfg.ensemble(j).kind
        rec[f"rho_{j}"] = rho[j - 1] if rho is not None \
            else cfg.ensemble(j).rho
        rec[f"lambda_{j}"] = lam[j - 1]
        rec[f"sigma2_{j}"] = sigma2[j - 1]
    return rec


def _build_problem(cfg: ExperimentConfig, rho=None, lam=None,
                   sigma2=None) -> RsProblem:
    laws = tuple(spectral_law(cfg.ensemble(j, rho=None if rho is None
                                           else rho[j - 1]))
                 for j in range(1, cfg.J + 1))
    return RsProblem(prior=cfg.prior(), spec=cfg.reg_spec(), laws=laws,
                     lam=lam if lam is not None else cfg.lam(),
                     sigma2=sigma2 if sigma2 is not None else cfg.sigma2(),
                     distortion="mse")


def _solution_fields(sol) -> dict:
    rec = {"iterations": sol.iterations, "converged": sol.converged,
           "residual": sol.residual}
    if sol.converged:
        rec["D_rs"] = sol.D
    for j in range(len(sol.state.q)):
        rec[f"q_{j + 1}"] = float(sol.state.q[j])
        rec[f"chi_{j + 1}"] = float(sol.state.chi[j])
        rec[f"tau_{j + 1}"] = float(sol.system.tau[j])
        rec[f"xi2_{j + 1}"] = float(sol.system.xi2[j])
    return rec


def run_predict(cfg: ExperimentConfig) -> list[dict]:
    """One record per problem point with the full fixed-point solution."""
    base = {**_inputs(cfg), **_provenance(cfg), "point": 0}
    opts = cfg.solver_opts()
    try:
        problem = _build_problem(cfg)
        sol = rs_solve(problem, damping=opts["damping"], tol=opts["tol"],
                       max_iter=opts["max_iter"], quad_order=opts["quad_order"],
                       mc_draws=opts["mc_draws"], scan=opts["scan"])
    except (RsDomainError, ValueError) as exc:
        return [{**base, "status": "failed", "reason": str(exc)}]
    records = [{**base, "status": "ok", **_solution_fields(sol)}]
    for k, branch in enumerate(sol.branches or []):
        if branch is sol:
            continue
        records.append({**base, "point": k + 1, "status": "branch",
                        **_solution_fields(branch)})
    return records


def _one_trial(cfg: ExperimentConfig, t: int):
    prior = cfg.prior()
    spec = cfg.reg_spec()
    lam = cfg.lam()
    sigma2 = cfg.sigma2()
    N = cfg._get("simulate.n", convert=int)
    seed = cfg.seed
    block = sample_joint(prior, N, [seed, t, 0])
    noise_rng = np.random.default_rng([seed, t, 1])
    A, y = [], []
    for j in range(1, cfg.J + 1):
        Aj = sample_matrix(cfg.ensemble(j), N, [seed, t, 10 + j])
        zj = math.sqrt(sigma2[j - 1]) * noise_rng.standard_normal(Aj.shape[0])
        A.append(Aj)
        y.append(Aj @ block.X[j - 1] + zj)
    inst = Instance(A=A, y=y, lam=np.asarray(lam), spec=spec, x_true=block.X)
    report = rls_solve(
        inst,
        max_iter=cfg._get("simulate.solver_max_iter", 5000, convert=int),
        tol=cfg._get("simulate.solver_tol", 1e-10, convert=float))
    return score(inst, report, "mse")


def run_simulate(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Finite-N Monte Carlo distortion with standard error over trials."""
    trials = cfg._get("simulate.trials", convert=int)

    def work(t):
        try:
            return _one_trial(cfg, t)
        except SolverDiverged:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(trials)))
    else:
        results = [work(t) for t in range(trials)]
    values = [r for r in results if r is not None]
    failures = trials - len(values)
    base = {**_inputs(cfg), **_provenance(cfg), "point": 0,
            "n": cfg._get("simulate.n", convert=int), "trials": trials,
            "trials_failed": failures}
    if not values:
        return [{**base, "status": "failed", "reason": "all trials failed"}]
    values = np.asarray(values)
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 \
        else 0.0
    return [{**base, "status": "ok", "D_mc": float(values.mean()), "D_se": se}]


def _tuned_point(cfg, problem, free, bounds, quad_order):
    opts = cfg.solver_opts()
    rel_tol = cfg._get("tune.rel_tol", 1e-3, convert=float)
    values, d_star = tune_regularizer(
        problem, free, bounds, rel_tol=rel_tol, damping=opts["damping"],
        tol=opts["tol"], max_iter=opts["max_iter"], quad_order=quad_order,
        mc_draws=opts["mc_draws"])
    rec = {f"{name}_star": val for name, val in values.items()}
    rec["D_star"] = d_star
    return rec


def run_sweep_region(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Tuned distortion over a (rho_1, rho_2) grid with region membership."""
    rho1 = cfg.grid("sweep.rho_1", required=True)
    rho2 = cfg.grid("sweep.rho_2", required=True)
    threshold = cfg._get("sweep.threshold", convert=float)
    free = cfg.tune_free()
    bounds = cfg.tune_bounds()
    quad_order = cfg.solver_opts()["quad_order"]
    points = [(i1, i2, r1, r2) for i1, r1 in enumerate(rho1)
              for i2, r2 in enumerate(rho2)]

    def work(pt):
        i1, i2, r1, r2 = pt
        base = {**_inputs(cfg, rho=(r1, r2)), **_provenance(cfg),
                "point": i1 * len(rho2) + i2, "threshold": threshold}
        try:
            problem = _build_problem(cfg, rho=(r1, r2))
            rec = _tuned_point(cfg, problem, free, bounds, quad_order)
        except (RsDomainError, RuntimeError, ValueError) as exc:
            return {**base, "status": "failed", "reason": str(exc),
                    "in_region": False}
        ok = math.isfinite(rec["D_star"]) and rec["D_star"] <= threshold
        return {**base, "status": "ok", **rec, "in_region": bool(ok)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, points))
    else:
        records = [work(pt) for pt in points]

    # grid-resolved frontier: member points with a non-member lower neighbor
    member = {(pt[0], pt[1]): rec.get("in_region", False)
              for pt, rec in zip(points, records)}
    for pt, rec in zip(points, records):
        i1, i2 = pt[0], pt[1]
        if not rec.get("in_region"):
            rec["on_frontier"] = False
            continue
        down = member.get((i1, i2 - 1), False)
        left = member.get((i1 - 1, i2), False)
        rec["on_frontier"] = bool((i2 == 0 or not down) or (i1 == 0 or not left))
    return records


def run_tune(cfg: ExperimentConfig) -> list[dict]:
    """Optimal regularizer per swept signal-to-noise point."""
    free = cfg.tune_free()
    bounds = cfg.tune_bounds()
    quad_order = cfg.solver_opts()["quad_order"]
    snr_grid = cfg.grid("tune.snr_db")
    power = second_moment(cfg.prior())
    records = []
    if snr_grid is None:
        points = [(None, cfg.sigma2())]
    else:
        points = [(snr, tuple(float(p) / 10.0 ** (snr / 10.0) for p in power))
                  for snr in snr_grid]
    for k, (snr, sigma2) in enumerate(points):
        base = {**_inputs(cfg, sigma2=sigma2), **_provenance(cfg), "point": k}
        if snr is not None:
            base["snr_db"] = snr
        try:
            problem = _build_problem(cfg, sigma2=sigma2)
            rec = _tuned_point(cfg, problem, free, bounds, quad_order)
        except (RsDomainError, RuntimeError, ValueError) as exc:
            records.append({**base, "status": "failed", "reason": str(exc)})
            continue
        records.append({**base, "status": "ok", **rec})
    return records


def _law_atom_mass(law, v: float) -> float:
    if law.family == "atoms":
        return sum(m for e, m in law.atoms if e == v)
    if law.rho < 1 and v == 0.0:
        return 1.0 - law.rho
    return 0.0


def _ks_distance(eigs: np.ndarray, law) -> float:
    """sup_x |F_emp(x) - F(x)| for step/mixed CDFs (ties and atoms exact)."""
    pts = np.unique(eigs)
    if law.family == "atoms":
        pts = np.union1d(pts, [e for e, _ in law.atoms])
    elif law.rho < 1:
        pts = np.union1d(pts, [0.0])
    n = len(eigs)
    f_right = np.searchsorted(eigs, pts, side="right") / n
    f_left = np.searchsorted(eigs, pts, side="left") / n
    g_right = law_cdf(law, pts)
    g_left = g_right - np.array([_law_atom_mass(law, v) for v in pts])
    return float(max(np.abs(f_right - g_right).max(),
                     np.abs(f_left - g_left).max()))


def run_spectrum(cfg: ExperimentConfig) -> list[dict]:
    """Empirical density of states against the asymptotic law."""
    N = cfg._get("spectrum.n", convert=int)
    ens = cfg.ensemble(1)
    law = spectral_law(ens)
    A = sample_matrix(ens, N, cfg.seed)
    dos = empirical_dos(A)
    eigs = dos.eigenvalues
    if law.family == "atoms":
        # exact spectra: snap eigensolver roundoff onto the atom locations
        for e, _ in law.atoms:
            tol = 1e-9 * max(1.0, abs(e))
            eigs[np.abs(eigs - e) < tol] = e
    f_law = law_cdf(law, eigs)
    prov = _provenance(cfg)
    records = []
    for i, (ev, fl) in enumerate(zip(eigs, f_law)):
        records.append({"mode": cfg.mode, "status": "ok", "point": i,
                        "ensemble_1": ens.kind, "rho_1": ens.rho,
                        "eig_index": i, "eigenvalue": float(ev),
                        "cdf_empirical": (i + 1) / N, "cdf_law": float(fl),
                        **prov})
    ks = _ks_distance(eigs, law)
    m2 = law.variance + law.mean_eigenvalue**2
    records.append({"mode": cfg.mode, "status": "summary", "point": N,
                    "ensemble_1": ens.kind, "rho_1": ens.rho,
                    "n": N,
                    "mean_empirical": float(eigs.mean()),
                    "mean_law": law.mean_eigenvalue,
                    "m2_empirical": float((eigs**2).mean()),
                    "m2_law": float(m2), "ks_distance": ks, **prov})
    return records


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Dispatch on cfg.mode."""
    mode = cfg.mode
    if mode == "predict":
        return run_predict(cfg)
    if mode == "simulate":
        return run_simulate(cfg, threads=threads)
    if mode == "sweep_region":
        return run_sweep_region(cfg, threads=threads)
    if mode == "tune":
        return run_tune(cfg)
    return run_spectrum(cfg)

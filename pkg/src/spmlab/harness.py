"""Experiment orchestration: configs, seeded parallel ensembles, empirical
extinction CDFs with Wilson intervals, and comparison against the theoretical
bound.

Per-path RNG streams are keyed by (master_seed, path_index) and aggregation
is order-independent, so a summary is bitwise reproducible for a fixed config
and seed regardless of the worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Optional

import numpy as np
import yaml

from .analysis import (
    SupermartingaleReport,
    SupermartingaleSeries,
    ensemble_supermartingale_test,
)
from .nonlinearity import (
    AuxiliaryLaw,
    DiffusionLaw,
    ModelParams,
    RegularizationParams,
)
from .noise import NoiseSpec, c_star
from .operators import (
    Field,
    GridSpec,
    SpectralBasis,
    build_basis,
    estimate_gamma,
    norm_hm1,
)
from .stepper import PathResult, SolverConfig, run_path
from .theory import BoundInputs, extinction_bound

_Z95 = 1.959963984540054

# tolerance factor on negative node values when checking positivity
_POSITIVITY_TOL = 1e-8


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class EnsembleFailure(RuntimeError):
    """Too many paths failed; the empirical CDF would be biased."""


@dataclass(frozen=True)
class InitialSpec:
    kind: str  # eigenmode | bump | custom
    mode: int = 1
    values: Optional[tuple[float, ...]] = None
    target_hm1_norm: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("eigenmode", "bump", "custom"):
            raise ConfigError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "custom":
            if self.values is None:
                raise ConfigError("custom initial condition needs explicit values")
        elif not (self.target_hm1_norm and self.target_hm1_norm > 0):
            raise ConfigError(f"{self.kind} initial condition needs a positive target_hm1_norm")


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    K: int
    model: ModelParams
    mu: tuple[float, ...]
    solver: SolverConfig
    initial: InitialSpec
    n_paths: int
    master_seed: int
    checkpoints: tuple[float, ...]
    gamma: Optional[float] = None
    gamma_n_starts: int = 32
    convergence_lambdas: tuple[float, ...] = (1e-1, 5e-2, 2.5e-2, 1.25e-2)

    def __post_init__(self):
        if not 1 <= self.K <= self.grid.n_interior:
            raise ConfigError(f"K={self.K} outside 1..{self.grid.n_interior}")
        if len(self.mu) != self.K:
            raise ConfigError(f"mu has {len(self.mu)} entries for K={self.K} modes")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        cps = self.checkpoints
        if not cps:
            raise ConfigError("at least one checkpoint is required")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError("checkpoints must be strictly increasing")
        if cps[0] <= 0 or cps[-1] > self.solver.t_final + 1e-12:
            raise ConfigError("checkpoints must lie in (0, t_final]")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("gamma override must be positive")


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        grid = GridSpec(
            n_interior=int(raw["grid"]["n_interior"]),
            length=float(raw["grid"].get("length", 1.0)),
        )
        m = raw["model"]
        aux_raw = m.get("aux", {"kind": "zero"})
        model = ModelParams(
            diffusion=DiffusionLaw(rho=float(m["rho"]), alpha=float(m["alpha"])),
            aux=AuxiliaryLaw(
                kind=aux_raw.get("kind", "zero"),
                slope=float(aux_raw.get("slope", 0.0)),
            ),
            reg=RegularizationParams(
                lam=float(m["lambda"]),
                solver_tol=float(m.get("solver_tol", 1e-12)),
                max_iter=int(m.get("max_iter", 200)),
            ),
        )
        s = raw["solver"]
        solver = SolverConfig(
            dt=float(s["dt"]),
            t_final=float(s["t_final"]),
            newton_tol=float(s.get("newton_tol", 1e-10)),
            newton_max_iter=int(s.get("newton_max_iter", 50)),
            record_every=int(s.get("record_every", 1)),
            extinction_eps=float(s.get("extinction_eps", 1e-6)),
        )
        ini = raw["initial"]
        initial = InitialSpec(
            kind=ini["kind"],
            mode=int(ini.get("mode", 1)),
            values=tuple(float(v) for v in ini["values"]) if "values" in ini else None,
            target_hm1_norm=(
                float(ini["target_hm1_norm"]) if ini.get("target_hm1_norm") else None
            ),
        )
        mu = tuple(float(v) for v in raw["noise"]["mu"])
        gamma = raw.get("gamma")
        return ExperimentConfig(
            grid=grid,
            K=int(raw["K"]),
            model=model,
            mu=mu,
            solver=solver,
            initial=initial,
            n_paths=int(raw["n_paths"]),
            master_seed=int(raw["master_seed"]),
            checkpoints=tuple(float(t) for t in raw["checkpoints"]),
            gamma=float(gamma) if gamma is not None else None,
            gamma_n_starts=int(raw.get("gamma_n_starts", 32)),
            convergence_lambdas=tuple(
                float(v) for v in raw.get("convergence_lambdas", (1e-1, 5e-2, 2.5e-2, 1.25e-2))
            ),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc


def config_from_yaml(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    return config_from_dict(raw)


def make_initial(spec: InitialSpec, grid: GridSpec, basis: SpectralBasis) -> Field:
    """Construct the initial state and rescale it to the target H^-1 norm.

    Custom values pass through unscaled.
    """
    if spec.kind == "custom":
        return Field(np.asarray(spec.values, dtype=float), grid)
    if spec.kind == "eigenmode":
        profile = basis.mode(spec.mode)
    else:  # hat bump centered in the domain
        x = grid.nodes
        c, w = grid.length / 2.0, grid.length / 4.0
        profile = Field(np.maximum(0.0, 1.0 - np.abs(x - c) / w), grid)
    nrm = norm_hm1(profile)
    if nrm == 0.0:
        raise ConfigError("zero initial profile with a positive target norm")
    return profile.with_values(profile.values * (spec.target_hm1_norm / nrm))


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be positive")
    p = successes / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    lo = max(0.0, min(center - half, p))
    hi = min(1.0, max(center + half, p))
    return float(lo), float(hi)


@dataclass
class ComparisonRow:
    t: float
    empirical: float
    bound: float
    half_width: float
    passed: bool


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    slack: float
    overall_pass: bool


@dataclass
class EnsembleSummary:
    checkpoints: list[float]
    empirical_cdf: list[float]
    wilson_lo: list[float]
    wilson_hi: list[float]
    theory_bound: list[float]
    supermartingale_report: Optional[SupermartingaleReport]
    extinct_fraction: float
    n_failed: int
    gamma_used: float
    c_star: float
    n_paths: int
    x0_norm_hm1: float
    tau_hats: list[Optional[float]]
    positivity_violations: int
    coercivity_violations: int
    extinction_eps: float
    comparison: Optional[ComparisonReport] = None
    # per-path (times, hm1_norms) pairs; diagnostics only, never serialized
    path_series: Optional[list] = None

    def bound_inputs(self, alpha: float, rho: float) -> BoundInputs:
        return BoundInputs(
            x_norm_hm1=self.x0_norm_hm1,
            alpha=alpha,
            rho=rho,
            gamma=self.gamma_used,
            c_star=self.c_star,
        )

    def to_json_dict(self, include_timestamp: bool = True) -> dict:
        d = {
            "checkpoints": self.checkpoints,
            "empirical_cdf": self.empirical_cdf,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "theory_bound": self.theory_bound,
            "supermartingale_report": (
                asdict(self.supermartingale_report)
                if self.supermartingale_report is not None
                else None
            ),
            "extinct_fraction": self.extinct_fraction,
            "n_failed": self.n_failed,
            "gamma_used": self.gamma_used,
            "c_star": self.c_star,
            "n_paths": self.n_paths,
            "x0_norm_hm1": self.x0_norm_hm1,
            "tau_hats": self.tau_hats,
            "positivity_violations": self.positivity_violations,
            "coercivity_violations": self.coercivity_violations,
            "extinction_eps": self.extinction_eps,
            "comparison": asdict(self.comparison) if self.comparison else None,
        }
        if include_timestamp:
            d["timestamp"] = datetime.now(timezone.utc).isoformat()
        return d

    def to_json(self, include_timestamp: bool = True) -> str:
        return json.dumps(self.to_json_dict(include_timestamp), sort_keys=True, indent=2)


@dataclass
class _PathOutcome:
    tau_hat: Optional[float]
    extinct: bool
    failed: bool
    failure_reason: str
    positivity_ok: bool
    mart_times: np.ndarray
    mart_values: np.ndarray
    hm1_norms: np.ndarray
    coercivity_violations: int


def _build_context(config: ExperimentConfig):
    basis_size = max(config.K, config.initial.mode if config.initial.kind == "eigenmode" else 1)
    basis = build_basis(config.grid, basis_size)
    noise = NoiseSpec(mu=np.asarray(config.mu), basis=basis)
    x0 = make_initial(config.initial, config.grid, basis)
    return basis, noise, x0


def _run_one(args) -> _PathOutcome:
    config, path_index, gamma = args
    _, noise, x0 = _build_context(config)
    res: PathResult = run_path(
        x0,
        config.solver,
        config.model,
        noise,
        seed=(config.master_seed, path_index),
        gamma_check=gamma,
    )
    traj = res.trajectory
    floor = -_POSITIVITY_TOL * max(1.0, res.x0_l2)
    positivity_ok = bool(np.all(traj.min_values >= floor)) if np.all(x0.values >= 0) else True
    return _PathOutcome(
        tau_hat=res.tau_hat,
        extinct=res.extinct,
        failed=res.failed,
        failure_reason=res.failure_reason,
        positivity_ok=positivity_ok,
        mart_times=traj.times,
        mart_values=traj.supermartingale_values,
        hm1_norms=traj.hm1_norms,
        coercivity_violations=res.coercivity_violations,
    )


def resolve_gamma(config: ExperimentConfig) -> float:
    if config.gamma is not None:
        return config.gamma
    est = estimate_gamma(
        config.grid,
        config.model.diffusion.alpha,
        n_starts=config.gamma_n_starts,
        seed=config.master_seed,
    )
    return est.value


def run_ensemble(config: ExperimentConfig, workers: int = 1) -> EnsembleSummary:
    """Run n_paths independent paths and aggregate the extinction statistics.

    Paths are distributed over worker processes; results are collected in
    path order so the summary does not depend on scheduling. Fails hard if
    more than 1% of paths fail (silent exclusion would bias the CDF).
    """
    basis, noise, x0 = _build_context(config)
    gamma = resolve_gamma(config)
    cs = c_star(noise)
    args = [(config, i, gamma) for i in range(config.n_paths)]
    if workers <= 1:
        outcomes = [_run_one(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, args, chunksize=max(1, len(args) // (4 * workers))))

    n_failed = sum(o.failed for o in outcomes)
    ok = [o for o in outcomes if not o.failed]
    if not ok or n_failed > 0.01 * config.n_paths:
        reasons = {o.failure_reason for o in outcomes if o.failed}
        raise EnsembleFailure(
            f"{n_failed}/{config.n_paths} paths failed (cap 1%): {sorted(reasons)}"
        )

    taus = [o.tau_hat for o in ok]
    n_ok = len(ok)
    checkpoints = list(config.checkpoints)
    cdf, lo, hi = [], [], []
    for t in checkpoints:
        k = sum(1 for tau in taus if tau is not None and tau <= t)
        cdf.append(k / n_ok)
        w = wilson_interval(k, n_ok)
        lo.append(w[0])
        hi.append(w[1])

    alpha = config.model.diffusion.alpha
    inputs = BoundInputs(
        x_norm_hm1=norm_hm1(x0), alpha=alpha, rho=config.model.diffusion.rho,
        gamma=gamma, c_star=cs,
    )
    bounds = [extinction_bound(t, inputs) for t in checkpoints]

    sm_report = None
    if n_ok >= 100:
        series = [
            SupermartingaleSeries(
                times=o.mart_times, values=o.mart_values, c_star=cs, alpha=alpha
            )
            for o in ok
        ]
        sm_report = ensemble_supermartingale_test(series, checkpoints)

    summary = EnsembleSummary(
        checkpoints=checkpoints,
        empirical_cdf=cdf,
        wilson_lo=lo,
        wilson_hi=hi,
        theory_bound=bounds,
        supermartingale_report=sm_report,
        extinct_fraction=sum(o.extinct for o in ok) / n_ok,
        n_failed=n_failed,
        gamma_used=gamma,
        c_star=cs,
        n_paths=config.n_paths,
        x0_norm_hm1=norm_hm1(x0),
        tau_hats=[o.tau_hat for o in outcomes],
        positivity_violations=sum(not o.positivity_ok for o in ok),
        coercivity_violations=sum(o.coercivity_violations for o in ok),
        extinction_eps=config.solver.extinction_eps,
        path_series=[(o.mart_times, o.hm1_norms) for o in ok],
    )
    return summary


def compare_with_bound(
    summary: EnsembleSummary, inputs: BoundInputs, slack: float = 0.02
) -> ComparisonReport:
    """PASS at a checkpoint iff empirical >= bound - Wilson half-width - slack.

    The fixed slack absorbs discretization bias (dt, h, extinction threshold,
    gamma estimation error) that the continuum bound does not account for.
    """
    rows = []
    for t, emp, lo, hi in zip(
        summary.checkpoints, summary.empirical_cdf, summary.wilson_lo, summary.wilson_hi
    ):
        bound = extinction_bound(t, inputs)
        half = (hi - lo) / 2.0
        rows.append(
            ComparisonRow(
                t=t,
                empirical=emp,
                bound=bound,
                half_width=half,
                passed=bool(emp >= bound - half - slack),
            )
        )
    return ComparisonReport(
        rows=rows, slack=slack, overall_pass=all(r.passed for r in rows)
    )

"""Semi-implicit Euler-Maruyama integration of the regularized equation.

Each step applies the multiplicative noise explicitly and then solves the
stiff monotone drift implicitly (backward Euler), which is unconditionally
stable. The implicit stage is a semismooth Newton iteration on

    Y - dt * Laplacian(G(Y)) = B,    G(r) = yosida(r) + lam*r + aux(r),

with a damped line search and a contractive Picard fallback; a step that
still fails signals the caller to halve the step locally.

Extinction is detected on the H^-1 norm against a small threshold, after
which the state is clamped to exactly zero and held (zero is absorbing for
both drift and noise).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .nonlinearity import ModelParams, aux_psi, psi0, resolvent
from .noise import NoiseSpec, c_star, make_stream, sample_increments, noise_field
from .operators import Field, laplacian_array, norm_hm1, norm_l2, poisson_solve_array


class ImplicitStepError(RuntimeError):
    """Implicit drift solve failed within its budget; caller should halve dt."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"implicit solve stalled at residual {residual:.3e}")


class PathFailedError(RuntimeError):
    """A path could not be completed even after repeated step halving."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_final: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    record_every: int = 1
    extinction_eps: float = 1e-6
    log_increments: bool = False
    store_states: bool = False

    def __post_init__(self):
        if not 0 < self.dt < self.t_final:
            raise ValueError(f"need 0 < dt < t_final, got dt={self.dt}, T={self.t_final}")
        if self.extinction_eps <= 0:
            raise ValueError("extinction_eps must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.log_increments and self.record_every != 1:
            raise ValueError("increment logging requires record_every=1")


@dataclass
class Trajectory:
    """Per-path observables sampled at the recording stride.

    supermartingale_values holds exp(-c*(1-alpha)*t) * |X(t)|_{-1}^(1-alpha).
    states / increments_log are populated only when the solver config asks
    for them (diagnostics, convergence studies).
    """

    times: np.ndarray
    hm1_norms: np.ndarray
    lp_norms: np.ndarray
    min_values: np.ndarray
    max_values: np.ndarray
    supermartingale_values: np.ndarray
    increments_log: Optional[np.ndarray] = None  # (n_steps, K)
    states: Optional[np.ndarray] = None  # aligned with times
    dt: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,hm1_norm,lp_norm,min,max,supermartingale\n")
            for row in zip(
                self.times,
                self.hm1_norms,
                self.lp_norms,
                self.min_values,
                self.max_values,
                self.supermartingale_values,
            ):
                fh.write(",".join(repr(x) for x in row) + "\n")


@dataclass
class PathResult:
    tau_hat: Optional[float]
    extinct: bool
    trajectory: Trajectory
    seed: tuple[int, int]
    config: SolverConfig
    failed: bool = False
    failure_reason: str = ""
    coercivity_violations: int = 0
    x0_l2: float = 0.0


def _make_drift(model: ModelParams) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Fused evaluation of G and G' sharing one resolvent solve.

    Same math as nonlinearity.yosida / yosida_prime, inlined for the Newton
    loop where the drift is evaluated thousands of times per path.
    """
    law, reg = model.diffusion, model.reg
    slope = model.aux.slope if model.aux.kind == "linear" else 0.0
    lam, rho, al = reg.lam, law.rho, law.alpha

    def g_and_gp(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        yr = resolvent(y, law, reg)
        ya = np.abs(yr)
        g = rho * ya**al * np.sign(yr) + (lam + slope) * y
        with np.errstate(divide="ignore", over="ignore"):
            psi0p = rho * al * np.where(ya > 0, ya, 1.0) ** (al - 1.0)
            d = np.where(ya > 0, psi0p / (1.0 + lam * psi0p), 1.0 / lam)
        gp = np.minimum(d, 1.0 / lam) + lam + slope
        return g, gp

    return g_and_gp


def _solve_implicit_array(
    b: np.ndarray,
    h: float,
    dt: float,
    g_and_gp: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    lip: float,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    n = b.size
    scale = max(1.0, np.sqrt(h) * np.linalg.norm(b))

    def residual_and_deriv(y):
        g, gp = g_and_gp(y)
        return y - dt * laplacian_array(g, h) - b, gp

    def g_of(y):
        return g_and_gp(y)[0]

    y = b.copy()
    res, d = residual_and_deriv(y)
    rnorm = np.sqrt(h) * np.linalg.norm(res)
    for _ in range(max_iter):
        if rnorm <= tol * scale:
            return y
        ab = np.zeros((3, n))
        ab[0, 1:] = -dt / h**2 * d[1:]
        ab[1, :] = 1.0 + 2.0 * dt / h**2 * d
        ab[2, :-1] = -dt / h**2 * d[:-1]
        delta = solve_banded((1, 1), ab, res)
        accepted = False
        s = 1.0
        for _ in range(9):
            y_try = y - s * delta
            res_try, d_try = residual_and_deriv(y_try)
            rnorm_try = np.sqrt(h) * np.linalg.norm(res_try)
            if rnorm_try < rnorm:
                y, res, d, rnorm = y_try, res_try, d_try, rnorm_try
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
    if rnorm <= tol * scale:
        return y

    # Picard fallback on (I + dt*c*A) y = b + dt*A*(c*y - G(y)) with A = -Lap;
    # contracts for any dt because 0 <= G' <= c = lip.
    ab = np.empty((2, n))
    ab[0, :] = -dt * lip / h**2
    ab[0, 0] = 0.0
    ab[1, :] = 1.0 + 2.0 * dt * lip / h**2
    factor = cholesky_banded(ab)
    for _ in range(500):
        rhs = b - dt * laplacian_array(lip * y - g_of(y), h)
        y = cho_solve_banded((factor, False), rhs)
        res, _ = residual_and_deriv(y)
        rnorm = np.sqrt(h) * np.linalg.norm(res)
        if rnorm <= tol * scale:
            return y
    raise ImplicitStepError(residual=float(rnorm))


def implicit_solve(
    B: Field,
    dt: float,
    model: ModelParams,
    *,
    newton_tol: float = 1e-10,
    newton_max_iter: int = 50,
    g_override: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    gp_override: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Field:
    """Backward-Euler drift step: find Y with Y - dt*Laplacian(G(Y)) = B.

    g_override/gp_override swap in a diagnostic nonlinearity (e.g. G(r)=r to
    compare against a direct linear solve).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if g_override is not None:
        if gp_override is None:
            raise ValueError("g_override requires gp_override")
        g, gp = g_override, gp_override

        def g_and_gp(y):
            return g(y), gp(y)

    else:
        g_and_gp = _make_drift(model)
    y = _solve_implicit_array(
        B.values.copy(),
        B.grid.spacing,
        dt,
        g_and_gp,
        model.drift_lipschitz,
        newton_tol,
        newton_max_iter,
    )
    return B.with_values(y)


def _drift_substeps(
    b: np.ndarray,
    h: float,
    dt: float,
    model: ModelParams,
    tol: float,
    max_iter: int,
    max_halvings: int = 5,
    g_and_gp=None,
) -> np.ndarray:
    """Backward-Euler over dt, recursively halving the step on failure."""
    if g_and_gp is None:
        g_and_gp = _make_drift(model)
    lip = model.drift_lipschitz
    try:
        return _solve_implicit_array(b, h, dt, g_and_gp, lip, tol, max_iter)
    except ImplicitStepError:
        if max_halvings == 0:
            raise
        half = _drift_substeps(b, h, dt / 2, model, tol, max_iter, max_halvings - 1, g_and_gp)
        return _drift_substeps(half, h, dt / 2, model, tol, max_iter, max_halvings - 1, g_and_gp)


def step(
    X: Field,
    config: SolverConfig,
    model: ModelParams,
    noise: NoiseSpec,
    stream: np.random.Generator,
) -> Field:
    """One Euler-Maruyama step: explicit noise, then implicit drift."""
    inc = sample_increments(config.dt, noise.n_modes, stream)
    perturbed = X.with_values(X.values + noise_field(X, inc, noise).values)
    return implicit_solve(
        perturbed,
        config.dt,
        model,
        newton_tol=config.newton_tol,
        newton_max_iter=config.newton_max_iter,
    )


def run_path(
    x0: Field,
    config: SolverConfig,
    model: ModelParams,
    noise: NoiseSpec,
    seed: tuple[int, int],
    gamma_check: Optional[float] = None,
) -> PathResult:
    """Integrate one path to t_final, clamping to zero once |X|_{-1} <= eps.

    The stream is keyed by (master_seed, path_index); increments are drawn at
    every step even after extinction so the step-to-increment mapping never
    depends on the path's history.
    """
    grid = x0.grid
    h = grid.spacing
    alpha = model.diffusion.alpha
    cs = c_star(noise)
    p = alpha + 1.0
    stream = make_stream(*seed)
    n_steps = int(round(config.t_final / config.dt))
    mu_modes = noise.mu[:, None] * noise.basis.modes[: noise.n_modes]
    drift = _make_drift(model)

    times, hm1s, lps, mins, maxs, marts = [], [], [], [], [], []
    states = [] if config.store_states else None
    inc_log = [] if config.log_increments else None
    coercivity_violations = 0

    x = x0.values.copy()
    x0_l2 = norm_l2(x0)

    def observe(t, xv, hm1):
        times.append(t)
        hm1s.append(hm1)
        lps.append(float((h * np.sum(np.abs(xv) ** p)) ** (1.0 / p)))
        mins.append(float(xv.min()))
        maxs.append(float(xv.max()))
        marts.append(np.exp(-cs * (1.0 - alpha) * t) * hm1 ** (1.0 - alpha))
        if states is not None:
            states.append(xv.copy())

    def hm1_of(xv):
        w = poisson_solve_array(xv, h)
        return float(np.sqrt(max(h * np.dot(xv, w), 0.0)))

    hm1 = hm1_of(x)
    extinct = hm1 <= config.extinction_eps
    tau_hat: Optional[float] = 0.0 if extinct else None
    if extinct:
        x = np.zeros_like(x)
        hm1 = 0.0
    observe(0.0, x, hm1)

    failed = False
    failure_reason = ""
    for i in range(1, n_steps + 1):
        t = i * config.dt
        inc = sample_increments(config.dt, noise.n_modes, stream)
        if inc_log is not None:
            inc_log.append(inc.dbeta)
        if not extinct and not failed:
            perturbed = x * (1.0 + inc.dbeta @ mu_modes)
            try:
                x = _drift_substeps(
                    perturbed, h, config.dt, model,
                    config.newton_tol, config.newton_max_iter,
                    g_and_gp=drift,
                )
            except ImplicitStepError as exc:
                failed = True
                failure_reason = str(exc)
                x = perturbed
            if not failed:
                hm1 = hm1_of(x)
                if gamma_check is not None:
                    lp_now = (h * np.sum(np.abs(x) ** p)) ** (1.0 / p)
                    if lp_now < gamma_check * hm1 * (1.0 - 1e-9) - 1e-14:
                        coercivity_violations += 1
                if hm1 <= config.extinction_eps:
                    extinct = True
                    tau_hat = t
                    x = np.zeros_like(x)
                    hm1 = 0.0
        # uniform recording grid regardless of path history, so trajectories
        # from different runs of one config stay aligned
        if i % config.record_every == 0 or i == n_steps:
            observe(t, x, hm1)

    traj = Trajectory(
        times=np.array(times),
        hm1_norms=np.array(hm1s),
        lp_norms=np.array(lps),
        min_values=np.array(mins),
        max_values=np.array(maxs),
        supermartingale_values=np.array(marts),
        increments_log=np.array(inc_log) if inc_log is not None else None,
        states=np.array(states) if states is not None else None,
        dt=config.dt,
    )
    return PathResult(
        tau_hat=tau_hat,
        extinct=extinct,
        trajectory=traj,
        seed=seed,
        config=config,
        failed=failed,
        failure_reason=failure_reason,
        coercivity_violations=coercivity_violations,
        x0_l2=x0_l2,
    )


def weak_form_residual(
    result: PathResult,
    j: int,
    basis,
    model: ModelParams,
    noise: NoiseSpec,
) -> float:
    """Max defect of the mode-j weak identity reconstructed from the log.

    The drift integrand uses the unregularized power law, so the defect also
    absorbs the lam-regularization error on top of the time-stepping error.
    Requires a run with log_increments=True and store_states=True.
    """
    traj = result.trajectory
    if traj.increments_log is None or traj.states is None:
        raise ValueError("weak-form residual needs increments_log and store_states")
    h = basis.grid.spacing
    dt = traj.dt
    ej = basis.mode(j).values
    lap_ej = laplacian_array(ej, h)
    states = traj.states  # (n_steps+1, n)

    lhs = h * states @ ej
    drift_vals = h * (psi0(states, model.diffusion) + aux_psi(states, model.aux)) @ lap_ej
    cum_drift = np.zeros(states.shape[0])
    cum_drift[1:] = dt * (np.cumsum(drift_vals[1:]) + np.cumsum(drift_vals[:-1])) / 2.0

    mu = noise.mu
    modes = noise.basis.modes[: noise.n_modes]
    # left-point Ito sums: <X_i * e_k, e_j> per step and mode
    proj = h * states[:-1] @ (modes * ej).T  # (n_steps, K)
    stoch_steps = np.sum(proj * (mu * traj.increments_log), axis=1)
    cum_stoch = np.zeros(states.shape[0])
    cum_stoch[1:] = np.cumsum(stoch_steps)

    defect = np.abs(lhs - (lhs[0] + cum_drift + cum_stoch))
    return float(defect.max())


@dataclass
class ConvergenceRow:
    lam_coarse: float
    lam_fine: float
    sup_hm1: float
    l2l2: float


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("lambda_coarse,lambda_fine,sup_hm1_distance,l2l2_distance\n")
            for r in self.rows:
                fh.write(f"{r.lam_coarse!r},{r.lam_fine!r},{r.sup_hm1!r},{r.l2l2!r}\n")


def convergence_study(
    x0: Field,
    config: SolverConfig,
    model: ModelParams,
    noise: NoiseSpec,
    lambdas,
    seed: tuple[int, int],
) -> ConvergenceReport:
    """Distances between runs at successive regularization levels.

    All runs share the same stream key, hence the same Brownian path. Reports
    sup-in-time H^-1 distance and the L^2(0,T;L^2) distance for each
    consecutive pair of regularization parameters.
    """
    cfg = replace(config, store_states=True)
    runs = []
    for lam in lambdas:
        m = replace(model, reg=replace(model.reg, lam=float(lam)))
        res = run_path(x0, cfg, m, noise, seed)
        if res.failed:
            raise PathFailedError(f"lambda={lam}: {res.failure_reason}")
        runs.append(res)

    h = x0.grid.spacing
    report = ConvergenceReport()
    for a, b, la, lb in zip(runs, runs[1:], lambdas, lambdas[1:]):
        diff = a.trajectory.states - b.trajectory.states
        sup_hm1 = max(norm_hm1(Field(row, x0.grid)) for row in diff)
        l2sq = h * np.sum(diff**2, axis=1)
        l2l2 = float(np.sqrt(np.trapezoid(l2sq, a.trajectory.times)))
        report.rows.append(
            ConvergenceRow(
                lam_coarse=float(la), lam_fine=float(lb),
                sup_hm1=float(sup_hm1), l2l2=l2l2,
            )
        )
    return report

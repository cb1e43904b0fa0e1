"""Transient integration of the coupled film/bubble dynamics.

The quasi-static (inertialess) model evolves the radius field by

    dR/dt = G(R),   G = (f1(R) - p) / (R f2(R)),

where the film pressure ``p`` is slaved to ``R`` through the Reynolds
equation.  Substituting ``p = f1(R) - R f2(R) S`` into the pressure
equation turns the elimination into a single sparse solve

    ( K(R) - diag(h f5 / (R f2)) ) y = K(R) f1(R) + Div(U h f4(R)),

with ``K = -Div(f3(R) h^3 Grad .)`` SPD and ``-h f5/(R f2) >= 0``, so the
shifted operator stays symmetric positive definite: the slaving is uniquely
solvable for any positive radius field, and ``S = y / (R f2)``,
``p = f1 - y`` follow pointwise.

Time stepping is backward Euler resolved by Picard iteration (evaluate G at
the current iterate, update, repeat); the iteration contracts when
``dt * rate`` is below one, which bounds the usable step at roughly the
inverse of the fastest collective relaxation rate.  A step that loses
positivity or whose iteration stalls is rejected and retried at half the
step size (at most 10 halvings) before a failure is declared.  An optional
inertial mode integrates the full second-order wall dynamics with classical
RK4 under the same positivity guard.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (ConfigurationError, PositivityLossError, StepFailureError)
from .grid import Grid, ensure_field, export_fields_csv
from .elliptic import (DEFAULT_SOLVE, LinearSolveConfig, SCHEME_UPWIND,
                       assemble_operator, convective_divergence, solve_spd)
from .physics import (DerivedConstants, PhysicalParams, compute_derived,
                      eval_f1, eval_f2, eval_f3, eval_f4, eval_f5)

MODE_INERTIALESS = "inertialess"
MODE_INERTIAL = "inertial"

MAX_HALVINGS = 10


@dataclass(frozen=True)
class StepConfig:
    """Time-step settings.

    ``picard_tol`` is the relative update threshold of the backward-Euler
    fixed-point iteration (required in (0, 1e-3]); ``picard_max`` bounds the
    iterations per step; ``mode`` selects quasi-static or inertial wall
    dynamics.
    """

    dt: float = 3e-4
    picard_tol: float = 1e-8
    picard_max: int = 60
    mode: str = MODE_INERTIALESS

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigurationError("dt must be positive")
        if not 0.0 < self.picard_tol <= 1e-3:
            raise ConfigurationError("picard_tol must lie in (0, 1e-3], got "
                                     f"{self.picard_tol!r}")
        if self.picard_max < 1:
            raise ConfigurationError("picard_max must be at least 1")
        if self.mode not in (MODE_INERTIALESS, MODE_INERTIAL):
            raise ConfigurationError(f"mode must be '{MODE_INERTIALESS}' or "
                                     f"'{MODE_INERTIAL}', got {self.mode!r}")


@dataclass
class TransientState:
    """Solution snapshot: time, radius field, wall velocity (inertial mode
    only) and the slaved film pressure."""

    t: float
    R: np.ndarray
    Rdot: np.ndarray | None = None
    p: np.ndarray | None = None


@dataclass
class StepStats:
    iterations: int
    halvings: int
    dt_used: float


def initial_state(grid: Grid, params: PhysicalParams, Rhat: float = 1.0,
                  mode: str = MODE_INERTIALESS) -> TransientState:
    """Uniform start at ``R = Rhat * R0`` (and zero wall velocity)."""
    R = np.full(grid.shape, Rhat * params.R0)
    Rdot = np.zeros(grid.shape) if mode == MODE_INERTIAL else None
    return TransientState(t=0.0, R=R, Rdot=Rdot)


def eliminate_pressure(grid: Grid, R: np.ndarray, h: np.ndarray,
                       U: tuple[float, float], params: PhysicalParams,
                       cfg: LinearSolveConfig = DEFAULT_SOLVE,
                       scheme: str = SCHEME_UPWIND
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Slave the film pressure to the radius field.

    Returns ``(G, p)`` where ``G = dR/dt`` of the quasi-static dynamics and
    ``p`` the film pressure.  The defining linear system is solved in its
    symmetric-positive-definite form and the solver verifies the residual
    against ``cfg.tol`` on every call.
    """
    Rf = ensure_field(grid, R, "R")
    hf = ensure_field(grid, h, "h")
    f1 = eval_f1(Rf, params)
    Rf2 = Rf * eval_f2(Rf, params)
    coeff = eval_f3(Rf, params) * hf ** 3
    op = assemble_operator(grid, coeff)
    conv = convective_divergence(grid, U, hf * eval_f4(Rf, params), scheme)
    shift = -hf * eval_f5(Rf, params) / Rf2          # >= 0
    rhs = op.matrix @ f1.ravel() + conv.ravel()
    M = op.matrix + sp.diags(shift.ravel())
    y = solve_spd(M, rhs, grid, cfg)
    return y / Rf2, f1 - y


def _wall_acceleration(grid: Grid, R: np.ndarray, V: np.ndarray,
                       h: np.ndarray, U: tuple[float, float],
                       params: PhysicalParams, cfg: LinearSolveConfig,
                       scheme: str) -> tuple[np.ndarray, np.ndarray]:
    """Radial wall acceleration of the inertial model and the film pressure."""
    f1 = eval_f1(R, params)
    op = assemble_operator(grid, eval_f3(R, params) * h ** 3)
    conv = convective_divergence(grid, U, h * eval_f4(R, params), scheme)
    squeeze = h * eval_f5(R, params) * V
    A1 = op.solve(-conv.ravel(), cfg)
    A2 = op.solve(-squeeze.ravel(), cfg)
    p = A1 + A2
    acc = -1.5 * V ** 2 / R - V * eval_f2(R, params) + (f1 - p) / R
    return acc, p


def step_inertialess(grid: Grid, state: TransientState, h: np.ndarray,
                     U: tuple[float, float], params: PhysicalParams,
                     step_cfg: StepConfig,
                     cfg: LinearSolveConfig = DEFAULT_SOLVE,
                     scheme: str = SCHEME_UPWIND,
                     G_at_state: np.ndarray | None = None
                     ) -> tuple[TransientState, StepStats, np.ndarray]:
    """One backward-Euler step of the quasi-static dynamics.

    The implicit equation ``R_new = R_old + dt G(R_new)`` is resolved by
    Picard iteration started from the current state (``G_at_state`` lets the
    caller reuse an elimination already done at ``state.R``).  The fixed-point
    map contracts only while ``dt`` times the local relaxation rate stays
    below one, so a step is rejected -- and ``dt`` halved -- either when an
    iterate leaves the positive cone or when the iteration stalls (update
    growing well past its best value, or ``picard_max`` spent).  Exhausting
    the halving budget raises :class:`StepFailureError` after a stall and
    :class:`PositivityLossError` after a sign loss.

    Returns the new state, step statistics, and ``G`` evaluated at the new
    state (reusable as the next step's first evaluation).
    """
    R_old = state.R
    if G_at_state is None:
        G_at_state, _ = eliminate_pressure(grid, R_old, h, U, params, cfg, scheme)
    dt = step_cfg.dt
    halvings = 0
    total_iters = 0
    while True:
        R_k = R_old
        G_k = G_at_state
        accepted = None
        sign_loss = False
        best = np.inf
        for _ in range(step_cfg.picard_max):
            total_iters += 1
            R_next = R_old + dt * G_k
            if np.any(R_next <= 0.0):
                sign_loss = True
                break                                    # reject: halve dt
            update = np.max(np.abs(R_next - R_k)) / max(np.max(np.abs(R_k)), 1e-300)
            R_k = R_next
            if update < step_cfg.picard_tol:
                accepted = R_k
                break
            if update > 10.0 * best and update > 100.0 * step_cfg.picard_tol:
                break                    # diverging past its best: reject early
            best = min(best, update)
            G_k, _ = eliminate_pressure(grid, R_k, h, U, params, cfg, scheme)
        if accepted is not None:
            G_new, p_new = eliminate_pressure(grid, accepted, h, U, params, cfg, scheme)
            new_state = TransientState(t=state.t + dt, R=accepted, Rdot=None, p=p_new)
            return new_state, StepStats(total_iters, halvings, dt), G_new
        halvings += 1
        if halvings > MAX_HALVINGS:
            if sign_loss:
                raise PositivityLossError(
                    f"radius field left the positive cone at t = {state.t:.6g} "
                    f"even after {MAX_HALVINGS} step halvings (blow-up)")
            raise StepFailureError(
                f"Picard iteration did not contract within {step_cfg.picard_max} "
                f"iterations at t = {state.t:.6g} (dt = {dt:.3g} after "
                f"{MAX_HALVINGS} halvings)")
        dt *= 0.5


def step_inertial(grid: Grid, state: TransientState, h: np.ndarray,
                  U: tuple[float, float], params: PhysicalParams,
                  step_cfg: StepConfig,
                  cfg: LinearSolveConfig = DEFAULT_SOLVE,
                  scheme: str = SCHEME_UPWIND) -> tuple[TransientState, StepStats]:
    """One classical RK4 step of the inertial wall dynamics.

    The stage function is ``(R, V) -> (V, -3/2 V²/R - V f2(R) +
    (f1(R) - p(R, V))/R)`` with the film pressure re-slaved at every stage.
    Positivity of intermediate radius fields is guarded by reject-and-halve.
    """
    if state.Rdot is None:
        raise ConfigurationError("inertial stepping needs a state with Rdot")
    dt = step_cfg.dt
    halvings = 0
    while True:
        try:
            def F(R, V):
                if np.any(R <= 0.0):
                    raise _StagePositivity()
                acc, p = _wall_acceleration(grid, R, V, h, U, params, cfg, scheme)
                return V, acc, p

            R0, V0 = state.R, state.Rdot
            k1R, k1V, _ = F(R0, V0)
            k2R, k2V, _ = F(R0 + 0.5 * dt * k1R, V0 + 0.5 * dt * k1V)
            k3R, k3V, _ = F(R0 + 0.5 * dt * k2R, V0 + 0.5 * dt * k2V)
            k4R, k4V, _ = F(R0 + dt * k3R, V0 + dt * k3V)
            R_new = R0 + dt / 6.0 * (k1R + 2 * k2R + 2 * k3R + k4R)
            V_new = V0 + dt / 6.0 * (k1V + 2 * k2V + 2 * k3V + k4V)
            if np.any(R_new <= 0.0):
                raise _StagePositivity()
            _, p_new = _wall_acceleration(grid, R_new, V_new, h, U, params,
                                          cfg, scheme)
            new_state = TransientState(t=state.t + dt, R=R_new, Rdot=V_new, p=p_new)
            return new_state, StepStats(4, halvings, dt)
        except _StagePositivity:
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise PositivityLossError(
                    f"radius field left the positive cone at t = {state.t:.6g} "
                    f"even after {MAX_HALVINGS} step halvings (blow-up)") from None
            dt *= 0.5


class _StagePositivity(Exception):
    """Internal: an RK stage produced a non-positive radius."""


@dataclass
class TransientWatch:
    """Run supervision: stationarity threshold, recording and snapshots.

    ``stationarity_tol`` declares the run stationary when
    ``max|R_new - R_old| / (dt R0)`` drops below it (units 1/s).
    ``snapshot_every`` > 0 writes ``snapshot_<step>.csv`` into ``out_dir``.
    ``stop_at_critical`` ends the run unsuccessfully as soon as the radius
    field reaches the critical radius, where the monotone quasi-static
    response (and with it the model's validity) ends.
    """

    stationarity_tol: float = 1e-8
    snapshot_every: int = 0
    out_dir: Path | None = None
    record_every: int = 1
    stop_at_critical: bool = True


@dataclass
class TransientResult:
    """Outcome of :func:`run_transient`."""

    converged: bool
    steps: int
    state: TransientState
    rate: float
    max_Rhat: float
    min_Rhat: float
    max_p: float
    min_p: float
    history: dict[str, np.ndarray]
    failure: str | None = None
    failed_step: int | None = None


def run_transient(grid: Grid, state: TransientState, h: np.ndarray,
                  U: tuple[float, float], params: PhysicalParams,
                  step_cfg: StepConfig, n_steps: int,
                  watch: TransientWatch | None = None,
                  cfg: LinearSolveConfig = DEFAULT_SOLVE,
                  scheme: str = SCHEME_UPWIND,
                  consts: DerivedConstants | None = None) -> TransientResult:
    """March the transient model and watch for stationarity or failure.

    Records the normalized update rate ``max|dR|/(dt R0)``, the radius and
    pressure extrema per recorded step, and stops early on stationarity,
    on reaching the critical radius, or on step failure (which is reported
    in the result together with the step index rather than raised).

    After a step had to halve its way down to a smaller ``dt``, subsequent
    steps start directly at that working step size instead of re-failing at
    the nominal one; four clean steps in a row earn a doubling attempt, so
    the run drifts back to ``step_cfg.dt`` once the stiff episode has passed.
    """
    watch = watch or TransientWatch()
    if consts is None:
        consts = compute_derived(params)
    hf = ensure_field(grid, h, "h")

    hist: dict[str, list] = {k: [] for k in
                             ("t", "rate", "min_Rhat", "max_Rhat", "min_p", "max_p")}
    G_cur: np.ndarray | None = None
    if step_cfg.mode == MODE_INERTIALESS:
        G_cur, p0 = eliminate_pressure(grid, state.R, hf, U, params, cfg, scheme)
        state = TransientState(state.t, state.R, None, p0)
    else:
        if state.Rdot is None:
            raise ConfigurationError("inertial run needs a state with Rdot")
        _, p0 = _wall_acceleration(grid, state.R, state.Rdot, hf, U, params,
                                   cfg, scheme)
        state = TransientState(state.t, state.R, state.Rdot, p0)
    max_Rhat_run = float(np.max(state.R)) / params.R0
    min_Rhat_run = float(np.min(state.R)) / params.R0
    max_p_run = float(np.max(p0))
    min_p_run = float(np.min(p0))
    converged = False
    failure = None
    failed_step = None
    rate = np.inf
    steps_done = 0
    dt_run = step_cfg.dt
    clean_steps = 0

    for step in range(1, n_steps + 1):
        R_prev = state.R
        cfg_step = step_cfg if dt_run == step_cfg.dt else replace(step_cfg, dt=dt_run)
        try:
            if step_cfg.mode == MODE_INERTIALESS:
                state, stats, G_cur = step_inertialess(
                    grid, state, hf, U, params, cfg_step, cfg, scheme,
                    G_at_state=G_cur)
            else:
                state, stats = step_inertial(grid, state, hf, U, params,
                                             cfg_step, cfg, scheme)
        except StepFailureError as exc:
            failure = str(exc)
            failed_step = step
            break
        steps_done = step
        if stats.halvings:
            dt_run = stats.dt_used
            clean_steps = 0
        elif dt_run < step_cfg.dt:
            clean_steps += 1
            if clean_steps >= 4:
                dt_run = min(2.0 * dt_run, step_cfg.dt)
                clean_steps = 0
        rate = float(np.max(np.abs(state.R - R_prev)) / (stats.dt_used * params.R0))
        rhat_min = float(np.min(state.R)) / params.R0
        rhat_max = float(np.max(state.R)) / params.R0
        p_min = float(np.min(state.p))
        p_max = float(np.max(state.p))
        min_Rhat_run = min(min_Rhat_run, rhat_min)
        max_Rhat_run = max(max_Rhat_run, rhat_max)
        min_p_run = min(min_p_run, p_min)
        max_p_run = max(max_p_run, p_max)

        if step % max(watch.record_every, 1) == 0:
            for key, val in (("t", state.t), ("rate", rate),
                             ("min_Rhat", rhat_min), ("max_Rhat", rhat_max),
                             ("min_p", p_min), ("max_p", p_max)):
                hist[key].append(val)
        if (watch.snapshot_every > 0 and watch.out_dir is not None
                and step % watch.snapshot_every == 0):
            os.makedirs(watch.out_dir, exist_ok=True)
            export_fields_csv(Path(watch.out_dir) / f"snapshot_{step}.csv",
                              grid, params, state.R, state.p)
        if watch.stop_at_critical and rhat_max * params.R0 >= consts.R_crit:
            failure = (f"radius reached the critical value at step {step} "
                       f"(max R_hat = {rhat_max:.4f}); quasi-static response "
                       "is no longer monotone")
            failed_step = step
            break
        if rate < watch.stationarity_tol:
            converged = True
            break

    return TransientResult(
        converged=converged, steps=steps_done, state=state, rate=rate,
        max_Rhat=max_Rhat_run, min_Rhat=min_Rhat_run,
        max_p=max_p_run, min_p=min_p_run,
        history={k: np.asarray(v) for k, v in hist.items()},
        failure=failure, failed_step=failed_step)


# ---------------------------------------------------------------------------
# Long-time limit estimation
# ---------------------------------------------------------------------------

def _anderson_limit(tail: list[np.ndarray]) -> np.ndarray:
    """Least-squares extrapolation of a linearly converging vector sequence.

    Finds the affine combination of the iterates whose averaged update is
    smallest (the standard residual-minimizing acceleration of fixed-point
    sequences) and returns the corresponding combination of the *updated*
    iterates.
    """
    X = np.column_stack([x.ravel() for x in tail])
    D = X[:, 1:] - X[:, :-1]                  # updates
    m = D.shape[1]
    scale = np.linalg.norm(D, axis=0).max()
    if scale == 0.0:
        return tail[-1].copy()
    w = 1e8 * scale
    A = np.vstack([D, np.full((1, m), w)])
    b = np.concatenate([np.zeros(D.shape[0]), [w]])
    alpha, *_ = np.linalg.lstsq(A, b, rcond=None)
    limit = X[:, 1:] @ alpha
    return limit.reshape(tail[-1].shape)


def run_to_stationarity(grid: Grid, state: TransientState, h: np.ndarray,
                        U: tuple[float, float], params: PhysicalParams,
                        step_cfg: StepConfig,
                        target_rate: float = 1e-8,
                        chunk_steps: int = 400, sample_stride: int = 25,
                        window: int = 8, max_rounds: int = 8,
                        cfg: LinearSolveConfig = DEFAULT_SOLVE,
                        scheme: str = SCHEME_UPWIND) -> TransientResult:
    """Drive the transient to a stationarity rate below ``target_rate``.

    Alternates plain integration with residual-minimizing extrapolation of
    the sampled iterate sequence; every extrapolated candidate is *validated
    by further stepping* (the accepted state is always the output of the
    unmodified step map and the reported rate is a measured one), and a
    candidate is discarded when it fails to improve on plain stepping.  The
    returned summary aggregates step counts, extrema, and history over all
    accepted stepping, so slow relaxations through near-cavitating
    transients keep their recorded undershoots.
    """
    watch = TransientWatch(stationarity_tol=target_rate, record_every=1)
    consts = compute_derived(params)
    total_steps = 0
    max_R, min_R = -np.inf, np.inf
    max_p, min_p = -np.inf, np.inf
    histories: list[dict[str, np.ndarray]] = []

    def absorb(res: TransientResult) -> None:
        nonlocal total_steps, max_R, min_R, max_p, min_p
        total_steps += res.steps
        max_R = max(max_R, res.max_Rhat)
        min_R = min(min_R, res.min_Rhat)
        max_p = max(max_p, res.max_p)
        min_p = min(min_p, res.min_p)
        histories.append(res.history)

    def finalize(res: TransientResult) -> TransientResult:
        res.steps = total_steps
        res.max_Rhat, res.min_Rhat = max_R, min_R
        res.max_p, res.min_p = max_p, min_p
        res.history = {k: np.concatenate([hi[k] for hi in histories])
                       for k in histories[0]}
        return res

    last: TransientResult | None = None
    for _ in range(max_rounds):
        samples = [state.R.copy()]
        for _ in range(max(chunk_steps // sample_stride, 1)):
            res = run_transient(grid, state, h, U, params, step_cfg,
                                sample_stride, watch, cfg, scheme, consts)
            absorb(res)
            state = res.state
            last = res
            samples.append(state.R.copy())
            if len(samples) > window + 1:
                samples.pop(0)
            if res.converged or res.failure is not None:
                return finalize(res)
        candidate = _anderson_limit(samples)
        if np.all(candidate > 0.0) and np.max(candidate) < consts.R_crit:
            rdot = (np.zeros(grid.shape) if step_cfg.mode == MODE_INERTIAL
                    else None)
            probe = run_transient(grid,
                                  TransientState(t=state.t, R=candidate,
                                                 Rdot=rdot),
                                  h, U, params, step_cfg, 2 * sample_stride,
                                  watch, cfg, scheme, consts)
            if probe.failure is None and last is not None and \
                    probe.rate <= last.rate:
                absorb(probe)
                state = probe.state
                last = probe
                if probe.converged:
                    return finalize(probe)
    assert last is not None
    return finalize(last)

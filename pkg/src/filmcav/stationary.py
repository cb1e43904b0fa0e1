"""Direct computation of stationary states of the coupled film model.

A stationary state has zero squeeze rate, which forces the film pressure to
equal the bubble-equilibrium pressure pointwise, ``p_s = f1(R_s)``.  The
radius field alone then satisfies the nonlinear balance

    Phi(R) = -Div( f3(R) h^3 Grad f1(R) ) - Div( U h f4(R) ) = 0,

discretized with exactly the same operators as the transient right-hand
side, so a Newton root of ``Phi`` is *the same fixed point* the transient
integrator relaxes to (not merely a consistent one).  The Jacobian is the
exact derivative of the discrete residual: the diffusion part differentiates
both the potential ``f1(R)`` and the mobility ``f3(R) h^3``, and the Couette
part differentiates the transported density ``f4(R)``.

Whenever ``U = 0`` or the gap is parallel (``h - min h = 0``) the uniform
rest state ``(R_bar, 0)`` is an exact stationary solution; it is the Newton
starting point and the base of the gap-amplitude continuation used when a
direct solve stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SupercriticalRadiusError
from .grid import Grid, ensure_field
from .elliptic import (SCHEME_UPWIND, assemble_operator,
                       convective_divergence_matrix, diffusion_sensitivity)
from .physics import (DerivedConstants, PhysicalParams, compute_derived,
                      eval_f1, eval_f1_prime, eval_f3, eval_f3_prime,
                      eval_f4, eval_f4_prime)

MAX_BACKTRACKS = 20


@dataclass(frozen=True)
class StationarySolveConfig:
    """Newton/continuation settings.

    ``newton_tol`` is a relative residual tolerance: the discrete balance is
    declared satisfied when the net flux divergence in every cell has
    cancelled to that fraction of the gross (sign-less) flux magnitude.
    ``continuation_steps`` sets how many increments the gap amplitude is
    ramped over when the direct solve from the rest state fails.
    """

    newton_tol: float = 1e-10
    newton_max: int = 40
    continuation_steps: int = 1

    def __post_init__(self):
        if not self.newton_tol > 0.0:
            raise ConfigurationError("newton_tol must be positive")
        if self.newton_max < 1:
            raise ConfigurationError("newton_max must be at least 1")
        if self.continuation_steps < 1:
            raise ConfigurationError("continuation_steps must be at least 1")


@dataclass
class StationaryReport:
    """Convergence record of :func:`solve_stationary`."""

    converged: bool
    stage_fractions: list[float] = field(default_factory=list)
    newton_iterations: list[int] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    final_residual: float = np.inf
    message: str | None = None


def trivial_solution(grid: Grid, params: PhysicalParams,
                     consts: DerivedConstants | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """The uniform rest state ``(R_bar, 0)``, exact whenever ``U = 0`` or
    the gap is parallel."""
    if consts is None:
        consts = compute_derived(params)
    return np.full(grid.shape, consts.R_bar), np.zeros(grid.shape)


def stationary_residual(grid: Grid, R: np.ndarray, h: np.ndarray,
                        U: tuple[float, float], params: PhysicalParams,
                        scheme: str = SCHEME_UPWIND
                        ) -> tuple[np.ndarray, float]:
    """Discrete stationary balance and its gross-flux scale.

    Returns ``(Phi, scale)`` with ``Phi`` raveled.  ``scale`` bounds
    ``||Phi||_2`` from above by the per-face triangle inequality over both
    flux terms, evaluated at the actual fields *plus* the flux the film
    would carry at the characteristic equilibrium-pressure scale
    ``(2 sigma/R0 + |P0 - p_bnd|) / rho_l``.  The pressure floor keeps
    ``||Phi||_2 / scale`` meaningful at the rest state, where the true
    fluxes vanish to the rounding level of the equilibrium radius and a
    purely field-based scale would degenerate with them.
    """
    Rf = ensure_field(grid, R, "R")
    hf = ensure_field(grid, h, "h")
    op = assemble_operator(grid, eval_f3(Rf, params) * hf ** 3)
    f1 = eval_f1(Rf, params).ravel()
    M = convective_divergence_matrix(grid, U, hf * eval_f4(Rf, params), scheme)
    ones = np.ones(grid.n_cells)
    phi = op.matrix @ f1 + M @ ones
    p_char = (2.0 * params.sigma / params.R0
              + abs(params.P0 - params.p_bnd)) / params.rho_l
    gross = abs(op.matrix) @ (np.abs(f1) + p_char) + abs(M) @ ones
    scale = float(np.linalg.norm(gross))
    return phi, max(scale, 1e-300)


def stationary_jacobian(grid: Grid, R: np.ndarray, h: np.ndarray,
                        U: tuple[float, float], params: PhysicalParams,
                        scheme: str = SCHEME_UPWIND) -> sp.csr_matrix:
    """Exact derivative of :func:`stationary_residual` w.r.t. the radius
    field (sparse)."""
    Rf = ensure_field(grid, R, "R")
    hf = ensure_field(grid, h, "h")
    op = assemble_operator(grid, eval_f3(Rf, params) * hf ** 3)
    f1 = eval_f1(Rf, params)
    J = op.matrix @ sp.diags(eval_f1_prime(Rf, params).ravel())
    J = J - diffusion_sensitivity(grid, eval_f3_prime(Rf, params) * hf ** 3, f1)
    J = J + convective_divergence_matrix(grid, U,
                                         hf * eval_f4_prime(Rf, params), scheme)
    return J.tocsr()


def _newton_stage(grid: Grid, R: np.ndarray, h: np.ndarray,
                  U: tuple[float, float], params: PhysicalParams,
                  cfg: StationarySolveConfig, consts: DerivedConstants,
                  scheme: str, report: StationaryReport
                  ) -> tuple[np.ndarray, bool]:
    """Damped Newton at fixed data; returns (iterate, converged)."""
    iters = 0
    for _ in range(cfg.newton_max):
        phi, scale = stationary_residual(grid, R, h, U, params, scheme)
        res = float(np.linalg.norm(phi)) / scale
        report.residual_history.append(res)
        if res < cfg.newton_tol:
            report.newton_iterations.append(iters)
            report.final_residual = res
            return R, True
        iters += 1
        J = stationary_jacobian(grid, R, h, U, params, scheme)
        try:
            delta = spla.splu(J.tocsc()).solve(-phi).reshape(grid.shape)
        except RuntimeError:
            break                                   # singular Jacobian
        norm_phi = np.linalg.norm(phi)
        lam = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            R_new = R + lam * delta
            if np.all(R_new > 0.0):
                phi_new, _ = stationary_residual(grid, R_new, h, U, params,
                                                 scheme)
                if np.linalg.norm(phi_new) <= (1.0 - 1e-4 * lam) * norm_phi:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
        R = R_new
        if float(np.max(R)) >= consts.R_crit:
            raise SupercriticalRadiusError(
                f"stationary iterate reached the critical radius "
                f"(max R_hat = {float(np.max(R)) / params.R0:.4f}); the "
                "monotone pressure-radius response ends there and the "
                "solve refuses to continue")
    report.newton_iterations.append(iters)
    phi, scale = stationary_residual(grid, R, h, U, params, scheme)
    res = float(np.linalg.norm(phi)) / scale
    report.residual_history.append(res)
    report.final_residual = res
    return R, res < cfg.newton_tol


def solve_stationary(grid: Grid, h: np.ndarray, U: tuple[float, float],
                     params: PhysicalParams,
                     cfg: StationarySolveConfig | None = None,
                     scheme: str = SCHEME_UPWIND,
                     consts: DerivedConstants | None = None
                     ) -> tuple[np.ndarray, np.ndarray, StationaryReport]:
    """Newton solve for the stationary pair ``(R_s, p_s)``.

    Starts from the uniform rest state.  If the direct solve fails, the gap
    amplitude ``h - min h`` is ramped from zero to its full value over
    ``cfg.continuation_steps`` increments (at zero amplitude the rest state
    is exact for any sliding speed, so the ramp always starts on the
    branch), re-using each stage's solution as the next starting point.
    Raises :class:`SupercriticalRadiusError` when an iterate reaches the
    critical radius; other failures are reported, not raised.
    """
    cfg = cfg or StationarySolveConfig()
    if consts is None:
        consts = compute_derived(params)
    hf = ensure_field(grid, h, "h")
    report = StationaryReport(converged=False)
    R0_field, _ = trivial_solution(grid, params, consts)

    report.stage_fractions.append(1.0)
    R, ok = _newton_stage(grid, R0_field, hf, U, params, cfg, consts,
                          scheme, report)
    if not ok and cfg.continuation_steps > 1:
        h_min = float(np.min(hf))
        h_plus = hf - h_min
        R = R0_field
        for s in np.linspace(0.0, 1.0, cfg.continuation_steps + 1)[1:]:
            report.stage_fractions.append(float(s))
            h_s = h_min + s * h_plus
            R, ok = _newton_stage(grid, R, h_s, U, params, cfg, consts,
                                  scheme, report)
            if not ok:
                break
    report.converged = ok
    if not ok:
        report.message = ("Newton did not reach the residual tolerance "
                          f"(final relative residual {report.final_residual:.3e})")
    p = eval_f1(R, params)
    return R, p, report

"""Finite-volume elliptic operators for the film-pressure equation.

The pressure problem is a divergence-form diffusion with a mobility that
depends on the local bubble radius,

    Div( f3(R) h^3 Grad p ) = Div( U h f4(R) ) + h f5(R) dR/dt ,

discretized on the cell-centered grid with a 5-point stencil: face
coefficients are arithmetic means of the adjacent cell values, Dirichlet
boundaries are enforced by ghost-cell reflection (ghost value = -interior
value, so the face value vanishes), and the entrained (Couette) flux is
upwinded by default.  The assembled operator ``K`` represents
``-Div(c Grad .)`` and is symmetric positive definite, which is what makes
the coupled pressure elimination uniquely solvable.

Two linearization helpers are provided for Newton solvers and stability
operators: the sensitivity of the diffusion term to the radius field at a
frozen potential, and the matrix form of the convective divergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverFailureError
from .grid import BC_DIRICHLET, BC_PERIODIC, Grid, ensure_field
from .physics import PhysicalParams, eval_f3, eval_f4, eval_f5

#: cell count up to which the direct factorization is the default
DIRECT_CELL_LIMIT = 65536

SCHEME_UPWIND = "upwind"
SCHEME_CENTRAL = "central"


@dataclass(frozen=True)
class LinearSolveConfig:
    """How to solve the assembled SPD systems.

    ``method`` is "direct-banded" (sparse LU on the banded 5-point matrix),
    "krylov" (conjugate gradients), or "auto" (direct up to
    ``DIRECT_CELL_LIMIT`` cells).  ``tol`` is the relative residual bound,
    required in (0, 1e-2].
    """

    method: str = "auto"
    tol: float = 1e-10
    max_iter: int = 5000

    def __post_init__(self):
        if self.method not in ("auto", "direct-banded", "krylov"):
            raise ConfigurationError(f"unknown linear-solve method {self.method!r}")
        if not 0.0 < self.tol <= 1e-2:
            raise ConfigurationError("linear-solve tol must lie in (0, 1e-2], "
                                     f"got {self.tol!r}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")

    def resolved_method(self, n_cells: int) -> str:
        if self.method != "auto":
            return self.method
        return "direct-banded" if n_cells <= DIRECT_CELL_LIMIT else "krylov"


DEFAULT_SOLVE = LinearSolveConfig()


def _cell_index(grid: Grid) -> np.ndarray:
    return np.arange(grid.n_cells).reshape(grid.shape)


def _face_batches(grid: Grid):
    """Interior/periodic face pairs (A, B, spacing) for both axes."""
    idx = _cell_index(grid)
    batches = [
        (idx[:-1, :].ravel(), idx[1:, :].ravel(), grid.dx1),
        (idx[:, :-1].ravel(), idx[:, 1:].ravel(), grid.dx2),
    ]
    if grid.bc_x1 == BC_PERIODIC:
        batches.append((idx[-1, :].ravel(), idx[0, :].ravel(), grid.dx1))
    return batches


def _dirichlet_cells(grid: Grid):
    """Cells adjacent to a Dirichlet boundary, with the face spacing."""
    idx = _cell_index(grid)
    cells = [
        (idx[:, 0].ravel(), grid.dx2),
        (idx[:, -1].ravel(), grid.dx2),
    ]
    if grid.bc_x1 == BC_DIRICHLET:
        cells.append((idx[0, :].ravel(), grid.dx1))
        cells.append((idx[-1, :].ravel(), grid.dx1))
    return cells


class EllipticOperator:
    """Assembled ``K = -Div(c Grad .)`` with cached factorization.

    ``matrix`` is the symmetric positive definite CSR matrix acting on
    flattened fields (row-major cell order).
    """

    def __init__(self, grid: Grid, matrix: sp.csr_matrix):
        self.grid = grid
        self.matrix = matrix
        self._lu = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _solve_direct(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc(),
                                 permc_spec="MMD_AT_PLUS_A")
        return self._lu.solve(rhs)

    def solve(self, rhs: np.ndarray, cfg: LinearSolveConfig = DEFAULT_SOLVE) -> np.ndarray:
        """Solve ``K x = rhs``; accepts a field or flat vector, returns a field."""
        return solve_spd(self.matrix, rhs, self.grid, cfg, lu_cache=self)


def solve_spd(matrix: sp.csr_matrix, rhs: np.ndarray, grid: Grid,
              cfg: LinearSolveConfig = DEFAULT_SOLVE, lu_cache=None) -> np.ndarray:
    """Solve an SPD system with residual verification.

    Returns the solution shaped like the grid.  Raises
    :class:`SolverFailureError` if the relative residual exceeds ``cfg.tol``.
    """
    b = np.asarray(rhs, dtype=float).ravel()
    n = matrix.shape[0]
    if b.size != n:
        raise ConfigurationError(f"rhs has {b.size} entries, operator has {n}")
    method = cfg.resolved_method(n)
    if method == "direct-banded":
        if lu_cache is not None:
            x = lu_cache._solve_direct(b)
        else:
            x = spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(b)
    else:
        diag = matrix.diagonal()
        precond = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
        x, info = spla.cg(matrix, b, rtol=cfg.tol * 0.1, atol=0.0,
                          maxiter=cfg.max_iter, M=precond)
        if info != 0:
            raise SolverFailureError(f"conjugate-gradient solve stopped with "
                                     f"info={info} after {cfg.max_iter} iterations")
    scale = np.linalg.norm(b)
    if scale > 0.0:
        resid = np.linalg.norm(matrix @ x - b)
        if not resid <= cfg.tol * scale + 1e-300:
            raise SolverFailureError(
                f"linear solve residual {resid:.3e} exceeds tol*|rhs| = "
                f"{cfg.tol * scale:.3e}")
    return x.reshape(grid.shape)


def assemble_operator(grid: Grid, coeff: np.ndarray) -> EllipticOperator:
    """Assemble ``K = -Div(c Grad .)`` for a positive cellwise coefficient."""
    c = ensure_field(grid, coeff, "diffusion coefficient").ravel()
    if np.any(c <= 0.0):
        raise ConfigurationError("diffusion coefficient must be positive")
    n = grid.n_cells
    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    for A, B, dx in _face_batches(grid):
        cf = 0.5 * (c[A] + c[B]) / dx ** 2
        diag += np.bincount(A, weights=cf, minlength=n)
        diag += np.bincount(B, weights=cf, minlength=n)
        rows.append(A); cols.append(B); vals.append(-cf)
        rows.append(B); cols.append(A); vals.append(-cf)
    for D, dx in _dirichlet_cells(grid):
        # ghost reflection: face value 0, face coefficient = own-cell value
        diag += np.bincount(D, weights=2.0 * c[D] / dx ** 2, minlength=n)
    rows.append(np.arange(n)); cols.append(np.arange(n)); vals.append(diag)
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    K.sum_duplicates()
    return EllipticOperator(grid, K)


def assemble_diffusion(grid: Grid, R: np.ndarray, h: np.ndarray,
                       params: PhysicalParams) -> EllipticOperator:
    """Assemble the film-pressure diffusion operator ``-Div(f3(R) h^3 Grad .)``."""
    Rf = ensure_field(grid, R, "R")
    hf = ensure_field(grid, h, "h")
    return assemble_operator(grid, eval_f3(Rf, params) * hf ** 3)


# ---------------------------------------------------------------------------
# Convective (entrained-flux) terms
# ---------------------------------------------------------------------------

def _face_values_1d(w: np.ndarray, axis: int, u: float, periodic: bool,
                    scheme: str) -> np.ndarray:
    """Face values of w along one axis, shape grows by one in that axis."""
    w = np.moveaxis(w, axis, 0)                       # faces along first axis
    nf = w.shape[0] + 1
    vals = np.empty((nf,) + w.shape[1:])
    if scheme == SCHEME_CENTRAL:
        vals[1:-1] = 0.5 * (w[:-1] + w[1:])
        if periodic:
            vals[0] = vals[-1] = 0.5 * (w[-1] + w[0])
        else:
            vals[0] = w[0]
            vals[-1] = w[-1]
    elif scheme == SCHEME_UPWIND:
        if u >= 0.0:
            vals[1:-1] = w[:-1]
            vals[0] = w[-1] if periodic else w[0]
            vals[-1] = w[-1]
        else:
            vals[1:-1] = w[1:]
            vals[-1] = w[0] if periodic else w[-1]
            vals[0] = w[0]
    else:
        raise ConfigurationError(f"unknown convection scheme {scheme!r}")
    return np.moveaxis(vals, 0, axis)


def convective_divergence(grid: Grid, U: tuple[float, float], w: np.ndarray,
                          scheme: str = SCHEME_UPWIND) -> np.ndarray:
    """Cellwise divergence of the entrained flux ``U w``.

    ``U`` is the constant entrainment velocity; ``w`` the transported
    cell field (e.g. ``h f4(R)``).  Upwinding is with respect to the sign
    of each velocity component; at Dirichlet boundaries the face takes the
    adjacent interior value.
    """
    wf = ensure_field(grid, w, "transported field")
    out = np.zeros(grid.shape)
    periodic = grid.bc_x1 == BC_PERIODIC
    if U[0] != 0.0:
        fv = _face_values_1d(wf, 0, U[0], periodic, scheme)
        out += U[0] * (fv[1:, :] - fv[:-1, :]) / grid.dx1
    if U[1] != 0.0:
        fv = _face_values_1d(wf, 1, U[1], False, scheme)
        out += U[1] * (fv[:, 1:] - fv[:, :-1]) / grid.dx2
    return out


def convective_divergence_matrix(grid: Grid, U: tuple[float, float],
                                 w: np.ndarray,
                                 scheme: str = SCHEME_UPWIND) -> sp.csr_matrix:
    """Matrix form of ``S -> Div(U w S)`` for a frozen weight field ``w``.

    Used by the Newton Jacobian and the linearized stability operators,
    where the weight is ``h f4'(R)``; face rules match
    :func:`convective_divergence` exactly.
    """
    wflat = ensure_field(grid, w, "weight field").ravel()
    n = grid.n_cells
    idx = _cell_index(grid)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.asarray(v).ravel())

    for axis, u in enumerate(U):
        if u == 0.0:
            continue
        dx = grid.dx1 if axis == 0 else grid.dx2
        periodic = (axis == 0 and grid.bc_x1 == BC_PERIODIC)
        lo = idx[:-1, :] if axis == 0 else idx[:, :-1]   # cell below each face
        hi = idx[1:, :] if axis == 0 else idx[:, 1:]     # cell above
        lo, hi = lo.ravel(), hi.ravel()
        first = (idx[0, :] if axis == 0 else idx[:, 0]).ravel()
        last = (idx[-1, :] if axis == 0 else idx[:, -1]).ravel()

        if scheme == SCHEME_CENTRAL:
            # interior faces contribute half the flux to both neighbours
            for src, coef in ((lo, 0.5), (hi, 0.5)):
                add(lo, src, u * coef * wflat[src] / dx)
                add(hi, src, -u * coef * wflat[src] / dx)
            if periodic:
                for src, coef in ((last, 0.5), (first, 0.5)):
                    add(last, src, u * coef * wflat[src] / dx)
                    add(first, src, -u * coef * wflat[src] / dx)
            else:
                add(first, first, -u * wflat[first] / dx)
                add(last, last, u * wflat[last] / dx)
        elif scheme == SCHEME_UPWIND:
            src = lo if u > 0.0 else hi
            add(lo, src, u * wflat[src] / dx)
            add(hi, src, -u * wflat[src] / dx)
            if periodic:
                wrap_src = last if u > 0.0 else first
                add(last, wrap_src, u * wflat[wrap_src] / dx)
                add(first, wrap_src, -u * wflat[wrap_src] / dx)
            else:
                add(first, first, -u * wflat[first] / dx)
                add(last, last, u * wflat[last] / dx)
        else:
            raise ConfigurationError(f"unknown convection scheme {scheme!r}")

    if not rows:
        return sp.csr_matrix((n, n))
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M


def diffusion_sensitivity(grid: Grid, coeff_prime: np.ndarray,
                          potential: np.ndarray) -> sp.csr_matrix:
    """Matrix form of ``S -> Div( c'(R) S Grad q )`` at a frozen potential q.

    This is the exact derivative of the assembled diffusion term with
    respect to its coefficient field: faces differentiate the arithmetic
    mean (half the perturbation from each neighbour), Dirichlet faces keep
    the ghost-reflected potential and the own-cell coefficient.
    """
    cp = ensure_field(grid, coeff_prime, "coefficient derivative").ravel()
    q = ensure_field(grid, potential, "potential").ravel()
    n = grid.n_cells
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.asarray(v).ravel())

    for A, B, dx in _face_batches(grid):
        g = (q[B] - q[A]) / dx ** 2
        add(A, A, 0.5 * cp[A] * g)
        add(A, B, 0.5 * cp[B] * g)
        add(B, A, -0.5 * cp[A] * g)
        add(B, B, -0.5 * cp[B] * g)
    for D, dx in _dirichlet_cells(grid):
        add(D, D, -2.0 * cp[D] * q[D] / dx ** 2)

    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M


# ---------------------------------------------------------------------------
# The two film-pressure sub-solves
# ---------------------------------------------------------------------------

def assemble_couette_rhs(grid: Grid, R: np.ndarray, h: np.ndarray,
                         U: tuple[float, float], params: PhysicalParams,
                         scheme: str = SCHEME_UPWIND) -> np.ndarray:
    """Divergence of the entrained flux ``Div(U h f4(R))`` as a cell field."""
    Rf = ensure_field(grid, R, "R")
    hf = ensure_field(grid, h, "h")
    return convective_divergence(grid, U, hf * eval_f4(Rf, params), scheme)


def solve_A1(grid: Grid, R: np.ndarray, h: np.ndarray, U: tuple[float, float],
             params: PhysicalParams, cfg: LinearSolveConfig = DEFAULT_SOLVE,
             scheme: str = SCHEME_UPWIND) -> np.ndarray:
    """Pressure response to the entrained flux alone.

    Solves ``Div(f3(R) h^3 Grad A1) = Div(U h f4(R))`` with ambient
    (zero) Dirichlet values; vanishes identically when the flux divergence
    does (no entrainment, or uniform state with constant gap).
    """
    op = assemble_diffusion(grid, R, h, params)
    rhs = assemble_couette_rhs(grid, R, h, U, params, scheme)
    return op.solve(-rhs.ravel(), cfg)


def apply_A2(grid: Grid, R: np.ndarray, h: np.ndarray, S: np.ndarray,
             params: PhysicalParams,
             cfg: LinearSolveConfig = DEFAULT_SOLVE) -> np.ndarray:
    """Pressure response to a radius growth-rate field ``S``.

    Solves ``Div(f3(R) h^3 Grad A2) = h f5(R) S``; linear in ``S``.  Growth
    where bubbles dilute the mixture (f5 < 0) pressurizes the film, which
    is the stabilizing squeeze feedback: the weighted pairing
    ``sum (-f5) h A2(R, w) w dA >= 0`` holds exactly for the discrete
    operator.
    """
    op = assemble_diffusion(grid, R, h, params)
    Sf = ensure_field(grid, S, "S")
    hf = ensure_field(grid, h, "h")
    rhs = hf * eval_f5(ensure_field(grid, R, "R"), params) * Sf
    return op.solve(-rhs.ravel(), cfg)

"""Linear stability of stationary states.

Two linearized evolution operators are assembled as dense matrices by
exact differentiation of the discrete dynamics:

* ``L_G`` — the quasi-static model linearized about ``(R_s, p_s)``: a
  perturbation ``w`` evolves as ``dw/dt = L_G w`` where ``L_G w`` solves

      ( diag(R_s f2(R_s)) + Pi2 ) (L_G w) = f1'(R_s) w - Pi1 w ,

  with ``Pi1`` the derivative of the entrained-flux pressure response and
  ``Pi2`` the (linear) squeeze pressure response.

* ``L_F`` — the inertial model linearized at ``(R_s, 0)``: block matrix
  ``[[0, I], [diag(1/R_s)(diag(f1') - Pi1), -diag(f2) - diag(1/R_s) Pi2]]``.

For a parallel gap both operators block-diagonalize exactly over the
cross-film Dirichlet sine modes of the 5-point stencil; the
``constant_gap_spectrum_*`` helpers exploit that to reach resolutions far
beyond dense assembly, and the ``trivial_*`` helpers give the per-mode
closed forms used as oracles.

The sliding-speed instability mechanism is quantified mode-by-mode on the
unit square with homogeneous Dirichlet values: each mode pair
``k = (k1, k2)`` has a quartic characteristic polynomial whose
Routh-Hurwitz determinant sequence counts unstable roots, and whose third
determinant is affine in the squared speed — its root is the exact modal
instability threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError
from .grid import Grid, ensure_field
from .elliptic import (DEFAULT_SOLVE, LinearSolveConfig, SCHEME_CENTRAL,
                       SCHEME_UPWIND, assemble_operator,
                       convective_divergence_matrix, diffusion_sensitivity,
                       solve_A1)
from .physics import (DerivedConstants, PhysicalParams, compute_derived,
                      eval_f1_prime, eval_f2, eval_f3, eval_f3_prime,
                      eval_f4_prime, eval_f5)

DENSE_ASSEMBLY_LIMIT = 4096
SPECTRUM_SIZE_LIMIT = 8192

VERDICT_STABLE = "stable"
VERDICT_UNSTABLE = "unstable"
VERDICT_MARGINAL = "marginal"

TAG_LG = "L_G"
TAG_LF = "L_F"


@dataclass
class SpectrumReport:
    """Eigenvalues of a linearized evolution operator with a verdict.

    ``verdict`` is "stable" when every real part is below ``-margin``,
    "unstable" when some real part exceeds ``+margin``, and "marginal"
    otherwise (eigenvalues inside the margin band decide nothing at finite
    resolution).
    """

    eigenvalues: np.ndarray
    max_real_part: float
    verdict: str
    operator_tag: str
    resolution: tuple[int, int] | None
    margin: float


# ---------------------------------------------------------------------------
# Dense assembly about a general stationary state
# ---------------------------------------------------------------------------

def _linearization_parts(grid: Grid, R_s: np.ndarray, h: np.ndarray,
                         U: tuple[float, float], params: PhysicalParams,
                         cfg: LinearSolveConfig, scheme: str):
    """Shared pieces: operator K, and the flux-response derivative B1 with
    ``Pi1 = K^{-1} B1``."""
    Rf = ensure_field(grid, R_s, "R_s")
    hf = ensure_field(grid, h, "h")
    K = assemble_operator(grid, eval_f3(Rf, params) * hf ** 3).matrix
    A1 = solve_A1(grid, Rf, hf, U, params, cfg, scheme)
    B1 = (diffusion_sensitivity(grid, eval_f3_prime(Rf, params) * hf ** 3, A1)
          - convective_divergence_matrix(grid, U,
                                         hf * eval_f4_prime(Rf, params), scheme))
    return Rf, hf, K, B1


def assemble_LG(grid: Grid, R_s: np.ndarray, h: np.ndarray,
                U: tuple[float, float], params: PhysicalParams,
                cfg: LinearSolveConfig = DEFAULT_SOLVE,
                scheme: str = SCHEME_UPWIND) -> np.ndarray:
    """Dense matrix of the linearized quasi-static evolution at ``R_s``.

    Columns are obtained simultaneously by one sparse factorization of the
    squeeze-coupled pressure operator applied to all unit perturbations.
    Refuses grids above 4096 cells (dense output).
    """
    if grid.n_cells > DENSE_ASSEMBLY_LIMIT:
        raise ConfigurationError(
            f"dense assembly limited to {DENSE_ASSEMBLY_LIMIT} cells, "
            f"grid has {grid.n_cells}")
    Rf, hf, K, B1 = _linearization_parts(grid, R_s, h, U, params, cfg, scheme)
    Rf2 = (Rf * eval_f2(Rf, params)).ravel()
    hf5 = (hf * eval_f5(Rf, params)).ravel()
    rhs = (K @ sp.diags(eval_f1_prime(Rf, params).ravel()) - B1).toarray()
    M = (K @ sp.diags(Rf2) - sp.diags(hf5)).tocsc()
    return spla.splu(M).solve(rhs)


def assemble_LF(grid: Grid, R_s: np.ndarray, h: np.ndarray,
                U: tuple[float, float], params: PhysicalParams,
                cfg: LinearSolveConfig = DEFAULT_SOLVE,
                scheme: str = SCHEME_UPWIND) -> np.ndarray:
    """Dense 2x2-block matrix of the linearized inertial evolution at
    ``(R_s, 0)``: state ordering is (radius perturbation, rate perturbation)."""
    if grid.n_cells > DENSE_ASSEMBLY_LIMIT:
        raise ConfigurationError(
            f"dense assembly limited to {DENSE_ASSEMBLY_LIMIT} cells, "
            f"grid has {grid.n_cells}")
    Rf, hf, K, B1 = _linearization_parts(grid, R_s, h, U, params, cfg, scheme)
    n = grid.n_cells
    lu = spla.splu(K.tocsc())
    Pi1 = lu.solve(B1.toarray())
    Pi2 = lu.solve(np.diag(-(hf * eval_f5(Rf, params)).ravel()))
    r = Rf.ravel()[:, None]
    b21 = (np.diag(eval_f1_prime(Rf, params).ravel()) - Pi1) / r
    b22 = -np.diag(eval_f2(Rf, params).ravel()) - Pi2 / r
    top = np.hstack([np.zeros((n, n)), np.eye(n)])
    return np.vstack([top, np.hstack([b21, b22])])


def compute_spectrum(matrix: np.ndarray, margin: float = 1e-8,
                     operator_tag: str = TAG_LG,
                     resolution: tuple[int, int] | None = None
                     ) -> SpectrumReport:
    """Full eigendecomposition with a three-way stability verdict."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError("spectrum needs a square matrix")
    if A.shape[0] > SPECTRUM_SIZE_LIMIT:
        raise ConfigurationError(
            f"dense spectrum limited to size {SPECTRUM_SIZE_LIMIT}, "
            f"matrix has {A.shape[0]}")
    eigs = np.sort_complex(np.linalg.eigvals(A))
    max_real = float(np.max(eigs.real))
    if max_real < -margin:
        verdict = VERDICT_STABLE
    elif max_real > margin:
        verdict = VERDICT_UNSTABLE
    else:
        verdict = VERDICT_MARGINAL
    return SpectrumReport(eigenvalues=eigs, max_real_part=max_real,
                          verdict=verdict, operator_tag=operator_tag,
                          resolution=resolution, margin=margin)


def export_spectrum_csv(path, report: SpectrumReport) -> None:
    """Write eigenvalues as ``re,im`` rows."""
    lines = ["re,im"]
    for lam in report.eigenvalues:
        lines.append(f"{lam.real:.12g},{lam.imag:.12g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Parallel-gap closed forms and separated spectra
# ---------------------------------------------------------------------------

def dirichlet_laplacian_eigenvalues_1d(n: int, dx: float) -> np.ndarray:
    """Exact eigenvalues of the 1D 5-point-stencil Dirichlet second
    difference (cell-centered, ghost reflection): ``(4/dx^2) sin^2(k pi/(2n))``
    for ``k = 1..n``."""
    k = np.arange(1, n + 1)
    return (4.0 / dx ** 2) * np.sin(k * np.pi / (2 * n)) ** 2


def dirichlet_laplacian_eigenvalues(n1: int, n2: int, L1: float, L2: float
                                    ) -> np.ndarray:
    """All eigenvalues of the all-Dirichlet 5-point Laplacian on an
    ``n1 x n2`` cell-centered grid over ``[0,L1] x [0,L2]`` (flattened)."""
    k1 = dirichlet_laplacian_eigenvalues_1d(n1, L1 / n1)
    k2 = dirichlet_laplacian_eigenvalues_1d(n2, L2 / n2)
    return (k1[:, None] + k2[None, :]).ravel()


def sigma_constants(params: PhysicalParams,
                    consts: DerivedConstants | None = None
                    ) -> tuple[float, float]:
    """The two squeeze-coupling strengths of the parallel-gap analysis:
    ``sigma2 = b5 b_r / (b3 h0^2)`` and ``sigma1 = b4^2 b_r^2 / (b3^2 h0^4)``.
    Since ``b4 = b5`` (the transport and squeeze couplings share one
    derivative), ``sigma1 = sigma2^2``."""
    c = consts or compute_derived(params)
    sigma2 = c.b5 * c.b_r / (c.b3 * params.h0 ** 2)
    sigma1 = (c.b4 ** 2 * c.b_r ** 2) / (c.b3 ** 2 * params.h0 ** 4)
    return sigma1, sigma2


def trivial_LG_eigenvalue(kappa, consts: DerivedConstants, h0: float):
    """Relaxation rate of the quasi-static model's mode with Laplacian
    eigenvalue ``kappa`` at the uniform rest state:
    ``-kappa h0^2 d3 d1 / (d5 + kappa h0^2 d3)``."""
    k = np.asarray(kappa, dtype=float)
    return -(k * h0 ** 2 * consts.d3 * consts.d1
             / (consts.d5 + k * h0 ** 2 * consts.d3))


def _stable_quadratic_roots(b: float, c: float) -> tuple[complex, complex]:
    """Roots of ``x^2 + b x + c`` without cancellation."""
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
        if q == 0.0:
            return 0.0 + 0.0j, 0.0 + 0.0j
        return complex(q), complex(c / q)
    im = 0.5 * np.sqrt(-disc)
    return complex(-0.5 * b, im), complex(-0.5 * b, -im)


def trivial_LF_roots(kappa: float, consts: DerivedConstants, h0: float
                     ) -> tuple[complex, complex]:
    """The inertial mode pair at the rest state: roots of
    ``lam^2 + (b2 + gamma) lam + b1`` with
    ``gamma = b5 b_r / (b3 h0^2 kappa)``."""
    gamma = consts.b5 * consts.b_r / (consts.b3 * h0 ** 2 * kappa)
    return _stable_quadratic_roots(consts.b2 + gamma, consts.b1)


def b_branch_roots(consts: DerivedConstants) -> tuple[complex, complex]:
    """Roots of the uncoupled wall-oscillator polynomial
    ``lam^2 + b2 lam + b1`` (both have negative real part)."""
    return _stable_quadratic_roots(consts.b2, consts.b1)


def flag_near_exceptional(eigenvalues: np.ndarray, consts: DerivedConstants,
                          rtol: float = 1e-6) -> np.ndarray:
    """Mask of eigenvalues within ``rtol`` (relative) of the accumulation
    value ``-d1``; these are reported but not interpreted."""
    return np.abs(np.asarray(eigenvalues) + consts.d1) <= rtol * consts.d1


def _dirichlet_second_difference_1d(n: int, dx: float) -> np.ndarray:
    """Dense ``-d^2/dx^2`` on a cell-centered line with ghost reflection."""
    T = np.zeros((n, n))
    i = np.arange(n)
    T[i, i] = 2.0
    T[i[:-1], i[:-1] + 1] = -1.0
    T[i[1:], i[1:] - 1] = -1.0
    T[0, 0] = 3.0
    T[n - 1, n - 1] = 3.0
    return T / dx ** 2


def _convection_1d(n: int, dx: float, u: float, w: float, scheme: str
                   ) -> np.ndarray:
    """Dense 1D mirror of :func:`convective_divergence_matrix` on a
    Dirichlet line with constant weight ``w``."""
    C = np.zeros((n, n))
    if u == 0.0:
        return C
    if scheme == SCHEME_CENTRAL:
        for i in range(n - 1):
            for src, coef in ((i, 0.5), (i + 1, 0.5)):
                C[i, src] += u * coef * w / dx
                C[i + 1, src] -= u * coef * w / dx
        C[0, 0] += -u * w / dx
        C[n - 1, n - 1] += u * w / dx
    elif scheme == SCHEME_UPWIND:
        for i in range(n - 1):
            src = i if u > 0.0 else i + 1
            C[i, src] += u * w / dx
            C[i + 1, src] -= u * w / dx
        C[0, 0] += -u * w / dx
        C[n - 1, n - 1] += u * w / dx
    else:
        raise ConfigurationError(f"unknown convection scheme {scheme!r}")
    return C


def _constant_gap_blocks(params: PhysicalParams, U_norm: float, n1: int,
                         n2: int, L1: float, L2: float, scheme: str,
                         consts: DerivedConstants | None):
    """Per-cross-mode (x2) reduced operators for a parallel gap at rest.

    With every coefficient field constant, the only x2 coupling is the
    shared Laplacian, so conjugating by its cross-film sine modes is an
    exact block diagonalization of the discrete operators: block ``m`` sees
    the 1D streamwise operators shifted by the m-th cross eigenvalue.
    """
    c = consts or compute_derived(params)
    R_bar, h0 = c.R_bar, params.h0
    f1p = float(eval_f1_prime(R_bar, params))
    f2v = float(eval_f2(R_bar, params))
    f3v = float(eval_f3(R_bar, params))
    f4p = float(eval_f4_prime(R_bar, params))
    f5v = float(eval_f5(R_bar, params))
    cbar = f3v * h0 ** 3
    K1 = cbar * _dirichlet_second_difference_1d(n1, L1 / n1)
    C1 = _convection_1d(n1, L1 / n1, U_norm, h0 * f4p, scheme)
    kappa2 = dirichlet_laplacian_eigenvalues_1d(n2, L2 / n2)
    for k2 in kappa2:
        K_m = K1 + cbar * k2 * np.eye(n1)
        yield K_m, C1, R_bar, f1p, f2v, h0 * f5v


def constant_gap_spectrum_LG(params: PhysicalParams, U_norm: float,
                             n1: int, n2: int, L1: float = 1.0,
                             L2: float = 1.0, scheme: str = SCHEME_CENTRAL,
                             consts: DerivedConstants | None = None
                             ) -> np.ndarray:
    """All ``n1*n2`` eigenvalues of the quasi-static linearization on an
    all-Dirichlet rectangle with parallel gap, via exact cross-mode
    separation (equals the dense assembly's spectrum)."""
    eigs = []
    for K_m, C1, R_bar, f1p, f2v, hf5 in _constant_gap_blocks(
            params, U_norm, n1, n2, L1, L2, scheme, consts):
        M_m = R_bar * f2v * K_m - hf5 * np.eye(K_m.shape[0])
        rhs = f1p * K_m + C1
        eigs.append(np.linalg.eigvals(np.linalg.solve(M_m, rhs)))
    return np.sort_complex(np.concatenate(eigs))


def constant_gap_spectrum_LF(params: PhysicalParams, U_norm: float,
                             n1: int, n2: int, L1: float = 1.0,
                             L2: float = 1.0, scheme: str = SCHEME_CENTRAL,
                             consts: DerivedConstants | None = None
                             ) -> np.ndarray:
    """All ``2 n1 n2`` eigenvalues of the inertial linearization on an
    all-Dirichlet rectangle with parallel gap (exact cross-mode separation)."""
    eigs = []
    for K_m, C1, R_bar, f1p, f2v, hf5 in _constant_gap_blocks(
            params, U_norm, n1, n2, L1, L2, scheme, consts):
        n = K_m.shape[0]
        Pi1 = np.linalg.solve(K_m, -C1)
        Pi2 = np.linalg.solve(K_m, -hf5 * np.eye(n))
        b21 = (f1p * np.eye(n) - Pi1) / R_bar
        b22 = -f2v * np.eye(n) - Pi2 / R_bar
        block = np.vstack([np.hstack([np.zeros((n, n)), np.eye(n)]),
                           np.hstack([b21, b22])])
        eigs.append(np.linalg.eigvals(block))
    return np.sort_complex(np.concatenate(eigs))


def trivial_branch_spectrum_LF(params: PhysicalParams, n1: int, n2: int,
                               L1: float = 1.0, L2: float = 1.0,
                               consts: DerivedConstants | None = None
                               ) -> np.ndarray:
    """Inertial rest-state spectrum (``U = 0``) through the assembled
    diffusion operator.

    At rest the linearization commutes with the constant-coefficient
    diffusion operator, so each of its eigenvalues ``kappa`` contributes the
    mode pair of :func:`trivial_LF_roots`.  The ``kappa`` are extracted from
    the assembled symmetric blocks with ``eigvalsh`` — backward-stable at any
    parameter magnitudes — instead of a nonsymmetric companion solve whose
    absolute error floor (``~norm * eps``) swamps near-zero real parts at
    stiff physical constants.
    """
    c = consts or compute_derived(params)
    cbar = float(eval_f3(c.R_bar, params)) * params.h0 ** 3
    eigs = []
    for K_m, _C1, _R_bar, _f1p, _f2v, _hf5 in _constant_gap_blocks(
            params, 0.0, n1, n2, L1, L2, SCHEME_CENTRAL, c):
        for kappa in np.linalg.eigvalsh(K_m) / cbar:
            eigs.extend(trivial_LF_roots(float(kappa), c, params.h0))
    return np.sort_complex(np.array(eigs))


# ---------------------------------------------------------------------------
# Routh-Hurwitz modal analysis (unit square, parallel gap)
# ---------------------------------------------------------------------------

@dataclass
class HurwitzReport:
    """Modal stability polynomial data for mode pair ``k = (k1, k2)``.

    ``deltas`` holds the leading-minor determinants (Delta1..Delta4) in
    closed form; ``deltas_direct`` the same from literal determinant
    evaluation of the Hurwitz matrix.  ``sign_changes`` counts variations
    in the Routh sequence {alpha0, Delta1, Delta2/Delta1, Delta3/Delta2,
    Delta4/Delta3} — the number of eigenvalue pairs pushed into the right
    half plane.  ``U_crit_sq`` is the squared sliding speed at which
    Delta3 crosses zero for this mode.
    """

    k: tuple[int, int]
    alpha0: float
    beta0: float
    alpha1: float
    beta1: float
    alpha2: float
    deltas: tuple[float, float, float, float]
    deltas_direct: tuple[float, float, float, float]
    sign_changes: int
    U_crit_sq: float


def hurwitz_matrix(alpha0: float, beta0: float, alpha1: float, beta1: float,
                   alpha2: float) -> np.ndarray:
    """The 4x4 Hurwitz matrix of
    ``P(lam) = alpha0 lam^4 + beta0 lam^3 + alpha1 lam^2 + beta1 lam + alpha2``."""
    return np.array([
        [beta0, beta1, 0.0, 0.0],
        [alpha0, alpha1, alpha2, 0.0],
        [0.0, beta0, beta1, 0.0],
        [0.0, alpha0, alpha1, alpha2],
    ])


def hurwitz_analysis(params: PhysicalParams, U_norm: float,
                     k_pair: tuple[int, int],
                     consts: DerivedConstants | None = None) -> HurwitzReport:
    """Routh-Hurwitz data of the unit-square mode ``k_pair`` at sliding
    speed ``U_norm``.

    Both mode indices must be at least 1 (the boundary kills constant
    cross modes).  Determinants are produced twice — closed forms and
    literal minors — and the modal threshold ``U_crit_sq`` is the exact
    root of the affine-in-``U^2`` third determinant,
    ``4 b1 b2 (sigma2 + pi^2 |k|^2 b2) / sigma1``.
    """
    k1, k2 = int(k_pair[0]), int(k_pair[1])
    if k1 < 1 or k2 < 1:
        raise ConfigurationError(
            f"mode indices must be positive, got ({k1}, {k2})")
    c = consts or compute_derived(params)
    sigma1, sigma2 = sigma_constants(params, c)
    b1, b2 = c.b1, c.b2
    knorm2 = float(k1 * k1 + k2 * k2)
    pi2k = np.pi ** 2 * knorm2

    alpha0 = 4.0 * pi2k
    beta0 = 4.0 * sigma2 + 8.0 * pi2k * b2
    alpha1 = 4.0 * sigma2 * b2 + 4.0 * pi2k * (b2 ** 2 + 2.0 * b1)
    beta1 = 4.0 * sigma2 * b1 + 8.0 * pi2k * b1 * b2
    alpha2 = 4.0 * pi2k * b1 ** 2 + sigma1 * U_norm ** 2

    d1 = beta0
    d2 = beta0 * alpha1 - alpha0 * beta1
    d3 = beta0 * alpha1 * beta1 - alpha0 * beta1 ** 2 - beta0 ** 2 * alpha2
    d4 = alpha2 * d3
    H = hurwitz_matrix(alpha0, beta0, alpha1, beta1, alpha2)
    direct = tuple(float(np.linalg.det(H[:m, :m])) for m in range(1, 5))

    seq = [alpha0, d1]
    for num, den in ((d2, d1), (d3, d2), (d4, d3)):
        seq.append(num / den if den != 0.0 else np.nan)
    signs = np.sign(seq)
    sign_changes = int(np.sum(signs[:-1] * signs[1:] < 0))

    U_crit_sq = 4.0 * b1 * b2 * (sigma2 + pi2k * b2) / sigma1
    return HurwitzReport(k=(k1, k2), alpha0=alpha0, beta0=beta0,
                         alpha1=alpha1, beta1=beta1, alpha2=alpha2,
                         deltas=(d1, d2, d3, d4), deltas_direct=direct,
                         sign_changes=sign_changes, U_crit_sq=U_crit_sq)


def critical_speed(params: PhysicalParams, k_max: int = 8,
                   consts: DerivedConstants | None = None
                   ) -> tuple[float, tuple[int, int]]:
    """Smallest modal instability threshold over ``k1, k2 in 1..k_max``.

    Returns ``(U_crit, mode)``; the threshold grows with ``|k|^2`` so the
    minimizer is the fundamental pair whenever parameters are isotropic.
    """
    c = consts or compute_derived(params)
    best: tuple[float, tuple[int, int]] | None = None
    for k1 in range(1, k_max + 1):
        for k2 in range(1, k_max + 1):
            rep = hurwitz_analysis(params, 0.0, (k1, k2), c)
            u = float(np.sqrt(rep.U_crit_sq))
            if best is None or u < best[0]:
                best = (u, (k1, k2))
    assert best is not None
    return best


def hurwitz_report_text(report: HurwitzReport) -> str:
    """Human-readable rendering for file output."""
    d = report.deltas
    dd = report.deltas_direct
    lines = [
        f"mode k = ({report.k[0]}, {report.k[1]})",
        (f"coefficients: alpha0 = {report.alpha0:.9g}, beta0 = {report.beta0:.9g}, "
         f"alpha1 = {report.alpha1:.9g}, beta1 = {report.beta1:.9g}, "
         f"alpha2 = {report.alpha2:.9g}"),
        (f"determinants (closed form): {d[0]:.9g}, {d[1]:.9g}, {d[2]:.9g}, "
         f"{d[3]:.9g}"),
        (f"determinants (direct):      {dd[0]:.9g}, {dd[1]:.9g}, {dd[2]:.9g}, "
         f"{dd[3]:.9g}"),
        f"sign changes (unstable roots): {report.sign_changes}",
        f"critical squared speed for this mode: {report.U_crit_sq:.9g} m^2/s^2",
        f"critical speed for this mode: {np.sqrt(report.U_crit_sq):.9g} m/s",
    ]
    return "\n".join(lines) + "\n"

"""Tests for the linear stability toolbox.

Dual routes used as oracles here:

* dense Jacobian assemblies are checked against central finite differences
  of the nonlinear growth-rate / wall-acceleration maps at a computed
  stationary state;
* separated (per-mode) parallel-gap spectra are checked against brute-force
  dense eigendecompositions of the assembled operators;
* closed-form eigenvalue and determinant expressions are checked against
  ``np.roots`` / exact ``fractions.Fraction`` determinant expansions.
"""

from fractions import Fraction

import numpy as np
import pytest

from filmcav.dynamics import _wall_acceleration, eliminate_pressure
from filmcav.elliptic import DEFAULT_SOLVE, SCHEME_CENTRAL, SCHEME_UPWIND
from filmcav.errors import ConfigurationError
from filmcav.grid import BC_DIRICHLET, Grid, gap_function, grid_for_params
from filmcav.physics import PhysicalParams, compute_derived
from filmcav.stability import (
    SPECTRUM_SIZE_LIMIT,
    TAG_LF,
    VERDICT_MARGINAL,
    VERDICT_STABLE,
    VERDICT_UNSTABLE,
    _dirichlet_second_difference_1d,
    assemble_LF,
    assemble_LG,
    b_branch_roots,
    compute_spectrum,
    constant_gap_spectrum_LF,
    constant_gap_spectrum_LG,
    critical_speed,
    dirichlet_laplacian_eigenvalues,
    dirichlet_laplacian_eigenvalues_1d,
    export_spectrum_csv,
    flag_near_exceptional,
    hurwitz_analysis,
    hurwitz_report_text,
    sigma_constants,
    trivial_branch_spectrum_LF,
    trivial_LF_roots,
    trivial_LG_eigenvalue,
)
from filmcav.stationary import solve_stationary

# Gentle parameter set: the bubble oscillator is underdamped (stiffness 418,
# damping 0.4 in 1/s units) so inertial spectra have O(1) real parts and
# dense eigensolves stay well conditioned.
TAME = PhysicalParams(rho_l=1000.0, mu_l=1.0, rho_g=900.0, mu_g=0.01,
                      kappa_s=0.0, k_poly=1.4, sigma=1.0, P0=1000.0,
                      p_bnd=980.0, R0=0.1, alpha0=0.1, J_r=1.0, B=1.0,
                      h0=1.0 / 32.0, ecc=0.0, omega=0.0)


def _pair_distance(a, b):
    """Max over either set of the distance to the nearest point of the other.

    Robust eigenvalue-set comparison: sorting complex arrays is unstable for
    nearly-degenerate conjugate pairs, a nearest-neighbour metric is not.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    m = np.abs(b[None, :] - a[:, None])
    return max(float(m.min(axis=1).max()), float(m.min(axis=0).max()))


@pytest.fixture(scope="module")
def journal_state():
    """Converged stationary state on a small journal grid."""
    params = PhysicalParams(ecc=0.2)
    grid = grid_for_params(params, 12, 6)
    h = gap_function(grid, params)
    U = (params.surface_speed, 0.0)
    R_s, p_s, report = solve_stationary(grid, h, U, params)
    assert report.converged
    return grid, R_s, h, U, params


def test_growth_jacobian_matches_finite_differences(journal_state):
    grid, R_s, h, U, params = journal_state
    LG = assemble_LG(grid, R_s, h, U, params)
    rng = np.random.default_rng(2)
    t = 1e-7 * params.R0
    for _ in range(4):
        v = rng.normal(size=grid.shape)
        v /= np.max(np.abs(v))
        Gp, _ = eliminate_pressure(grid, R_s + t * v, h, U, params)
        Gm, _ = eliminate_pressure(grid, R_s - t * v, h, U, params)
        fd = ((Gp - Gm) / (2.0 * t)).ravel()
        got = LG @ v.ravel()
        assert np.linalg.norm(got - fd) <= 1e-7 * np.linalg.norm(fd)


def test_inertial_jacobian_blocks_match_acceleration_derivatives(journal_state):
    grid, R_s, h, U, params = journal_state
    n = grid.n_cells
    LF = assemble_LF(grid, R_s, h, U, params)
    assert LF.shape == (2 * n, 2 * n)
    # Top row blocks are the exact kinematic identity d(R)/dt = Rdot.
    assert np.all(LF[:n, :n] == 0.0)
    assert np.array_equal(LF[:n, n:], np.eye(n))

    V0 = np.zeros(grid.shape)
    rng = np.random.default_rng(5)
    t_R = 1e-7 * params.R0
    t_V = 1e-3
    for _ in range(3):
        v = rng.normal(size=grid.shape)
        v /= np.max(np.abs(v))
        ap, _ = _wall_acceleration(grid, R_s + t_R * v, V0, h, U, params,
                                   DEFAULT_SOLVE, SCHEME_UPWIND)
        am, _ = _wall_acceleration(grid, R_s - t_R * v, V0, h, U, params,
                                   DEFAULT_SOLVE, SCHEME_UPWIND)
        fd = ((ap - am) / (2.0 * t_R)).ravel()
        got = LF[n:, :n] @ v.ravel()
        assert np.linalg.norm(got - fd) <= 1e-7 * np.linalg.norm(fd)

        ap, _ = _wall_acceleration(grid, R_s, t_V * v, h, U, params,
                                   DEFAULT_SOLVE, SCHEME_UPWIND)
        am, _ = _wall_acceleration(grid, R_s, -t_V * v, h, U, params,
                                   DEFAULT_SOLVE, SCHEME_UPWIND)
        fd = ((ap - am) / (2.0 * t_V)).ravel()
        got = LF[n:, n:] @ v.ravel()
        # The acceleration is affine in the wall velocity at Rdot = 0, so
        # the central difference is exact up to rounding.
        assert np.linalg.norm(got - fd) <= 1e-12 * np.linalg.norm(fd)


def test_dense_assembly_rejects_oversized_grid():
    grid = Grid(72, 72, 1.0, 1.0, bc_x1=BC_DIRICHLET)
    c = compute_derived(TAME)
    R = np.full(grid.shape, c.R_bar)
    h = np.full(grid.shape, TAME.h0)
    with pytest.raises(ConfigurationError):
        assemble_LG(grid, R, h, (1.0, 0.0), TAME)
    with pytest.raises(ConfigurationError):
        assemble_LF(grid, R, h, (1.0, 0.0), TAME)


def test_separated_spectra_match_dense_assemblies():
    c = compute_derived(TAME)
    grid = Grid(16, 16, 1.0, 1.0, bc_x1=BC_DIRICHLET)
    R = np.full(grid.shape, c.R_bar)
    h = np.full(grid.shape, TAME.h0)
    U_norm = 3.0

    LG = assemble_LG(grid, R, h, (U_norm, 0.0), TAME, scheme=SCHEME_CENTRAL)
    dense = np.linalg.eigvals(LG)
    separated = constant_gap_spectrum_LG(TAME, U_norm, 16, 16)
    assert separated.size == dense.size
    scale = np.abs(separated).max()
    assert _pair_distance(dense, separated) <= 1e-11 * scale

    LF = assemble_LF(grid, R, h, (U_norm, 0.0), TAME, scheme=SCHEME_CENTRAL)
    dense_f = np.linalg.eigvals(LF)
    separated_f = constant_gap_spectrum_LF(TAME, U_norm, 16, 16)
    assert separated_f.size == dense_f.size
    scale_f = np.abs(separated_f).max()
    assert _pair_distance(dense_f, separated_f) <= 1e-11 * scale_f


def test_parallel_gap_massless_spectrum_matches_closed_form():
    c = compute_derived(TAME)
    eig = np.sort(constant_gap_spectrum_LG(TAME, 0.0, 12, 12).real)
    kappa = np.sort(dirichlet_laplacian_eigenvalues(12, 12, 1.0, 1.0))
    predicted = np.sort(np.array(
        [trivial_LG_eigenvalue(k, c, TAME.h0) for k in kappa]))
    assert np.max(np.abs(eig - predicted) / np.abs(predicted)) <= 1e-12
    full = constant_gap_spectrum_LG(TAME, 0.0, 12, 12)
    assert np.max(np.abs(full.imag)) == 0.0
    assert full.real.max() < 0.0


@pytest.mark.parametrize("params", [TAME, PhysicalParams()],
                         ids=["tame", "default"])
def test_trivial_branch_inertial_spectrum_matches_root_finder(params):
    c = compute_derived(params)
    got = trivial_branch_spectrum_LF(params, 12, 12)
    kappa = dirichlet_laplacian_eigenvalues(12, 12, 1.0, 1.0)
    expected = []
    for k in kappa:
        gamma = c.b5 * c.b_r / (c.b3 * params.h0 ** 2 * k)
        expected.extend(np.roots([1.0, c.b2 + gamma, c.b1]))
    expected = np.array(expected)
    assert got.size == expected.size
    assert _pair_distance(got, expected) <= 1e-12 * np.abs(expected).max()
    assert np.all(got.real < 0.0)


def test_trivial_branch_roots_satisfy_quadratic():
    params = PhysicalParams()
    c = compute_derived(params)
    kappa = dirichlet_laplacian_eigenvalues(24, 8, 1.3, 0.7)
    for k in kappa:
        gamma = c.b5 * c.b_r / (c.b3 * params.h0 ** 2 * k)
        for lam in trivial_LF_roots(k, c, params.h0):
            residual = lam * lam + (c.b2 + gamma) * lam + c.b1
            gross = abs(lam) ** 2 + (c.b2 + gamma) * abs(lam) + c.b1
            assert abs(residual) <= 1e-12 * gross
            assert lam.real < 0.0


def test_oscillator_roots_satisfy_vieta():
    # Overdamped branch: huge damping splits the roots by nine decades.
    c = compute_derived(PhysicalParams())
    r1, r2 = b_branch_roots(c)
    assert abs((r1 + r2) / (-c.b2) - 1.0) <= 1e-12
    assert abs((r1 * r2) / c.b1 - 1.0) <= 1e-12
    assert r1.imag == 0.0 and r2.imag == 0.0
    assert r1.real < 0.0 and r2.real < 0.0

    # Underdamped branch: a strictly complex conjugate pair.
    ct = compute_derived(TAME)
    s1, s2 = b_branch_roots(ct)
    assert s1 == np.conj(s2)
    assert s1.imag != 0.0
    assert abs((s1 + s2) / (-ct.b2) - 1.0) <= 1e-12
    assert abs((s1 * s2) / ct.b1 - 1.0) <= 1e-12


def test_laplacian_eigenvalue_formula_matches_matrix_route():
    for n, dx in ((8, 0.125), (16, 0.031), (5, 1.7)):
        matrix_route = np.linalg.eigvalsh(_dirichlet_second_difference_1d(n, dx))
        formula = np.sort(dirichlet_laplacian_eigenvalues_1d(n, dx))
        assert np.max(np.abs(matrix_route - formula) / formula) <= 1e-12

    # 2D values are all pairwise sums of the 1D ones.
    L1, L2 = 1.3, 0.7
    two_d = np.sort(dirichlet_laplacian_eigenvalues(3, 4, L1, L2))
    e1 = dirichlet_laplacian_eigenvalues_1d(3, L1 / 3)
    e2 = dirichlet_laplacian_eigenvalues_1d(4, L2 / 4)
    by_loops = np.sort(np.array([a + b for a in e1 for b in e2]))
    assert np.allclose(two_d, by_loops, rtol=1e-14, atol=0.0)


@pytest.mark.parametrize("params", [TAME, PhysicalParams()],
                         ids=["tame", "default"])
def test_sigma_constants_identity(params):
    c = compute_derived(params)
    sigma1, sigma2 = sigma_constants(params, c)
    assert sigma2 > 0.0
    assert abs(sigma2 / (c.b5 * c.b_r / (c.b3 * params.h0 ** 2)) - 1.0) <= 1e-14
    # b4 == b5 for this model family, which collapses sigma1 to sigma2^2.
    assert abs(sigma1 / sigma2 ** 2 - 1.0) <= 1e-12


def _exact_det(M):
    """Cofactor-expansion determinant over exact Fractions."""
    if len(M) == 1:
        return M[0][0]
    total = Fraction(0)
    for j in range(len(M)):
        if M[0][j] == 0:
            continue
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        total += (-1) ** j * M[0][j] * _exact_det(minor)
    return total


def test_hurwitz_closed_forms_equal_direct_determinants():
    rng = np.random.default_rng(11)
    for draw in range(50):
        p_bnd = rng.uniform(500.0, 2000.0)
        params = PhysicalParams(
            rho_l=rng.uniform(500.0, 2000.0), mu_l=rng.uniform(0.05, 5.0),
            rho_g=rng.uniform(0.5, 900.0), mu_g=rng.uniform(1e-3, 0.1),
            kappa_s=rng.uniform(0.0, 0.05),
            k_poly=float(rng.choice([1.0, 1.4])),
            sigma=rng.uniform(0.3, 3.0),
            P0=p_bnd * rng.uniform(1.01, 1.5), p_bnd=p_bnd,
            R0=rng.uniform(0.02, 0.2), alpha0=rng.uniform(0.01, 0.4),
            J_r=1.0, B=1.0, h0=rng.uniform(1.0 / 64.0, 1.0 / 8.0),
            ecc=0.0, omega=0.0)
        k = (int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        report = hurwitz_analysis(params, rng.uniform(0.0, 20.0), k)

        a0 = Fraction(report.alpha0)
        b0 = Fraction(report.beta0)
        a1 = Fraction(report.alpha1)
        b1 = Fraction(report.beta1)
        a2 = Fraction(report.alpha2)
        d1 = b0
        d2 = b0 * a1 - a0 * b1
        d3 = d2 * b1 - b0 * b0 * a2
        d4 = a2 * d3
        H = [[b0, b1, 0, 0], [a0, a1, a2, 0],
             [0, b0, b1, 0], [0, a0, a1, a2]]
        direct = [_exact_det([row[:m] for row in H[:m]]) for m in (1, 2, 3, 4)]
        # Closed forms and leading principal minors agree exactly, and the
        # last minor factors exactly through the constant coefficient.
        assert [d1, d2, d3, d4] == direct, f"draw {draw}"
        assert direct[3] == a2 * direct[2]
        assert report.deltas[3] == report.alpha2 * report.deltas[2]

        gross2 = float(b0 * a1 + a0 * b1)
        gross3 = float(abs(d2)) * float(b1) + float(b0) ** 2 * float(abs(a2))
        grosses = (float(b0), gross2, gross3, float(abs(a2)) * gross3)
        for floats in (report.deltas, report.deltas_direct):
            for value, exact, gross in zip(floats, direct, grosses):
                assert abs(value - float(exact)) <= 1e-12 * max(gross, 1e-300)


def test_hurwitz_critical_speed_zeroes_third_determinant():
    report0 = hurwitz_analysis(TAME, 0.0, (1, 1))
    u_crit = float(np.sqrt(report0.U_crit_sq))

    at = hurwitz_analysis(TAME, u_crit, (1, 1))
    gross = abs(at.deltas[1]) * at.beta1 + at.beta0 ** 2 * abs(at.alpha2)
    assert abs(at.deltas[2]) <= 1e-12 * gross

    low = hurwitz_analysis(TAME, 0.9 * u_crit, (1, 1))
    high = hurwitz_analysis(TAME, 1.1 * u_crit, (1, 1))
    assert low.deltas[2] > 0.0 > high.deltas[2]
    assert low.sign_changes == 0
    assert high.sign_changes == 2
    # Independent count of open-right-half-plane roots of the quartic.
    for report in (low, high):
        roots = np.roots([report.alpha0, report.beta0, report.alpha1,
                          report.beta1, report.alpha2])
        assert int(np.sum(roots.real > 0.0)) == report.sign_changes


def test_critical_speed_minimizes_over_modes():
    u_crit, mode = critical_speed(TAME)
    assert mode == (1, 1)
    assert u_crit == pytest.approx(8.648208542983802, rel=1e-9)
    thresholds = [hurwitz_analysis(TAME, 0.0, k).U_crit_sq
                  for k in ((1, 1), (1, 2), (2, 2), (3, 1))]
    assert all(a < b for a, b in zip(thresholds, thresholds[1:]))


def test_hurwitz_rejects_nonpositive_mode_indices():
    for k in ((0, 1), (1, 0), (-1, 2)):
        with pytest.raises(ConfigurationError):
            hurwitz_analysis(TAME, 1.0, k)


def test_inertial_spectrum_flips_across_critical_speed():
    u_crit, _ = critical_speed(TAME)
    low = constant_gap_spectrum_LF(TAME, 0.9 * u_crit, 32, 32)
    high = constant_gap_spectrum_LF(TAME, 1.1 * u_crit, 32, 32)
    assert low.real.max() < -1e-3
    assert high.real.max() > 1e-3
    # The massless hierarchy stays firmly stable at the same speed.
    massless = constant_gap_spectrum_LG(TAME, 1.1 * u_crit, 32, 32)
    assert massless.real.max() < -1.0


def test_verdict_classification():
    stable = compute_spectrum(np.diag([-1.0, -2.0]))
    assert stable.verdict == VERDICT_STABLE
    assert stable.max_real_part == -1.0
    assert compute_spectrum(np.diag([-1.0, 1e-3])).verdict == VERDICT_UNSTABLE
    assert compute_spectrum(np.diag([-1.0, 1e-12])).verdict == VERDICT_MARGINAL
    # An explicit margin widens the marginal band.
    wide = compute_spectrum(np.diag([-1.0, -2.0]), margin=1.5)
    assert wide.verdict == VERDICT_MARGINAL
    tagged = compute_spectrum(np.diag([-3.0, -2.0]), operator_tag=TAG_LF,
                              resolution=(4, 4))
    assert tagged.operator_tag == TAG_LF
    assert tagged.resolution == (4, 4)
    assert tagged.margin == 1e-8


def test_spectrum_input_validation():
    with pytest.raises(ConfigurationError):
        compute_spectrum(np.zeros((3, 4)))
    with pytest.raises(ConfigurationError):
        compute_spectrum(np.zeros((SPECTRUM_SIZE_LIMIT + 1,
                                   SPECTRUM_SIZE_LIMIT + 1)))


def test_spectrum_csv_round_trip(tmp_path):
    report = compute_spectrum(np.array([[0.0, -2.5], [2.5, -1e-7]]))
    path = tmp_path / "spectrum.csv"
    export_spectrum_csv(path, report)
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    assert lines[0] == "re,im"
    assert len(lines) == 1 + report.eigenvalues.size
    parsed = np.array([[float(tok) for tok in line.split(",")]
                       for line in lines[1:]])
    back = parsed[:, 0] + 1j * parsed[:, 1]
    assert _pair_distance(back, report.eigenvalues) <= 1e-10 * 2.5


def test_flag_near_exceptional_masks_poles():
    c = compute_derived(PhysicalParams())
    eigenvalues = np.array([-c.d1 * (1.0 + 2e-7), -3.0 * c.d1,
                            -c.d1 * (1.0 - 1e-8), 5.0 + 2.0j])
    mask = flag_near_exceptional(eigenvalues, c)
    assert mask.tolist() == [True, False, True, False]
    tight = flag_near_exceptional(eigenvalues, c, rtol=1e-9)
    assert tight.tolist() == [False, False, False, False]


def test_journal_spectrum_approaches_parallel_limit():
    base_params = PhysicalParams(ecc=0.0)
    grid = grid_for_params(base_params, 16, 8)
    c = compute_derived(base_params)
    U = (base_params.surface_speed, 0.0)
    R_flat = np.full(grid.shape, c.R_bar)
    h_flat = gap_function(grid, base_params)
    base = np.linalg.eigvals(assemble_LG(grid, R_flat, h_flat, U, base_params))
    scale = np.abs(base).max()

    distances = []
    for ecc in (0.04, 0.02, 0.01):
        params = PhysicalParams(ecc=ecc)
        h = gap_function(grid, params)
        R_s, _, report = solve_stationary(grid, h, U, params)
        assert report.converged
        eig = np.linalg.eigvals(assemble_LG(grid, R_s, h, U, params))
        distances.append(_pair_distance(base, eig))
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] <= 0.02 * scale


def test_hurwitz_report_text_lists_both_determinant_routes():
    text = hurwitz_report_text(hurwitz_analysis(TAME, 2.0, (1, 2)))
    assert "mode k = (1, 2)" in text
    assert "determinants (closed form):" in text
    assert "determinants (direct):" in text
    assert "sign changes" in text
    assert "critical speed for this mode:" in text

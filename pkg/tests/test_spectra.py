import numpy as np
import pytest

from slowfastlab import spectra
from slowfastlab.core import ParameterPoint, State, jacobian_u
from slowfastlab.errors import ContractViolationError, DomainError, PreconditionError


def test_dense_spectrum_diagonal():
    eigs = spectra.dense_spectrum(np.diag([1.0, -2.0, 3.0]))
    assert np.allclose(eigs, [3.0, 1.0, -2.0])


def test_dense_spectrum_rotation_pair():
    w = 2.5
    eigs = spectra.dense_spectrum(np.array([[0.0, -w], [w, 0.0]]))
    assert np.allclose(sorted(eigs.imag), [-w, w], atol=1e-12)
    assert np.max(np.abs(eigs.real)) < 1e-12


def test_dense_spectrum_size_cap():
    with pytest.raises(ContractViolationError):
        spectra.dense_spectrum(np.zeros((8193, 8193)))


def test_conjugate_symmetry_of_real_matrices():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((40, 40))
    eigs = spectra.dense_spectrum(A)
    conj = np.conj(eigs)
    for z in eigs:
        assert np.min(np.abs(conj - z)) < 1e-9


def test_partition_three_eigenvalues():
    rep = spectra.partition(np.array([-1.0, 0.0, 2.0]), centre_tol=1e-8)
    eigs = rep.eigenvalues  # sorted descending by real part: [2, 0, -1]
    assert eigs[list(rep.sigma_u)] == [2.0]
    assert eigs[list(rep.sigma_c)] == [0.0]
    assert eigs[list(rep.sigma_s)] == [-1.0]
    assert abs(rep.gamma - (1.0 - 1e-8)) < 1e-15
    assert not rep.is_normally_hyperbolic


def test_partition_all_stable_is_normally_hyperbolic():
    rep = spectra.partition(np.array([-0.5, -1.0, -3.0]))
    assert rep.is_normally_hyperbolic and len(rep.sigma_c) == 0


def test_partition_sets_are_a_partition():
    rng = np.random.default_rng(1)
    eigs = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    rep = spectra.partition(eigs)
    all_idx = sorted(rep.sigma_u + rep.sigma_c + rep.sigma_s)
    assert all_idx == list(range(30))


def test_fhn_closed_form_values():
    a = 0.1
    eigs = spectra.fhn_spectrum_closed_form(a, 2)
    # Hopf pair +/- i sqrt(1 - a^2)
    omega = np.sqrt(1.0 - a * a)
    assert np.min(np.abs(eigs - 1j * omega)) < 1e-14
    assert abs(omega - 0.99498743710662) < 1e-12
    # n = 1: -1/2 +/- i sqrt(4 - (1-2a)^2)/2 (discriminant (0.8)^2 - 4 < 0)
    lam1 = (-1.0 + 1j * np.sqrt(4.0 - (1.0 - 2.0 * a) ** 2)) / 2.0
    assert abs(lam1 - (-0.5 + 0.916515138991168j)) < 1e-12
    assert np.min(np.abs(eigs - lam1)) < 1e-14
    # -a is always a member
    assert np.min(np.abs(eigs - (-a))) < 1e-15
    with pytest.raises(DomainError):
        spectra.fhn_spectrum_closed_form(1.2, 4)


def test_fhn_oracle_agreement(fhn_oracle256):
    J = jacobian_u(fhn_oracle256, fhn_oracle256.reference, ParameterPoint(eps=0.0))
    dense = spectra.dense_spectrum(J)
    a = fhn_oracle256.info["params"]["b"]
    oracle = spectra.fhn_spectrum_closed_form(a, 64)  # n_points/4 = 64
    for lam in oracle:
        if lam == -a:
            continue  # essential accumulation point, not a discrete eigenvalue
        err = np.min(np.abs(dense - lam))
        assert err <= 1e-6 * (1.0 + abs(lam))


def test_fhn_gamma_is_half_a_from_closed_form():
    a = 0.1
    rep = spectra.partition(spectra.fhn_spectrum_closed_form(a, 64))
    # sharp gap = a (attained at the essential point); the centre-manifold
    # gap constant is half of it
    assert abs((rep.gamma + rep.centre_tol) / 2.0 - a / 2.0) <= 1e-6


def test_lambert_known_values():
    w = spectra.lambert_w(-1.0, 0)
    # Newton refinement of w e^w = -1 as an independent check
    z = w
    for _ in range(50):
        z = z - (z * np.exp(z) + 1.0) / (np.exp(z) * (z + 1.0))
    assert abs(w - z) < 1e-12
    assert abs(w - (-0.3181315052047641 + 1.3372357014306895j)) < 1e-10


def test_lambert_against_scipy():
    from scipy.special import lambertw as scipy_w
    rng = np.random.default_rng(2)
    for k in (-5, -1, 0, 1, 4):
        for z in (-218.4 + 0j, -0.0733 + 0j, 0.5 + 2.0j, -3.0 - 1.0j):
            if z == 0:
                continue
            mine = spectra.lambert_w(z, k)
            ref = scipy_w(z, k)
            assert abs(mine - ref) <= 1e-9 * (1.0 + abs(ref)), (k, z)


def test_dde_roots_satisfy_characteristic_equation():
    for v in (-1.0, 0.0, 1.0):
        for tau in (1.0, 4.0):
            roots = spectra.dde_roots_lambert(v, tau, range(-10, 11))
            for lam in roots:
                assert abs(spectra.dde_characteristic_residual(lam, v, tau)) <= 1e-10


def test_dde_root_k0_at_v0_tau1():
    lam = spectra.dde_roots_lambert(0.0, 1.0, [0])[0]
    # independent oracle: Newton on lambda = -exp(-lambda)
    z = -0.3 + 1.3j
    for _ in range(60):
        f = z + np.exp(-z)
        z = z - f / (1.0 - np.exp(-z))
    assert abs(lam - z) < 1e-10
    assert abs(lam - (-0.31813150 + 1.33723570j)) < 1e-7


def test_dde_real_root_v2_tau1():
    lam = spectra.dde_roots_lambert(2.0, 1.0, [0])[0]
    # fixed-point oracle lambda = v - exp(-lambda)
    x = 1.8
    for _ in range(200):
        x = 2.0 - np.exp(-x)
    assert abs(lam.imag) < 1e-12
    assert abs(lam.real - x) < 1e-10
    assert abs(lam.real - 1.84) < 5e-3


def test_dde_hopf_locus_tau4():
    locus = spectra.dde_hopf_locus(4.0)
    assert len(locus) == 1
    v_h = locus[0]
    # bisection oracle (independent scan at finer mesh)
    g = lambda v: v - np.cos(4.0 * np.sqrt(1.0 - v * v))
    a, b = -0.79, -0.78
    assert g(a) * g(b) < 0
    for _ in range(60):
        m = 0.5 * (a + b)
        if g(a) * g(m) <= 0:
            b = m
        else:
            a = m
    assert abs(v_h - 0.5 * (a + b)) < 1e-9
    assert abs(v_h - (-0.785671278400587)) < 1e-12
    # all roots strictly inside (-1, 1); leading Lambert root purely imaginary
    assert -1.0 < v_h < 1.0
    lead = spectra.dde_leading_roots(v_h, 4.0)[0]
    assert abs(lead.real) <= 1e-8


def test_dde_hopf_locus_small_tau_interior():
    for tau in (0.05, 0.2):
        for v_h in spectra.dde_hopf_locus(tau):
            assert -1.0 < v_h < 1.0


def test_dispersion_nonlocal_threshold(nonlocal256):
    info = nonlocal256.info["dispersion"]
    w2 = info["kernel_spectrum"][2]
    d, l, b = info["d"], 5.0, info["shift"]
    v_star = -d * (2.0 * np.pi / l) ** 2 / w2 + b  # oracle with quadrature w2
    rate_lo = spectra.dispersion_relation(nonlocal256, v_star - 1e-6, [2])[0]
    rate_hi = spectra.dispersion_relation(nonlocal256, v_star + 1e-6, [2])[0]
    assert rate_lo < 0 < rate_hi
    assert abs(v_star - 1.5064) < 1e-3  # consistent with the reported threshold


def test_dispersion_mode1_never_first(nonlocal256):
    info = nonlocal256.info["dispersion"]
    assert info["kernel_spectrum"][1] > 0
    for v in np.linspace(1.1, 2.5, 8):
        assert spectra.dispersion_relation(nonlocal256, v, [1])[0] < 0


def test_dispersion_matches_dense_spectrum(nonlocal256):
    v = 1.55
    modes = np.arange(0, 9)
    rates = spectra.dispersion_relation(nonlocal256, v, modes)
    u_star = nonlocal256.info["homogeneous_equilibrium"](v)
    field = np.full(256, u_star[0])
    J = jacobian_u(nonlocal256, State(0.0, field, np.array([v])), ParameterPoint(eps=0.0))
    dense = spectra.dense_spectrum(J)
    for r in rates:
        assert np.min(np.abs(dense.real - r)) <= 1e-8


def test_dispersion_zero_system_returns_zero():
    from slowfastlab.core import SlowFastSystem
    from slowfastlab.discretize import neumann_grid
    g = neumann_grid(10.0, 32)
    zero = SlowFastSystem(
        n_fast=64, m_slow=1, p_params=0,
        rhs_fast=lambda u, v, mu, eps: np.zeros(64),
        rhs_slow=lambda u, v, mu, eps: np.ones(1),
        info={
            "name": "zero", "grid": g, "q": 2,
            "homogeneous_equilibrium": lambda v: np.zeros(2),
            "dispersion": {"kind": "local", "diffusion": np.zeros(2),
                           "reaction_jac": lambda uc, v: np.zeros((2, 2))},
        })
    rates = spectra.dispersion_relation(zero, 0.3, [0, 1, 2, 5])
    assert np.all(rates == 0.0)


def test_dispersion_rejects_bad_equilibrium(nonlocal256):
    with pytest.raises(PreconditionError):
        spectra.dispersion_relation(nonlocal256, 1.5, [2], u_star=np.array([3.3]))


def test_spectrum_report_serialization_roundtrip():
    rep = spectra.partition(np.array([1.0 + 2.0j, -0.5, 0.0]))
    d = rep.to_dict()
    assert set(d) == {"eigenvalues", "sigma_u", "sigma_c", "sigma_s", "gamma", "centre_tol"}
    assert d["eigenvalues"][0] == [1.0, 2.0]

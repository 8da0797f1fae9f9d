import numpy as np
import pytest
from dataclasses import replace

from slowfastlab.core import ParameterPoint, SlowFastSystem, State, eval_rhs, jacobian_u
from slowfastlab.errors import ContractViolationError, NumericalOverflowError


def _linear_system(A):
    n = A.shape[0]
    return SlowFastSystem(
        n_fast=n, m_slow=1, p_params=0,
        rhs_fast=lambda u, v, mu, eps: A @ u,
        rhs_slow=lambda u, v, mu, eps: np.ones(1),
        jac_u=lambda u, v, mu, eps: A,
    )


def test_layer_problem_freezes_slow_variables(fhn64):
    ref = fhn64.reference
    _, dv = eval_rhs(fhn64, ref, ParameterPoint(eps=0.0))
    assert np.all(dv == 0.0)


def test_eps_scales_slow_rhs(fhn64):
    ref = fhn64.reference
    _, dv = eval_rhs(fhn64, ref, ParameterPoint(eps=2.5e-3))
    assert np.allclose(dv, 2.5e-3)  # G = 1 for the FHN drift


def test_fhn_componentwise_rhs(fhn64):
    # homogeneous fields: du1 = u1 - u1^3/3 - u2 + v at every node
    n = 64
    u1, u2, v = 0.3, -0.2, 0.7
    state = State(0.0, np.concatenate([np.full(n, u1), np.full(n, u2)]), np.array([v]))
    du, _ = eval_rhs(fhn64, state, ParameterPoint(eps=0.0))
    assert np.allclose(du[:n], u1 - u1 ** 3 / 3 - u2 + v, atol=1e-13)
    assert np.allclose(du[n:], u1 + 0.05 - 0.1 * u2, atol=1e-14)


def test_schnakenberg_homogeneous_is_equilibrium(schnak128):
    from slowfastlab.models import schnakenberg_homogeneous
    params = schnak128.info["params"]
    v = 2.0
    u1, u2 = schnakenberg_homogeneous(params, v)
    n = 128
    state = State(0.0, np.concatenate([np.full(n, u1), np.full(n, u2)]), np.array([v]))
    du, _ = eval_rhs(schnak128, state, ParameterPoint(eps=0.0))
    assert np.max(np.abs(du)) <= 1e-12


def test_dimension_mismatch_raises(fhn64):
    state = State(0.0, np.zeros(7), np.zeros(1))
    with pytest.raises(ContractViolationError):
        eval_rhs(fhn64, state, ParameterPoint(eps=0.0))


def test_overflow_names_component():
    bad = SlowFastSystem(
        n_fast=3, m_slow=0, p_params=0,
        rhs_fast=lambda u, v, mu, eps: np.array([0.0, np.inf, 0.0]),
        rhs_slow=lambda u, v, mu, eps: np.zeros(0),
    )
    with pytest.raises(NumericalOverflowError, match="component 1"):
        eval_rhs(bad, State(0.0, np.zeros(3), np.zeros(0)), ParameterPoint())


def test_eval_rhs_deterministic(nonlocal256):
    rng = np.random.default_rng(3)
    u = nonlocal256.reference.u + 0.1 * rng.standard_normal(256)
    state = State(0.0, u, np.array([1.4]))
    a1, b1 = eval_rhs(nonlocal256, state, ParameterPoint(eps=1e-3))
    a2, b2 = eval_rhs(nonlocal256, state, ParameterPoint(eps=1e-3))
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_jacobian_exact_for_linear_system():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    sys_a = _linear_system(A)
    state = State(0.0, rng.standard_normal(5), np.zeros(1))
    assert np.array_equal(jacobian_u(sys_a, state, ParameterPoint()), A)
    sys_fd = replace(sys_a, jac_u=None)
    J_fd = jacobian_u(sys_fd, state, ParameterPoint())
    assert np.max(np.abs(J_fd - A)) <= 1e-6


def test_fhn_jacobian_diagonal_block(fhn64):
    # d(u1 - u1^3/3)/du1 = 1 - u1^2 enters the diagonal of the first block
    n = 64
    rng = np.random.default_rng(1)
    u1 = rng.uniform(-1, 1, n)
    state = State(0.0, np.concatenate([u1, np.zeros(n)]), np.array([0.0]))
    J = jacobian_u(fhn64, state, ParameterPoint(eps=0.0))
    d1 = fhn64.info["params"]["d1"]
    from slowfastlab.discretize import second_derivative_matrix
    D2 = second_derivative_matrix(fhn64.info["grid"])
    assert np.allclose(np.diag(J[:n, :n] - d1 * D2), 1.0 - u1 ** 2, atol=1e-12)


def test_fd_vs_analytic_jacobians_all_models(all_models):
    rng = np.random.default_rng(42)
    for name, system in all_models.items():
        ref = system.reference
        pp = ParameterPoint(eps=0.0)
        n_states = 10
        for _ in range(n_states):
            u = ref.u + rng.uniform(-0.5, 0.5, system.n_fast)
            state = State(0.0, u, ref.v)
            Ja = jacobian_u(system, state, pp)
            Jf = jacobian_u(replace(system, jac_u=None), state, pp)
            tol = 1e-5 * (1.0 + np.max(np.abs(Ja)))
            assert np.max(np.abs(Ja - Jf)) <= tol, name


def test_linear_part_remainder_superlinear(all_models):
    # F(ref + du) - F(ref) - L du = o(||du||) under halving of du
    rng = np.random.default_rng(7)
    for name, system in all_models.items():
        ref = system.reference
        L = system.linear_part
        direction = rng.standard_normal(system.n_fast)
        direction /= np.linalg.norm(direction)
        F0 = np.asarray(system.rhs_fast(ref.u, ref.v, np.zeros(0), 0.0))
        ratios = []
        for h in (1e-3, 5e-4, 2.5e-4):
            du = h * direction
            F1 = np.asarray(system.rhs_fast(ref.u + du, ref.v, np.zeros(0), 0.0))
            rem = F1 - F0 - L @ du
            ratios.append(np.linalg.norm(rem) / h)
        assert ratios[2] < 0.51 * ratios[0], name  # quadratic remainder halves twice

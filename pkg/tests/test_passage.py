import math

import numpy as np
import pytest

from slowfastlab import continuation as ct
from slowfastlab import passage
from slowfastlab.core import ParameterPoint, SlowFastSystem, State
from slowfastlab.errors import NoExitError, PreconditionError
from slowfastlab.integrate import IntegratorOptions, integrate

PP = ParameterPoint(eps=0.0)


def linear_hopf_normal_form():
    """A' = (i + v) A as a 2-fast/1-slow real system; equilibrium A = 0."""
    return SlowFastSystem(
        n_fast=2, m_slow=1, p_params=0,
        rhs_fast=lambda u, v, mu, eps: np.array([v[0] * u[0] - u[1], u[0] + v[0] * u[1]]),
        rhs_slow=lambda u, v, mu, eps: np.ones(1),
        jac_u=lambda u, v, mu, eps: np.array([[v[0], -1.0], [1.0, v[0]]]),
        jac_v=lambda u, v, mu, eps: np.array([[u[0]], [u[1]]]),
    )


def test_entry_exit_symmetric_linear_crossing():
    v_out = passage.entry_exit_point(lambda v: v, -0.5)
    assert abs(v_out - 0.5) <= 1e-9


def test_entry_exit_polynomial_root():
    # re(v) = v + v^2, v_in = -1/2: the exit solves
    # (v^2 - v_in^2)/2 + (v^3 - v_in^3)/3 = 0, i.e. 2v^3 + 3v^2 - 1/2 = 0,
    # whose positive root is (sqrt(3) - 1)/2 (polynomial-root oracle below).
    roots = np.roots([2.0, 3.0, 0.0, -0.5])
    target = float(roots[np.argmin(np.abs(roots - 0.4))].real)
    assert abs(target - (np.sqrt(3.0) - 1.0) / 2.0) < 1e-12
    v_out = passage.entry_exit_point(lambda v: v + v * v, -0.5)
    assert abs(v_out - target) <= 1e-9


def test_entry_exit_requires_negative_start():
    with pytest.raises(PreconditionError):
        passage.entry_exit_point(lambda v: v, 0.2)


def test_entry_exit_no_exit_error():
    with pytest.raises(NoExitError):
        passage.entry_exit_point(lambda v: v - 1e9 * v * v, -0.5, v_max=1.0)


def _nf_branch(system, v_range):
    br = ct.continue_branch(system, np.zeros(2), v_range, PP, ds=0.05)
    ct.detect_bifurcations(system, br, PP)
    return br


def test_measure_delay_linear_normal_form_entry_exit():
    system = linear_hopf_normal_form()
    v_in = -0.5
    branch = _nf_branch(system, (v_in, 0.8))
    hopf = [e for e in branch.events if e.kind == "hopf"]
    assert len(hopf) == 1 and abs(hopf[0].v_value) <= 1e-6
    delta = 1e-2
    fitted_c = []
    for eps in (1e-2, 1e-3, 1e-4):
        # |A(0)| such that the normalized distance is delta/e; stop shortly
        # after the symmetric exit point or the linear mode overflows
        amp = delta / np.e * np.sqrt(2.0)
        state0 = State(0.0, np.array([amp, 0.0]), np.array([v_in]))
        t_end = (0.55 - v_in) / eps
        opts = IntegratorOptions(t_end=t_end, rel_tol=1e-9, abs_tol=1e-12)
        traj = integrate(system, state0, ParameterPoint(eps=eps), opts)
        meas = passage.measure_delay(traj, branch, delta, epsilon=eps)
        assert meas.departed and meas.delay > 0.0
        err = abs(meas.v_depart - (-v_in))
        assert err <= 10.0 * eps, (eps, meas.v_depart)
        fitted_c.append(err / eps)
        # agreement with the entry-exit oracle
        v_out = passage.entry_exit_point(lambda v: v, v_in)
        assert abs(v_out - meas.v_depart) <= 10.0 * eps
    assert max(fitted_c) <= 10.0


def test_measure_delay_never_departs_marker():
    system = linear_hopf_normal_form()
    branch = _nf_branch(system, (-0.5, 0.8))
    state0 = State(0.0, np.zeros(2), np.array([-0.4]))
    traj = integrate(system, state0, ParameterPoint(eps=0.0),
                     IntegratorOptions(t_end=5.0))
    meas = passage.measure_delay(traj, branch, 1e-2, v_cross=0.0)
    assert not meas.departed and math.isinf(meas.delay)


def test_measure_delay_rejects_start_outside_tube():
    system = linear_hopf_normal_form()
    branch = _nf_branch(system, (-0.5, 0.8))
    state0 = State(0.0, np.array([5.0, 0.0]), np.array([-0.4]))
    traj = integrate(system, state0, ParameterPoint(eps=1e-2),
                     IntegratorOptions(t_end=5.0))
    with pytest.raises(PreconditionError):
        passage.measure_delay(traj, branch, 1e-2, v_cross=0.0)


def test_dde_preset_experiment(tmp_path):
    res = passage.run_preset_experiment("dde_hopf", output_dir=str(tmp_path / "dde"))
    r = res.report
    assert abs(r["hopf_locus_v"] - (-0.785671278400587)) <= 1e-9
    assert abs(r["hopf_locus_v"] - (-0.75)) <= 0.05  # companion claim, approximate
    assert r["locus_vs_paper_discrepancy"] > 0
    assert r["delay"]["departed"] and r["delay"]["delay"] > 0
    for fname in ("branch.csv", "trajectory.csv", "events.json", "delay.json", "report.json"):
        assert (tmp_path / "dde" / fname).exists()


def test_unknown_preset_rejected():
    with pytest.raises(PreconditionError):
        passage.run_preset_experiment("not_a_preset")

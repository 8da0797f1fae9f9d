import numpy as np
import pytest

from slowfastlab import models
from slowfastlab.core import ParameterPoint, State, eval_rhs
from slowfastlab.errors import ConfigurationError, DegenerateProblemError


def test_figure_defaults_match_captions():
    assert models.preset("fhn").params == {"d1": 0.1, "b": 0.1, "c": 0.05}
    assert models.preset("dde").params == {"tau": 4.0, "d": 0.01}
    nl = models.preset("nonlocal_rd")
    assert (nl.params, nl.grid.half_length) == ({"h": 3.0, "d": 0.05, "b": 1.0}, 5.0)
    nf = models.preset("neural_field").params
    assert (nf["a"], nf["b"], nf["c"]) == (0.5, 0.0, 0.0)
    assert (nf["kappa1"], nf["kappa2"], nf["kappa3"], nf["kappa4"]) == (0.5, 1.0, 0.5, 1.0)
    assert nf["theta_gain"] == 50.0
    sk = models.preset("schnakenberg").params
    assert (sk["c"], sk["r"], sk["h"], sk["b"], sk["d2"]) == (1, 1, 1, 1, 10.0)
    assert sk["d1"] == 0.26


def test_missing_parameter_is_reported():
    mp = models.preset("fhn")
    bad = models.ModelPreset("fhn", mp.grid, {"d1": 0.1, "b": 0.1})
    with pytest.raises(ConfigurationError, match="c"):
        models.build_model(bad)


def test_schnakenberg_homogeneous_closed_form():
    p = {"b": 1.0, "c": 1.0, "r": 1.0, "h": 1.0}
    assert models.schnakenberg_homogeneous(p, 1.0) == (1.0, 1.0)
    u1, u2 = models.schnakenberg_homogeneous(p, 2.0)
    assert (u1, abs(u2 - 2.0 / 3.0) < 1e-15) == (1.0, True)
    assert models.schnakenberg_homogeneous({**p, "b": 0.0}, 1.0) == (0.0, 0.0)
    with pytest.raises(DegenerateProblemError):
        models.schnakenberg_homogeneous({**p, "r": 0.0}, 1.0)


def test_schnakenberg_homogeneous_random_residuals():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = {"b": rng.uniform(0.1, 3), "c": rng.uniform(0.1, 3),
             "r": rng.uniform(0.1, 3), "h": rng.uniform(0.1, 3)}
        v = rng.uniform(0.1, 3)
        u1, u2 = models.schnakenberg_homogeneous(p, v)
        assert u1 == p["b"] / p["r"]
        r1 = v * u1 ** 2 * u2 - (p["c"] + p["r"]) * u1 + p["h"] * u2
        r2 = -v * u1 ** 2 * u2 + p["c"] * u1 - p["h"] * u2 + p["b"]
        assert abs(r1) <= 1e-12 and abs(r2) <= 1e-12


def _constant_state(system, comps, v):
    n = system.info["grid"].n_points
    u = np.concatenate([np.full(n, c) for c in comps])
    return State(0.0, u, np.atleast_1d(v))


def test_homogeneous_state_closure(fhn64, nonlocal256, schnak128):
    pp = ParameterPoint(eps=0.0)
    for system, comps, v in (
        (fhn64, (0.4, -0.1), 0.3),
        (nonlocal256, (0.55,), 1.4),
        (schnak128, (1.0, 0.8), 1.7),
    ):
        du, _ = eval_rhs(system, _constant_state(system, comps, v), pp)
        q = system.info["q"]
        n = system.info["grid"].n_points
        for c in range(q):
            block = du[c * n:(c + 1) * n]
            dev = np.max(np.abs(block - np.mean(block)))
            # spectral grids: FFT of a constant leaves ~1e-17 in the empty bins
            limit = 1e-14 if system.info["grid"].kind == "periodic" else 1e-13
            assert dev <= limit


def _shift(system, u, k=1):
    q, n = system.info["q"], system.info["grid"].n_points
    return np.concatenate([np.roll(u[c * n:(c + 1) * n], k) for c in range(q)])


def _reflect_periodic(system, u):
    q, n = system.info["q"], system.info["grid"].n_points
    idx = (-np.arange(n)) % n
    return np.concatenate([u[c * n:(c + 1) * n][idx] for c in range(q)])


def test_translation_equivariance_periodic_models(fhn64, nonlocal256):
    rng = np.random.default_rng(5)
    pp = ParameterPoint(eps=0.0)
    for system, v in ((fhn64, 0.2), (nonlocal256, 1.4)):
        u = rng.standard_normal(system.n_fast)
        du, _ = eval_rhs(system, State(0.0, u, np.atleast_1d(v)), pp)
        du_s, _ = eval_rhs(system, State(0.0, _shift(system, u), np.atleast_1d(v)), pp)
        assert np.max(np.abs(du_s - _shift(system, du))) <= 1e-12


def test_reflection_equivariance(fhn64, nonlocal256, nf512):
    rng = np.random.default_rng(6)
    pp = ParameterPoint(eps=0.0)
    for system, v in ((fhn64, np.array([0.2])), (nonlocal256, np.array([1.4])),
                      (nf512, np.array([0.45, 0.0]))):
        u = rng.standard_normal(system.n_fast)
        du, _ = eval_rhs(system, State(0.0, u, v), pp)
        du_r, _ = eval_rhs(system, State(0.0, _reflect_periodic(system, u), v), pp)
        assert np.max(np.abs(du_r - _reflect_periodic(system, du))) <= 1e-12


def test_schnakenberg_neumann_reflection(schnak128):
    # cell-centred grid is symmetric under j <-> n-1-j
    rng = np.random.default_rng(7)
    pp = ParameterPoint(eps=0.0)
    n = 128
    u = rng.standard_normal(2 * n)
    refl = lambda w: np.concatenate([w[:n][::-1], w[n:][::-1]])
    du, _ = eval_rhs(schnak128, State(0.0, u, np.array([1.9])), pp)
    du_r, _ = eval_rhs(schnak128, State(0.0, refl(u), np.array([1.9])), pp)
    assert np.max(np.abs(du_r - refl(du))) <= 1e-12


def test_nf_levelset():
    from slowfastlab.discretize import periodic_grid
    g = periodic_grid(5.0, 64)
    assert models.nf_levelset(g, np.full(64, 1.5), 0.5) == []
    crossings = models.nf_levelset(g, g.nodes.copy(), 0.0)
    assert len(crossings) == 1 and abs(crossings[0]) < g.dx


def test_nf_levelset_bump_symmetric(nf512):
    from slowfastlab.continuation import newton_steady
    g = nf512.info["grid"]
    v1 = 0.45
    u = newton_steady(nf512, nf512.info["bump_seed"](v1), v1, ParameterPoint(eps=0.0))
    crossings = models.nf_levelset(g, u, v1)
    assert len(crossings) == 2
    assert abs(crossings[0] + crossings[1]) < g.dx  # symmetric about the bump centre


def test_dde_grid_rejected():
    mp = models.preset("dde")
    bad = models.ModelPreset("dde", models.preset("fhn").grid, mp.params)
    with pytest.raises(ConfigurationError):
        models.build_model(bad)


def test_reference_states_are_equilibria(all_models):
    for name, system in all_models.items():
        du, _ = eval_rhs(system, system.reference, ParameterPoint(eps=0.0))
        assert np.max(np.abs(du)) <= 1e-10, name

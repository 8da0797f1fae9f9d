# The five example systems as SlowFastSystem instances with registered
# reference equilibria and figure parameter sets.
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.special import expit

from . import discretize as dz
from .core import DelaySpec, ParameterPoint, SlowFastSystem, State
from .errors import ConfigurationError, DegenerateProblemError, DomainError
from .discretize import Grid

__all__ = [
    "ModelPreset",
    "preset",
    "build_model",
    "schnakenberg_homogeneous",
    "nf_levelset",
    "MODEL_NAMES",
]

MODEL_NAMES = ("fhn", "neural_field", "nonlocal_rd", "schnakenberg", "dde")

# Parameters from the figure captions of the source experiments.
_FIGURE_DEFAULTS: dict[str, dict[str, float]] = {
    "fhn": {"d1": 0.1, "b": 0.1, "c": 0.05},
    "neural_field": {
        "a": 0.5, "b": 0.0, "c": 0.0,
        "kappa1": 0.5, "kappa2": 1.0, "kappa3": 0.5, "kappa4": 1.0,
        "theta_gain": 50.0,
    },
    "nonlocal_rd": {"h": 3.0, "d": 0.05, "b": 1.0},
    "schnakenberg": {"c": 1.0, "r": 1.0, "h": 1.0, "b": 1.0, "d1": 0.26, "d2": 10.0},
    "dde": {"tau": 4.0, "d": 0.01},
}

# Resolutions and domains are not stated in the captions; these are the
# defaults used by the bundled experiments (Schnakenberg length chosen so a
# handful of Neumann modes straddle the critical Turing wavenumber).
_DEFAULT_GRIDS: dict[str, tuple[str, float, int]] = {
    "fhn": ("periodic", np.pi, 256),
    "neural_field": ("periodic", 100.0, 1024),
    "nonlocal_rd": ("periodic", 5.0, 256),
    "schnakenberg": ("neumann", 10.0, 128),
}


@dataclass(frozen=True)
class ModelPreset:
    name: str
    grid: Grid | None
    params: dict[str, float] = field(default_factory=dict)

    def with_params(self, **overrides) -> "ModelPreset":
        merged = dict(self.params)
        merged.update(overrides)
        return replace(self, params=merged)


def preset(name: str, n_points: int | None = None, **param_overrides) -> ModelPreset:
    """Figure-default preset for one of the bundled models."""
    if name not in MODEL_NAMES:
        raise ConfigurationError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    params = dict(_FIGURE_DEFAULTS[name])
    params.update(param_overrides)
    grid = None
    if name in _DEFAULT_GRIDS:
        kind, length, n_default = _DEFAULT_GRIDS[name]
        n = int(n_points or n_default)
        grid = dz.periodic_grid(length, n) if kind == "periodic" else dz.neumann_grid(length, n)
    return ModelPreset(name=name, grid=grid, params=params)


def _require(params: dict[str, float], keys: tuple[str, ...], model: str) -> None:
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigurationError(f"model {model!r} is missing parameter(s): {', '.join(missing)}")


def build_model(model_preset: ModelPreset) -> SlowFastSystem:
    name = model_preset.name
    if name not in MODEL_NAMES:
        raise ConfigurationError(f"unknown model {name!r}")
    if name == "dde":
        if model_preset.grid is not None:
            raise ConfigurationError("the dde model does not take a grid")
        return _build_dde(model_preset)
    if model_preset.grid is None:
        raise ConfigurationError(f"model {name!r} requires a grid")
    builder = {
        "fhn": _build_fhn,
        "neural_field": _build_neural_field,
        "nonlocal_rd": _build_nonlocal_rd,
        "schnakenberg": _build_schnakenberg,
    }[name]
    return builder(model_preset)


# ---------------------------------------------------------------------------
# FitzHugh-Nagumo reaction-diffusion system (periodic domain)

def fhn_hopf_equilibrium(b: float, c: float, branch: int = -1) -> tuple[float, float, float]:
    """Homogeneous state (u1, u2, v) at which the layer problem has its Hopf
    point 1 - u1^2 = b; ``branch`` selects the sign of u1."""
    if not 0.0 < b < 1.0:
        raise DomainError(f"Hopf equilibrium requires b in (0,1), got {b}")
    u1 = branch * np.sqrt(1.0 - b)
    u2 = (u1 + c) / b
    v = -u1 + u1 ** 3 / 3.0 + u2
    return float(u1), float(u2), float(v)


def _build_fhn(mp: ModelPreset) -> SlowFastSystem:
    _require(mp.params, ("d1", "b", "c"), "fhn")
    d1, b, c = mp.params["d1"], mp.params["b"], mp.params["c"]
    grid = mp.grid
    n = grid.n_points

    def rhs_fast(u, v, mu, eps):
        u1, u2 = u[:n], u[n:]
        du1 = d1 * dz.second_derivative(grid, u1) + u1 - u1 ** 3 / 3.0 - u2 + v[0]
        du2 = u1 + c - b * u2
        return np.concatenate([du1, du2])

    def rhs_slow(u, v, mu, eps):
        return np.ones(1)

    D2 = dz.second_derivative_matrix(grid)

    def jac_u(u, v, mu, eps):
        u1 = u[:n]
        J = np.zeros((2 * n, 2 * n))
        J[:n, :n] = d1 * D2 + np.diag(1.0 - u1 ** 2)
        J[:n, n:] = -np.eye(n)
        J[n:, :n] = np.eye(n)
        J[n:, n:] = -b * np.eye(n)
        return J

    def jac_v(u, v, mu, eps):
        col = np.concatenate([np.ones(n), np.zeros(n)])
        return col.reshape(-1, 1)

    def homogeneous_equilibrium(v: float) -> np.ndarray:
        # Eliminating u2 = (u1 + c)/b gives the cubic nullcline relation
        # v = -u1 + u1^3/3 + (u1 + c)/b, monotone in u1 for b < 1.
        roots = np.roots([1.0 / 3.0, 0.0, 1.0 / b - 1.0, c / b - v])
        real = roots[np.abs(roots.imag) < 1e-9].real
        u1 = float(real[np.argmin(np.abs(real))]) if real.size > 1 else float(real[0])
        return np.array([u1, (u1 + c) / b])

    u1s, u2s, vs = fhn_hopf_equilibrium(b, c)
    ref = State(0.0, np.concatenate([np.full(n, u1s), np.full(n, u2s)]), np.array([vs]))
    ref_params = ParameterPoint(eps=0.0)

    info: dict[str, Any] = {
        "name": "fhn", "grid": grid, "q": 2, "params": dict(mp.params),
        "homogeneous_equilibrium": homogeneous_equilibrium,
        "dispersion": {
            "kind": "local",
            "diffusion": np.array([d1, 0.0]),
            "reaction_jac": lambda uc, v: np.array(
                [[1.0 - uc[0] ** 2, -1.0], [1.0, -b]]),
        },
    }
    return SlowFastSystem(
        n_fast=2 * n, m_slow=1, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        linear_part=jac_u(ref.u, ref.v, np.zeros(0), 0.0),
        jac_u=jac_u, jac_v=jac_v,
        reference=ref, reference_params=ref_params, info=info)


# ---------------------------------------------------------------------------
# Nonlocal reaction-diffusion equation (periodic domain)

def _build_nonlocal_rd(mp: ModelPreset) -> SlowFastSystem:
    _require(mp.params, ("h", "d", "b"), "nonlocal_rd")
    h, d, b = mp.params["h"], mp.params["d"], mp.params["b"]
    grid = mp.grid
    kernel = dz.box_kernel_samples(grid, h)
    W = dz.convolution_matrix(grid, kernel)
    spectrum = dz.kernel_fourier_coeffs(grid, kernel)

    def rhs_fast(u, v, mu, eps):
        return (d * dz.second_derivative(grid, u) + (v[0] - b) * u
                - u * dz.circular_convolution(grid, kernel, u))

    def rhs_slow(u, v, mu, eps):
        return np.ones(1)

    D2 = dz.second_derivative_matrix(grid)

    def jac_u(u, v, mu, eps):
        conv = dz.circular_convolution(grid, kernel, u)
        return d * D2 + (v[0] - b) * np.eye(grid.n_points) - np.diag(conv) - u[:, None] * W

    def jac_v(u, v, mu, eps):
        return u.reshape(-1, 1)

    v_ref = 1.5
    ref = State(0.0, np.full(grid.n_points, v_ref - b), np.array([v_ref]))
    info: dict[str, Any] = {
        "name": "nonlocal_rd", "grid": grid, "q": 1, "params": dict(mp.params),
        "homogeneous_equilibrium": lambda v: np.array([v - b]),
        "dispersion": {
            "kind": "nonlocal",
            "d": d,
            "kernel_spectrum": spectrum,
            "shift": b,
        },
    }
    return SlowFastSystem(
        n_fast=grid.n_points, m_slow=1, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        linear_part=jac_u(ref.u, ref.v, np.zeros(0), 0.0),
        jac_u=jac_u, jac_v=jac_v,
        reference=ref, reference_params=ParameterPoint(eps=0.0), info=info)


# ---------------------------------------------------------------------------
# Schnakenberg system (Neumann domain)

def schnakenberg_homogeneous(params: dict[str, float], v: float) -> tuple[float, float]:
    """Closed-form homogeneous equilibrium: summing the two reaction equations
    eliminates everything but -r*u1 + b, so u1 = b/r and u2 follows from the
    first equation."""
    for key in ("b", "c", "r", "h"):
        if key not in params:
            raise ConfigurationError(f"schnakenberg parameters missing {key!r}")
    b, c, r, h = params["b"], params["c"], params["r"], params["h"]
    if r == 0.0:
        raise DegenerateProblemError("schnakenberg homogeneous state requires r != 0")
    u1 = b / r
    denom = v * u1 ** 2 + h
    if denom <= 0.0:
        raise DomainError(f"v*u1^2 + h = {denom} must be positive")
    u2 = (c + r) * u1 / denom
    return u1, u2


def _build_schnakenberg(mp: ModelPreset) -> SlowFastSystem:
    _require(mp.params, ("c", "r", "h", "b", "d1", "d2"), "schnakenberg")
    c, r, h, b = mp.params["c"], mp.params["r"], mp.params["h"], mp.params["b"]
    d1, d2 = mp.params["d1"], mp.params["d2"]
    grid = mp.grid
    n = grid.n_points

    def rhs_fast(u, v, mu, eps):
        u1, u2 = u[:n], u[n:]
        react = v[0] * u1 ** 2 * u2
        du1 = d1 * dz.second_derivative(grid, u1) + react - (c + r) * u1 + h * u2
        du2 = d2 * dz.second_derivative(grid, u2) - react + c * u1 - h * u2 + b
        return np.concatenate([du1, du2])

    def rhs_slow(u, v, mu, eps):
        return np.ones(1)

    D2 = dz.second_derivative_matrix(grid)

    def jac_u(u, v, mu, eps):
        u1, u2 = u[:n], u[n:]
        J = np.zeros((2 * n, 2 * n))
        J[:n, :n] = d1 * D2 + np.diag(2.0 * v[0] * u1 * u2 - (c + r))
        J[:n, n:] = np.diag(v[0] * u1 ** 2 + h)
        J[n:, :n] = np.diag(-2.0 * v[0] * u1 * u2 + c)
        J[n:, n:] = d2 * D2 + np.diag(-v[0] * u1 ** 2 - h)
        return J

    def jac_v(u, v, mu, eps):
        u1, u2 = u[:n], u[n:]
        react = u1 ** 2 * u2
        return np.concatenate([react, -react]).reshape(-1, 1)

    def reaction_jac(uc, v):
        u1, u2 = uc
        return np.array([
            [2.0 * v * u1 * u2 - (c + r), v * u1 ** 2 + h],
            [-2.0 * v * u1 * u2 + c, -v * u1 ** 2 - h],
        ])

    v_ref = 2.0
    u1s, u2s = schnakenberg_homogeneous(mp.params, v_ref)
    ref = State(0.0, np.concatenate([np.full(n, u1s), np.full(n, u2s)]), np.array([v_ref]))
    info: dict[str, Any] = {
        "name": "schnakenberg", "grid": grid, "q": 2, "params": dict(mp.params),
        "homogeneous_equilibrium": lambda v: np.array(schnakenberg_homogeneous(mp.params, v)),
        "dispersion": {
            "kind": "local",
            "diffusion": np.array([d1, d2]),
            "reaction_jac": reaction_jac,
        },
    }
    return SlowFastSystem(
        n_fast=2 * n, m_slow=1, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        linear_part=jac_u(ref.u, ref.v, np.zeros(0), 0.0),
        jac_u=jac_u, jac_v=jac_v,
        reference=ref, reference_params=ParameterPoint(eps=0.0), info=info)


# ---------------------------------------------------------------------------
# Neural field on a ring

def nf_levelset(grid: Grid, u: np.ndarray, v1: float) -> list[float]:
    """x-positions where the linear interpolant of u - v1 between adjacent
    nodes changes sign (secant interpolation; no wraparound crossing)."""
    u = np.asarray(u, dtype=float)
    f = u - v1
    out: list[float] = []
    x = grid.nodes
    for j in range(grid.n_points - 1):
        fj, fk = f[j], f[j + 1]
        if fj == 0.0:
            out.append(float(x[j]))
        elif fj * fk < 0.0:
            out.append(float(x[j] - fj * (x[j + 1] - x[j]) / (fk - fj)))
    if f[-1] == 0.0:
        out.append(float(x[-1]))
    return out


def _build_neural_field(mp: ModelPreset) -> SlowFastSystem:
    _require(mp.params, ("a", "b", "c", "kappa1", "kappa2", "kappa3", "kappa4", "theta_gain"),
             "neural_field")
    p = mp.params
    a, b, c = p["a"], p["b"], p["c"]
    k1, k2, k3, k4 = p["kappa1"], p["kappa2"], p["kappa3"], p["kappa4"]
    gain = p["theta_gain"]
    grid = mp.grid
    n = grid.n_points
    x = grid.nodes
    dxw = grid.dx

    # w(x, y) = k1 exp(-|x-y|) (k2 + k3 cos(y/k4)), |.| the ring geodesic.
    dist = dz.geodesic_distance(grid, x[:, None], x[None, :])
    W = k1 * np.exp(-dist) * (k2 + k3 * np.cos(x[None, :] / k4)) * dxw

    def theta(u, thr):
        return expit(gain * (u - thr))

    def theta_du(u, thr):
        t = theta(u, thr)
        return gain * t * (1.0 - t)

    def Q(u, v1):
        return float(np.sum(theta(u, v1)) * dxw)

    def rhs_fast(u, v, mu, eps):
        return -u + W @ theta(u, v[0])

    def rhs_slow(u, v, mu, eps):
        q = Q(u, v[0])
        return np.array([v[1] + c * q, -v[0] + a + b * q])

    def jac_u(u, v, mu, eps):
        return -np.eye(n) + W * theta_du(u, v[0])[None, :]

    def jac_v(u, v, mu, eps):
        col = -(W @ theta_du(u, v[0]))
        out = np.zeros((n, 2))
        out[:, 0] = col
        return out

    def _steady_from(u0: np.ndarray, v1: float) -> np.ndarray:
        u = u0
        for _ in range(50):  # Picard pre-solve
            u_new = W @ theta(u, v1)
            if np.max(np.abs(u_new - u)) < 1e-13:
                u = u_new
                break
            u = u_new
        for _ in range(20):  # Newton polish
            F = -u + W @ theta(u, v1)
            if np.max(np.abs(F)) < 1e-12:
                break
            u = u + np.linalg.solve(np.eye(n) - W * theta_du(u, v1)[None, :], F)
        return u

    def down_state(v1: float) -> np.ndarray:
        return _steady_from(np.zeros(n), v1)

    def up_state(v1: float) -> np.ndarray:
        return _steady_from(np.full(n, 3.0), v1)

    def bump_seed(v1: float, width: float = 6.0, height: float = 1.0,
                  center: float = 0.0) -> np.ndarray:
        # Narrow seed: for wide bumps the two interfaces decouple to within
        # exp(-width) and the fold eigenvalue degenerates into an even/odd
        # near-double, outside the simple-fold machinery.
        d = dz.geodesic_distance(grid, x, center)
        return height * np.exp(-(d / (width / 2.0)) ** 2)

    v1_ref = 0.5
    u_ref = down_state(v1_ref)
    v2_ref = -c * Q(u_ref, v1_ref)
    ref = State(0.0, u_ref, np.array([v1_ref, v2_ref]))

    def leading_eigs(system, u, v_scalar, count=2):
        from .spectra import nf_leading_eigenvalues
        return nf_leading_eigenvalues(system, u, v_scalar, count=count)

    info: dict[str, Any] = {
        "name": "neural_field", "grid": grid, "q": 1, "params": dict(mp.params),
        "W": W, "theta": theta, "theta_du": theta_du, "Q": Q,
        "down_state": down_state, "up_state": up_state, "bump_seed": bump_seed,
        "leading_eigs": leading_eigs,
    }
    return SlowFastSystem(
        n_fast=n, m_slow=2, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        linear_part=jac_u(u_ref, ref.v, np.zeros(0), 0.0),
        jac_u=jac_u, jac_v=jac_v,
        reference=ref, reference_params=ParameterPoint(eps=0.0), info=info)


# ---------------------------------------------------------------------------
# Delay-differential equation

def _build_dde(mp: ModelPreset) -> SlowFastSystem:
    _require(mp.params, ("tau", "d"), "dde")
    tau, d = mp.params["tau"], mp.params["d"]
    K = int(mp.params.get("history_len", 128))
    spec = DelaySpec(tau=tau, history_len=K)
    delta = tau / K

    # Extended fast state [x, h_0 .. h_{K-1}]: x the current value, h_j a
    # sample of u(t - tau + j*delta).  The buffer obeys upwind transport so
    # the uniform system interface (and its Jacobian) is meaningful.
    nf = 1 + K

    def rhs_delay(uu, ulag, v, mu, eps):
        return v[0] * uu - uu ** 3 - ulag + d

    def rhs_fast(z, v, mu, eps):
        xx, hist = z[0], z[1:]
        out = np.empty(nf)
        out[0] = rhs_delay(xx, hist[0], v, mu, eps)
        out[1:K] = (hist[1:] - hist[:-1]) / delta
        out[K] = (xx - hist[-1]) / delta
        return out

    def rhs_slow(z, v, mu, eps):
        return np.ones(1)

    def jac_u(z, v, mu, eps):
        J = np.zeros((nf, nf))
        J[0, 0] = v[0] - 3.0 * z[0] ** 2
        J[0, 1] = -1.0
        for j in range(1, K):
            J[j, j] = -1.0 / delta
            J[j, j + 1] = 1.0 / delta
        J[K, K] = -1.0 / delta
        J[K, 0] = 1.0 / delta
        return J

    def jac_v(z, v, mu, eps):
        col = np.zeros(nf)
        col[0] = z[0]
        return col.reshape(-1, 1)

    def layer_equilibrium(v: float) -> float:
        # v*u - u^3 - u + d = 0; pick the real root closest to 0 (the branch
        # tracked by the slow drift for small d).
        roots = np.roots([-1.0, 0.0, v - 1.0, d])
        real = roots[np.abs(roots.imag) < 1e-9].real
        return float(real[np.argmin(np.abs(real))])

    # Scalar layer problem for continuation: equilibria satisfy
    # F(u, v) = v*u - u^3 - u + d = 0 (delayed value equals u at steady state).
    # Stability along the branch comes from the characteristic roots of the
    # linearized DDE x' = (v - 3u^2) x - x(t - tau), not from the 1x1 Jacobian.
    def layer_leading_eigs(system, u, v_scalar, count=2):
        from .spectra import dde_leading_roots
        u_val = float(np.atleast_1d(u)[0])
        return dde_leading_roots(v_scalar - 3.0 * u_val ** 2, tau, count=count)

    layer = SlowFastSystem(
        n_fast=1, m_slow=1, p_params=0,
        rhs_fast=lambda u, v, mu, eps: np.array([v[0] * u[0] - u[0] ** 3 - u[0] + d]),
        rhs_slow=lambda u, v, mu, eps: np.ones(1),
        jac_u=lambda u, v, mu, eps: np.array([[v[0] - 3.0 * u[0] ** 2 - 1.0]]),
        jac_v=lambda u, v, mu, eps: np.array([[u[0]]]),
        info={"name": "dde_layer", "q": 1, "leading_eigs": layer_leading_eigs},
    )

    v_ref = -1.0
    u_star = layer_equilibrium(v_ref)
    ref = State(0.0, np.full(nf, u_star), np.array([v_ref]))
    info: dict[str, Any] = {
        "name": "dde", "q": 1, "params": dict(mp.params),
        "layer_system": layer,
        "layer_equilibrium": layer_equilibrium,
        "effective_v": lambda u, v: v - 3.0 * u ** 2,  # linearized drift seen by the delay term
    }
    return SlowFastSystem(
        n_fast=nf, m_slow=1, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        linear_part=jac_u(ref.u, ref.v, np.zeros(0), 0.0),
        jac_u=jac_u, jac_v=jac_v,
        delay_spec=spec, rhs_delay=rhs_delay,
        reference=ref, reference_params=ParameterPoint(eps=0.0), info=info)

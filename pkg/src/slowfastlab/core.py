# Abstract slow-fast system interface and generic evaluation/differentiation.
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import (
    ContractViolationError,
    NumericalOverflowError,
    UnsupportedOperationError,
)

__all__ = [
    "DelaySpec",
    "State",
    "ParameterPoint",
    "SlowFastSystem",
    "eval_rhs",
    "jacobian_u",
    "jacobian_v",
]

RhsFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]
JacFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def _as_vector(x, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or arr.size != n:
        raise ContractViolationError(f"{name} must be a vector of length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DelaySpec:
    """Single discrete delay of a DDE model; the fast state carries a sampled
    history buffer of ``history_len`` points so the uniform system interface holds."""

    tau: float
    history_len: int = 128

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractViolationError(f"delay tau must be positive, got {self.tau}")
        if self.history_len < 4:
            raise ContractViolationError("history_len must be at least 4")


@dataclass(frozen=True)
class State:
    """Snapshot (t, u, v) of a slow-fast system; all entries finite."""

    t: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)) if np.size(self.v) else np.zeros(0))
        if not np.isfinite(self.t):
            raise ContractViolationError("State.t must be finite")
        if not np.all(np.isfinite(self.u)):
            raise ContractViolationError("State.u contains non-finite entries")
        if not np.all(np.isfinite(self.v)):
            raise ContractViolationError("State.v contains non-finite entries")


@dataclass(frozen=True)
class ParameterPoint:
    """Auxiliary parameters mu plus the timescale separation eps >= 0;
    eps = 0 selects the layer problem."""

    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)) if np.size(self.mu) else np.zeros(0))
        if self.eps < 0:
            raise ContractViolationError(f"eps must be >= 0, got {self.eps}")


@dataclass(frozen=True, eq=False)
class SlowFastSystem:
    """A discretized m-slow / n-fast vector field

        du/dt = F(u, v, mu, eps),   dv/dt = eps * G(u, v, mu, eps).

    ``rhs_fast`` is F, ``rhs_slow`` is G (the eps factor is applied by
    :func:`eval_rhs`).  ``linear_part``, when present, is the full linearization
    of F at the registered ``reference`` equilibrium and is what IMEX schemes
    treat implicitly.  Instances are immutable and safe to share.
    """

    n_fast: int
    m_slow: int
    p_params: int
    rhs_fast: RhsFn
    rhs_slow: RhsFn
    linear_part: np.ndarray | None = None
    jac_u: JacFn | None = None
    jac_v: JacFn | None = None
    delay_spec: DelaySpec | None = None
    reference: State | None = None
    reference_params: ParameterPoint | None = None
    # Scalar-form delayed rhs f(u, u_lag, v, mu, eps); DDE models only.
    rhs_delay: Callable[..., np.ndarray] | None = None
    # Model-specific metadata (grid, dispersion data, ...); opaque to this module.
    info: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_fast <= 0:
            raise ContractViolationError("n_fast must be a positive integer")
        if self.m_slow < 0 or self.p_params < 0:
            raise ContractViolationError("m_slow and p_params must be non-negative")
        if self.linear_part is not None:
            L = np.asarray(self.linear_part, dtype=float)
            if L.shape != (self.n_fast, self.n_fast):
                raise ContractViolationError(
                    f"linear_part must be {self.n_fast}x{self.n_fast}, got {L.shape}")
            object.__setattr__(self, "linear_part", L)

    def check_state(self, state: State) -> None:
        if state.u.size != self.n_fast:
            raise ContractViolationError(
                f"state.u has length {state.u.size}, system expects n_fast={self.n_fast}")
        if state.v.size != self.m_slow:
            raise ContractViolationError(
                f"state.v has length {state.v.size}, system expects m_slow={self.m_slow}")

    def check_params(self, params: ParameterPoint) -> None:
        if params.mu.size != self.p_params:
            raise ContractViolationError(
                f"params.mu has length {params.mu.size}, system expects p_params={self.p_params}")


def _check_finite(vec: np.ndarray, which: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(vec)))[0])
        raise NumericalOverflowError(f"non-finite value in {which} at component {bad}")
    return vec


def eval_rhs(system: SlowFastSystem, state: State, params: ParameterPoint) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (du, dv) = (F, eps*G) at a state.  For eps = 0 the slow part is
    identically zero (layer problem)."""
    system.check_state(state)
    system.check_params(params)
    du = _as_vector(system.rhs_fast(state.u, state.v, params.mu, params.eps), system.n_fast, "rhs_fast output")
    _check_finite(du, "du")
    if system.m_slow == 0:
        return du, np.zeros(0)
    if params.eps == 0.0:
        return du, np.zeros(system.m_slow)
    dv = _as_vector(system.rhs_slow(state.u, state.v, params.mu, params.eps), system.m_slow, "rhs_slow output")
    _check_finite(dv, "dv")
    return du, params.eps * dv


def _fd_step(x: np.ndarray) -> float:
    return max(1e-7, 1e-7 * float(np.max(np.abs(x), initial=0.0)))


def jacobian_u(system: SlowFastSystem, state: State, params: ParameterPoint) -> np.ndarray:
    """Jacobian of F with respect to u: analytic when the model provides it,
    otherwise central finite differences with step max(1e-7, 1e-7*||u||_inf)."""
    system.check_state(state)
    system.check_params(params)
    if system.jac_u is not None:
        J = np.asarray(system.jac_u(state.u, state.v, params.mu, params.eps), dtype=float)
        if J.shape != (system.n_fast, system.n_fast):
            raise ContractViolationError(f"jac_u returned shape {J.shape}")
        return _check_finite(J, "jac_u")
    n = system.n_fast
    h = _fd_step(state.u)
    J = np.empty((n, n))
    for j in range(n):
        up = state.u.copy(); up[j] += h
        um = state.u.copy(); um[j] -= h
        fp = system.rhs_fast(up, state.v, params.mu, params.eps)
        fm = system.rhs_fast(um, state.v, params.mu, params.eps)
        J[:, j] = (np.asarray(fp, dtype=float) - np.asarray(fm, dtype=float)) / (2.0 * h)
    return _check_finite(J, "jac_u (finite differences)")


def jacobian_v(system: SlowFastSystem, state: State, params: ParameterPoint) -> np.ndarray:
    """Jacobian of F with respect to the slow variables v (n_fast x m_slow)."""
    system.check_state(state)
    system.check_params(params)
    if system.m_slow == 0:
        raise UnsupportedOperationError("system has no slow variables")
    if system.jac_v is not None:
        J = np.asarray(system.jac_v(state.u, state.v, params.mu, params.eps), dtype=float)
        J = J.reshape(system.n_fast, system.m_slow)
        return _check_finite(J, "jac_v")
    h = _fd_step(state.v)
    J = np.empty((system.n_fast, system.m_slow))
    for j in range(system.m_slow):
        vp = state.v.copy(); vp[j] += h
        vm = state.v.copy(); vm[j] -= h
        fp = system.rhs_fast(state.u, vp, params.mu, params.eps)
        fm = system.rhs_fast(state.u, vm, params.mu, params.eps)
        J[:, j] = (np.asarray(fp, dtype=float) - np.asarray(fm, dtype=float)) / (2.0 * h)
    return _check_finite(J, "jac_v (finite differences)")

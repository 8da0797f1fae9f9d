# Time integration of slow-fast systems: adaptive ERK45, IMEX CN/AB2 for
# stiff discretizations, and method-of-steps for DDEs.
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import ParameterPoint, SlowFastSystem, State
from .errors import (
    ConfigurationError,
    ContractViolationError,
    NumericalOverflowError,
    StiffnessFailureError,
    UnsupportedOperationError,
    ValidationError,
)

__all__ = [
    "IntegratorOptions",
    "Trajectory",
    "integrate",
    "integrate_dde",
    "write_trajectory_csv",
    "write_snapshots",
]

_METHODS = ("erk45_adaptive", "imex_cn_ab2")


@dataclass(frozen=True)
class IntegratorOptions:
    t_end: float
    method: str = "erk45_adaptive"
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_step: float = 0.5
    dt: float | None = None  # fixed step for imex_cn_ab2
    dense_every: int = 1

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        for name, tol in (("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)):
            if not 1e-14 <= tol <= 1e-2:
                raise ConfigurationError(f"{name} must lie in [1e-14, 1e-2], got {tol}")
        if self.max_step <= 0:
            raise ConfigurationError("max_step must be positive")
        if self.dense_every < 1:
            raise ConfigurationError("dense_every must be >= 1")


@dataclass
class Trajectory:
    """Time series of (u, v) snapshots with strictly increasing times."""

    times: np.ndarray
    us: np.ndarray  # shape (n_snapshots, n_fast)
    vs: np.ndarray  # shape (n_snapshots, m_slow)
    dense_every: int = 1
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.us = np.atleast_2d(np.asarray(self.us, dtype=float))
        self.vs = np.asarray(self.vs, dtype=float).reshape(len(self.times), -1)
        if np.any(np.diff(self.times) <= 0):
            raise ContractViolationError("trajectory times must be strictly increasing")

    @property
    def n_fast(self) -> int:
        return self.us.shape[1]

    def u_norms(self) -> np.ndarray:
        # Grid-independent 2-norm: ||u||_2 / sqrt(n).
        return np.linalg.norm(self.us, axis=1) / np.sqrt(self.us.shape[1])

    def final_state(self) -> State:
        return State(float(self.times[-1]), self.us[-1], self.vs[-1])


class _Recorder:
    def __init__(self, dense_every: int):
        self.every = dense_every
        self.times: list[float] = []
        self.us: list[np.ndarray] = []
        self.vs: list[np.ndarray] = []
        self._count = 0

    def push(self, t: float, u: np.ndarray, v: np.ndarray, force: bool = False):
        if force or self._count % self.every == 0:
            if self.times and t <= self.times[-1]:
                pass  # same accepted point recorded twice (e.g. final step)
            else:
                self.times.append(float(t))
                self.us.append(np.array(u))
                self.vs.append(np.array(v))
        self._count += 1

    def to_trajectory(self, dense_every: int) -> Trajectory:
        return Trajectory(np.array(self.times), np.array(self.us), np.array(self.vs),
                          dense_every=dense_every)


def _split(y: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return y[:n], y[n:]


def _mixed_error_norm(err: np.ndarray, y: np.ndarray, abs_tol: float, rel_tol: float) -> float:
    rms = lambda x: float(np.sqrt(np.mean(x * x))) if x.size else 0.0
    return rms(err) / (abs_tol + rel_tol * rms(y))


# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _erk45(f: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: np.ndarray,
           t_end: float, opts: IntegratorOptions, recorder: _Recorder | None,
           split_at: int) -> tuple[float, np.ndarray]:
    """Advance y' = f(t, y) from t0 to t_end with the embedded 4(5) pair and
    PI step control on err = ||e|| / (abs_tol + rel_tol ||y||)."""
    t, y = t0, np.array(y0, dtype=float)
    if recorder is not None:
        recorder.push(t, *_split(y, split_at), force=True)
    k1 = f(t, y)
    d0 = np.sqrt(np.mean(y * y)) + 1e-12
    d1 = np.sqrt(np.mean(k1 * k1)) + 1e-12
    dt = min(opts.max_step, max(1e-8, 0.01 * d0 / d1), abs(t_end - t0))
    err_prev = 1.0
    ks = [None] * 7
    ks[0] = k1
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        dt = min(dt, t_end - t)
        if dt < 1e-14:
            raise StiffnessFailureError(
                f"step size underflow at t={t:.6g} (|y|_max={np.max(np.abs(y)):.3e})")
        for i in range(1, 7):
            yi = y + dt * sum(a * ks[j] for j, a in enumerate(_DP_A[i]))
            ks[i] = f(t + _DP_C[i] * dt, yi)
        y5 = y + dt * sum(b * ks[i] for i, b in enumerate(_DP_B5) if b)
        y4 = y + dt * sum(b * ks[i] for i, b in enumerate(_DP_B4) if b)
        if not np.all(np.isfinite(y5)):
            raise NumericalOverflowError(f"non-finite state during step at t={t:.6g}")
        err = _mixed_error_norm(y5 - y4, y, opts.abs_tol, opts.rel_tol)
        if err <= 1.0:
            t = t + dt
            y = y5
            ks[0] = ks[6] if _DP_C[6] == 1.0 else f(t, y)  # FSAL
            if recorder is not None:
                recorder.push(t, *_split(y, split_at))
            factor = 0.9 * (err + 1e-16) ** -0.17 * err_prev ** 0.04
            err_prev = max(err, 1e-16)
            dt = min(opts.max_step, dt * min(5.0, max(0.2, factor)))
        else:
            dt = dt * max(0.2, 0.9 * err ** -0.2)
    if recorder is not None:
        recorder.push(t, *_split(y, split_at), force=True)
    return t, y


def integrate(system: SlowFastSystem, state0: State, params: ParameterPoint,
              opts: IntegratorOptions) -> Trajectory:
    """Integrate the full slow-fast system from ``state0`` to ``opts.t_end``."""
    if system.delay_spec is not None:
        raise UnsupportedOperationError("system has a delay; use integrate_dde")
    system.check_state(state0)
    system.check_params(params)
    n, m = system.n_fast, system.m_slow
    eps, mu = params.eps, params.mu

    def f(t: float, y: np.ndarray) -> np.ndarray:
        u, v = y[:n], y[n:]
        du = system.rhs_fast(u, v, mu, eps)
        if m == 0 or eps == 0.0:
            dv = np.zeros(m)
        else:
            dv = eps * np.asarray(system.rhs_slow(u, v, mu, eps), dtype=float)
        return np.concatenate([np.asarray(du, dtype=float), dv])

    y0 = np.concatenate([state0.u, state0.v])
    rec = _Recorder(opts.dense_every)
    if opts.method == "erk45_adaptive":
        _erk45(f, state0.t, y0, opts.t_end, opts, rec, n)
    else:
        _imex_cn_ab2(system, f, state0.t, y0, opts, rec)
    return rec.to_trajectory(opts.dense_every)


def _imex_cn_ab2(system: SlowFastSystem, f: Callable, t0: float, y0: np.ndarray,
                 opts: IntegratorOptions, rec: _Recorder) -> None:
    """Crank-Nicolson on the registered linear part, 2nd-order Adams-Bashforth
    on the remainder; fixed step (one CN/Euler startup step)."""
    if system.linear_part is None:
        raise ConfigurationError("imex_cn_ab2 requires the system's linear_part")
    n, m = system.n_fast, system.m_slow
    span = opts.t_end - t0
    dt_req = opts.dt if opts.dt is not None else opts.max_step
    n_steps = max(1, int(np.ceil(span / dt_req)))
    dt = span / n_steps
    L = np.zeros((n + m, n + m))
    L[:n, :n] = system.linear_part
    M_minus = lu_factor(np.eye(n + m) - 0.5 * dt * L)
    M_plus = np.eye(n + m) + 0.5 * dt * L

    t, y = t0, np.array(y0, dtype=float)
    rec.push(t, *_split(y, n), force=True)
    N_prev = f(t, y) - L @ y
    # startup: CN on L, explicit Euler on the remainder
    y = lu_solve(M_minus, M_plus @ y + dt * N_prev)
    t = t0 + dt
    if not np.all(np.isfinite(y)):
        raise NumericalOverflowError(f"non-finite state at t={t:.6g} (imex startup)")
    rec.push(t, *_split(y, n), force=(n_steps == 1))
    for k in range(1, n_steps):
        N_cur = f(t, y) - L @ y
        y = lu_solve(M_minus, M_plus @ y + dt * (1.5 * N_cur - 0.5 * N_prev))
        N_prev = N_cur
        t = t0 + (k + 1) * dt
        if not np.all(np.isfinite(y)):
            raise NumericalOverflowError(f"non-finite state at t={t:.6g} (imex)")
        rec.push(t, *_split(y, n), force=(k == n_steps - 1))


def integrate_dde(system: SlowFastSystem, history: Callable[[float], float],
                  v0, params: ParameterPoint, opts: IntegratorOptions) -> Trajectory:
    """Method of steps for a scalar DDE with one delay.

    The delayed value is read from a uniformly sampled history buffer
    (spacing tau / history_len) by cubic Lagrange interpolation; each
    buffer interval is traversed with the adaptive ERK45 pair.  The horizon
    is rounded up to a whole number of buffer intervals.
    """
    if system.delay_spec is None:
        raise UnsupportedOperationError("system carries no delay; use integrate")
    if system.rhs_delay is None:
        raise ConfigurationError("DDE system must provide rhs_delay")
    spec = system.delay_spec
    tau, K = spec.tau, spec.history_len
    delta = tau / K
    mu, eps = params.mu, params.eps
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if v0.size != system.m_slow:
        raise ContractViolationError(f"v0 must have length {system.m_slow}")

    samples = [float(history((j - K) * delta)) for j in range(K + 1)]
    if not np.all(np.isfinite(samples)):
        raise ValidationError("history function returned non-finite values")

    def lag_value(t: float) -> float:
        p = (t - tau) / delta + K
        j = int(np.floor(p))
        # never interpolate across the derivative kink at t = 0 (sample K)
        j = min(j, K - 2) if p <= K else max(j, K + 1)
        j = max(1, min(j, len(samples) - 3))
        theta = p - j
        s0, s1, s2, s3 = samples[j - 1], samples[j], samples[j + 1], samples[j + 2]
        # 4-point Lagrange basis at offsets -1, 0, 1, 2
        return float(
            s0 * (-theta * (theta - 1.0) * (theta - 2.0) / 6.0)
            + s1 * ((theta + 1.0) * (theta - 1.0) * (theta - 2.0) / 2.0)
            + s2 * (-(theta + 1.0) * theta * (theta - 2.0) / 2.0)
            + s3 * ((theta + 1.0) * theta * (theta - 1.0) / 6.0))

    def f(t: float, y: np.ndarray) -> np.ndarray:
        uu, v = y[0], y[1:]
        du = system.rhs_delay(uu, lag_value(t), v, mu, eps)
        dv = eps * np.asarray(system.rhs_slow(np.array([uu]), v, mu, eps), dtype=float) \
            if eps != 0.0 else np.zeros(system.m_slow)
        return np.concatenate([[float(du)], dv])

    n_int = max(1, int(np.ceil((opts.t_end - 1e-12) / delta)))
    y = np.concatenate([[samples[-1]], v0])
    rec = _Recorder(opts.dense_every)
    rec.push(0.0, y[:1], y[1:], force=True)
    t = 0.0
    for k in range(n_int):
        _, y = _erk45(f, t, y, (k + 1) * delta, opts, None, 1)
        t = (k + 1) * delta
        samples.append(float(y[0]))
        rec.push(t, y[:1], y[1:], force=(k == n_int - 1))
    return rec.to_trajectory(opts.dense_every)


# ---------------------------------------------------------------------------
# Serialization

def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    """CSV with header t,v_1..v_m,u_norm2,u_min,u_max."""
    m = traj.vs.shape[1]
    norms = traj.u_norms()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"v_{j + 1}" for j in range(m)] + ["u_norm2", "u_min", "u_max"])
        for i, t in enumerate(traj.times):
            row = [f"{t:.12g}"] + [f"{v:.12g}" for v in traj.vs[i]]
            row += [f"{norms[i]:.12g}", f"{traj.us[i].min():.12g}", f"{traj.us[i].max():.12g}"]
            writer.writerow(row)


def write_snapshots(traj: Trajectory, directory: str, nodes: np.ndarray | None = None,
                    q: int = 1, every: int = 1) -> None:
    """One CSV per snapshot (columns x,u_1..u_q) plus an index.csv of times."""
    os.makedirs(directory, exist_ok=True)
    n_nodes = traj.n_fast // q
    x = np.arange(n_nodes, dtype=float) if nodes is None else np.asarray(nodes, dtype=float)
    index_rows = []
    for i in range(0, len(traj.times), every):
        fname = f"snap_{i:06d}.csv"
        with open(os.path.join(directory, fname), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x"] + [f"u_{c + 1}" for c in range(q)])
            comps = traj.us[i].reshape(q, n_nodes)
            for j in range(n_nodes):
                writer.writerow([f"{x[j]:.12g}"] + [f"{comps[c, j]:.12g}" for c in range(q)])
        index_rows.append((fname, traj.times[i]))
    with open(os.path.join(directory, "index.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "t"])
        for fname, t in index_rows:
            writer.writerow([fname, f"{t:.12g}"])

# Slow-passage experiments: locate layer-bifurcation crossings along slow
# drifts, measure departure delays, validate against the entry-exit relation,
# and orchestrate the bundled figure-matching presets.
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import models
from .continuation import (
    Branch,
    continue_branch,
    detect_bifurcations,
    newton_steady,
    write_branch_csv,
    events_to_json,
)
from .core import ParameterPoint, SlowFastSystem, State
from .errors import NoExitError, PreconditionError, StageError
from .gspt import (
    fold_normalform_coeffs,
    nf_desing_classification,
    nf_lemma_classification,
    nf_reduced_system,
)
from .integrate import (
    IntegratorOptions,
    Trajectory,
    integrate,
    integrate_dde,
    write_snapshots,
    write_trajectory_csv,
)
from .spectra import dde_hopf_locus, dispersion_relation

__all__ = [
    "DelayMeasurement",
    "measure_delay",
    "entry_exit_point",
    "run_preset_experiment",
    "PRESET_NAMES",
    "PresetResult",
]

PRESET_NAMES = (
    "fhn_hopf",
    "dde_hopf",
    "nonlocal_turing",
    "schnakenberg_turing_super",
    "schnakenberg_turing_sub",
    "nf_folded_saddle",
    "nf_folded_node",
)

DEFAULT_DELTA = 1e-2
SEED_AMPLITUDE = 1e-8


@dataclass(frozen=True)
class DelayMeasurement:
    """Slow-variable delay between loss of layer stability (v_cross) and
    departure from the delta-tube around the branch (v_depart).  A negative
    delay flags premature departure; an open measurement (never departs)
    carries delay = +inf."""

    v_cross: float
    v_depart: float
    delay: float
    delta: float
    epsilon: float
    departed: bool = True

    @property
    def premature(self) -> bool:
        return self.departed and self.delay < 0

    def to_dict(self) -> dict:
        return {
            "v_cross": float(self.v_cross),
            "v_depart": None if not self.departed else float(self.v_depart),
            "delay": "inf" if math.isinf(self.delay) else float(self.delay),
            "delta": float(self.delta),
            "epsilon": float(self.epsilon),
            "departed": bool(self.departed),
        }


def _tube_distance(traj: Trajectory, branch: Branch) -> np.ndarray:
    n = traj.n_fast
    out = np.empty(len(traj.times))
    for i in range(len(traj.times)):
        u_ref = branch.sample_u(float(traj.vs[i, 0]))
        out[i] = np.linalg.norm(traj.us[i] - u_ref) / np.sqrt(n)
    return out


def measure_delay(trajectory: Trajectory, branch: Branch, delta: float = DEFAULT_DELTA,
                  v_cross: float | None = None, epsilon: float = float("nan")) -> DelayMeasurement:
    """Measure the slow-variable departure delay of a trajectory relative to
    a continued branch.

    v_cross defaults to the first branch event inside the trajectory's
    v-range (in drift direction); v_depart is located where the normalized
    distance to the branch first exceeds delta, refined by bisection of the
    interpolant between stored snapshots.
    """
    vs = trajectory.vs[:, 0]
    if v_cross is None:
        lo, hi = min(vs[0], vs[-1]), max(vs[0], vs[-1])
        inside = [e for e in branch.events if lo <= e.v_value <= hi]
        if not inside:
            raise PreconditionError("branch carries no bifurcation event in the trajectory range")
        inside.sort(key=lambda e: abs(e.v_value - vs[0]))
        v_cross = float(inside[0].v_value)
    dist = _tube_distance(trajectory, branch)
    if dist[0] > delta:
        raise PreconditionError(
            f"trajectory starts outside the delta-tube (d0={dist[0]:.3e} > {delta:.3e})")
    over = np.flatnonzero(dist > delta)
    if over.size == 0:
        return DelayMeasurement(v_cross, float("nan"), float("inf"), delta, epsilon, departed=False)
    k = int(over[0])
    t_lo, t_hi = trajectory.times[k - 1], trajectory.times[k]
    d_lo, d_hi = dist[k - 1], dist[k]
    # bisection on the linear interpolant between the two stored snapshots
    for _ in range(60):
        t_mid = 0.5 * (t_lo + t_hi)
        w = (t_mid - trajectory.times[k - 1]) / (trajectory.times[k] - trajectory.times[k - 1])
        u_mid = (1 - w) * trajectory.us[k - 1] + w * trajectory.us[k]
        v_mid = (1 - w) * trajectory.vs[k - 1] + w * trajectory.vs[k]
        d_mid = float(np.linalg.norm(u_mid - branch.sample_u(float(v_mid[0]))) / np.sqrt(trajectory.n_fast))
        if d_mid > delta:
            t_hi, d_hi = t_mid, d_mid
        else:
            t_lo, d_lo = t_mid, d_mid
        if t_hi - t_lo < 1e-12 * max(1.0, abs(t_hi)):
            break
    w = (t_hi - trajectory.times[k - 1]) / (trajectory.times[k] - trajectory.times[k - 1])
    v_dep = float(((1 - w) * trajectory.vs[k - 1] + w * trajectory.vs[k])[0])
    return DelayMeasurement(v_cross, v_dep, v_dep - v_cross, delta, epsilon)


def entry_exit_point(re_lambda: Callable[[float], float], v_in: float,
                     v_max: float | None = None, tol: float = 1e-10) -> float:
    """Way-in/way-out point: the v_out > crossing with
    int_{v_in}^{v_out} Re(lambda(s)) ds = 0, by adaptive quadrature plus
    bisection.  Requires Re(lambda(v_in)) < 0 and a single crossing in the
    scan window."""
    if re_lambda(v_in) >= 0:
        raise PreconditionError(f"re_lambda(v_in) = {re_lambda(v_in):.3e} must be negative")
    if v_max is None:
        v_max = v_in + 6.0 * max(1.0, abs(v_in))

    def integral(v: float) -> float:
        val, _ = quad(re_lambda, v_in, v, limit=200)
        return val

    # march until the accumulated integral turns positive
    step = (v_max - v_in) / 256.0
    v_lo = v_in + step
    I_lo = integral(v_lo)
    v_hi = None
    v = v_lo
    while v < v_max:
        v_next = min(v + step, v_max)
        I_next = integral(v_next)
        if I_lo < 0.0 <= I_next or (I_lo <= 0.0 < I_next):
            v_lo, v_hi = v, v_next
            break
        v, I_lo = v_next, I_next
        if v >= v_max:
            break
    if v_hi is None:
        raise NoExitError(f"growth integral never returns to zero on ({v_in:.6g}, {v_max:.6g}]")
    I_lo = integral(v_lo)
    for _ in range(200):
        if v_hi - v_lo <= tol:
            break
        v_mid = 0.5 * (v_lo + v_hi)
        I_mid = integral(v_mid)
        if I_lo < 0.0 <= I_mid:
            v_hi = v_mid
        else:
            v_lo, I_lo = v_mid, I_mid
    return 0.5 * (v_lo + v_hi)


# ---------------------------------------------------------------------------
# Preset experiments

@dataclass
class PresetResult:
    name: str
    system: SlowFastSystem
    branch: Branch | None
    trajectory: Trajectory | None
    delay: DelayMeasurement | None
    report: dict = field(default_factory=dict)


def _stage(stage_name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage_name, str(exc)) from exc


def _seed_state(system: SlowFastSystem, u_eq: np.ndarray, v0: np.ndarray,
                params: ParameterPoint) -> State:
    """Equilibrium plus a 1e-8 unit-norm kick along the critical eigenvector."""
    from .continuation import _default_leading  # local import: same machinery as branch stability
    from .core import jacobian_u
    J = jacobian_u(system, State(0.0, u_eq, v0), ParameterPoint(params.mu, 0.0))
    vals, vecs = np.linalg.eig(J)
    lead = int(np.argmax(vals.real))
    direction = np.real(vecs[:, lead])
    nrm = np.linalg.norm(direction)
    direction = direction / nrm if nrm > 0 else np.zeros_like(u_eq)
    return State(0.0, u_eq + SEED_AMPLITUDE * direction, v0)


def _dominant_mode(grid, u_dev: np.ndarray) -> int:
    """Dominant cosine mode of a single-component field deviation."""
    if grid.kind == "periodic":
        spec = np.abs(np.fft.rfft(u_dev))
        spec[0] = 0.0
        return int(np.argmax(spec))
    # Neumann: project on cos(n pi x / l)
    n = grid.n_points
    amps = []
    for mode in range(0, n // 2):
        phi = np.cos(mode * np.pi * grid.nodes / grid.half_length)
        amps.append(abs(np.dot(u_dev, phi)) / n)
    amps[0] = 0.0
    return int(np.argmax(amps))


def _turing_passage(name: str, model_name: str, n_points: int, v_window: tuple[float, float],
                    v0: float, t_extra: float, eps: float, dt: float,
                    turing_modes, param_overrides: dict) -> PresetResult:
    mp = models.preset(model_name, n_points=n_points, **param_overrides)
    system = _stage("build", models.build_model, mp)
    params = ParameterPoint(eps=0.0)
    info = system.info
    u_comp = info["homogeneous_equilibrium"](v_window[0])
    u_start = np.concatenate([np.full(mp.grid.n_points, comp) for comp in u_comp])

    branch = _stage("continue", continue_branch, system, u_start, v_window, params, 0.02)
    events = _stage("detect", detect_bifurcations, system, branch, params,
                    turing_modes=turing_modes)
    turing = [e for e in events if e.kind == "turing"]
    if not turing:
        raise StageError("detect", f"no Turing event found in {v_window}")
    ev = min(turing, key=lambda e: e.v_value)

    run = ParameterPoint(eps=eps)
    v_end = ev.v_value + t_extra
    u_comp0 = info["homogeneous_equilibrium"](v0)
    u_eq0 = np.concatenate([np.full(mp.grid.n_points, cmp) for cmp in u_comp0])
    state0 = _seed_state(system, u_eq0, np.array([v0]), run)
    opts = IntegratorOptions(t_end=(v_end - v0) / eps, method="imex_cn_ab2", dt=dt,
                             dense_every=10)
    traj = _stage("integrate", integrate, system, state0, run, opts)
    delay = _stage("measure", measure_delay, traj, branch, DEFAULT_DELTA,
                   v_cross=ev.v_value, epsilon=eps)

    # dominant spatial mode of the departed state (first component)
    q = info["q"]
    n_nodes = mp.grid.n_points
    u_final = traj.us[-1][:n_nodes]
    mode = _dominant_mode(mp.grid, u_final - np.mean(u_final))
    report = {
        "preset": name,
        "turing_v": float(ev.v_value),
        "mode": int(ev.mode_number),
        "departed_dominant_mode": int(mode),
        "delay": delay.to_dict(),
        "epsilon": eps,
        "n_points": n_points,
        "criteria": [2] if model_name == "nonlocal_rd" else [6],
    }
    return PresetResult(name, system, branch, traj, delay, report)


def _run_nonlocal_turing(n_points: int | None = None) -> PresetResult:
    return _turing_passage(
        "nonlocal_turing", "nonlocal_rd", n_points or 256,
        v_window=(1.30, 1.85), v0=1.45, t_extra=0.32, eps=1e-4, dt=0.05,
        turing_modes=range(0, 9), param_overrides={})


def _run_schnakenberg(name: str, d1: float, n_points: int | None = None) -> PresetResult:
    return _turing_passage(
        name, "schnakenberg", n_points or 128,
        v_window=(1.45, 2.45), v0=1.85, t_extra=0.48, eps=1e-3, dt=0.02,
        turing_modes=range(0, 10), param_overrides={"d1": d1})


def _run_fhn_hopf(n_points: int | None = None) -> PresetResult:
    mp = models.preset("fhn", n_points=n_points or 128)
    system = _stage("build", models.build_model, mp)
    params = ParameterPoint(eps=0.0)
    b, c = mp.params["b"], mp.params["c"]
    _, _, v_hopf = models.fhn_hopf_equilibrium(b, c)
    v_window = (v_hopf - 1.0, v_hopf + 1.0)
    u_comp = system.info["homogeneous_equilibrium"](v_window[0])
    n_nodes = mp.grid.n_points
    u_start = np.concatenate([np.full(n_nodes, comp) for comp in u_comp])
    branch = _stage("continue", continue_branch, system, u_start, v_window, params, 0.02)
    events = _stage("detect", detect_bifurcations, system, branch, params)
    hopf = [e for e in events if e.kind == "hopf"]
    if not hopf:
        raise StageError("detect", "no Hopf event on the FHN homogeneous branch")
    ev = min(hopf, key=lambda e: abs(e.v_value - v_hopf))

    eps = 5e-3
    v0 = ev.v_value - 0.6
    u_comp0 = system.info["homogeneous_equilibrium"](v0)
    u_eq0 = np.concatenate([np.full(n_nodes, cmp) for cmp in u_comp0])
    run = ParameterPoint(eps=eps)
    state0 = _seed_state(system, u_eq0, np.array([v0]), run)
    opts = IntegratorOptions(t_end=(ev.v_value + 0.9 - v0) / eps, method="imex_cn_ab2",
                             dt=0.02, dense_every=10)
    traj = _stage("integrate", integrate, system, state0, run, opts)
    delay = _stage("measure", measure_delay, traj, branch, DEFAULT_DELTA,
                   v_cross=ev.v_value, epsilon=eps)
    report = {
        "preset": "fhn_hopf",
        "hopf_v": float(ev.v_value),
        "hopf_v_closed_form": float(v_hopf),
        "delay": delay.to_dict(),
        "epsilon": eps,
        "n_points": n_nodes,
        "criteria": [],
    }
    return PresetResult("fhn_hopf", system, branch, traj, delay, report)


def _run_dde_hopf(n_points: int | None = None) -> PresetResult:
    mp = models.preset("dde")
    system = _stage("build", models.build_model, mp)
    tau = mp.params["tau"]
    layer = system.info["layer_system"]
    params = ParameterPoint(eps=0.0)
    locus = _stage("locus", dde_hopf_locus, tau)
    v_hopf_locus = min(locus)

    v_window = (-1.2, 0.45)
    u0 = np.array([system.info["layer_equilibrium"](v_window[0])])
    branch = _stage("continue", continue_branch, layer, u0, v_window, params, 0.01)
    events = _stage("detect", detect_bifurcations, layer, branch, params)
    hopf = [e for e in events if e.kind == "hopf"]
    if not hopf:
        raise StageError("detect", "no Hopf event on the DDE branch")
    ev = hopf[0]

    eps = 0.01
    v0 = -1.2
    u_star = system.info["layer_equilibrium"](v0)
    run = ParameterPoint(eps=eps)
    opts = IntegratorOptions(t_end=(0.3 - v0) / eps, dense_every=4)
    traj = _stage("integrate", integrate_dde, system,
                  lambda t: u_star + SEED_AMPLITUDE, np.array([v0]), run, opts)
    delay = _stage("measure", measure_delay, traj, branch, DEFAULT_DELTA,
                   v_cross=ev.v_value, epsilon=eps)
    report = {
        "preset": "dde_hopf",
        "hopf_locus_v": float(v_hopf_locus),
        "hopf_event_v": float(ev.v_value),
        "paper_reference_v": -0.75,
        "locus_vs_paper_discrepancy": float(abs(v_hopf_locus - (-0.75))),
        "delay": delay.to_dict(),
        "epsilon": eps,
        "tau": tau,
        "criteria": [3],
    }
    return PresetResult("dde_hopf", system, branch, traj, delay, report)


def nf_fold_analysis(system: SlowFastSystem, which: str = "lower",
                     v1_seed: float = 0.45, v_window: tuple[float, float] = (0.02, 0.98),
                     max_points: int = 60):
    """Trace the S of the neural-field layer problem and run the normal-form
    pipeline at the selected fold ('lower' = smallest threshold value, where
    the small bump annihilates with the rest state; 'upper' = largest, where
    the active state folds back).

    The middle sheet is traversed only briefly: with a steep firing rate the
    interfaces pin to the grid and the middle sheet micro-snakes, so the S is
    assembled from a bump/rest sweep and an active-state sweep instead of one
    pass through the snake.
    """
    params = ParameterPoint(eps=0.0)
    kappa4 = system.info["params"]["kappa4"]
    # Segment 1: the rest-state sheet reaches the lower fold without
    # interface pinning.  Segment 2: a bump centred on a modulation minimum
    # folds at the v-maximum edge of the pinning region (the site-centred
    # states fold there in reflection-degenerate pairs, invisible to the
    # simple-fold machinery).  Segment 3: the active sheet.
    u_rest = newton_steady(system, system.info["down_state"](v1_seed), v1_seed, params)
    rest_seg = continue_branch(system, u_rest, v_window, params,
                               ds=0.05, ds_max=0.25, max_points=max_points,
                               v_start=v1_seed, direction=-1.0)
    v1_offsite = 0.50
    u_offsite = newton_steady(system, system.info["bump_seed"](v1_offsite, center=np.pi * kappa4),
                              v1_offsite, params)
    bump_seg = continue_branch(system, u_offsite, v_window, params,
                               ds=0.05, ds_max=0.25, max_points=max_points,
                               v_start=v1_offsite, direction=+1.0)
    u_up = system.info["up_state"](v1_seed)
    up_seg = continue_branch(system, u_up, v_window, params,
                             ds=0.05, ds_max=0.25, max_points=max_points,
                             v_start=v1_seed, direction=+1.0)
    folds: list = []
    for seg in (rest_seg, bump_seg, up_seg):
        folds.extend(e for e in detect_bifurcations(system, seg, params) if e.kind == "fold")
    if len(folds) < 2:
        raise StageError("detect", f"expected >= 2 folds on the S, found {len(folds)}")
    # merged S for reporting: rest sheet (reversed), bump states, active sheet
    merged = Branch(points=(list(rest_seg.points[::-1]) + list(bump_seg.points)
                            + list(up_seg.points)))
    merged.events.extend(sorted(folds, key=lambda e: e.v_value))
    s_acc = 0.0
    pts = []
    from .continuation import BranchPoint
    prev = None
    for p in merged.points:
        if prev is not None:
            s_acc += float(np.sqrt(np.sum((p.u - prev.u) ** 2) / p.u.size
                                   + (p.v - prev.v) ** 2))
        pts.append(BranchPoint(s_acc, p.u, p.v, p.stability, p.leading))
        prev = p
    merged.points = pts

    if which == "lower":
        pool = [e for e in folds if e.orientation == "min"] or folds
        fold_ev = min(pool, key=lambda e: e.v_value)
    else:
        pool = [e for e in folds if e.orientation == "max"] or folds
        fold_ev = max(pool, key=lambda e: e.v_value)
    fold_state = State(0.0, fold_ev.u_value, np.array([fold_ev.v_value, 0.0]))
    coeffs = fold_normalform_coeffs(system, fold_state, params)
    red = nf_reduced_system(system, fold_state, params, coeffs)
    cls_lemma = nf_lemma_classification(red)
    cls_desing = nf_desing_classification(red)
    return merged, folds, fold_ev, coeffs, red, cls_lemma, cls_desing


def _run_nf(name: str, n_points: int | None = None) -> PresetResult:
    a, b_, c_ = (0.5, 0.0, 0.0) if name == "nf_folded_saddle" else (1.0, 0.0, 1.0)
    which = "lower" if name == "nf_folded_saddle" else "upper"
    mp = models.preset("neural_field", n_points=n_points or 512, a=a, b=b_, c=c_)
    system = _stage("build", models.build_model, mp)
    branch, folds, fold_ev, coeffs, red, cls_lemma, cls_desing = _stage(
        "gspt", nf_fold_analysis, system, which)

    # short full-model run near the fold for the overlay figure
    params = ParameterPoint(eps=0.02)
    v0 = np.array([fold_ev.v_value, red.xi])
    state0 = State(0.0, fold_ev.u_value, v0)
    opts = IntegratorOptions(t_end=40.0, method="imex_cn_ab2", dt=0.05, dense_every=5)
    traj = _stage("integrate", integrate, system, state0, params, opts)
    levels = models.nf_levelset(mp.grid, traj.us[-1], float(traj.vs[-1][0]))

    report = {
        "preset": name,
        "fold_v1": float(fold_ev.v_value),
        "fold_count": len(folds),
        "alpha": float(coeffs.alpha[0]),
        "beta": float(coeffs.beta),
        "classification": cls_lemma.label,
        "classification_desingularized": cls_desing.label,
        "classification_agrees": bool(cls_lemma.label == cls_desing.label),
        "lemma_J": {"J11": cls_lemma.J11, "J12": cls_lemma.J12, "J21": cls_lemma.J21},
        "levelset_count": len(levels),
        "mu": {"a": a, "b": b_, "c": c_},
        "n_points": mp.grid.n_points,
        "criteria": [7],
    }
    return PresetResult(name, system, branch, traj, None, report)


def run_preset_experiment(name: str, output_dir: str | None = None,
                          n_points: int | None = None) -> PresetResult:
    """Execute a figure-matching pipeline end to end and (optionally) write
    branch.csv, trajectory.csv, events.json, delay.json, snapshots/ and
    report.json into ``output_dir``."""
    if name not in PRESET_NAMES:
        raise PreconditionError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    runner = {
        "fhn_hopf": _run_fhn_hopf,
        "dde_hopf": _run_dde_hopf,
        "nonlocal_turing": _run_nonlocal_turing,
        "schnakenberg_turing_super": lambda n_points=None: _run_schnakenberg(
            "schnakenberg_turing_super", 0.26, n_points),
        "schnakenberg_turing_sub": lambda n_points=None: _run_schnakenberg(
            "schnakenberg_turing_sub", 0.1497, n_points),
        "nf_folded_saddle": lambda n_points=None: _run_nf("nf_folded_saddle", n_points),
        "nf_folded_node": lambda n_points=None: _run_nf("nf_folded_node", n_points),
    }[name]
    result = runner(n_points=n_points)
    if output_dir is not None:
        _stage("write", _write_bundle, result, output_dir)
    return result


def _write_bundle(result: PresetResult, output_dir: str) -> None:
    os.makedirs(output_dir, exist_ok=True)
    if result.branch is not None:
        write_branch_csv(result.branch, os.path.join(output_dir, "branch.csv"))
        with open(os.path.join(output_dir, "events.json"), "w") as fh:
            fh.write(events_to_json(result.branch.events))
    if result.trajectory is not None:
        write_trajectory_csv(result.trajectory, os.path.join(output_dir, "trajectory.csv"))
        info = result.system.info
        grid = info.get("grid")
        q = info.get("q", 1)
        nodes = grid.nodes if grid is not None else None
        every = max(1, len(result.trajectory.times) // 160)
        write_snapshots(result.trajectory, os.path.join(output_dir, "snapshots"),
                        nodes=nodes, q=q, every=every)
    if result.delay is not None:
        with open(os.path.join(output_dir, "delay.json"), "w") as fh:
            json.dump(result.delay.to_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(output_dir, "report.json"), "w") as fh:
        json.dump(result.report, fh, indent=2, sort_keys=True)

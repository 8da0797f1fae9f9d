# Steady states of the layer problem as functions of the slow variable:
# Newton solver, pseudo-arclength continuation, bifurcation detection.
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ParameterPoint, SlowFastSystem, jacobian_u, jacobian_v
from .errors import ContractViolationError, NearFoldError, NonConvergenceError
from .spectra import DEFAULT_CENTRE_TOL, dispersion_relation, leading_eigenvalues

__all__ = [
    "BranchPoint",
    "BifurcationEvent",
    "Branch",
    "newton_steady",
    "continue_branch",
    "detect_bifurcations",
    "verify_event",
    "write_branch_csv",
    "events_to_json",
]


def _embed_v(system: SlowFastSystem, v: float) -> np.ndarray:
    """Slow vector with the continuation parameter in slot 0; remaining slow
    components (which by construction do not enter F for the bundled models)
    are frozen at the reference values."""
    if system.m_slow == 0:
        raise ContractViolationError("continuation requires at least one slow variable")
    vec = np.zeros(system.m_slow)
    if system.reference is not None and system.reference.v.size == system.m_slow:
        vec[:] = system.reference.v
    vec[0] = v
    return vec


def _layer_rhs(system: SlowFastSystem, u: np.ndarray, v: float, params: ParameterPoint) -> np.ndarray:
    from .core import State, eval_rhs
    du, _ = eval_rhs(system, State(0.0, u, _embed_v(system, v)), ParameterPoint(params.mu, 0.0))
    return du


def _layer_jac_u(system: SlowFastSystem, u: np.ndarray, v: float, params: ParameterPoint) -> np.ndarray:
    from .core import State
    return jacobian_u(system, State(0.0, u, _embed_v(system, v)), ParameterPoint(params.mu, 0.0))


def _layer_jac_v(system: SlowFastSystem, u: np.ndarray, v: float, params: ParameterPoint) -> np.ndarray:
    from .core import State
    J = jacobian_v(system, State(0.0, u, _embed_v(system, v)), ParameterPoint(params.mu, 0.0))
    return J[:, 0]


def newton_steady(system: SlowFastSystem, u_guess: np.ndarray, v: float,
                  params: ParameterPoint, tol: float = 1e-10,
                  max_iter: int = 50) -> np.ndarray:
    """Damped Newton (halving line search) for the layer problem F(u, v) = 0."""
    u = np.array(u_guess, dtype=float)
    F = _layer_rhs(system, u, v, params)
    res = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if res <= tol:
            return u
        J = _layer_jac_u(system, u, v, params)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NearFoldError(
                "singular layer Jacobian during Newton; switch to arclength "
                "continuation near folds") from exc
        lam = 1.0
        improved = False
        for _ in range(25):
            u_try = u + lam * step
            F_try = _layer_rhs(system, u_try, v, params)
            res_try = float(np.max(np.abs(F_try)))
            if res_try < res or res_try <= tol:
                u, F, res = u_try, F_try, res_try
                improved = True
                break
            lam *= 0.5
        if not improved:
            break  # rounding floor reached; accept only if converged
    if res <= tol:
        return u
    raise NonConvergenceError(f"Newton did not reach {tol:.1e}; final residual {res:.3e} (v={v:.6g})")


@dataclass(frozen=True)
class BranchPoint:
    s: float
    u: np.ndarray
    v: float
    stability: str
    leading: np.ndarray  # the two eigenvalues of largest real part

    @property
    def u_norm(self) -> float:
        return float(np.linalg.norm(self.u) / np.sqrt(self.u.size))


@dataclass(frozen=True)
class BifurcationEvent:
    kind: str  # fold | hopf | turing
    v_value: float
    mode_number: int | None = None
    localization_tol: float = 1e-6
    u_value: np.ndarray | None = None
    # folds only: "min" when the branch exists for v >= v_value, "max" for <=
    orientation: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "v_value": float(self.v_value),
            "mode_number": None if self.mode_number is None else int(self.mode_number),
            "localization_tol": float(self.localization_tol),
            "orientation": self.orientation,
        }


@dataclass
class Branch:
    points: list[BranchPoint]
    events: list[BifurcationEvent] = field(default_factory=list)
    truncated: str | None = None

    def vs(self) -> np.ndarray:
        return np.array([p.v for p in self.points])

    def norms(self) -> np.ndarray:
        return np.array([p.u_norm for p in self.points])

    def sample_u(self, v: float) -> np.ndarray:
        """Interpolate u(v) linearly on the branch; requires the queried v to
        lie inside a monotone-in-v run of points (globally monotone for the
        branches the passage experiments measure against)."""
        vs = self.vs()
        dv = np.diff(vs)
        if np.all(dv > 0) or np.all(dv < 0):
            hi = len(vs)
        else:
            direction = 1.0 if dv[0] > 0 else -1.0
            hi = 2
            while hi - 1 < len(dv) and dv[hi - 1] * direction > 0:
                hi += 1
            warnings.warn("branch is not monotone in v; interpolating on its first run")
        seg_v = vs[:hi]
        U = np.stack([p.u for p in self.points[:hi]])
        order = np.argsort(seg_v)
        seg_v = seg_v[order]
        U = U[order]
        if not (seg_v[0] - 1e-9 <= v <= seg_v[-1] + 1e-9):
            raise ContractViolationError(
                f"v={v:.6g} outside branch segment [{seg_v[0]:.6g}, {seg_v[-1]:.6g}]")
        j = int(np.clip(np.searchsorted(seg_v, v) - 1, 0, len(seg_v) - 2))
        w = 0.0 if seg_v[j + 1] == seg_v[j] else (v - seg_v[j]) / (seg_v[j + 1] - seg_v[j])
        return (1.0 - w) * U[j] + w * U[j + 1]


def _default_leading(system: SlowFastSystem, u: np.ndarray, v: float,
                     params: ParameterPoint, count: int = 2) -> np.ndarray:
    custom = system.info.get("leading_eigs")
    if custom is not None:
        return np.asarray(custom(system, u, v, count), dtype=complex)
    J = _layer_jac_u(system, u, v, params)
    return leading_eigenvalues(J, count)


def _classify(leading: np.ndarray, centre_tol: float) -> str:
    re1 = float(leading[0].real)
    if abs(re1) <= centre_tol:
        return "centre"
    return "unstable" if re1 > 0 else "stable"


def _wnorm(du: np.ndarray, dv: float) -> float:
    return float(np.sqrt(np.dot(du, du) / du.size + dv * dv))


def continue_branch(system: SlowFastSystem, u0: np.ndarray, v_range: tuple[float, float],
                    params: ParameterPoint, ds: float = 0.02,
                    ds_min: float = 1e-7, ds_max: float = 0.2,
                    max_points: int = 2000, newton_tol: float = 1e-10,
                    centre_tol: float = DEFAULT_CENTRE_TOL,
                    stability_fn=None, corrector_iters: int = 12,
                    v_start: float | None = None, direction: float | None = None) -> Branch:
    """Pseudo-arclength continuation of layer equilibria over v in v_range.

    Secant predictor, Newton corrector on the bordered system (dense LU of the
    extended matrix, which stays regular at folds); the step halves on
    corrector failure and doubles after five straight successes.  Each
    accepted point records the two eigenvalues of largest real part.
    ``v_start`` (default v_range[0]) and ``direction`` decouple the seed point
    from the sweep window so a folded branch may wander inside the window.
    """
    v_lo, v_hi = min(v_range), max(v_range)
    if v_start is None:
        v_start = v_range[0]
    if direction is None:
        direction = 1.0 if v_range[1] >= v_start else -1.0
    lead_fn = stability_fn or (lambda u, v: _default_leading(system, u, v, params))

    u = newton_steady(system, u0, v_start, params, tol=newton_tol)
    n = u.size
    points: list[BranchPoint] = []
    s_acc = 0.0

    def record(u_pt: np.ndarray, v_pt: float, s_val: float):
        lead = np.asarray(lead_fn(u_pt, v_pt), dtype=complex)[:2]
        points.append(BranchPoint(s_val, np.array(u_pt), float(v_pt),
                                  _classify(lead, centre_tol), lead))

    record(u, v_start, 0.0)

    # Initial tangent: du/dv from J du = -F_v, oriented along the sweep.
    J = _layer_jac_u(system, u, v_start, params)
    Fv = _layer_jac_v(system, u, v_start, params)
    try:
        du_dv = np.linalg.solve(J, -Fv)
    except np.linalg.LinAlgError as exc:
        raise NearFoldError("cannot start continuation at a fold point") from exc
    tangent = np.concatenate([du_dv, [1.0]]) * direction
    tangent /= _wnorm(tangent[:n], tangent[n])

    step = ds
    successes = 0
    truncated = None
    while len(points) < max_points:
        y = np.concatenate([points[-1].u, [points[-1].v]])
        y_pred = y + step * tangent

        converged = False
        u_c, v_c = y_pred[:n], float(y_pred[n])
        for _ in range(corrector_iters):
            F = _layer_rhs(system, u_c, v_c, params)
            N = (np.dot(tangent[:n], u_c - y_pred[:n]) / n
                 + tangent[n] * (v_c - y_pred[n]))
            res = max(float(np.max(np.abs(F))), abs(N))
            if res <= newton_tol:
                converged = True
                break
            J = _layer_jac_u(system, u_c, v_c, params)
            Fv = _layer_jac_v(system, u_c, v_c, params)
            B = np.zeros((n + 1, n + 1))
            B[:n, :n] = J
            B[:n, n] = Fv
            B[n, :n] = tangent[:n] / n
            B[n, n] = tangent[n]
            rhs = -np.concatenate([F, [N]])
            try:
                delta = np.linalg.solve(B, rhs)
            except np.linalg.LinAlgError:
                break
            u_c = u_c + delta[:n]
            v_c = float(v_c + delta[n])
            if not np.all(np.isfinite(u_c)) or not np.isfinite(v_c):
                break
        if converged:
            F = _layer_rhs(system, u_c, v_c, params)
            if float(np.max(np.abs(F))) > 10 * newton_tol:
                converged = False
        if not converged:
            step *= 0.5
            successes = 0
            if step < ds_min:
                truncated = f"arclength step underflow (< {ds_min:g}) at v={points[-1].v:.6g}"
                break
            continue

        ds_actual = _wnorm(u_c - points[-1].u, v_c - points[-1].v)
        s_acc += ds_actual
        new_tangent = np.concatenate([u_c - points[-1].u, [v_c - points[-1].v]])
        scale = _wnorm(new_tangent[:n], new_tangent[n])
        if scale > 0:
            tangent = new_tangent / scale
        record(u_c, v_c, s_acc)
        successes += 1
        if successes >= 5:
            step = min(step * 2.0, ds_max)
            successes = 0
        if not (v_lo - 1e-12 <= v_c <= v_hi + 1e-12):
            break  # left the requested window: normal termination

    branch = Branch(points=points, truncated=truncated)
    if truncated:
        warnings.warn(f"branch truncated: {truncated}")
    return branch


# ---------------------------------------------------------------------------
# Bifurcation detection

def _leading_re(system, params, u, v, stability_fn=None) -> float:
    lead = (stability_fn or (lambda uu, vv: _default_leading(system, uu, vv, params)))(u, v)
    return float(np.asarray(lead, dtype=complex)[0].real)


def _bisect_hopf(system, params, p_lo, p_hi, tol, stability_fn=None):
    """Bisection in v between two branch points straddling a Re crossing."""
    u_lo, v_lo = np.array(p_lo.u), p_lo.v
    u_hi, v_hi = np.array(p_hi.u), p_hi.v
    f_lo = _leading_re(system, params, u_lo, v_lo, stability_fn)
    for _ in range(80):
        if abs(v_hi - v_lo) <= tol:
            break
        v_mid = 0.5 * (v_lo + v_hi)
        w = 0.0 if v_hi == v_lo else (v_mid - v_lo) / (v_hi - v_lo)
        u_mid = newton_steady(system, (1 - w) * u_lo + w * u_hi, v_mid, params)
        f_mid = _leading_re(system, params, u_mid, v_mid, stability_fn)
        if f_lo * f_mid <= 0.0:
            v_hi, u_hi = v_mid, u_mid
        else:
            v_lo, u_lo, f_lo = v_mid, u_mid, f_mid
    return 0.5 * (v_lo + v_hi), 0.5 * (u_lo + u_hi)


def _det_sign(system, params, u, v) -> float:
    J = _layer_jac_u(system, u, v, params)
    sign, _ = np.linalg.slogdet(J)
    return float(sign)


def _tracked_eigenvalue(system, params, u, v, zeta0: np.ndarray) -> tuple[float, np.ndarray]:
    """Eigenvalue of the layer Jacobian whose eigenvector has the largest
    overlap with ``zeta0`` (robust mode tracking through near-degenerate
    clusters), plus that eigenvector."""
    J = _layer_jac_u(system, u, v, params)
    vals, vecs = np.linalg.eig(J)
    overlaps = np.abs(zeta0 @ vecs)
    i = int(np.argmax(overlaps))
    vec = np.real(vecs[:, i])
    nrm = np.linalg.norm(vec)
    if nrm > 0:
        vec = vec / nrm
    return float(vals[i].real), vec


def _crossing_mode(system, params, p_a, p_b):
    """Identify the real eigenmode that changes sign between two branch
    points: match the eigen-decompositions at the two ends by eigenvector
    overlap and select the sign-flipping pair of smallest modulus."""
    J_a = _layer_jac_u(system, p_a.u, p_a.v, params)
    J_b = _layer_jac_u(system, p_b.u, p_b.v, params)
    vals_a, vecs_a = np.linalg.eig(J_a)
    vals_b, vecs_b = np.linalg.eig(J_b)
    best = None
    order = np.argsort(np.abs(vals_a))
    for i in order[: min(12, len(order))]:
        if abs(vals_a[i].imag) > 1e-6 * (1.0 + abs(vals_a[i].real)):
            continue
        j = int(np.argmax(np.abs(vecs_a[:, i].conj() @ vecs_b)))
        if abs(vals_b[j].imag) > 1e-6 * (1.0 + abs(vals_b[j].real)):
            continue
        la, lb = float(vals_a[i].real), float(vals_b[j].real)
        if la * lb < 0:
            score = abs(la) + abs(lb)
            if best is None or score < best[0]:
                best = (score, i, la, lb)
    if best is None:
        return None
    _, i, la, lb = best
    zeta0 = np.real(vecs_a[:, i])
    zeta0 /= np.linalg.norm(zeta0)
    return zeta0, la, lb


def _solve_at_null_coordinate(system, params, zeta0: np.ndarray, xi_target: float,
                              u_seed: np.ndarray, v_seed: float):
    """Solve [F(u, v) = 0, <zeta0, u> = xi] for (u, v).  The null-direction
    coordinate parametrizes the branch regularly across a fold nose, where
    arclength chords degenerate."""
    n = u_seed.size
    u_c, v_c = u_seed.copy(), float(v_seed)
    for _ in range(20):
        F = _layer_rhs(system, u_c, v_c, params)
        N = float(np.dot(zeta0, u_c)) - xi_target
        if max(float(np.max(np.abs(F))), abs(N)) <= 1e-11:
            return u_c, v_c
        J = _layer_jac_u(system, u_c, v_c, params)
        Fv = _layer_jac_v(system, u_c, v_c, params)
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = J
        B[:n, n] = Fv
        B[n, :n] = zeta0
        try:
            delta = np.linalg.solve(B, -np.concatenate([F, [N]]))
        except np.linalg.LinAlgError:
            return None
        u_c = u_c + delta[:n]
        v_c = float(v_c + delta[n])
        if not np.all(np.isfinite(u_c)) or not np.isfinite(v_c):
            return None
    return None


def _bisect_fold(system, params, p_a, p_b, tol):
    """Fold localization between two branch points straddling a simple fold:
    secant iteration on the crossing eigenvalue (tracked by eigenvector
    overlap through any near-degenerate cluster) as a function of the
    null-direction coordinate, which parametrizes the branch regularly
    across the nose."""
    mode = _crossing_mode(system, params, p_a, p_b)
    if mode is None:  # no single real crossing between the samples
        return None
    zeta0, lam_a, lam_b = mode

    xi = lambda u: float(np.dot(zeta0, u))
    a = (xi(p_a.u), lam_a, p_a.u, p_a.v)
    b = (xi(p_b.u), lam_b, p_b.u, p_b.v)
    best = a if abs(a[1]) <= abs(b[1]) else b
    scale = 1.0 + abs(lam_a) + abs(lam_b)
    for _ in range(40):
        if abs(best[1]) <= 1e-11 * scale or b[1] == a[1]:
            break
        t = a[1] / (a[1] - b[1])
        t = min(max(t, 0.05), 0.95)  # safeguarded secant
        xi_t = a[0] + t * (b[0] - a[0])
        seed_u = a[2] + t * (b[2] - a[2])
        seed_v = a[3] + t * (b[3] - a[3])
        sol = _solve_at_null_coordinate(system, params, zeta0, xi_t, seed_u, seed_v)
        if sol is None:
            break
        u_c, v_c = sol
        lam_c, _ = _tracked_eigenvalue(system, params, u_c, v_c, zeta0)
        cand = (xi_t, lam_c, u_c, v_c)
        if abs(lam_c) < abs(best[1]):
            best = cand
        if a[1] * lam_c <= 0:
            b = cand
        else:
            a = cand
    return float(best[3]), best[2]


def detect_bifurcations(system: SlowFastSystem, branch: Branch, params: ParameterPoint,
                        localization_tol: float = 1e-6,
                        turing_modes=None, stability_fn=None,
                        imag_tol: float = 1e-6) -> list[BifurcationEvent]:
    """Scan a branch for folds (dv/ds sign change confirmed by a real
    eigenvalue crossing), Hopf points (complex-pair real part crossing), and,
    when ``turing_modes`` is given, per-mode Turing crossings via the
    dispersion relation.  Events are appended to ``branch.events``."""
    if len(branch.points) < 2:
        raise ContractViolationError("bifurcation detection needs at least 2 branch points")
    events: list[BifurcationEvent] = []
    pts = branch.points
    vs = branch.vs()

    # folds: extremum of v along arclength confirmed by a real eigenvalue
    # crossing zero, witnessed by a sign flip of det(D_uF).  The sampled
    # v-extremum can sit a point or two away from the det flip, so search a
    # small neighbourhood of the reversal for the flipped pair.
    dv = np.diff(vs)
    sign_cache: dict[int, float] = {}

    def det_at(j: int) -> float:
        if j not in sign_cache:
            sign_cache[j] = _det_sign(system, params, pts[j].u, pts[j].v)
        return sign_cache[j]

    fold_brackets: set[int] = set()
    for k in range(1, len(dv)):
        if dv[k - 1] * dv[k] < 0:
            for j in range(max(0, k - 3), min(len(pts) - 1, k + 3)):
                if det_at(j) != det_at(j + 1):
                    fold_brackets.add(j)
                    break
    for idx in sorted(fold_brackets):
        located = _bisect_fold(system, params, pts[idx], pts[idx + 1], localization_tol)
        if located is None:
            continue
        v_f, u_f = located
        v_near = [pts[j].v for j in range(max(0, idx - 1), min(len(pts), idx + 3))]
        if v_f <= min(v_near) + 1e-9:
            orientation = "min"
        elif v_f >= max(v_near) - 1e-9:
            orientation = "max"
        else:
            orientation = None
        events.append(BifurcationEvent("fold", v_f, None, localization_tol, u_f,
                                       orientation=orientation))

    # Hopf: complex pair crossing the axis away from folds
    for k in range(len(pts) - 1):
        re_a = float(pts[k].leading[0].real)
        re_b = float(pts[k + 1].leading[0].real)
        if re_a * re_b < 0:
            im_a = abs(float(pts[k].leading[0].imag))
            im_b = abs(float(pts[k + 1].leading[0].imag))
            if min(im_a, im_b) > imag_tol:
                v_h, u_h = _bisect_hopf(system, params, pts[k], pts[k + 1],
                                        localization_tol, stability_fn)
                events.append(BifurcationEvent("hopf", v_h, None, localization_tol, u_h))

    # Turing: per-mode dispersion crossings (homogeneous branches only)
    if turing_modes is not None:
        modes = np.atleast_1d(np.asarray(turing_modes, dtype=int))
        rates = np.stack([
            dispersion_relation(system, p.v, modes) for p in pts])
        for mi, mode in enumerate(modes):
            if mode == 0:
                continue
            col = rates[:, mi]
            for k in range(len(pts) - 1):
                if col[k] < 0.0 <= col[k + 1] or col[k] > 0.0 >= col[k + 1]:
                    a, b = pts[k].v, pts[k + 1].v
                    fa = col[k]
                    for _ in range(80):
                        if abs(b - a) <= localization_tol:
                            break
                        m = 0.5 * (a + b)
                        fm = float(dispersion_relation(system, m, [mode])[0])
                        if fa * fm <= 0.0:
                            b = m
                        else:
                            a, fa = m, fm
                    events.append(BifurcationEvent("turing", 0.5 * (a + b), int(mode),
                                                   localization_tol))
    events.sort(key=lambda e: e.v_value)
    branch.events.extend(events)
    return events


def verify_event(system: SlowFastSystem, branch: Branch, event: BifurcationEvent,
                 params: ParameterPoint, dv: float = 1e-4, stability_fn=None) -> bool:
    """Post-hoc check: the relevant test function changes sign across
    v_event +/- dv."""
    if event.kind == "turing":
        r_lo = float(dispersion_relation(system, event.v_value - dv, [event.mode_number])[0])
        r_hi = float(dispersion_relation(system, event.v_value + dv, [event.mode_number])[0])
        return r_lo * r_hi < 0
    if event.kind == "hopf":
        u_seed = event.u_value if event.u_value is not None else branch.sample_u(event.v_value - dv)
        u_lo = newton_steady(system, u_seed, event.v_value - dv, params)
        u_hi = newton_steady(system, u_seed, event.v_value + dv, params)
        r_lo = _leading_re(system, params, u_lo, event.v_value - dv, stability_fn)
        r_hi = _leading_re(system, params, u_hi, event.v_value + dv, stability_fn)
        return r_lo * r_hi < 0
    # fold: on the side where the branch exists, the two sheets re-solved from
    # seeds straddling the nose bracket the det(D_uF) sign change
    if event.u_value is None or event.orientation not in ("min", "max"):
        return False
    v_probe = event.v_value + (dv if event.orientation == "min" else -dv)
    J = _layer_jac_u(system, event.u_value, event.v_value, params)
    vals, vecs = np.linalg.eig(J)
    zeta = np.real(vecs[:, np.argmin(np.abs(vals))])
    zeta /= np.linalg.norm(zeta)
    offset = np.sqrt(dv) * (1.0 + float(np.max(np.abs(event.u_value))))
    try:
        u_plus = newton_steady(system, event.u_value + offset * zeta, v_probe, params)
        u_minus = newton_steady(system, event.u_value - offset * zeta, v_probe, params)
    except (NonConvergenceError, NearFoldError):
        return False
    s_plus = _det_sign(system, params, u_plus, v_probe)
    s_minus = _det_sign(system, params, u_minus, v_probe)
    return bool(s_plus != s_minus)


# ---------------------------------------------------------------------------
# Serialization

def write_branch_csv(branch: Branch, path: str, probe_index: int = 0) -> None:
    """CSV with header s,v,u_norm2,u_at_probe,re_lambda1,im_lambda1,stability."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "v", "u_norm2", "u_at_probe", "re_lambda1", "im_lambda1", "stability"])
        for p in branch.points:
            writer.writerow([
                f"{p.s:.12g}", f"{p.v:.12g}", f"{p.u_norm:.12g}",
                f"{p.u[probe_index]:.12g}",
                f"{p.leading[0].real:.12g}", f"{p.leading[0].imag:.12g}",
                p.stability,
            ])


def events_to_json(events: list[BifurcationEvent]) -> str:
    return json.dumps([e.to_dict() for e in events], indent=2, sort_keys=True)

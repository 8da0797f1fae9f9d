# Finite-dimensional GSPT engine: reduced and desingularized slow flows,
# jump-point / folded-singularity analysis, and fold normal-form coefficients.
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import ParameterPoint, SlowFastSystem, State, eval_rhs, jacobian_u, jacobian_v
from .errors import (
    DegenerateProblemError,
    NearFoldError,
    PreconditionError,
    UnsupportedOperationError,
)

__all__ = [
    "FoldPointReport",
    "FoldedSingularityClass",
    "FoldNormalForm",
    "reduced_rhs",
    "desingularized_rhs",
    "classify_fold_point",
    "classify_folded_singularity",
    "fold_normalform_coeffs",
    "nf_reduced_system",
    "NFReduction",
    "nf_lemma_classification",
    "nf_desing_classification",
]

log = logging.getLogger(__name__)

DEFAULT_TOL_DET = 1e-8
DEFAULT_TOL_COND = 1e-8


def _layer_pieces(system: SlowFastSystem, state: State, params: ParameterPoint):
    layer = ParameterPoint(params.mu, 0.0)
    J = jacobian_u(system, state, layer)
    Dv = jacobian_v(system, state, layer)
    G = np.asarray(system.rhs_slow(state.u, state.v, layer.mu, 0.0), dtype=float)
    return J, Dv, G


def _singularity_measure(J: np.ndarray) -> tuple[float, float]:
    """(measure, scale): |det| for n <= 3, smallest singular value otherwise.

    Raw determinants overflow for large n; sigma_min == 0 iff det == 0, so it
    carries the same fold test at a sane scale.
    """
    n = J.shape[0]
    scale = max(1.0, float(np.max(np.abs(J))))
    if n <= 3:
        return abs(float(np.linalg.det(J))), scale ** n
    return float(np.linalg.svd(J, compute_uv=False)[-1]), scale


def _is_singular(J: np.ndarray, tol_det: float) -> bool:
    measure, scale = _singularity_measure(J)
    return measure <= tol_det * scale


def _adjugate(J: np.ndarray, tol_det: float) -> np.ndarray:
    """adj(J) = det(J) J^{-1} away from folds; near a simple fold it is
    reconstructed from the SVD rank-one structure adj = (prod of the n-1
    leading singular values) * sign * v_n u_n^T."""
    n = J.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[J[1, 1], -J[0, 1]], [-J[1, 0], J[0, 0]]])
    if n == 3:
        out = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                minor = np.delete(np.delete(J, i, axis=0), j, axis=1)
                out[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
        return out
    if n > 64:
        raise UnsupportedOperationError(
            "adjugate path is meant for low-dimensional reductions (n <= 64)")
    U, S, Vt = np.linalg.svd(J)
    sign = float(np.sign(np.linalg.det(U) * np.linalg.det(Vt)))
    if S.size >= 2 and S[-2] <= tol_det * max(1.0, S[0]):
        raise UnsupportedOperationError(
            "rank deficiency >= 2: the adjugate is the zero matrix (degenerate fold)")
    if S[-1] > tol_det * max(1.0, S[0]):
        det = sign * float(np.prod(S))
        return det * np.linalg.inv(J)
    lead = float(np.prod(S[:-1]))
    return sign * lead * np.outer(Vt[-1], U[:, -1])


def reduced_rhs(system: SlowFastSystem, state: State, params: ParameterPoint,
                tol_det: float = DEFAULT_TOL_DET) -> tuple[np.ndarray, np.ndarray]:
    """Slow flow on the critical manifold at a normally hyperbolic point:
    dv = G(u, v, mu, 0) and du = -(D_uF)^{-1} D_vF dv (the slaved drift)."""
    J, Dv, G = _layer_pieces(system, state, params)
    if _is_singular(J, tol_det):
        raise NearFoldError(
            "D_uF is (near-)singular: the reduced flow is undefined here; "
            "use desingularized_rhs")
    dv = G
    du = -np.linalg.solve(J, Dv @ dv)
    return du, dv


def desingularized_rhs(system: SlowFastSystem, state: State, params: ParameterPoint,
                       tol_det: float = DEFAULT_TOL_DET) -> tuple[np.ndarray, np.ndarray]:
    """Desingularized slow flow, defined on all of S including folds:
    du = adj(D_uF) D_vF G and dv = -det(D_uF) G (time rescaled by
    -det(D_uF), which removes the fold singularity)."""
    J, Dv, G = _layer_pieces(system, state, params)
    n = J.shape[0]
    if n > 3:
        sign, logdet = np.linalg.slogdet(J)
        if logdet > 600.0:
            raise UnsupportedOperationError(
                "det(D_uF) overflows; desingularized flow is for low-dimensional reductions")
        det = float(sign * np.exp(logdet)) if sign != 0.0 else 0.0
    else:
        det = float(np.linalg.det(J))
    adj = _adjugate(J, tol_det)
    du = adj @ (Dv @ G)
    dv = -det * G
    return du, dv


@dataclass(frozen=True)
class FoldPointReport:
    u: np.ndarray
    v: np.ndarray
    det_DuF: float
    condition_value: np.ndarray  # adj(D_uF) D_vF G, projected along the fold direction
    classification: str  # normally_hyperbolic | regular_jump | folded_singularity

    def to_dict(self) -> dict:
        return {
            "det_DuF": float(self.det_DuF),
            "condition_value": [float(x) for x in np.atleast_1d(self.condition_value)],
            "classification": self.classification,
        }


def classify_fold_point(system: SlowFastSystem, state: State, params: ParameterPoint,
                        tol_det: float = DEFAULT_TOL_DET,
                        tol_cond: float = DEFAULT_TOL_COND) -> FoldPointReport:
    """Classify a point of the critical manifold: normally hyperbolic, regular
    jump point (desingularized fast drift nonzero on the fold), or folded
    singularity (it vanishes)."""
    layer = ParameterPoint(params.mu, 0.0)
    F, _ = eval_rhs(system, state, layer)
    if float(np.max(np.abs(F))) > 1e-8:
        raise PreconditionError(
            f"point is off the critical manifold: ||F||_inf = {np.max(np.abs(F)):.3e}")
    J, Dv, G = _layer_pieces(system, state, params)
    measure, scale = _singularity_measure(J)
    if J.shape[0] <= 3:
        det = float(np.linalg.det(J))
    else:
        sign, logdet = np.linalg.slogdet(J)
        det = float(sign * np.exp(min(logdet, 600.0)))
    cond_value = _adjugate(J, tol_det) @ (Dv @ G)
    if measure > tol_det * scale:
        label = "normally_hyperbolic"
    elif float(np.linalg.norm(cond_value)) > tol_cond:
        label = "regular_jump"
    else:
        label = "folded_singularity"
    return FoldPointReport(np.array(state.u), np.array(state.v), det, cond_value, label)


@dataclass(frozen=True)
class FoldedSingularityClass:
    J11: float
    J12: float
    J21: float
    eigenvalues: np.ndarray
    label: str  # folded_saddle | folded_node | folded_focus | folded_saddle_node | degenerate

    def to_dict(self) -> dict:
        return {
            "J11": self.J11, "J12": self.J12, "J21": self.J21,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "label": self.label,
        }


def classify_folded_singularity(J11: float, J12: float, J21: float,
                                zero_tol: float = 1e-12) -> FoldedSingularityClass:
    """Type of a folded singularity from the 2x2 desingularized Jacobian
    [[J11, J12], [J21, 0]], whose eigenvalues solve
    lambda^2 - J11 lambda - J12 J21 = 0.

    The eigenvalue rule is authoritative (saddle: real of opposite sign;
    node: real of like sign; focus: complex pair; saddle-node: J12*J21 = 0);
    the sign conditions J12*J21 > 0 (saddle) etc. are asserted as consistency
    checks and any disagreement is logged.
    """
    prod = J12 * J21
    disc = J11 * J11 + 4.0 * prod
    root = np.sqrt(complex(disc))
    eigs = np.array([(J11 + root) / 2.0, (J11 - root) / 2.0])
    if abs(prod) <= zero_tol:
        label = "degenerate" if abs(J11) <= zero_tol else "folded_saddle_node"
    elif disc < 0.0:
        label = "folded_focus"
    elif prod > 0.0:
        label = "folded_saddle"
    else:
        label = "folded_node"
    # consistency with the sign conditions
    if label == "folded_saddle" and not prod > 0:
        log.warning("folded-saddle label with J12*J21 = %.3e <= 0", prod)
    if label == "folded_node" and not disc > 0:
        log.warning("folded-node label with discriminant %.3e <= 0", disc)
    return FoldedSingularityClass(float(J11), float(J12), float(J21), eigs, label)


@dataclass(frozen=True)
class FoldNormalForm:
    alpha: np.ndarray  # m-vector, alpha_j = <zeta*, D_vF e_j>
    beta: float        # <zeta*, D^2_uF[zeta, zeta]>
    zeta: np.ndarray
    zeta_star: np.ndarray

    def to_dict(self) -> dict:
        return {"alpha": [float(a) for a in self.alpha], "beta": float(self.beta)}


def fold_normalform_coeffs(system: SlowFastSystem, state: State, params: ParameterPoint,
                           tol_det: float = DEFAULT_TOL_DET,
                           fd_scale: float = 1e-4) -> FoldNormalForm:
    """Normal-form data at a simple fold of the layer problem.

    zeta / zeta* are the right/left null eigenvectors of D_uF, normalized so
    that <zeta*, zeta> = 1; alpha projects the v-derivative onto the fold
    direction and beta is the projected second directional derivative,
    evaluated by Richardson-extrapolated central differences.
    """
    layer = ParameterPoint(params.mu, 0.0)
    J, Dv, _ = _layer_pieces(system, state, params)
    vals, vecs = np.linalg.eig(J)
    order = np.argsort(np.abs(vals))
    scale = max(1.0, float(np.max(np.abs(J))))
    if len(vals) > 1 and abs(vals[order[1]]) < 10 * tol_det * scale:
        raise DegenerateProblemError(
            f"zero eigenvalue is not simple (|lambda_2| = {abs(vals[order[1]]):.3e})")
    zeta = np.real(vecs[:, order[0]])
    zeta /= np.linalg.norm(zeta)
    if zeta[np.argmax(np.abs(zeta))] < 0:
        zeta = -zeta
    wl, Ul = np.linalg.eig(J.T)
    order_l = np.argsort(np.abs(wl))
    zeta_star = np.real(Ul[:, order_l[0]])
    pairing = float(zeta_star @ zeta)
    if abs(pairing) < 1e-12:
        raise DegenerateProblemError("left/right null vectors are orthogonal (defective fold)")
    zeta_star = zeta_star / pairing

    if float(np.linalg.norm(J @ zeta)) > 1e-8 * scale:
        raise PreconditionError("right null-vector residual exceeds 1e-8; not at a fold")

    alpha = zeta_star @ Dv

    h = fd_scale * max(1.0, float(np.max(np.abs(state.u))))

    def second_dir(hh: float) -> np.ndarray:
        up = system.rhs_fast(state.u + hh * zeta, state.v, layer.mu, 0.0)
        um = system.rhs_fast(state.u - hh * zeta, state.v, layer.mu, 0.0)
        u0 = system.rhs_fast(state.u, state.v, layer.mu, 0.0)
        return (np.asarray(up) - 2.0 * np.asarray(u0) + np.asarray(um)) / (hh * hh)

    d2_h = second_dir(h)
    d2_h2 = second_dir(h / 2.0)
    d2 = (4.0 * d2_h2 - d2_h) / 3.0  # one Richardson step
    beta = float(zeta_star @ d2)
    return FoldNormalForm(np.atleast_1d(alpha), beta, zeta, zeta_star)


# ---------------------------------------------------------------------------
# Neural-field reduced system around a fold

@dataclass(frozen=True)
class NFReduction:
    system: SlowFastSystem      # 3-dimensional (A; B1, B2) slow-fast system
    alpha: float                # coefficient of B1 in the A equation
    beta: float                 # coefficient of A^2
    v_star1: float              # threshold value at the fold
    xi: float                   # B2 coordinate of the folded singularity
    mu: tuple[float, float, float]  # (a, b, c) of the slow dynamics
    H0: object                  # H0(A, B1) firing-rate functional

    def folded_singularity(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.xi])


def nf_reduced_system(nf_system: SlowFastSystem, fold_state: State,
                      params: ParameterPoint, coeffs: FoldNormalForm | None = None) -> NFReduction:
    """Leading-order reduced model at a fold of the neural-field layer problem
    (reduction function truncated to zero):

        A'  = alpha B1 + beta A^2
        B1' = eps (B2 + c H0(A, B1))
        B2' = eps (-v*1 - B1 + a + b H0(A, B1))

    with H0(A, B1) = Q(u* + A zeta, v*1 + B1) by grid quadrature.
    """
    if nf_system.info.get("name") != "neural_field":
        raise UnsupportedOperationError("nf_reduced_system expects the neural-field model")
    if coeffs is None:
        coeffs = fold_normalform_coeffs(nf_system, fold_state, params)
    p = nf_system.info["params"]
    a, b, c = p["a"], p["b"], p["c"]
    Q = nf_system.info["Q"]
    u_star = np.array(fold_state.u)
    v_star1 = float(fold_state.v[0])
    zeta = coeffs.zeta
    alpha = float(coeffs.alpha[0])
    beta = float(coeffs.beta)

    def H0(A: float, B1: float) -> float:
        return float(Q(u_star + A * zeta, v_star1 + B1))

    def rhs_fast(u, v, mu, eps):
        return np.array([alpha * v[0] + beta * u[0] ** 2])

    def rhs_slow(u, v, mu, eps):
        h0 = H0(float(u[0]), float(v[0]))
        return np.array([v[1] + c * h0, -v_star1 - v[0] + a + b * h0])

    def jac_u(u, v, mu, eps):
        return np.array([[2.0 * beta * u[0]]])

    def jac_v(u, v, mu, eps):
        return np.array([[alpha, 0.0]])

    xi = -c * H0(0.0, 0.0)
    reduced = SlowFastSystem(
        n_fast=1, m_slow=2, p_params=0,
        rhs_fast=rhs_fast, rhs_slow=rhs_slow,
        jac_u=jac_u, jac_v=jac_v,
        reference=State(0.0, np.zeros(1), np.array([0.0, xi])),
        info={"name": "nf_reduced", "q": 1},
    )
    return NFReduction(reduced, alpha, beta, v_star1, float(xi), (a, b, c), H0)


def _fd_partial(f, x0: float, h: float) -> float:
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def nf_lemma_classification(red: NFReduction, fd_h: float = 1e-5) -> FoldedSingularityClass:
    """J-entries assembled from the folded-singularity formulas of the reduced
    model (dH/dA and dH/dB1 by central differences; the critical-manifold
    graph has slope zero at the singularity, so the chain term drops).

    The normalizing change of variables that makes the quadratic coefficient
    unity is t -> beta*t with A unchanged, so the B1-coefficient in the
    rescaled fast equation is kappa = alpha/beta; the desingularized Jacobian
    of the unscaled system is beta times this one, and the classification is
    invariant under that real scaling.
    """
    a, b, c = red.mu
    dH_dA = _fd_partial(lambda A: red.H0(A, 0.0), 0.0, fd_h)
    kappa = red.alpha / red.beta
    J11 = c * kappa * dH_dA
    J12 = kappa  # H0 does not depend on B2 at leading order
    J21 = -2.0 * (-red.v_star1 + a + b * red.H0(0.0, 0.0))
    return classify_folded_singularity(J11, J12, J21)


def nf_desing_classification(red: NFReduction, fd_h: float = 1e-6) -> FoldedSingularityClass:
    """Independent route: restrict the desingularized flow of the reduced
    system to the critical manifold chart (A, B2), assemble its Jacobian at
    the folded singularity by finite differences, and classify by eigenvalues.
    """
    alpha, beta = red.alpha, red.beta

    def eta(A: float) -> float:
        # critical manifold B1 = eta(A) solving alpha B1 + beta A^2 = 0
        return -beta * A * A / alpha

    def desing_flow(A: float, B2: float) -> tuple[float, float]:
        state = State(0.0, np.array([A]), np.array([eta(A), B2]))
        du, dv = desingularized_rhs(red.system, state, ParameterPoint(eps=0.0))
        return float(du[0]), float(dv[1])

    x0 = np.array([0.0, red.xi])
    Jm = np.zeros((2, 2))
    for j in range(2):
        xp = x0.copy(); xp[j] += fd_h
        xm = x0.copy(); xm[j] -= fd_h
        fp = desing_flow(*xp)
        fm = desing_flow(*xm)
        Jm[:, j] = (np.array(fp) - np.array(fm)) / (2.0 * fd_h)
    tr = Jm[0, 0] + Jm[1, 1]
    det = float(np.linalg.det(Jm))
    disc = tr * tr - 4.0 * det
    root = np.sqrt(complex(disc))
    eigs = np.array([(tr + root) / 2.0, (tr - root) / 2.0])
    prod = -det  # matches -J12*J21 sign convention of the 2x2 normal form
    if abs(det) <= 1e-12 * max(1.0, abs(tr)):
        label = "degenerate" if abs(tr) <= 1e-12 else "folded_saddle_node"
    elif disc < 0.0:
        label = "folded_focus"
    elif det < 0.0:
        label = "folded_saddle"
    else:
        label = "folded_node"
    return FoldedSingularityClass(float(Jm[0, 0]), float(Jm[0, 1]), float(Jm[1, 0]), eigs, label)

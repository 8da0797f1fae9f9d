# Eigenvalue analysis of layer linearizations, closed-form spectral oracles,
# and dispersion relations.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ParameterPoint, SlowFastSystem, State, eval_rhs
from .errors import (
    ContractViolationError,
    DomainError,
    NonConvergenceError,
    PreconditionError,
    UnsupportedOperationError,
)

__all__ = [
    "SpectrumReport",
    "dense_spectrum",
    "partition",
    "fhn_spectrum_closed_form",
    "lambert_w",
    "dde_roots_lambert",
    "dde_characteristic_residual",
    "dde_hopf_locus",
    "dde_leading_roots",
    "dispersion_relation",
    "leading_eigenvalues",
    "sort_eigenvalues",
]

DEFAULT_CENTRE_TOL = 1e-6


def sort_eigenvalues(eigs: np.ndarray) -> np.ndarray:
    """Descending real part, ties broken by descending imaginary part."""
    eigs = np.asarray(eigs, dtype=complex)
    order = np.lexsort((-eigs.imag, -eigs.real))
    return eigs[order]


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues partitioned into unstable/centre/stable index sets.

    lambda belongs to sigma_c iff |Re lambda| <= centre_tol; gamma is the
    sharp distance of the hyperbolic spectrum from the imaginary axis minus
    centre_tol, clamped at zero.
    """

    eigenvalues: np.ndarray
    sigma_u: tuple[int, ...]
    sigma_c: tuple[int, ...]
    sigma_s: tuple[int, ...]
    gamma: float
    centre_tol: float

    @property
    def is_normally_hyperbolic(self) -> bool:
        return len(self.sigma_c) == 0

    def centre_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[list(self.sigma_c)]

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "sigma_u": list(self.sigma_u),
            "sigma_c": list(self.sigma_c),
            "sigma_s": list(self.sigma_s),
            "gamma": float(self.gamma),
            "centre_tol": float(self.centre_tol),
        }


def partition(eigs: np.ndarray, centre_tol: float = DEFAULT_CENTRE_TOL) -> SpectrumReport:
    """Partition eigenvalues into sigma_u / sigma_c / sigma_s."""
    if centre_tol <= 0:
        raise ContractViolationError("centre_tol must be positive")
    eigs = sort_eigenvalues(eigs)
    re = eigs.real
    centre = np.abs(re) <= centre_tol
    unstable = (~centre) & (re > 0)
    stable = (~centre) & (re < 0)
    hyper = np.abs(re[~centre])
    gamma = max(0.0, float(np.min(hyper)) - centre_tol) if hyper.size else 0.0
    return SpectrumReport(
        eigenvalues=eigs,
        sigma_u=tuple(int(i) for i in np.flatnonzero(unstable)),
        sigma_c=tuple(int(i) for i in np.flatnonzero(centre)),
        sigma_s=tuple(int(i) for i in np.flatnonzero(stable)),
        gamma=gamma,
        centre_tol=float(centre_tol),
    )


def dense_spectrum(matrix: np.ndarray, residual_check: bool = True) -> np.ndarray:
    """All eigenvalues of a dense real matrix, sorted by descending real part.

    A sampled subset of eigenpairs is verified to satisfy
    ||A v - lambda v|| / ||v|| <= 1e-8; failure raises with condition
    diagnostics.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolationError(f"matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    if n > 8192:
        raise ContractViolationError(f"dense spectrum limited to n <= 8192, got {n}")
    try:
        vals, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonConvergenceError(
            f"eigen decomposition failed: {exc}; cond(A) ~ {np.linalg.cond(A):.3e}") from exc
    if residual_check:
        sample = np.linspace(0, n - 1, min(n, 16)).astype(int)
        for i in sample:
            v = vecs[:, i]
            resid = np.linalg.norm(A @ v - vals[i] * v) / np.linalg.norm(v)
            if resid > 1e-8:
                raise NonConvergenceError(
                    f"eigenpair residual {resid:.3e} > 1e-8 for lambda={vals[i]:.6g}; "
                    f"cond(A) ~ {np.linalg.cond(A):.3e}")
    return sort_eigenvalues(vals)


def leading_eigenvalues(matrix: np.ndarray, k: int = 2) -> np.ndarray:
    """The k eigenvalues of largest real part (dense path)."""
    return dense_spectrum(matrix, residual_check=False)[:k]


# ---------------------------------------------------------------------------
# FitzHugh-Nagumo layer spectrum in closed form

def fhn_spectrum_closed_form(a: float, n_max: int) -> np.ndarray:
    """Spectrum of the FHN layer linearization at its Hopf equilibrium on
    (0, 2pi) with unit diffusivity: {-a} plus, per wavenumber |n| <= n_max,
    the roots of D_n(lambda) = lambda^2 + n^2 lambda + a(n^2 - a) + 1.

    Mode 0 contributes the Hopf pair +/- i sqrt(1 - a^2); -a marks the
    essential accumulation point.
    """
    if not 0.0 < a < 1.0:
        raise DomainError(f"closed-form FHN spectrum requires a in (0,1), got {a}")
    vals: list[complex] = [complex(-a, 0.0)]
    for n in range(-n_max, n_max + 1):
        n2 = float(n * n)
        disc = complex((n2 - 2.0 * a) ** 2 - 4.0)
        root = np.sqrt(disc)
        vals.append((-n2 + root) / 2.0)
        vals.append((-n2 - root) / 2.0)
    return sort_eigenvalues(np.array(vals))


# ---------------------------------------------------------------------------
# Lambert-W branches and DDE characteristic roots

def _lambert_branch_guess(z: complex, k: int) -> complex:
    if k == 0 and abs(z) <= 0.25:
        return z * (1.0 - z + 1.5 * z * z)
    if k == -1 and z.imag == 0.0 and -1.0 / np.e < z.real < 0.0:
        lr = np.log(-z.real)
        return complex(lr - np.log(-lr))
    L = np.log(complex(z)) + 2j * np.pi * k
    if abs(L) < 1e-2:
        return L
    return L - np.log(L)


def lambert_w(z: complex, k: int = 0, tol: float = 1e-13, max_iter: int = 80) -> complex:
    """Branch k of the Lambert W function by Halley iteration from the
    standard branch asymptotics."""
    z = complex(z)
    if z == 0:
        if k == 0:
            return 0.0 + 0.0j
        raise DomainError(f"W_{k}(0) is not defined")
    # Branch point z = -1/e, where the k = 0 and k = -1 branches meet at -1.
    if k in (0, -1) and abs(z * np.e + 1.0) < 1e-9 and abs(z.imag) < 1e-12:
        p = np.sqrt(2.0 * (np.e * z + 1.0))
        if k == -1:
            p = -p
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    w = _lambert_branch_guess(z, k)
    scale = max(1.0, abs(z))
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - z
        if abs(f) <= tol * scale:
            return w
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1) if abs(wp1) > 1e-12 else ew * wp1 + 1e-300
        w = w - f / denom
    if abs(w * np.exp(w) - z) <= 1e-10 * scale:
        return w
    raise NonConvergenceError(f"Halley iteration for W_{k}({z}) did not converge (last w={w})")


def dde_characteristic_residual(lam: complex, v: float, tau: float) -> complex:
    return v - np.exp(-lam * tau) - lam


def dde_roots_lambert(v: float, tau: float, branches) -> np.ndarray:
    """Characteristic roots lambda_k = v + W_k(-tau e^{-tau v})/tau of the
    linear DDE x' = v x - x(t - tau); each root is residual-checked against
    v - e^{-lambda tau} - lambda = 0."""
    if tau <= 0:
        raise ContractViolationError("tau must be positive")
    z = -tau * np.exp(-tau * v)
    out = []
    for k in branches:
        lam = v + lambert_w(z, int(k)) / tau
        resid = abs(dde_characteristic_residual(lam, v, tau))
        if resid > 1e-10:
            raise NonConvergenceError(
                f"branch k={k}: characteristic residual {resid:.3e} > 1e-10")
        out.append(lam)
    return np.asarray(out, dtype=complex)


def dde_leading_roots(v: float, tau: float, k_max: int = 6, count: int = 2) -> np.ndarray:
    """The ``count`` characteristic roots of largest real part among branches
    |k| <= k_max."""
    roots = dde_roots_lambert(v, tau, range(-k_max, k_max + 1))
    return sort_eigenvalues(roots)[:count]


def dde_hopf_locus(tau: float, mesh: float = 1e-3, tol: float = 1e-10) -> list[float]:
    """All v in (-1, 1) with a purely imaginary characteristic pair, i.e. the
    roots of g(v) = v - cos(tau sqrt(1 - v^2)), located by sign scan plus
    bisection."""
    if tau <= 0:
        raise ContractViolationError("tau must be positive")

    def g(v: float) -> float:
        return v - np.cos(tau * np.sqrt(max(0.0, 1.0 - v * v)))

    lo, hi = -1.0 + 1e-9, 1.0 - 1e-9
    grid = np.arange(lo, hi, mesh)
    grid = np.append(grid, hi)
    vals = np.array([g(v) for v in grid])
    roots: list[float] = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = g(m)
                if fa * fm <= 0.0:
                    b, fb = m, fm
                else:
                    a, fa = m, fm
            roots.append(float(0.5 * (a + b)))
    return roots


# ---------------------------------------------------------------------------
# Dispersion relations at homogeneous layer equilibria

def dispersion_relation(system: SlowFastSystem, v: float, modes,
                        u_star: np.ndarray | None = None,
                        residual_tol: float = 1e-10) -> np.ndarray:
    """Leading growth rate Re(lambda) per spatial mode n at a homogeneous
    layer equilibrium.

    Nonlocal one-component models use the exact symbol
    -d (n pi / l)^2 - u* w_n; local q-component models take the maximal real
    part of the eigenvalues of J_reaction - k^2 D with k = n pi / l.
    """
    disp = system.info.get("dispersion")
    if disp is None:
        raise UnsupportedOperationError(
            f"model {system.info.get('name')!r} carries no dispersion data")
    grid = system.info["grid"]
    q = system.info["q"]
    n_nodes = grid.n_points
    if u_star is None:
        u_star = system.info["homogeneous_equilibrium"](v)
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    if u_star.size != q:
        raise ContractViolationError(f"u_star must have {q} components")
    # The supplied equilibrium must actually be one.
    field = np.concatenate([np.full(n_nodes, comp) for comp in u_star])
    du, _ = eval_rhs(system, State(0.0, field, np.full(system.m_slow, v)),
                     ParameterPoint(eps=0.0))
    resid = float(np.max(np.abs(du)))
    if resid > residual_tol:
        raise PreconditionError(
            f"homogeneous state residual {resid:.3e} exceeds {residual_tol:.1e}")
    modes = np.atleast_1d(np.asarray(modes, dtype=int))
    out = np.empty(modes.size)
    if disp["kind"] == "nonlocal":
        w = disp["kernel_spectrum"]
        d = disp["d"]
        ustar_scalar = float(u_star[0])
        for i, n in enumerate(modes):
            k = grid.wavenumber(int(n))
            out[i] = -d * k * k - ustar_scalar * w[int(n)]
        return out
    # local reaction-diffusion: per-mode q x q eigenvalue problem
    J = disp["reaction_jac"](u_star, v)
    D = np.diag(disp["diffusion"])
    for i, n in enumerate(modes):
        k = grid.wavenumber(int(n))
        out[i] = float(np.max(np.linalg.eigvals(J - k * k * D).real))
    return out


def nf_leading_eigenvalues(system: SlowFastSystem, u: np.ndarray, v1: float,
                           count: int = 2, drop_tol: float = 1e-14) -> np.ndarray:
    """Leading spectrum of the neural-field layer Jacobian -I + W diag(theta').

    theta' is localized, so W diag(theta') is numerically low rank: its nonzero
    eigenvalues equal those of diag(theta'_S) W[S,S] on the active set S, which
    keeps this exact up to the drop tolerance while avoiding an n^3 solve.
    """
    W = system.info["W"]
    tdu = system.info["theta_du"](u, v1)
    cutoff = drop_tol * max(float(np.max(tdu)), 1e-300)
    active = np.flatnonzero(tdu > cutoff)
    if active.size == 0:
        lead = np.full(count, -1.0 + 0.0j)
        return lead
    small = tdu[active, None] * W[np.ix_(active, active)]
    vals = np.linalg.eigvals(small)
    vals = np.concatenate([vals, np.zeros(1)])  # the rank-deficient remainder maps to -1
    return sort_eigenvalues(-1.0 + vals)[:count]

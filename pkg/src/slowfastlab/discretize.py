# Spatial grids, differentiation operators, and convolution quadrature.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, UnsupportedOperationError, ValidationError

__all__ = [
    "Grid",
    "KernelSpectrum",
    "periodic_grid",
    "neumann_grid",
    "second_derivative",
    "second_derivative_matrix",
    "circular_convolution",
    "convolution_matrix",
    "kernel_fourier_coeffs",
    "box_kernel_samples",
    "exp_cosine_kernel_samples",
    "geodesic_distance",
]


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid.

    ``periodic``: domain (-l, l) with the right endpoint excluded,
    x_j = -l + 2l*j/n.  ``neumann``: domain (0, l), cell-centred nodes
    x_j = (j + 1/2)*l/n so that zero-flux faces sit at x = 0 and x = l.
    """

    kind: str
    half_length: float
    n_points: int
    nodes: np.ndarray

    def __post_init__(self):
        if self.kind not in ("periodic", "neumann"):
            raise ContractViolationError(f"unknown grid kind {self.kind!r}")
        if self.half_length <= 0:
            raise ContractViolationError("half_length must be positive")
        if self.n_points < 8 or self.n_points % 2 != 0:
            raise ContractViolationError("n_points must be an even integer >= 8")

    @property
    def dx(self) -> float:
        if self.kind == "periodic":
            return 2.0 * self.half_length / self.n_points
        return self.half_length / self.n_points

    @property
    def length(self) -> float:
        return 2.0 * self.half_length if self.kind == "periodic" else self.half_length

    def wavenumber(self, n: int) -> float:
        # Mode n has spatial profile cos(n*pi*x/l) on both grid kinds.
        return n * np.pi / self.half_length


def periodic_grid(half_length: float, n_points: int) -> Grid:
    dx = 2.0 * half_length / n_points
    nodes = -half_length + dx * np.arange(n_points)
    return Grid("periodic", float(half_length), int(n_points), nodes)


def neumann_grid(length: float, n_points: int) -> Grid:
    dx = length / n_points
    nodes = dx * (np.arange(n_points) + 0.5)
    return Grid("neumann", float(length), int(n_points), nodes)


def _check_field(grid: Grid, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_points,):
        raise ContractViolationError(
            f"field has shape {u.shape}, expected ({grid.n_points},)")
    return u


def _angular_wavenumbers(grid: Grid) -> np.ndarray:
    # FFT bin n carries e^{i n pi x / l}; angular wavenumber k = n*pi/l.
    return 2.0 * np.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)


def second_derivative(grid: Grid, u: np.ndarray) -> np.ndarray:
    """d^2u/dx^2: exact Fourier differentiation on periodic grids, second-order
    central differences with ghost-node reflection on Neumann grids."""
    u = _check_field(grid, u)
    if grid.kind == "periodic":
        k = _angular_wavenumbers(grid)
        return np.real(np.fft.ifft(-(k ** 2) * np.fft.fft(u)))
    dx2 = grid.dx ** 2
    out = np.empty_like(u)
    # symmetric association keeps the stencil reflection-exact in floating point
    out[1:-1] = ((u[:-2] + u[2:]) - 2.0 * u[1:-1]) / dx2
    out[0] = (u[1] - u[0]) / dx2       # ghost u[-1] = u[0]
    out[-1] = (u[-2] - u[-1]) / dx2    # ghost u[n] = u[n-1]
    return out


def second_derivative_matrix(grid: Grid) -> np.ndarray:
    """Dense matrix realization of :func:`second_derivative`."""
    n = grid.n_points
    if grid.kind == "periodic":
        k2 = _angular_wavenumbers(grid) ** 2
        F = np.fft.fft(np.eye(n), axis=0)
        return np.real(np.fft.ifft(-k2[:, None] * F, axis=0))
    dx2 = grid.dx ** 2
    D = np.zeros((n, n))
    for j in range(n):
        D[j, j] = -2.0 / dx2
        if j > 0:
            D[j, j - 1] = 1.0 / dx2
        if j < n - 1:
            D[j, j + 1] = 1.0 / dx2
    D[0, 0] = -1.0 / dx2
    D[-1, -1] = -1.0 / dx2
    return D


def geodesic_distance(grid: Grid, a, b) -> np.ndarray:
    """|a - b| on the ring R/2lZ: min(|a-b|, 2l - |a-b|)."""
    if grid.kind != "periodic":
        raise UnsupportedOperationError("geodesic distance is defined on periodic grids only")
    d = np.abs(np.asarray(a) - np.asarray(b))
    return np.minimum(d, 2.0 * grid.half_length - d)


def displacements(grid: Grid) -> np.ndarray:
    """Signed displacement of each cyclic index: entry m is m*dx wrapped to [-l, l).

    Kernel sample arrays are stored in this cyclic order (entry 0 = zero
    displacement), which makes the FFT array convolution the trapezoidal
    quadrature of int w(x - y) u(y) dy.
    """
    if grid.kind != "periodic":
        raise UnsupportedOperationError("displacements are defined on periodic grids only")
    n = grid.n_points
    m = np.arange(n)
    return ((m + n // 2) % n - n // 2) * grid.dx


def circular_convolution(grid: Grid, kernel_samples: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Trapezoidal circular convolution (w * u)(x_i) = sum_j w(x_i - x_j) u_j dx,
    computed by FFT.  Kernel samples are in cyclic displacement order."""
    if grid.kind != "periodic":
        raise UnsupportedOperationError("circular convolution requires a periodic grid")
    w = _check_field(grid, kernel_samples)
    u = _check_field(grid, u)
    out = np.fft.ifft(np.fft.fft(w) * np.fft.fft(u)) * grid.dx
    scale = max(1.0, float(np.max(np.abs(out))))
    resid = float(np.max(np.abs(out.imag)))
    if resid > 1e-12 * scale:
        raise ValidationError(f"convolution imaginary residue {resid:.3e} exceeds tolerance")
    return out.real


def convolution_matrix(grid: Grid, kernel_samples: np.ndarray) -> np.ndarray:
    """Dense matrix W with (W u)_i = circular_convolution(grid, w, u)_i."""
    w = _check_field(grid, kernel_samples)
    n = grid.n_points
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return w[idx] * grid.dx


@dataclass(frozen=True)
class KernelSpectrum:
    """Cosine-series coefficients w_n of an even 2l-periodic kernel, normalized
    so that w_0 = 1."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", c)
        if abs(c[0] - 1.0) > 1e-12:
            raise ValidationError("KernelSpectrum requires w_0 = 1 after normalization")

    def __getitem__(self, n: int) -> float:
        return float(self.coefficients[n])


def kernel_fourier_coeffs(grid: Grid, kernel_samples: np.ndarray) -> KernelSpectrum:
    """w_n = int w(x) cos(n pi x / l) dx by the trapezoid rule, n = 0..n/2,
    normalized by w_0.  The kernel must be even to 1e-10."""
    if grid.kind != "periodic":
        raise UnsupportedOperationError("kernel coefficients require a periodic grid")
    w = _check_field(grid, kernel_samples)
    n = grid.n_points
    mirrored = w[(-np.arange(n)) % n]
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w - mirrored)) > 1e-10 * scale:
        raise ValidationError("kernel samples are not even about x = 0")
    modes = np.arange(n // 2 + 1)
    phases = np.cos(np.outer(modes, displacements(grid)) * (np.pi / grid.half_length))
    coeffs = phases @ w * grid.dx
    if coeffs[0] <= 0:
        raise ValidationError(f"kernel mass w_0 = {coeffs[0]:.3e} must be positive")
    return KernelSpectrum(coeffs / coeffs[0])


def box_kernel_samples(grid: Grid, h: float) -> np.ndarray:
    """Normalized box kernel (2h)^-1 1_(-h,h) sampled by exact cell averages.

    Cell averaging generalizes half-weighting of the jump value: a node sitting
    exactly at |x| = h receives half the interior value, and off-node jumps are
    apportioned by overlap, which keeps the cosine coefficients accurate at
    moderate resolutions.
    """
    if grid.kind != "periodic":
        raise UnsupportedOperationError("box kernel sampling requires a periodic grid")
    if not (0 < h < grid.half_length - grid.dx):
        raise ContractViolationError("box half-width h must lie in (0, l - dx)")
    dx = grid.dx
    s = displacements(grid)
    lo = s - dx / 2.0
    hi = s + dx / 2.0
    overlap = np.clip(np.minimum(hi, h) - np.maximum(lo, -h), 0.0, None)
    return overlap / (2.0 * h * dx)


def exp_cosine_kernel_samples(grid: Grid, k1: float, k2: float, k3: float, k4: float) -> np.ndarray:
    """Samples of k1*exp(-|x|)*(k2 + k3*cos(x/k4)) with |x| the ring geodesic."""
    s = displacements(grid)
    d = geodesic_distance(grid, s, 0.0)
    return k1 * np.exp(-d) * (k2 + k3 * np.cos(s / k4))

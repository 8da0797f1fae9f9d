import numpy as np
import pytest

from slowfastlab import discretize as dz
from slowfastlab.errors import UnsupportedOperationError, ValidationError

# closed-form box-kernel cosine coefficients sin(n pi h / l)/(n pi h / l), h=3, l=5
SINC_W1 = np.sin(0.6 * np.pi) / (0.6 * np.pi)      # +0.5045511524
SINC_W2 = np.sin(1.2 * np.pi) / (1.2 * np.pi)      # -0.1559148805


def test_periodic_second_derivative_eigenfunction():
    g = dz.periodic_grid(5.0, 128)
    u = np.cos(np.pi * g.nodes / g.half_length)
    out = dz.second_derivative(g, u)
    assert np.max(np.abs(out + (np.pi / 5.0) ** 2 * u)) < 1e-12


def test_second_derivative_annihilates_constants():
    gp = dz.periodic_grid(5.0, 64)
    gn = dz.neumann_grid(10.0, 64)
    assert np.all(dz.second_derivative(gp, np.full(64, 3.7)) == 0.0)
    assert np.all(dz.second_derivative(gn, np.full(64, -1.2)) == 0.0)


def test_neumann_second_derivative_order():
    # cos(pi x / l) has zero flux at both ends; observed order >= 1.9
    l = 10.0
    errs = []
    for n in (64, 128, 256):
        g = dz.neumann_grid(l, n)
        u = np.cos(np.pi * g.nodes / l)
        out = dz.second_derivative(g, u)
        errs.append(np.max(np.abs(out + (np.pi / l) ** 2 * u)))
    order1 = np.log2(errs[0] / errs[1])
    order2 = np.log2(errs[1] / errs[2])
    assert order1 >= 1.9 and order2 >= 1.9


def test_second_derivative_matrix_matches_operator():
    for g in (dz.periodic_grid(3.0, 32), dz.neumann_grid(4.0, 32)):
        D = dz.second_derivative_matrix(g)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(32)
        assert np.allclose(D @ u, dz.second_derivative(g, u), atol=1e-11)


def test_convolution_delta_identity():
    g = dz.periodic_grid(5.0, 128)
    delta = np.zeros(128)
    delta[0] = 1.0 / g.dx  # unit mass at zero displacement
    rng = np.random.default_rng(1)
    u = rng.standard_normal(128)
    assert np.max(np.abs(dz.circular_convolution(g, delta, u) - u)) < 1e-12


def test_convolution_of_constant_is_constant():
    g = dz.periodic_grid(5.0, 256)
    w = dz.box_kernel_samples(g, 3.0)
    out = dz.circular_convolution(g, w, np.full(256, 2.5))
    assert np.max(np.abs(out - 2.5)) < 1e-12


def test_convolution_box_kernel_mode2():
    g = dz.periodic_grid(5.0, 256)
    w = dz.box_kernel_samples(g, 3.0)
    u = np.cos(2.0 * np.pi * g.nodes / 5.0)
    out = dz.circular_convolution(g, w, u)
    assert np.max(np.abs(out - SINC_W2 * u)) < 1e-4


def test_convolution_requires_periodic_grid():
    g = dz.neumann_grid(5.0, 64)
    with pytest.raises(UnsupportedOperationError):
        dz.circular_convolution(g, np.zeros(64), np.zeros(64))


def test_convolution_matrix_matches_fft():
    g = dz.periodic_grid(5.0, 64)
    w = dz.box_kernel_samples(g, 2.0)
    W = dz.convolution_matrix(g, w)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(64)
    assert np.allclose(W @ u, dz.circular_convolution(g, w, u), atol=1e-12)


def test_box_kernel_coefficients_match_sinc():
    g = dz.periodic_grid(5.0, 256)
    spec = dz.kernel_fourier_coeffs(g, dz.box_kernel_samples(g, 3.0))
    assert spec[0] == 1.0
    assert abs(spec[1] - SINC_W1) < 1e-4
    assert abs(spec[2] - SINC_W2) < 1e-4
    assert abs(spec[5]) < 1e-4


def test_uniform_kernel_spectrum():
    g = dz.periodic_grid(5.0, 128)
    w = np.full(128, 1.0 / (2.0 * g.half_length))
    spec = dz.kernel_fourier_coeffs(g, w)
    assert spec[0] == 1.0
    assert np.max(np.abs(spec.coefficients[1:])) < 1e-12


def test_exp_cosine_kernel_coefficients_finite_even():
    g = dz.periodic_grid(100.0, 512)
    w = dz.exp_cosine_kernel_samples(g, 0.5, 1.0, 0.5, 1.0)
    spec = dz.kernel_fourier_coeffs(g, w)
    assert np.all(np.isfinite(spec.coefficients))
    assert spec[0] == 1.0


def test_asymmetric_kernel_rejected():
    g = dz.periodic_grid(5.0, 64)
    w = dz.box_kernel_samples(g, 2.0)
    w[3] += 1e-3
    with pytest.raises(ValidationError):
        dz.kernel_fourier_coeffs(g, w)


def test_parseval_consistency():
    g = dz.periodic_grid(5.0, 256)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(256)
    node_norm2 = np.sum(u * u) * g.dx
    mode_norm2 = np.sum(np.abs(np.fft.fft(u)) ** 2) / g.n_points * g.dx
    assert abs(node_norm2 - mode_norm2) < 1e-10 * max(1.0, node_norm2)


def test_convolution_linear_and_shift_equivariant():
    g = dz.periodic_grid(5.0, 128)
    w = dz.box_kernel_samples(g, 3.0)
    rng = np.random.default_rng(4)
    u, z = rng.standard_normal(128), rng.standard_normal(128)
    lin = dz.circular_convolution(g, w, 2.0 * u - 3.0 * z)
    ref = 2.0 * dz.circular_convolution(g, w, u) - 3.0 * dz.circular_convolution(g, w, z)
    assert np.max(np.abs(lin - ref)) < 1e-12
    shifted = dz.circular_convolution(g, w, np.roll(u, 1))
    assert np.max(np.abs(shifted - np.roll(dz.circular_convolution(g, w, u), 1))) < 1e-12

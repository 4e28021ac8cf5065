"""
Unit tests for the Bessel functions and the heat kernels
"""

import numpy as np
import pytest
from scipy import integrate, special

from heatbem.errors import KernelDomainError, SingularPointError
from heatbem.kernel import (LaplaceFrequency, bessel_k, fundamental_solution, grad_y_fundamental_solution,
                            heat_kernel_time, heat_kernel_time_gradient, k0_log_split)


class TestLaplaceFrequency:
    """Admissible frequencies"""

    def test_root_principal_branch(self):
        freq = LaplaceFrequency(-4.0 + 1e-300j)
        assert freq.root.real >= 0.0

    def test_scaled(self):
        assert LaplaceFrequency(2.0).scaled(0.5).s == pytest.approx(1.0)

    @pytest.mark.parametrize("s", [0.0, -1.0, float("nan"), complex("inf")])
    def test_rejects_cut_and_nonfinite(self, s):
        with pytest.raises(KernelDomainError):
            LaplaceFrequency(s)


class TestBesselK:
    """K0 and K1 against reference values"""

    def test_reference_values(self):
        assert bessel_k(0, 1.0) == pytest.approx(0.421024438240708, rel=1e-13)
        assert bessel_k(1, 1.0) == pytest.approx(0.601907230197235, rel=1e-13)

    @pytest.mark.parametrize("z", [0.01, 0.5 + 1.5j, 1.0 + 1.0j, 1.9 - 0.3j, 2.5 + 0.1j, 3.0 + 2.0j, 12.0 - 7.0j])
    @pytest.mark.parametrize("order", [0, 1])
    def test_matches_scipy(self, order, z):
        """Series and asymptotic branches agree with scipy.special.kv"""
        assert bessel_k(order, z) == pytest.approx(complex(special.kv(order, z)), rel=1e-12)

    def test_array_input(self):
        z = np.array([0.5, 1.5, 4.0])
        np.testing.assert_allclose(bessel_k(0, z), special.k0(z), rtol=1e-12)

    def test_rejects_left_half_plane(self):
        with pytest.raises(KernelDomainError):
            bessel_k(0, -0.5 + 1j)

    def test_rejects_other_orders(self):
        with pytest.raises(ValueError):
            bessel_k(2, 1.0)


def integral_oracle(order, z):
    """exp(z) K_order(z) = int_0^inf exp(-z (cosh t - 1)) cosh(order t) dt, cut where the integrand is below e^-45"""
    upper = np.arccosh(1.0 + 45.0 / z.real)

    def part(fn):
        return integrate.quad(lambda t: fn(np.exp(-z * (np.cosh(t) - 1.0)) * np.cosh(order * t)),
                              0.0, upper, epsabs=0.0, epsrel=1e-13, limit=400)[0]

    return complex(part(np.real), part(np.imag))


def asymptotic_k(order, z, terms=12):
    """Large-argument expansion sqrt(pi / 2z) exp(-z) sum_k a_k(order) / z^k"""
    mu = 4.0 * order * order
    total, term = 1.0, 1.0
    for k in range(1, terms):
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        total += term
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * total


class TestBesselOracles:
    """K0 and K1 against independent representations"""

    @pytest.mark.parametrize("order", [0, 1])
    def test_random_arguments_against_integral(self, order, rng):
        modulus = 10.0 ** rng.uniform(-4.0, np.log10(50.0), 200)
        z = modulus * np.exp(1j * rng.uniform(-np.pi / 3.0, np.pi / 3.0, 200))
        for value in z:
            scaled = bessel_k(order, value) * np.exp(value)
            assert scaled == pytest.approx(integral_oracle(order, value), rel=1e-11)

    @pytest.mark.parametrize("order", [0, 1])
    def test_large_argument_expansion(self, order):
        assert bessel_k(order, 50.0) == pytest.approx(asymptotic_k(order, 50.0), rel=1e-12)

    def test_derivative_of_k0(self):
        z, h = 2.0 + 3.0j, 1e-6
        fd = (bessel_k(0, z + h) - bessel_k(0, z - h)) / (2.0 * h)
        assert fd == pytest.approx(-bessel_k(1, z), rel=1e-8)


class TestHelmholtzEquation:
    """(Laplacian - s) G = 0 away from the source"""

    def test_five_point_residual(self, rng):
        delta = 1e-4
        steps = delta * np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        for _ in range(20):
            s = 10.0 ** rng.uniform(0.0, 0.6) * np.exp(1j * rng.uniform(-0.75 * np.pi, 0.75 * np.pi))
            y = rng.uniform(-1.0, 1.0, 2)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            x = y + rng.uniform(0.5, 1.5) * np.array([np.cos(angle), np.sin(angle)])
            center = fundamental_solution(s, x, y)
            neighbours = fundamental_solution(s, x[None, :] + steps, y)
            laplacian = (np.sum(neighbours) - 4.0 * center) / delta ** 2
            assert abs(laplacian - s * center) <= 1e-5 * abs(s * center)

    def test_principal_root(self, rng):
        s = 10.0 ** rng.uniform(-3.0, 3.0, 1000) * np.exp(1j * rng.uniform(-np.pi, np.pi, 1000))
        for value in s:
            root = LaplaceFrequency(value).root
            assert root.real > 0.0
            assert root * root == pytest.approx(value, rel=1e-14)


class TestLogSplit:
    """K0(root r) = -log(r) A(r) + B(r)"""

    @pytest.mark.parametrize("r", [1e-3, 0.05, 0.3, 1.0])
    def test_recombines(self, r):
        root = np.sqrt(2.0 + 1.0j)
        a, b = k0_log_split(root, np.array([r]))
        expected = special.kv(0, root * r)
        assert complex(-np.log(r) * a[0] + b[0]) == pytest.approx(complex(expected), rel=1e-10)

    def test_finite_at_origin(self):
        """A and B are analytic, so r = 0 is allowed"""
        a, b = k0_log_split(1.0 + 0.5j, np.array([0.0]))
        assert a[0] == pytest.approx(1.0)
        assert np.isfinite(b[0])


class TestFundamentalSolution:
    """G(s; x, y) = K0(sqrt(s) |x - y|) / (2 pi)"""

    def test_value(self):
        value = fundamental_solution(1.0, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        assert value == pytest.approx(0.421024438240708 / (2.0 * np.pi), rel=1e-12)

    def test_coincident_points(self):
        with pytest.raises(SingularPointError):
            fundamental_solution(1.0, np.array([0.3, 0.3]), np.array([0.3, 0.3]))

    def test_gradient_matches_finite_difference(self):
        s = 2.0 + 1.0j
        x = np.array([0.1, -0.2])
        y = np.array([0.7, 0.4])
        grad = grad_y_fundamental_solution(s, x, y)
        h = 1e-6
        for d in range(2):
            step = np.zeros(2)
            step[d] = h
            fd = (fundamental_solution(s, x, y + step) - fundamental_solution(s, x, y - step)) / (2 * h)
            assert grad[d] == pytest.approx(fd, rel=1e-6)


class TestHeatKernel:
    """Time-domain heat kernels used by the manufactured and demo data"""

    def test_zero_before_start(self):
        assert heat_kernel_time(1.0, [0.0, 0.0], [1.0, 1.0], 0.0) == 0.0
        assert heat_kernel_time(1.0, [0.0, 0.0], [1.0, 1.0], -1.0) == 0.0

    def test_peak_value(self):
        assert heat_kernel_time(0.8, [1.0, 2.0], [1.0, 2.0], 0.5) == pytest.approx(1.0 / (4 * np.pi * 0.8 * 0.5))

    @pytest.mark.parametrize("t", [0.01, 0.5, 3.0])
    def test_unit_mass(self, t):
        src = np.array([0.3, -0.2])
        radial = lambda r: 2.0 * np.pi * r * heat_kernel_time(0.8, src + np.array([r, 0.0]), src, t)
        mass, _ = integrate.quad(radial, 0.0, 20.0 * np.sqrt(4.0 * 0.8 * t), epsabs=1e-14, epsrel=1e-12)
        assert mass == pytest.approx(1.0, abs=1e-10)

    def test_gradient_matches_finite_difference(self):
        x = np.array([0.3, 0.1])
        src = np.array([1.5, 1.6])
        grad = heat_kernel_time_gradient(0.8, x, src, 0.7)
        h = 1e-6
        for d in range(2):
            step = np.zeros(2)
            step[d] = h
            fd = (heat_kernel_time(0.8, x + step, src, 0.7) - heat_kernel_time(0.8, x - step, src, 0.7)) / (2 * h)
            assert grad[d] == pytest.approx(fd, rel=1e-6)

    def test_rejects_nonpositive_diffusivity(self):
        with pytest.raises(ValueError):
            heat_kernel_time(0.0, [0.0, 0.0], [1.0, 1.0], 1.0)

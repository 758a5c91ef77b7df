"""Ultraspherical polynomial ladder used by the kernel expansions.

Two families are provided. ``ultraspherical_p`` evaluates the classical
ultraspherical (Gegenbauer-type) polynomial of degree ``l`` with real
parameter ``lam``; ``ultraspherical_q`` evaluates minus its derivative with
respect to the parameter. Both are polynomials in ``lam``, so the values at
non-positive integer parameters are the honest limits, with no poles and no
special-casing.

Everything is evaluated by three-term recurrences, which stay stable for the
small degrees (a few tens) the kernel formulas need. The classical explicit
sum with Gamma-function ratios exists only as a cross-check oracle in the
test suite, because it degenerates exactly at the parameter values the
kernels care about.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ultraspherical_p",
    "ultraspherical_q",
    "ultraspherical_p_table",
    "ultraspherical_pq_table",
]


def ultraspherical_p_table(degree: int, lam: float, xi):
    """Table of P_0 .. P_degree at parameter ``lam`` and argument ``xi``.

    ``xi`` may be a scalar or an ndarray; the result has shape
    ``(degree + 1,) + shape(xi)``. The recurrence is

        l P_l = 2 (l + lam - 1) xi P_{l-1} - (l + 2 lam - 2) P_{l-2}

    seeded by P_0 = 1 and P_1 = 2 lam xi.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    xi = np.asarray(xi, dtype=float)
    table = np.empty((degree + 1,) + xi.shape, dtype=float)
    table[0] = 1.0
    if degree >= 1:
        table[1] = 2.0 * lam * xi
    for l in range(2, degree + 1):
        table[l] = (
            2.0 * (l + lam - 1.0) * xi * table[l - 1]
            - (l + 2.0 * lam - 2.0) * table[l - 2]
        ) / l
    return table


def ultraspherical_pq_table(degree: int, lam: float, xi):
    """Tables of P_l and Q_l for l = 0 .. degree.

    Q_l is minus the parameter derivative of P_l. Differentiating the P
    recurrence in the parameter gives

        l Q_l = -2 xi P_{l-1} + 2 (l + lam - 1) xi Q_{l-1}
                + 2 P_{l-2} - (l + 2 lam - 2) Q_{l-2}

    with Q_0 = 0 and Q_1 = -2 xi, valid for every real parameter.
    """
    xi = np.asarray(xi, dtype=float)
    p = ultraspherical_p_table(degree, lam, xi)
    q = np.zeros_like(p)
    if degree >= 1:
        q[1] = -2.0 * xi
    for l in range(2, degree + 1):
        q[l] = (
            -2.0 * xi * p[l - 1]
            + 2.0 * (l + lam - 1.0) * xi * q[l - 1]
            + 2.0 * p[l - 2]
            - (l + 2.0 * lam - 2.0) * q[l - 2]
        ) / l
    return p, q


def ultraspherical_p(degree: int, lam: float, xi):
    """Value of the degree-``degree`` polynomial; scalar in, scalar out."""
    return ultraspherical_p_table(degree, lam, xi)[degree]


def ultraspherical_q(degree: int, lam: float, xi):
    """Minus the parameter derivative of ``ultraspherical_p``."""
    _, q = ultraspherical_pq_table(degree, lam, xi)
    return q[degree]

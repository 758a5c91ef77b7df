"""Independent oracles for the test suite.

Everything here is computed by a route different from the package code:
explicit hypergeometric-style sums instead of recurrences, closed-form ball
integrals instead of quadrature, and prefactors rebuilt from the Laplacian
recursion instead of Gamma-function formulas.
"""

import math

import numpy as np


# -- ultraspherical family -------------------------------------------------------


def rising(a: float, j: int) -> float:
    """Rising factorial a (a+1) ... (a+j-1); 1 for j = 0."""
    out = 1.0
    for i in range(j):
        out *= a + i
    return out


def gegenbauer_explicit(l: int, lam: float, xi: float) -> float:
    """Degree-l coefficient of (1 - 2 xi t + t^2)^(-lam) by the explicit sum.

    The rising-factorial form continues analytically through lam <= 0,
    matching the generating-function convention at every real parameter.
    """
    total = 0.0
    for k in range(l // 2 + 1):
        total += (-1.0) ** k * rising(lam, l - k) / (
            math.factorial(k) * math.factorial(l - 2 * k)
        ) * (2.0 * xi) ** (l - 2 * k)
    return total


def gegenbauer_lam_derivative(l: int, lam: float, xi: float, h: float = 1e-5) -> float:
    """Parameter derivative of the explicit sum, Richardson-extrapolated."""

    def diff(step):
        return (gegenbauer_explicit(l, lam + step, xi) - gegenbauer_explicit(l, lam - step, xi)) / (
            2.0 * step
        )

    return (4.0 * diff(h / 2.0) - diff(h)) / 3.0


# -- kernel prefactors via the Laplacian recursion ---------------------------------


def fundamental_scale_chain(order: int) -> float:
    """Coefficient of r^(2m-3) in the order-m radial fundamental solution
    for surfaces in R^3, rebuilt from Laplacian(c r^s) = c s (s+1) r^(s-2)
    and the order-1 seed 1/(4 pi)."""
    c = 1.0 / (4.0 * math.pi)
    for m in range(2, order + 1):
        s = 2 * m - 3
        c = c / (s * (s + 1))
    return c


def poisson_scale_chain(order: int) -> float:
    """Coefficient of x_j r^(2m-5) in the gradient of the radial solution."""
    return fundamental_scale_chain(order) * (2 * order - 3)


# -- growth series summed from the definition --------------------------------------


def fundamental_growth_manual(order: int, x, v) -> float:
    """Scalar growth part in R^3: degrees 0..2m of the explicit expansion."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ax, av = float(np.linalg.norm(x)), float(np.linalg.norm(v))
    xi = float(x @ v) / (ax * av)
    big, small = max(ax, av), min(ax, av)
    lam = (2 + 1) / 2.0 - order
    total = 0.0
    for l in range(2 * order + 1):
        total += gegenbauer_explicit(l, lam, xi) * (small / big) ** l
    return fundamental_scale_chain(order) * total * big ** (2 * order - 3)


def poisson_growth_manual(order: int, j: int, x, v) -> float:
    """Vector growth component in R^3: degrees 0..2m-1, prefactor (x-v)_j."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ax, av = float(np.linalg.norm(x)), float(np.linalg.norm(v))
    xi = float(x @ v) / (ax * av)
    big, small = max(ax, av), min(ax, av)
    lam = (2 + 3) / 2.0 - order
    total = 0.0
    for l in range(2 * order):
        total += gegenbauer_explicit(l, lam, xi) * (small / big) ** l
    return poisson_scale_chain(order) * (x[j] - v[j]) * total * big ** (2 * order - 5)


def growth_gradient_defect(order: int, x, v) -> np.ndarray:
    """Closed form of grad(scalar growth) - (vector growth) in R^3.

    One top-degree term of the vector window: the scalar window's derivative
    stops one degree short of it below the radial diagonal and overshoots it
    by one degree above.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ax, av = float(np.linalg.norm(x)), float(np.linalg.norm(v))
    xi = float(x @ v) / (ax * av)
    big, small = max(ax, av), min(ax, av)
    lam = (2 + 3) / 2.0 - order
    deg = 2 * order - 1 if ax < av else 2 * order
    sign = -1.0 if ax < av else 1.0
    weight = gegenbauer_explicit(deg, lam, xi)
    return sign * poisson_scale_chain(order) * x * weight * (small / big) ** deg * big ** (
        2 * order - 5
    )


# -- sphere and ball closed forms ---------------------------------------------------


def double_layer_eigenvalue(l: int) -> float:
    """Eigenvalue of the sphere double layer on degree-l spherical harmonics."""
    return 1.0 / (2.0 * (2 * l + 1))


def newtonian_ball_order1(y: float) -> float:
    """Unit-ball integral of 1/(4 pi |x - y_point|) at |y_point| = y < 1."""
    return (3.0 - y * y) / 6.0


def newtonian_ball_order2(y: float) -> float:
    """Unit-ball integral of |x - y_point| / (8 pi) at |y_point| = y < 1.

    From the spherical mean of |x - y|: s + y^2/(3 s) outside radius y and
    y + s^2/(3 y) inside, integrated in s. Its Laplacian reproduces the
    order-1 value, which pins both constants.
    """
    return 1.0 / 8.0 + y * y / 12.0 - y ** 4 / 120.0


def harmonic_ball_extension(l: int, radius: float, boundary_value: float = 1.0) -> float:
    """Interior value of the harmonic extension of one solid harmonic."""
    return boundary_value * radius ** l


# -- batched finite-difference stencils ----------------------------------------------


def _batch_steps(X, step):
    return np.broadcast_to(np.asarray(step, dtype=float), (X.shape[0],))


def _grad4_batch(fn, X, h):
    dim = X.shape[1]
    out = np.empty_like(X)
    for axis in range(dim):
        e = np.zeros_like(X)
        e[:, axis] = h
        out[:, axis] = (
            -fn(X + 2 * e) + 8.0 * fn(X + e) - 8.0 * fn(X - e) + fn(X - 2 * e)
        ) / (12.0 * h)
    return out


def _lap4_batch(fn, X, h):
    dim = X.shape[1]
    acc = -30.0 * dim * fn(X)
    for axis in range(dim):
        e = np.zeros_like(X)
        e[:, axis] = h
        acc = acc + (
            -fn(X + 2 * e) + 16.0 * fn(X + e) + 16.0 * fn(X - e) - fn(X - 2 * e)
        )
    return acc / (12.0 * h * h)


def batched_fd_gradient(fn, X, step):
    """Sixth-order central gradient of fn over a batch of points (B, d).

    ``fn`` maps (B, d) arrays to (B,) values; ``step`` is a scalar or one
    step per row. Fourth-order stencils at h and h/2 are combined by
    Richardson extrapolation.
    """
    X = np.asarray(X, dtype=float)
    h = _batch_steps(X, step)
    return (16.0 * _grad4_batch(fn, X, h / 2.0) - _grad4_batch(fn, X, h)) / 15.0


def batched_fd_laplacian(fn, X, step):
    """Sixth-order Laplacian of fn over a batch of points (B, d); same
    scheme and calling convention as batched_fd_gradient."""
    X = np.asarray(X, dtype=float)
    h = _batch_steps(X, step)
    return (16.0 * _lap4_batch(fn, X, h / 2.0) - _lap4_batch(fn, X, h)) / 15.0

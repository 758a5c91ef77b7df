"""Kernel families for polyharmonic layer potentials.

The library works with two chains of translation kernels on R^{n+1}:

* the order-m Poisson-type components ``poisson_component`` (a vector kernel;
  component j carries a factor ``x_j - v_j``), whose Laplacian in the first
  argument steps the order down by one, and
* the order-m fundamental chain ``fundamental`` (scalar), stepping down the
  same way, whose x-gradient is exactly the Poisson vector of the same order.

On bounded domains the kernels are used as they are. On unbounded graph-like
domains the raw kernels grow at infinity; the usable kernels
``poisson_kernel`` / ``fundamental_kernel`` subtract a finite ultraspherical
series (``poisson_growth`` / ``fundamental_growth``) that captures the growth.
For widely separated radii the subtraction cancels catastrophically, so the
implementation switches to summing the convergent tail of the same expansion.

All evaluators broadcast over trailing point axes: ``x`` and ``v`` are arrays
whose last axis has length n + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ultraspherical import ultraspherical_p_table, ultraspherical_pq_table

__all__ = [
    "KernelSpec",
    "CoincidentPointsError",
    "EqualRadiiError",
    "sphere_area",
    "laplacian_factor_component",
    "laplacian_factor_radial",
    "poisson_component",
    "poisson_component_jacobian",
    "poisson_growth",
    "poisson_kernel",
    "poisson_field",
    "poisson_normal_pairing",
    "poisson_normal_pairing_gradient",
    "fundamental",
    "fundamental_growth",
    "fundamental_kernel",
    "fundamental_gradient",
]

BOUNDED = "bounded"
GRAPH = "graph"

# Switch-over radius ratio between subtraction and tail summation in graph
# mode. Both paths are accurate in a band around it; unit tests pin their
# agreement there.
_TAIL_RHO = 0.5
_TAIL_EPS = 1e-18
_TAIL_MAX_TERMS = 600


class CoincidentPointsError(ValueError):
    """Kernel evaluated at x = v."""


class EqualRadiiError(ValueError):
    """Growth series evaluated on the radial diagonal |x| = |v|."""


def sphere_area(n: int) -> float:
    """Surface area of the unit n-sphere embedded in R^{n+1}."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def laplacian_factor_component(s: float, n: int) -> float:
    """Factor f(s) in Delta(x_j |x|^s) = f(s) x_j |x|^(s-2) on R^{n+1}."""
    return s * (s + n + 1.0)


def laplacian_factor_radial(s: float, n: int) -> float:
    """Factor f(s) in Delta(|x|^s) = f(s) |x|^(s-2) on R^{n+1}."""
    return s * (s + n - 1.0)


def _poisson_branch_is_log(n: int, order: int) -> bool:
    return (n % 2 == 1) and (2 * order >= n + 3)


def _fundamental_branch_is_log(n: int, order: int) -> bool:
    return (n % 2 == 1) and (2 * order >= n + 1)


def _poisson_prefactor(n: int, order: int) -> tuple[float, float]:
    """Scale and log shift of the order-m Poisson component.

    Power branch: the scale is -1/omega_n divided by the product of the
    component Laplacian factors stepping the order up from 1. The log branch
    (odd n, large order) replaces the vanishing factor by a logarithmic
    primitive; the returned shift enters as (log r - shift).
    """
    cn = -1.0 / sphere_area(n)
    if not _poisson_branch_is_log(n, order):
        prod = 1.0
        for k in range(1, order):
            f = laplacian_factor_component(2 * k - n - 1, n)
            assert f != 0.0, "power branch hit a vanishing ladder factor"
            prod *= f
        return cn / prod, 0.0
    prod = float(n + 1)
    for k in range(1, (n + 1) // 2):
        f = laplacian_factor_component(2 * k - n - 1, n)
        assert f != 0.0
        prod *= f
    s_idx = 2
    while s_idx <= 2 * order - n - 3:
        f = laplacian_factor_component(s_idx, n)
        assert f != 0.0
        prod *= f
        s_idx += 2
    shift = sum(
        1.0 / (2 * t) + 1.0 / (2 * t + n + 1)
        for t in range(1, order - (n + 3) // 2 + 1)
    )
    return cn / prod, shift


def _fundamental_prefactor(n: int, order: int) -> tuple[float, float]:
    """Scale and log shift of the order-m fundamental kernel."""
    base = 1.0 / ((n - 1) * sphere_area(n))
    if not _fundamental_branch_is_log(n, order):
        prod = 1.0
        for k in range(1, order):
            f = laplacian_factor_radial(2 * k - n + 1, n)
            assert f != 0.0
            prod *= f
        return base / prod, 0.0
    prod = float(n - 1)
    for k in range(1, (n - 1) // 2):
        f = laplacian_factor_radial(2 * k - n + 1, n)
        assert f != 0.0
        prod *= f
    s_idx = 2
    while s_idx <= 2 * order - n - 1:
        f = laplacian_factor_radial(s_idx, n)
        assert f != 0.0
        prod *= f
        s_idx += 2
    shift = -1.0 / (n + 1) + sum(
        1.0 / (2 * t) + 1.0 / (2 * t + n - 1)
        for t in range(1, order - (n + 1) // 2 + 1)
    )
    return base / prod, shift


@dataclass(frozen=True)
class KernelSpec:
    """Dimension, order, and domain mode of a kernel family.

    ``n`` is the boundary dimension (points live in R^{n+1}), ``order`` the
    kernel order m >= 1. ``mode`` selects bounded-domain kernels (used as-is)
    or graph-domain kernels (growth series subtracted). ``shift_point``
    recenters the growth series; radii in the series are measured from it.
    """

    n: int = 2
    order: int = 1
    mode: str = BOUNDED
    shift_point: tuple[float, ...] | None = None

    flux_scale: float = field(init=False, repr=False)
    poisson_scale: float = field(init=False, repr=False)
    newton_scale: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.mode not in (BOUNDED, GRAPH):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.shift_point is not None:
            pt = tuple(float(c) for c in self.shift_point)
            if len(pt) != self.n + 1:
                raise ValueError("shift_point must have n + 1 coordinates")
            object.__setattr__(self, "shift_point", pt)
        area = sphere_area(self.n)
        object.__setattr__(self, "flux_scale", 1.0 / area)
        object.__setattr__(self, "poisson_scale", -1.0 / area)
        object.__setattr__(self, "newton_scale", 1.0 / ((self.n - 1) * area))

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def poisson_uses_log(self) -> bool:
        return _poisson_branch_is_log(self.n, self.order)

    @property
    def fundamental_uses_log(self) -> bool:
        return _fundamental_branch_is_log(self.n, self.order)

    def with_order(self, order: int) -> "KernelSpec":
        return KernelSpec(self.n, order, self.mode, self.shift_point)

    def _shift_array(self) -> np.ndarray:
        if self.shift_point is None:
            return np.zeros(self.dim)
        return np.asarray(self.shift_point, dtype=float)


def _points(spec: KernelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"points must have {spec.dim} coordinates")
    return x


def _separation(x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = x - v
    r = np.sqrt(np.einsum("...k,...k->...", diff, diff))
    if np.any(r == 0.0):
        raise CoincidentPointsError("kernel evaluated at coincident points")
    return diff, r


def poisson_component(spec: KernelSpec, j: int, x, v):
    """Raw order-m Poisson component j, no growth subtraction."""
    x = _points(spec, x)
    v = _points(spec, v)
    diff, r = _separation(x, v)
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    p = 2 * spec.order - (spec.n + 3)
    out = scale * diff[..., j] * r**p
    if spec.poisson_uses_log:
        out = out * (np.log(r) - shift)
    return out


def poisson_component_jacobian(spec: KernelSpec, x, v):
    """Jacobian of the raw Poisson vector in x: entry [..., j, k].

    Closed-form differentiation of the power (and log) forms; used to
    evaluate gradients of double-layer potentials without numerical
    differentiation.
    """
    x = _points(spec, x)
    v = _points(spec, v)
    diff, r = _separation(x, v)
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    p = 2 * spec.order - (spec.n + 3)
    dim = spec.dim
    eye = np.eye(dim)
    rp = r**p
    rp2 = r ** (p - 2)
    outer = diff[..., :, None] * diff[..., None, :]
    if not spec.poisson_uses_log:
        jac = scale * (eye * rp[..., None, None] + p * outer * rp2[..., None, None])
    else:
        lg = np.log(r) - shift
        jac = scale * (
            eye * (rp * lg)[..., None, None]
            + outer * (rp2 * (p * lg + 1.0))[..., None, None]
        )
    return jac


def fundamental(spec: KernelSpec, x, v):
    """Raw order-m fundamental kernel, no growth subtraction."""
    x = _points(spec, x)
    v = _points(spec, v)
    _, r = _separation(x, v)
    scale, shift = _fundamental_prefactor(spec.n, spec.order)
    p = 2 * spec.order - (spec.n + 1)
    out = scale * r**p
    if spec.fundamental_uses_log:
        out = out * (np.log(r) - shift)
    return out


def _radial_frame(spec: KernelSpec, x: np.ndarray, v: np.ndarray):
    """Recentred radii, ratio, and direction cosine for the growth series."""
    x0 = spec._shift_array()
    xs = x - x0
    vs = v - x0
    ax = np.sqrt(np.einsum("...k,...k->...", xs, xs))
    av = np.sqrt(np.einsum("...k,...k->...", vs, vs))
    if np.any(ax == 0.0) or np.any(av == 0.0):
        raise ValueError("growth series needs both radii positive")
    xi = np.einsum("...k,...k->...", xs, vs) / (ax * av)
    xi = np.clip(xi, -1.0, 1.0)
    big = np.maximum(ax, av)
    rho = np.minimum(ax, av) / big
    return ax, av, big, rho, xi


def _series_weights(degree, lam, xi, use_log, log_big, shift):
    """Per-degree weights of the growth expansion, shape (degree+1, ...)."""
    if not use_log:
        return ultraspherical_p_table(degree, lam, xi)
    p, q = ultraspherical_pq_table(degree, lam, xi)
    return 0.5 * q + (log_big - shift) * p


def _growth_sum(degree, lam, xi, rho, use_log, log_big, shift):
    weights = _series_weights(degree, lam, xi, use_log, log_big, shift)
    ls = np.arange(degree + 1).reshape((degree + 1,) + (1,) * np.ndim(rho))
    return np.sum(weights * rho**ls, axis=0)


def _tail_sum(start, lam, xi, rho, use_log, log_big, shift):
    """Sum of series terms from ``start`` upward, truncated geometrically."""
    rho_max = float(np.max(rho))
    if rho_max >= 1.0:
        raise ValueError("tail summation requires radius ratio < 1")
    if rho_max <= 0.0:
        return np.zeros_like(rho)
    extra = int(math.ceil(math.log(_TAIL_EPS) / math.log(rho_max))) if rho_max < 1 else _TAIL_MAX_TERMS
    extra = min(max(extra, 8), _TAIL_MAX_TERMS)
    top = start + extra
    weights = _series_weights(top, lam, xi, use_log, log_big, shift)
    ls = np.arange(start, top + 1).reshape((extra + 1,) + (1,) * np.ndim(rho))
    return np.sum(weights[start:] * rho**ls, axis=0)


def poisson_growth(spec: KernelSpec, j: int, x, v):
    """Finite series capturing the growth of the Poisson component.

    Zero for order 1. Degrees 0 .. 2m-1 of the ultraspherical expansion in
    the radius ratio, with parameter (n+3)/2 - m; log branches mix in the
    parameter-derivative family. Undefined on the radial diagonal.
    """
    x = _points(spec, x)
    v = _points(spec, v)
    x, v = np.broadcast_arrays(x, v)
    if spec.order == 1:
        return np.zeros(x.shape[:-1])
    ax, av, big, rho, xi = _radial_frame(spec, x, v)
    if np.any(ax == av):
        raise EqualRadiiError("growth series undefined on the radial diagonal")
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    lam = (spec.n + 3) / 2.0 - spec.order
    degree = 2 * spec.order - 1
    use_log = spec.poisson_uses_log
    log_big = np.log(big) if use_log else 0.0
    s = _growth_sum(degree, lam, xi, rho, use_log, log_big, shift)
    return scale * (x[..., j] - v[..., j]) * s * big ** (2 * spec.order - spec.n - 3)


def fundamental_growth(spec: KernelSpec, x, v):
    """Growth series of the fundamental kernel (degrees 0 .. 2m).

    Zero for order 1 by convention, mirroring the Poisson side. Symmetric in
    its arguments; undefined on the radial diagonal.
    """
    x = _points(spec, x)
    v = _points(spec, v)
    x, v = np.broadcast_arrays(x, v)
    if spec.order == 1:
        return np.zeros(x.shape[:-1])
    ax, av, big, rho, xi = _radial_frame(spec, x, v)
    if np.any(ax == av):
        raise EqualRadiiError("growth series undefined on the radial diagonal")
    scale, shift = _fundamental_prefactor(spec.n, spec.order)
    lam = (spec.n + 1) / 2.0 - spec.order
    degree = 2 * spec.order
    use_log = spec.fundamental_uses_log
    log_big = np.log(big) if use_log else 0.0
    s = _growth_sum(degree, lam, xi, rho, use_log, log_big, shift)
    return scale * s * big ** (2 * spec.order - spec.n - 1)


def _graph_eval(spec, x, v, raw_fn, series_degree, lam, use_log, scale, shift, power, vector_factor):
    """Shared graph-mode dispatch: diagonal, subtraction, or tail summation."""
    x, v = np.broadcast_arrays(x, v)
    point_shape = x.shape[:-1]
    x = x.reshape(-1, spec.dim)
    v = v.reshape(-1, spec.dim)
    ax, av, big, rho, xi = _radial_frame(spec, x, v)
    out = np.empty(rho.shape)
    diag = ax == av
    tail = (~diag) & (rho < _TAIL_RHO)
    near = (~diag) & (~tail)

    if np.any(diag):
        out[diag] = raw_fn(spec, x[diag], v[diag])
    if np.any(near):
        sub = raw_fn(spec, x[near], v[near])
        log_big = np.log(big[near]) if use_log else 0.0
        s = _growth_sum(series_degree, lam, xi[near], rho[near], use_log, log_big, shift)
        factor = vector_factor(x[near], v[near])
        out[near] = sub - scale * factor * s * big[near] ** power
    if np.any(tail):
        log_big = np.log(big[tail]) if use_log else 0.0
        s = _tail_sum(series_degree + 1, lam, xi[tail], rho[tail], use_log, log_big, shift)
        factor = vector_factor(x[tail], v[tail])
        out[tail] = scale * factor * s * big[tail] ** power
    return out.reshape(point_shape)


def poisson_kernel(spec: KernelSpec, j: int, x, v):
    """Order-m Poisson component in the spec's domain mode.

    Bounded mode returns the raw component. Graph mode subtracts the growth
    series off the radial diagonal (raw value on it), switching to tail
    summation at small radius ratio to avoid cancellation.
    """
    x = _points(spec, x)
    v = _points(spec, v)
    if spec.mode == BOUNDED or spec.order == 1:
        return poisson_component(spec, j, x, v)
    _separation(*np.broadcast_arrays(x, v))
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    return _graph_eval(
        spec,
        x,
        v,
        lambda sp, a, b: poisson_component(sp, j, a, b),
        2 * spec.order - 1,
        (spec.n + 3) / 2.0 - spec.order,
        spec.poisson_uses_log,
        scale,
        shift,
        2 * spec.order - spec.n - 3,
        lambda a, b: a[..., j] - b[..., j],
    )


def fundamental_kernel(spec: KernelSpec, x, v):
    """Order-m fundamental kernel in the spec's domain mode (symmetric)."""
    x = _points(spec, x)
    v = _points(spec, v)
    if spec.mode == BOUNDED or spec.order == 1:
        return fundamental(spec, x, v)
    _separation(*np.broadcast_arrays(x, v))
    scale, shift = _fundamental_prefactor(spec.n, spec.order)
    return _graph_eval(
        spec,
        x,
        v,
        fundamental,
        2 * spec.order,
        (spec.n + 1) / 2.0 - spec.order,
        spec.fundamental_uses_log,
        scale,
        shift,
        2 * spec.order - spec.n - 1,
        lambda a, b: 1.0,
    )


def poisson_field(spec: KernelSpec, x, v):
    """Full Poisson vector; component j along the last axis."""
    comps = [poisson_kernel(spec, j, x, v) for j in range(spec.dim)]
    return np.stack(comps, axis=-1)


def fundamental_gradient(spec: KernelSpec, x, v):
    """x-gradient of the fundamental kernel, in closed form.

    Bounded mode: exactly the Poisson vector, and the v-gradient is its
    negative (vector kernel antisymmetric, scalar kernel symmetric).

    Graph mode: the Poisson vector plus one explicit boundary term. The
    scalar growth window (degrees 0 .. 2m) does not differentiate onto the
    vector growth window (degrees 0 .. 2m-1) exactly: the x_j-weighted part
    of the derivative series stops one degree short of the vector window
    below the radial diagonal and overshoots it by one degree above, so the
    true gradient differs from the vector kernel by the single top-degree
    ultraspherical term restoring the match. Undefined on the diagonal.
    """
    comps = poisson_field(spec, x, v)
    if spec.mode == BOUNDED or spec.order == 1:
        return comps
    x = _points(spec, x)
    v = _points(spec, v)
    x, v = np.broadcast_arrays(x, v)
    ax, av, big, rho, xi = _radial_frame(spec, x, v)
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    lam = (spec.n + 3) / 2.0 - spec.order
    weights = _series_weights(
        2 * spec.order, lam, xi, spec.poisson_uses_log, np.log(big), shift
    )
    inner = ax < av
    w_top = np.where(inner, weights[2 * spec.order - 1], -weights[2 * spec.order])
    deg = np.where(inner, 2 * spec.order - 1, 2 * spec.order)
    xs = x - spec._shift_array()
    radial = w_top * rho**deg * big ** (2 * spec.order - spec.n - 3)
    return comps + scale * xs * radial[..., None]


def poisson_normal_pairing(spec: KernelSpec, x, q, normal):
    """<Poisson vector (x, q), normal> evaluated in one fused pass.

    Assembly workhorse: avoids stacking the vector components. Bounded mode
    only (operator assembly on closed surfaces never needs growth series).
    """
    if spec.mode != BOUNDED:
        raise ValueError("normal pairing is a bounded-mode operation")
    x = _points(spec, x)
    q = _points(spec, q)
    diff = x - q
    r = np.sqrt(np.einsum("...k,...k->...", diff, diff))
    if np.any(r == 0.0):
        raise CoincidentPointsError("kernel evaluated at coincident points")
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    p = 2 * spec.order - (spec.n + 3)
    dot = np.einsum("...k,...k->...", diff, normal)
    out = scale * dot * r**p
    if spec.poisson_uses_log:
        out = out * (np.log(r) - shift)
    return out


def poisson_normal_pairing_gradient(spec: KernelSpec, x, q, normal):
    """x-gradient of ``poisson_normal_pairing``; closed form, bounded mode."""
    if spec.mode != BOUNDED:
        raise ValueError("normal pairing is a bounded-mode operation")
    x = _points(spec, x)
    q = _points(spec, q)
    diff = x - q
    r = np.sqrt(np.einsum("...k,...k->...", diff, diff))
    if np.any(r == 0.0):
        raise CoincidentPointsError("kernel evaluated at coincident points")
    scale, shift = _poisson_prefactor(spec.n, spec.order)
    p = 2 * spec.order - (spec.n + 3)
    dot = np.einsum("...k,...k->...", diff, normal)
    rp = r**p
    rp2 = r ** (p - 2)
    nb = np.broadcast_to(normal, diff.shape)
    if not spec.poisson_uses_log:
        return scale * (nb * rp[..., None] + p * (dot * rp2)[..., None] * diff)
    lg = np.log(r) - shift
    return scale * (
        nb * (rp * lg)[..., None]
        + (dot * rp2 * (p * lg + 1.0))[..., None] * diff
    )

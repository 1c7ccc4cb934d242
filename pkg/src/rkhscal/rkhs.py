"""
Finite kernel expansions, kernel interpolation, and functions of the form

    f(x) = integral over the domain of Phi(x - t) v(t) dt.

For such f the native-space inner product with any g reduces to the L2 inner
product of v and g, which gives a computable native norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from rkhscal.errors import ConfigError, NumericalError
from rkhscal.kernel import MaternKernel, _as_points, kernel_matrix
from rkhscal.quadrature import (
    QuadratureRule,
    box_rule,
    line_rule,
    lower_triangle_rule,
    split_line_rule,
)


@dataclass(frozen=True)
class KernelExpansion:
    """g(x) = sum_i coeffs[i] * Phi(x - centers[i])."""

    kernel: MaternKernel
    centers: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        c = _as_points(self.centers, self.kernel.dim)
        b = np.asarray(self.coeffs, dtype=float).ravel()
        if c.shape[0] == 0 or c.shape[0] != b.shape[0]:
            raise ConfigError("centers and coeffs must have equal, nonzero length")
        if c.shape[1] != self.kernel.dim:
            raise ConfigError("center dimension does not match kernel")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coeffs", b)

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x, self.kernel.dim)
        return kernel_matrix(self.kernel, x, self.centers) @ self.coeffs

    def norm_sq(self) -> float:
        return rkhs_inner_product(self, self)


def rkhs_inner_product(g1: KernelExpansion, g2: KernelExpansion) -> float:
    """Native-space inner product of two expansions, beta^T Phi(X1, X2) gamma."""
    if g1.kernel != g2.kernel:
        raise ConfigError("expansions use different kernels")
    if g1.centers is g2.centers or (
        g1.centers.shape == g2.centers.shape and np.array_equal(g1.centers, g2.centers)
    ):
        K = kernel_matrix(g1.kernel, g1.centers)
    else:
        K = kernel_matrix(g1.kernel, g1.centers, g2.centers)
    return float(g1.coeffs @ K @ g2.coeffs)


def interpolate(kernel: MaternKernel, X, values, jitter: float = 1e-10) -> KernelExpansion:
    """
    Minimum-norm interpolant of ``values`` at the points of ``X``.

    Solves (Phi + jitter I) c = values by Cholesky.  With ``jitter == 0`` and
    repeated points the system is singular and NumericalError is raised.
    """
    pts = _as_points(X, kernel.dim)
    y = np.asarray(values, dtype=float).ravel()
    if y.shape[0] != pts.shape[0]:
        raise ConfigError("values and design lengths differ")
    if not np.all(np.isfinite(y)):
        raise ConfigError("values must be finite")
    if jitter < 0:
        raise ConfigError("jitter must be nonnegative")
    K = kernel_matrix(kernel, pts)
    K[np.diag_indices_from(K)] += jitter
    try:
        c = linalg.cho_solve(linalg.cho_factor(K, lower=True), y)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"interpolation system is singular: {exc}") from None
    return KernelExpansion(kernel, pts, c)


@dataclass(frozen=True)
class IntegralClassFunction:
    """
    f(x) = integral over [lower, upper] of Phi(x - t) v(t) dt.

    ``v`` takes an array of points (shape (N,) in one dimension, (N, d)
    otherwise) and returns an array of shape (N,).  ``breakpoints`` lists
    locations where v is not smooth (one dimension only); quadrature panels
    are split there.
    """

    kernel: MaternKernel
    v: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    breakpoints: Sequence[float] = ()
    rule: QuadratureRule | None = field(default=None)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != (self.kernel.dim,) or hi.shape != lo.shape or np.any(hi <= lo):
            raise ConfigError("domain must be a nonempty box matching the kernel dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if self.rule is None:
            object.__setattr__(self, "rule", QuadratureRule.for_dim(self.kernel.dim))

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def with_rule(self, rule: QuadratureRule) -> "IntegralClassFunction":
        return IntegralClassFunction(self.kernel, self.v, self.lower, self.upper, self.breakpoints, rule)

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.v(t), dtype=float)
        return np.broadcast_to(out, t.shape[:1] if self.dim > 1 else t.shape).astype(float)

    def __call__(self, x) -> np.ndarray:
        return integral_class_eval(self, x)


def _density_1d(f: IntegralClassFunction, t: np.ndarray) -> np.ndarray:
    flat = t.ravel()
    return np.broadcast_to(np.asarray(f.v(flat), dtype=float), flat.shape).reshape(t.shape)


def integral_class_eval(f: IntegralClassFunction, x) -> np.ndarray:
    """
    Evaluate f at points ``x`` by composite Gauss-Legendre quadrature.

    In one dimension every evaluation point gets its own panel break at t = x
    (the kernel is not smooth across it).  Points outside the domain use the
    same integral.
    """
    rule = f.rule
    if f.dim == 1:
        x = np.asarray(x, dtype=float).ravel()
        t, w = split_line_rule(f.lower[0], f.upper[0], x, rule, f.breakpoints)
        vals = np.sum(w * f.kernel.from_distance(np.abs(x[:, None] - t)) * _density_1d(f, t), axis=1)
    else:
        x = _as_points(x, f.dim)
        t, w = box_rule(f.lower, f.upper, rule)
        wv = w * f.density(t)
        vals = np.empty(x.shape[0])
        for s in range(0, x.shape[0], 256):
            vals[s : s + 256] = kernel_matrix(f.kernel, x[s : s + 256], t) @ wv
    if not np.all(np.isfinite(vals)):
        raise NumericalError("integral-class evaluation produced non-finite values")
    return vals


def rkhs_norm_sq_via_v(f: IntegralClassFunction) -> float:
    """
    Squared native norm, the double integral of v(s) Phi(s - t) v(t).

    In one dimension the integrand is symmetric in (s, t) and kinked on the
    diagonal, so the integral is taken as twice the integral over t < s with
    the inner range ending exactly at s.
    """
    rule = f.rule
    if f.dim == 1:
        lo, hi = f.lower[0], f.upper[0]
        s, ws = line_rule(lo, hi, rule, f.breakpoints)
        t, wt = lower_triangle_rule(lo, hi, s, rule, f.breakpoints)
        inner = np.sum(wt * f.kernel.from_distance(s[:, None] - t) * _density_1d(f, t), axis=1)
        val = 2.0 * float(np.sum(ws * _density_1d(f, s) * inner))
    else:
        t, w = box_rule(f.lower, f.upper, rule)
        wv = w * f.density(t)
        val = 0.0
        for a in range(0, t.shape[0], 512):
            val += float(wv[a : a + 512] @ (kernel_matrix(f.kernel, t[a : a + 512], t) @ wv))
    if not np.isfinite(val):
        raise NumericalError("native norm quadrature is not finite")
    return max(val, 0.0)


def l2_inner(f: IntegralClassFunction, g: Callable[[np.ndarray], np.ndarray], breakpoints=()) -> float:
    """L2 inner product of f's density v with a callable g over the domain."""
    if f.dim == 1:
        t, w = line_rule(f.lower[0], f.upper[0], f.rule, tuple(f.breakpoints) + tuple(breakpoints))
        return float(np.sum(w * _density_1d(f, t) * np.asarray(g(t), dtype=float).ravel()))
    t, w = box_rule(f.lower, f.upper, f.rule)
    return float(np.sum(w * f.density(t) * np.asarray(g(t), dtype=float).ravel()))


def native_inner_with_expansion(f: IntegralClassFunction, g: KernelExpansion) -> float:
    """<f, g> in the native space, computed as the L2 product of v and g by quadrature."""
    if f.kernel != g.kernel:
        raise ConfigError("function and expansion use different kernels")
    bp = tuple(g.centers[:, 0]) if f.dim == 1 else ()
    return l2_inner(f, g, breakpoints=bp)


def l2_distance(f: Callable, g: Callable, lower, upper, rule: QuadratureRule | None = None, breakpoints=()) -> float:
    """L2 norm of f - g over a box."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    rule = rule or QuadratureRule.for_dim(lower.size)
    if lower.size == 1:
        t, w = line_rule(lower[0], upper[0], rule, breakpoints)
    else:
        t, w = box_rule(lower, upper, rule)
    diff = np.asarray(f(t), dtype=float).ravel() - np.asarray(g(t), dtype=float).ravel()
    return float(np.sqrt(np.sum(w * diff * diff)))

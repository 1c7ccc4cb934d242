"""
Frequentist Kennedy-O'Hagan calibration with a fixed kernel and fixed lambda.

The estimator minimizes

    lam * Y_theta^T (Phi + n lam I)^-1 Y_theta,    Y_theta = y - y_s(X, theta),

over a box of parameters.  Up to the constant factor lam this is the
profile of the Gaussian likelihood with tau^2 / (n sigma^2) fixed at lam, and it
equals the optimal value of the kernel ridge regression objective for the
residuals Y_theta.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from rkhscal.errors import ConfigError, NumericalError
from rkhscal.kernel import MaternKernel, kernel_matrix
from rkhscal.krr import Dataset
from rkhscal.optimize import golden_section
from rkhscal.quadrature import QuadratureRule
from rkhscal.rkhs import IntegralClassFunction, rkhs_norm_sq_via_v

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class Simulator:
    """
    Deterministic computer model y_s(x, theta).

    ``fn(X, theta)`` takes design points of shape (n, d) and a parameter vector
    of shape (theta_dim,) and returns shape (n,).  ``linear_in_theta`` declares
    y_s affine in theta, which enables an exact minimizer of the objective.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    theta_dim: int = 1
    linear_in_theta: bool = False
    name: str = "custom"

    def __call__(self, X, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.theta_dim,):
            raise ConfigError(f"theta must have shape ({self.theta_dim},)")
        out = np.asarray(self.fn(np.asarray(X, dtype=float), theta), dtype=float).ravel()
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"simulator {self.name!r} returned non-finite output")
        return out


@dataclass
class CalibrationProblem:
    """Physical data, simulator, kernel, smoothing parameter and parameter box."""

    physical: Dataset
    sim: Simulator
    kernel: MaternKernel
    lam: float
    theta_lower: np.ndarray
    theta_upper: np.ndarray

    def __post_init__(self):
        self.theta_lower = np.atleast_1d(np.asarray(self.theta_lower, dtype=float))
        self.theta_upper = np.atleast_1d(np.asarray(self.theta_upper, dtype=float))
        if self.theta_lower.shape != (self.sim.theta_dim,) or self.theta_upper.shape != self.theta_lower.shape:
            raise ConfigError("parameter box does not match simulator theta_dim")
        if np.any(self.theta_upper < self.theta_lower):
            raise ConfigError("parameter box is empty")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.physical.design.dim != self.kernel.dim:
            raise ConfigError("kernel dimension does not match the physical design")

    @property
    def n(self) -> int:
        return self.physical.n

    @cached_property
    def gram(self) -> np.ndarray:
        return kernel_matrix(self.kernel, self.physical.X)

    @cached_property
    def factor(self):
        """Cholesky factor of Phi + n lam I, shared by every theta."""
        A = self.gram.copy()
        A[np.diag_indices_from(A)] += self.n * self.lam
        try:
            return linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"Phi + n*lambda*I factorization failed: {exc}") from None

    @cached_property
    def affine_parts(self):
        """(a, B) with y_s(X, theta) = a + B theta, for simulators flagged linear."""
        p = self.sim.theta_dim
        a = self.sim(self.physical.X, np.zeros(p))
        B = np.column_stack([self.sim(self.physical.X, np.eye(p)[k]) - a for k in range(p)])
        return a, B

    def with_observations(self, y) -> "CalibrationProblem":
        """Same design, simulator and lambda with new observations; factorizations are reused."""
        new = CalibrationProblem(
            Dataset(self.physical.design, y), self.sim, self.kernel, self.lam, self.theta_lower, self.theta_upper
        )
        for name in ("gram", "factor", "affine_parts"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new

    def in_box(self, theta) -> bool:
        theta = np.atleast_1d(theta)
        return bool(np.all(theta >= self.theta_lower) and np.all(theta <= self.theta_upper))

    def solve(self, Y) -> np.ndarray:
        return linalg.cho_solve(self.factor, Y)


def residual_vector(p: CalibrationProblem, theta) -> np.ndarray:
    """Y_theta = y - y_s(X, theta)."""
    return p.physical.y - p.sim(p.physical.X, theta)


def _residual_matrix(p: CalibrationProblem, thetas: np.ndarray) -> np.ndarray:
    if p.sim.linear_in_theta:
        a, B = p.affine_parts
        return (p.physical.y - a)[:, None] - B @ thetas.T
    return np.column_stack([residual_vector(p, t) for t in thetas])


def ko_objective(p: CalibrationProblem, theta) -> float:
    """lam * Y_theta^T (Phi + n lam I)^-1 Y_theta."""
    Y = residual_vector(p, theta)
    return float(p.lam * Y @ p.solve(Y))


def ko_objective_many(p: CalibrationProblem, thetas) -> np.ndarray:
    """Objective at each row of ``thetas`` with a single multi-right-hand-side solve."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1, p.sim.theta_dim)
    Y = _residual_matrix(p, thetas)
    return p.lam * np.sum(Y * p.solve(Y), axis=0)


@dataclass(frozen=True)
class ObjectiveTerms:
    train_term: float
    norm_term: float

    @property
    def total(self) -> float:
        return self.train_term + self.norm_term


def ko_objective_decomposed(p: CalibrationProblem, theta) -> ObjectiveTerms:
    """
    The two parts of the kernel ridge objective at its minimizer for Y_theta.

    With A = Phi + n lam I the fitted residuals are n lam A^-1 Y, so the
    training term is n lam^2 Y^T A^-2 Y, and the native norm of the fit is
    Y^T A^-1 Phi A^-1 Y, weighted by lam.
    """
    Y = residual_vector(p, theta)
    u = p.solve(Y)
    train = p.n * p.lam**2 * float(u @ u)
    norm = p.lam * float(u @ p.gram @ u)
    return ObjectiveTerms(train, norm)


@dataclass
class CalibrationResult:
    theta_hat: np.ndarray
    objective_value: float
    trace: dict = field(default_factory=dict)


def _grid(p: CalibrationProblem, points: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points) if hi > lo else np.array([lo]) for lo, hi in zip(p.theta_lower, p.theta_upper)]
    return np.array(list(itertools.product(*axes)), dtype=float), axes


def _refine_1d(p, theta0: float, step: float, xtol: float):
    lo = max(p.theta_lower[0], theta0 - step)
    hi = min(p.theta_upper[0], theta0 + step)
    x, fx = golden_section(lambda t: ko_objective(p, [t]), lo, hi, xtol=xtol)
    return np.array([x]), fx


def _refine_nd(p, theta0: np.ndarray, xtol: float):
    bounds = list(zip(p.theta_lower, p.theta_upper))
    res = optimize.minimize(
        lambda t: ko_objective(p, t),
        theta0,
        method="Nelder-Mead",
        bounds=bounds,
        options={"xatol": xtol, "fatol": 1e-14, "maxiter": 20000},
    )
    return np.clip(res.x, p.theta_lower, p.theta_upper), float(res.fun)


def _linear_exact(p: CalibrationProblem):
    """Unconstrained minimizer of the quadratic objective; None if singular or outside the box."""
    a, B = p.affine_parts
    r = p.physical.y - a
    AiB = p.solve(B)
    try:
        theta = np.linalg.solve(B.T @ AiB, AiB.T @ r)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(theta)) or not p.in_box(theta):
        return None
    return theta


def estimate_theta(p: CalibrationProblem, grid_points: int = 101, xtol: float = 1e-8) -> CalibrationResult:
    """
    Minimize the calibration objective over the parameter box.

    A coarse grid locates the basin; golden-section search (one parameter) or
    bounded Nelder-Mead (several) refines every grid point within TIE_TOL of
    the best (relative to its value).  For simulators linear in theta the exact minimizer of the
    quadratic form is also computed and the better of the two is returned.
    Ties are broken towards the lexicographically smallest theta.
    """
    grid, axes = _grid(p, grid_points)
    values = ko_objective_many(p, grid)
    if not np.all(np.isfinite(values)):
        raise NumericalError("objective is not finite on the parameter grid")
    best = float(values.min())
    # ties are relative: the objective scales with lam, which can be tiny
    tol = TIE_TOL * abs(best)
    tied = np.flatnonzero(values <= best + tol)
    trace = {"grid_points": grid_points, "grid_best": grid[tied[0]].tolist(), "grid_value": best, "ties": int(tied.size)}

    candidates = []
    for i in tied:
        if p.sim.theta_dim == 1:
            step = axes[0][1] - axes[0][0] if axes[0].size > 1 else 0.0
            candidates.append(_refine_1d(p, grid[i, 0], step, xtol))
        else:
            candidates.append(_refine_nd(p, grid[i], xtol))
    candidates.append((grid[tied[0]], best))

    if p.sim.linear_in_theta:
        exact = _linear_exact(p)
        trace["linear_exact"] = None if exact is None else exact.tolist()
        if exact is not None:
            candidates.append((exact, ko_objective(p, exact)))

    fmin = min(f for _, f in candidates)
    close = [(t, f) for t, f in candidates if f <= fmin + TIE_TOL * abs(fmin)]
    theta_hat, value = min(close, key=lambda tf: tuple(tf[0]))
    trace["refined_value"] = float(value)
    return CalibrationResult(np.asarray(theta_hat, dtype=float), float(value), trace)


@dataclass
class ThetaPrime:
    """Minimizer of theta -> ||zeta_theta||^2 in the native space."""

    theta_prime: float
    value: float
    thetas: np.ndarray
    norms: np.ndarray
    vertex: float | None = None
    vertex_value: float | None = None


def theta_prime_oracle(
    v_builder: Callable[[float], Callable[[np.ndarray], np.ndarray]],
    kernel: MaternKernel,
    lower,
    upper,
    theta_box: tuple[float, float],
    grid_points: int = 201,
    affine: bool = False,
    breakpoints=(),
    rule: QuadratureRule | None = None,
    xtol: float = 1e-10,
) -> ThetaPrime:
    """
    Minimize the native norm of the discrepancy over a scalar parameter.

    ``v_builder(theta)`` returns the density v_theta whose integral against
    the kernel is the discrepancy; its squared native norm is the double
    integral of v_theta(s) Phi(s - t) v_theta(t).  The curve is scanned on a
    grid and refined by golden-section search.  With ``affine`` the norm is a
    quadratic in theta; its vertex is recovered from three evaluations as an
    independent second answer.
    """

    def norm(theta: float) -> float:
        f = IntegralClassFunction(kernel, v_builder(theta), lower, upper, breakpoints, rule)
        return rkhs_norm_sq_via_v(f)

    lo, hi = float(theta_box[0]), float(theta_box[1])
    thetas = np.linspace(lo, hi, grid_points)
    norms = np.array([norm(t) for t in thetas])
    i = int(np.argmin(norms))
    step = thetas[1] - thetas[0] if grid_points > 1 else 0.0
    x, fx = golden_section(norm, max(lo, thetas[i] - step), min(hi, thetas[i] + step), xtol=xtol)
    if norms[i] < fx:
        x, fx = float(thetas[i]), float(norms[i])
    out = ThetaPrime(float(x), float(fx), thetas, norms)
    if affine:
        n_m, n_0, n_p = norm(-1.0), norm(0.0), norm(1.0)
        curv = 0.5 * (n_p + n_m) - n_0
        slope = 0.5 * (n_p - n_m)
        if curv > 0:
            out.vertex = float(-slope / (2.0 * curv))
            out.vertex_value = float(n_0 - slope**2 / (4.0 * curv))
    return out

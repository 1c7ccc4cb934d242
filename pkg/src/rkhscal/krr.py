"""Kernel ridge regression with a fixed Matérn kernel."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from rkhscal.design import Design, points_csv_text, read_points_csv, write_points_csv
from rkhscal.errors import ConfigError, NumericalError
from rkhscal.kernel import MaternKernel, _as_points, kernel_matrix
from rkhscal.rkhs import KernelExpansion, rkhs_inner_product


@dataclass(frozen=True)
class Dataset:
    """Observations y_i at the points of a design."""

    design: Design
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if y.shape[0] != self.design.n:
            raise ConfigError("observation count does not match design size")
        if not np.all(np.isfinite(y)):
            raise ConfigError("observations must be finite")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def X(self) -> np.ndarray:
        return self.design.points

    def to_csv(self, path) -> None:
        write_points_csv(path, self.design.points, self.y, "y")

    @classmethod
    def from_csv(cls, path, lower, upper) -> "Dataset":
        pts, y = read_points_csv(path)
        if y is None:
            raise ConfigError(f"{path}: dataset CSV needs a y column")
        return cls(Design(pts, lower, upper), y)


@dataclass(frozen=True)
class KrrFit:
    expansion: KernelExpansion
    lam: float
    n: int

    @property
    def coeffs(self) -> np.ndarray:
        return self.expansion.coeffs

    @property
    def kernel(self) -> MaternKernel:
        return self.expansion.kernel

    def __call__(self, x) -> np.ndarray:
        return self.expansion(x)

    def to_csv_text(self) -> str:
        """Metadata comment line (kernel, lambda, n as JSON), then centers and coefficients."""
        meta = {"kernel": self.kernel.to_dict(), "lambda": self.lam, "n": self.n}
        body = points_csv_text(self.expansion.centers, self.coeffs, "c")
        return "# " + json.dumps(meta, sort_keys=True) + "\n" + body

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "KrrFit":
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("# "):
            raise ConfigError(f"{path}: missing fit metadata line")
        try:
            meta = json.loads(first[2:])
            kernel = MaternKernel.from_dict(meta["kernel"])
            lam, n = float(meta["lambda"]), int(meta["n"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: bad fit metadata ({exc})") from None
        pts, c = read_points_csv(path)
        return cls(KernelExpansion(kernel, pts, c), lam, n)


def _regularized_factor(K: np.ndarray, shift: float):
    A = K.copy()
    A[np.diag_indices_from(A)] += shift
    try:
        return linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Phi + n*lambda*I is not positive definite: {exc}") from None


def krr_fit(kernel: MaternKernel, data, lam: float, y=None, jitter: float = 0.0) -> KrrFit:
    """
    Fit kernel ridge regression.

    Minimizes (1/n) sum (y_i - g(x_i))^2 + lam * ||g||^2 over the native space;
    the minimizer is sum_i c_i Phi(x - x_i) with c = (Phi + n lam I)^-1 y.
    ``jitter`` is added to the diagonal on top of n * lam, which keeps the
    interpolation limit lam -> 0 solvable.

    ``data`` is a Dataset, or design points with ``y`` given separately.
    """
    if isinstance(data, Dataset):
        pts, y = data.X, data.y
    else:
        pts = _as_points(data, kernel.dim)
        y = np.asarray(y, dtype=float).ravel()
    if not lam > 0:
        raise NumericalError(f"lambda must be positive, got {lam}")
    n = pts.shape[0]
    if y.shape[0] != n:
        raise ConfigError("observation count does not match design size")
    cf = _regularized_factor(kernel_matrix(kernel, pts), n * lam + jitter)
    c = linalg.cho_solve(cf, y)
    return KrrFit(KernelExpansion(kernel, pts, c), float(lam), n)


def krr_predict(fit: KrrFit, x) -> np.ndarray:
    """Fitted function sum_i c_i Phi(x - x_i) at the rows of ``x``."""
    return fit.expansion(x)


def fit_rkhs_norm_sq(fit: KrrFit) -> float:
    c = fit.coeffs
    return float(c @ kernel_matrix(fit.kernel, fit.expansion.centers) @ c)


def empirical_seminorm(fn: Callable, X) -> float:
    """sqrt(mean(fn(x_i)^2)) over the design points."""
    pts = getattr(X, "points", X)
    vals = np.asarray(fn(pts), dtype=float).ravel()
    return float(np.sqrt(np.mean(vals * vals)))


def krr_objective(g: KernelExpansion, data: Dataset, lam: float) -> float:
    """(1/n) sum (y_i - g(x_i))^2 + lam ||g||^2 for a kernel expansion g."""
    r = data.y - g(data.X)
    return float(np.mean(r * r) + lam * rkhs_inner_product(g, g))


def lambda_schedule(kind: str, n: int, m: float, d: int, constant: float = 1.0) -> float:
    """
    Smoothing parameter for sample size ``n``.

    ``"standard"`` is n^(-2m/(2m+d)); ``"improved"`` is n^(-2m/(4m+d)), the
    choice that balances bias and variance when the target is an integral
    against the kernel.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if d < 1 or not m > d / 2:
        raise ConfigError(f"need d >= 1 and m > d/2, got m={m}, d={d}")
    if kind == "standard":
        expo = 2 * m / (2 * m + d)
    elif kind == "improved":
        expo = 2 * m / (4 * m + d)
    else:
        raise ConfigError(f"unknown lambda schedule {kind!r}")
    return constant * float(n) ** (-expo)

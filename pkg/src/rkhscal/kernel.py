"""
Matérn kernels.

The kernel is parameterized as

    Phi(x) = (2 sqrt(nu) phi |x|)^nu K_nu(2 sqrt(nu) phi |x|) / (Gamma(nu) 2^(nu - 1))

so that ``nu = 0.5`` gives ``exp(-sqrt(2) phi |x|)``.  The exponential kernel
``exp(-|x|)`` is therefore ``MaternKernel(0.5, 2 ** -0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from rkhscal.errors import ConfigError

# exp(-z) underflows past this point; kernel values are reported as 0
UNDERFLOW_Z = 700.0


def _half_integer_order(nu: float) -> int | None:
    """Return p if |nu| == p + 1/2 for an integer p >= 0, else None."""
    p = abs(nu) - 0.5
    if p >= 0 and p == math.floor(p) and p < 64:
        return int(p)
    return None


def bessel_k(nu, z):
    """
    Modified Bessel function of the second kind, K_nu(z).

    Half-integer orders use the terminating closed form

        K_{p+1/2}(z) = sqrt(pi / (2z)) e^-z sum_j (p+j)! / (j! (p-j)!) (2z)^-j

    and every other order is delegated to ``scipy.special.kv``.  K_nu is even in
    nu, so negative orders are reflected.

    Parameters
    ----------
    nu : float
        Order.
    z : float or array_like
        Argument, strictly positive.

    Returns
    -------
    float or ndarray
    """
    z_arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z_arr)) or np.any(z_arr <= 0):
        raise ValueError("bessel_k requires finite z > 0")
    nu = abs(float(nu))
    p = _half_integer_order(nu)
    if p is None:
        out = special.kv(nu, z_arr)
    else:
        series = np.zeros_like(z_arr)
        for j in range(p + 1):
            coef = math.factorial(p + j) / (math.factorial(j) * math.factorial(p - j))
            series = series + coef * (2.0 * z_arr) ** (-j)
        out = np.sqrt(np.pi / (2.0 * z_arr)) * np.exp(-z_arr) * series
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MaternKernel:
    """
    Stationary Matérn kernel with smoothness ``nu``, scale ``phi`` on R^dim.

    The native space of this kernel is the Sobolev space of order
    ``m = nu + dim / 2``.
    """

    nu: float
    phi: float
    dim: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise ConfigError(f"phi must be positive, got {self.phi}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {self.dim}")

    @property
    def m(self) -> float:
        """Sobolev order of the native space."""
        return self.nu + self.dim / 2.0

    @property
    def is_half_integer(self) -> bool:
        return _half_integer_order(self.nu) is not None

    def scaled_distance(self, r):
        return 2.0 * math.sqrt(self.nu) * self.phi * np.asarray(r, dtype=float)

    def from_distance(self, r, method: str = "auto"):
        """
        Evaluate the kernel at Euclidean distances ``r``.

        ``method`` is ``"auto"`` (closed form for half-integer nu, Bessel
        otherwise), ``"bessel"`` (always the general K_nu route through
        ``scipy.special.kv``) or ``"closed"`` (half-integer nu only).
        """
        r = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(r)):
            raise ValueError("kernel evaluated at a non-finite lag")
        z = self.scaled_distance(np.abs(r))
        if method == "auto":
            method = "closed" if self.is_half_integer else "bessel"
        if method == "closed":
            p = _half_integer_order(self.nu)
            if p is None:
                raise ConfigError(f"no closed form for nu={self.nu}")
            out = _half_integer_matern(p, z)
        elif method == "bessel":
            out = _bessel_matern(self.nu, z)
        else:
            raise ConfigError(f"unknown evaluation method {method!r}")
        return float(out) if out.ndim == 0 else out

    def __call__(self, lag, method: str = "auto"):
        """Evaluate at lag vector(s); the last axis has length ``dim``."""
        lag = np.asarray(lag, dtype=float)
        if self.dim == 1 and (lag.ndim == 0 or lag.shape[-1] != 1):
            r = np.abs(lag)
        else:
            if lag.shape[-1] != self.dim:
                raise ValueError(f"lag has trailing size {lag.shape[-1]}, kernel dim is {self.dim}")
            r = np.sqrt(np.sum(lag * lag, axis=-1))
        return self.from_distance(r, method=method)

    def to_dict(self) -> dict:
        return {"family": "matern", "nu": self.nu, "phi": self.phi, "dim": self.dim}

    @classmethod
    def from_dict(cls, record: dict) -> "MaternKernel":
        record = dict(record)
        family = record.pop("family", "matern")
        if family != "matern":
            raise ConfigError(f"unsupported kernel family {family!r}")
        unknown = set(record) - {"nu", "phi", "dim"}
        if unknown:
            raise ConfigError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(float(record["nu"]), float(record["phi"]), int(record.get("dim", 1)))


def exponential_kernel(dim: int = 1) -> MaternKernel:
    """The kernel exp(-|x|), i.e. nu = 1/2 with phi = 2^(-1/2)."""
    return MaternKernel(0.5, 2.0 ** -0.5, dim)


def _half_integer_matern(p: int, z):
    # Phi = e^-z p!/(2p)! sum_i (p+i)!/(i!(p-i)!) (2z)^(p-i)
    z = np.asarray(z, dtype=float)
    poly = np.zeros_like(z)
    scale = math.factorial(p) / math.factorial(2 * p)
    for i in range(p + 1):
        coef = math.factorial(p + i) / (math.factorial(i) * math.factorial(p - i))
        poly = poly + coef * (2.0 * z) ** (p - i)
    with np.errstate(over="ignore", invalid="ignore"):
        out = scale * poly * np.exp(-z)
    return np.where(z > UNDERFLOW_Z, 0.0, out)


def _bessel_matern(nu: float, z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos = (z > 0) & (z <= UNDERFLOW_Z)
    zp = z[pos]
    with np.errstate(over="ignore", invalid="ignore"):
        log_norm = math.lgamma(nu) + (nu - 1.0) * math.log(2.0)
        val = np.exp(nu * np.log(zp) - log_norm) * special.kv(nu, zp)
    # K_nu overflows only for z so small that the limit 1 is exact to double precision
    val = np.where(np.isfinite(val), val, 1.0)
    out[pos] = np.minimum(val, 1.0)
    out[z > UNDERFLOW_Z] = 0.0
    return out


def matern_eval(k: MaternKernel, lag, method: str = "auto") -> float:
    """Kernel value at a single lag vector."""
    lag = np.atleast_1d(np.asarray(lag, dtype=float))
    if lag.shape != (k.dim,):
        raise ValueError(f"lag must have length {k.dim}")
    return float(k(lag.reshape(1, -1), method=method)[0])


def _as_points(X, dim: int | None = None) -> np.ndarray:
    pts = getattr(X, "points", X)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim in (None, 1) else pts.reshape(1, -1)
    return pts


def cross_distances(A, B) -> np.ndarray:
    A = _as_points(A)
    B = _as_points(B)
    if A.shape[1] == 1:
        return np.abs(A[:, 0][:, None] - B[:, 0][None, :])
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def kernel_matrix(k: MaternKernel, X, Y=None, method: str = "auto") -> np.ndarray:
    """
    Matrix of kernel values Phi(x_i - y_j).

    With ``Y`` omitted the Gram matrix of ``X`` is returned; it is symmetrized
    explicitly and has an exact unit diagonal.
    """
    A = _as_points(X, k.dim)
    if A.size == 0:
        raise ValueError("kernel_matrix needs at least one point")
    if not np.all(np.isfinite(A)):
        raise ValueError("design points must be finite")
    if Y is None:
        K = np.asarray(k.from_distance(cross_distances(A, A), method=method))
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    B = _as_points(Y, k.dim)
    return np.asarray(k.from_distance(cross_distances(A, B), method=method))


def matern_spectral_density(k: MaternKernel, omega) -> float:
    """
    C0 (1 + |omega|^2)^(-m/2) with C0 = 2^(d/2) Gamma(nu + d/2) / Gamma(nu).

    Written for the normalization phi = 1 / (2 sqrt(nu)); used as a manual
    diagnostic for whether a target can be written as an integral against
    the kernel.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = k.dim
    c0 = 2.0 ** (d / 2.0) * math.exp(math.lgamma(k.nu + d / 2.0) - math.lgamma(k.nu))
    w2 = float(np.sum(omega * omega))
    return c0 * (1.0 + w2) ** (-k.m / 2.0)

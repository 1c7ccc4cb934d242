"""
Space-filling designs on boxes and their quasi-uniformity diagnostics.

Sobol points are generated in natural (not Gray-code) order starting at index
1, so in one dimension the sequence is the base-2 radical inverse
0.5, 0.25, 0.75, 0.125, ...
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from rkhscal.errors import ConfigError

# Joe & Kuo direction numbers for dimensions 2..10: (degree s, coefficient a, m_1..m_s)
_DIRECTION_TABLE = [
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
]
MAX_SOBOL_DIM = len(_DIRECTION_TABLE) + 1
_BITS = 52


def _direction_numbers(dim: int) -> np.ndarray:
    """Integer direction numbers V[j, k] = m_k << (BITS - k - 1) for each axis."""
    V = np.zeros((dim, _BITS), dtype=np.uint64)
    for k in range(_BITS):
        V[0, k] = 1 << (_BITS - k - 1)
    for j in range(1, dim):
        s, a, m_init = _DIRECTION_TABLE[j - 1]
        m = list(m_init)
        for k in range(s, _BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        for k in range(_BITS):
            V[j, k] = m[k] << (_BITS - k - 1)
    return V


def sobol_points(n: int, dim: int = 1) -> np.ndarray:
    """First ``n`` Sobol points in [0, 1)^dim, indices 1..n, shape (n, dim)."""
    if n < 1:
        raise ConfigError("need n >= 1")
    if dim < 1 or dim > MAX_SOBOL_DIM:
        raise ConfigError(f"sobol_points supports 1 <= dim <= {MAX_SOBOL_DIM}, got {dim}")
    V = _direction_numbers(dim)
    idx = np.arange(1, n + 1, dtype=np.uint64)
    acc = np.zeros((n, dim), dtype=np.uint64)
    for k in range(int(n).bit_length()):
        bit = ((idx >> np.uint64(k)) & np.uint64(1)).astype(bool)
        acc[bit] ^= V[:, k]
    return acc.astype(float) / float(1 << _BITS)


@dataclass(frozen=True)
class Design:
    """An ordered point set inside the closed box [lower, upper]."""

    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if pts.shape[0] < 1:
            raise ConfigError("a design needs at least one point")
        if lo.shape != (pts.shape[1],) or hi.shape != lo.shape:
            raise ConfigError("domain bounds do not match point dimension")
        if np.any(hi <= lo):
            raise ConfigError("domain upper bounds must exceed lower bounds")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("design points must be finite")
        if np.any(pts < lo) or np.any(pts > hi):
            raise ConfigError("design points must lie inside the domain")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def head(self, n: int) -> "Design":
        return Design(self.points[:n], self.lower, self.upper)

    def to_csv(self, path) -> None:
        write_points_csv(path, self.points)

    @classmethod
    def from_csv(cls, path, lower, upper) -> "Design":
        pts, _ = read_points_csv(path)
        return cls(pts, lower, upper)


def points_csv_text(points, extra=None, extra_name="y") -> str:
    """CSV text with header x1..xd[, extra_name] and 17 significant digits."""
    points = np.asarray(points, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(points.shape[1])] + ([extra_name] if extra is not None else []))
    for i, row in enumerate(points):
        vals = list(row) + ([extra[i]] if extra is not None else [])
        w.writerow([f"{v:.17g}" for v in vals])
    return buf.getvalue()


def write_points_csv(path, points, extra=None, extra_name="y") -> None:
    Path(path).write_text(points_csv_text(points, extra, extra_name))


def read_points_csv(path):
    """Read a CSV with header x1..xd[, extra]; returns (points, extra-or-None)."""
    with open(Path(path), newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from None
    if data.size == 0:
        raise ConfigError(f"{path}: no data rows")
    ncoord = sum(1 for h in header if h.strip().startswith("x"))
    if data.shape[1] != len(header) or ncoord < 1:
        raise ConfigError(f"{path}: malformed header {header}")
    extra = data[:, ncoord] if data.shape[1] > ncoord else None
    return data[:, :ncoord], extra


def sobol_design(n: int, lower=-1.0, upper=1.0, dim: int = 1) -> Design:
    """First ``n`` Sobol points mapped affinely onto the box."""
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (dim,))
    u = sobol_points(n, dim)
    return Design(lo + (hi - lo) * u, lo.copy(), hi.copy())


def fill_distance(X: Design, resolution: int = 1_000_000, return_bound: bool = False):
    """
    Largest distance from a point of the domain to its nearest design point.

    Exact in one dimension.  For ``dim >= 2`` the maximum is taken over a
    lattice of about ``resolution`` candidate points; with ``return_bound`` the
    half-diagonal of a lattice cell is returned too, which bounds the error.
    """
    if X.n < 1:
        raise ConfigError("fill distance of an empty design")
    if X.dim == 1:
        x = np.sort(X.points[:, 0])
        gaps = [x[0] - X.lower[0], X.upper[0] - x[-1]]
        if x.size > 1:
            gaps.append(np.max(np.diff(x)) / 2.0)
        h = float(max(gaps))
        return (h, 0.0) if return_bound else h
    per_axis = max(2, int(round(resolution ** (1.0 / X.dim))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(X.lower, X.upper)]
    tree = cKDTree(X.points)
    h = 0.0
    # stream the lattice along the first axis to bound memory
    rest = np.stack([g.ravel() for g in np.meshgrid(*axes[1:], indexing="ij")], axis=1)
    for a in axes[0]:
        cand = np.column_stack([np.full(rest.shape[0], a), rest])
        dist, _ = tree.query(cand)
        h = max(h, float(dist.max()))
    spacing = (X.upper - X.lower) / (per_axis - 1)
    bound = float(np.sqrt(np.sum(spacing**2)) / 2.0)
    return (h, bound) if return_bound else h


def separation_distance(X: Design) -> float:
    """Smallest pairwise Euclidean distance between design points."""
    if X.n < 2:
        raise ConfigError("separation distance needs at least two points")
    if X.dim == 1:
        return float(np.min(np.diff(np.sort(X.points[:, 0]))))
    dist, _ = cKDTree(X.points).query(X.points, k=2)
    return float(dist[:, 1].min())


@dataclass(frozen=True)
class QuasiUniformity:
    h: float
    q: float
    ratio: float
    scaled_fill: float

    def to_dict(self) -> dict:
        return {"h": self.h, "q": self.q, "ratio": self.ratio, "scaled_fill": self.scaled_fill}


def quasi_uniformity_report(X: Design, resolution: int = 1_000_000) -> QuasiUniformity:
    """
    Fill distance h, separation distance q, their ratio h/q and h * n^(1/d).

    A design sequence is quasi-uniform when h/q stays bounded; h * n^(1/d)
    bounded is the matching statement about the fill distance alone.
    """
    h = fill_distance(X, resolution=resolution)
    q = separation_distance(X)
    ratio = h / q if q > 0 else float("inf")
    return QuasiUniformity(h, q, ratio, h * X.n ** (1.0 / X.dim))

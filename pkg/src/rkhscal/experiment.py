"""
Monte Carlo rate studies: calibration error of the K-O estimator and L2 error
of kernel ridge regression, each summarized by a log-log least-squares slope.

Every replicate draws its noise from its own stream,
``SeedSequence([seed, size_index, replicate])``, so results do not depend on
scheduling and a run with fewer replicates reproduces a prefix of a longer one.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from rkhscal import benchmark
from rkhscal.calibration import CalibrationProblem, estimate_theta
from rkhscal.design import Design, sobol_design
from rkhscal.errors import ConfigError, NumericalError
from rkhscal.kernel import MaternKernel, kernel_matrix
from rkhscal.krr import Dataset, lambda_schedule
from rkhscal.quadrature import QuadratureRule, box_rule, line_rule
from rkhscal.rkhs import IntegralClassFunction, integral_class_eval

logger = logging.getLogger(__name__)

RNG_SCHEME = "numpy.random.default_rng(SeedSequence([seed, size_index, replicate])), PCG64"


class StudyAborted(NumericalError):
    """A replicate failed; ``partial`` holds the sizes completed before it."""

    def __init__(self, message: str, partial: "RateReport | None"):
        super().__init__(message)
        self.partial = partial


@dataclass
class StudyConfig:
    sizes: list = field(default_factory=lambda: [20 * j for j in range(1, 31)])
    replicates: int = 100
    noise_sd: float = 0.1
    lambda_schedule: str = "improved"
    schedule_constant: float = 1.0
    m: float = 1.0
    d: int = 1
    seed: int = 0
    reading: str = benchmark.ADOPTED_READING
    theta_lower: float = benchmark.DEFAULT_THETA_BOX[0]
    theta_upper: float = benchmark.DEFAULT_THETA_BOX[1]
    grid_points: int = 101

    def __post_init__(self):
        self.sizes = [int(s) for s in self.sizes]
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])) or self.sizes[0] < 1:
            raise ConfigError("sizes must be positive and strictly increasing")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be at least 1")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        benchmark.get_reading(self.reading)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LogLogFit:
    a_hat: float
    b_hat: float
    r_squared: float
    residuals: np.ndarray


def loglog_fit(ns, errors) -> LogLogFit:
    """Ordinary least squares of log(errors) on log(ns): log E = a + b log n."""
    ns = np.asarray(ns, dtype=float).ravel()
    errors = np.asarray(errors, dtype=float).ravel()
    if ns.size != errors.size or ns.size < 2:
        raise ConfigError("need at least two (n, error) pairs")
    if np.any(errors <= 0) or np.any(ns <= 0):
        raise ConfigError("errors and sizes must be positive for a log-log fit")
    x, y = np.log(ns), np.log(errors)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(coef[0]), float(coef[1]), r2, resid)


@dataclass
class RateReport:
    """Per-size replicate errors and the fitted log-log line."""

    sizes: np.ndarray
    errors: list
    estimates: list | None = None
    fit: LogLogFit | None = None
    theta_prime: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def mean_errors(self) -> np.ndarray:
        return np.array([np.mean(e) for e in self.errors])

    def refit(self) -> "RateReport":
        self.fit = loglog_fit(self.sizes, self.mean_errors)
        return self

    def head(self, k: int) -> "RateReport":
        est = None if self.estimates is None else self.estimates[:k]
        return RateReport(self.sizes[:k], self.errors[:k], est, None, self.theta_prime, dict(self.metadata))


def _stream(seed: int, j: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(j), int(r)]))


def generate_physical_data(n: int, noise_sd: float, seed: int, stream=(0, 0)) -> Dataset:
    """Sobol design on [-1, 1] with y_i = xi(x_i) + N(0, noise_sd^2) noise."""
    X = sobol_design(n, benchmark.LOWER, benchmark.UPPER)
    y = benchmark.true_process(X.points[:, 0])
    if noise_sd > 0:
        y = y + noise_sd * _stream(seed, *stream).standard_normal(n)
    return Dataset(X, y)


def _run_sizes(sizes, worker, threads):
    threads = max(1, int(threads or 1))
    out = [None] * len(sizes)
    failure = None
    if threads == 1:
        for j in range(len(sizes)):
            try:
                out[j] = worker(j)
            except Exception as exc:  # noqa: BLE001 - re-raised with partial results
                failure = (j, exc)
                break
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, j) for j in range(len(sizes))]
            for j, fut in enumerate(futures):
                try:
                    out[j] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failure = failure or (j, exc)
    done = 0
    while done < len(out) and out[done] is not None:
        done += 1
    return out, done, failure


def run_convergence_study(cfg: StudyConfig, threads: int = 1, theta_prime: float | None = None) -> RateReport:
    """
    Calibration error |theta_hat - theta'| across sample sizes.

    For each size n_j the physical data are a Sobol design with noisy
    observations of the true process; theta_hat minimizes the K-O objective
    with lambda from the configured schedule.  Mean absolute errors are
    regressed on n in log-log scale.
    """
    if theta_prime is None:
        theta_prime = benchmark.theta_prime(cfg.reading, (cfg.theta_lower, cfg.theta_upper)).theta_prime
    sim = benchmark.benchmark_simulator(cfg.reading)

    def worker(j: int):
        n = cfg.sizes[j]
        lam = lambda_schedule(cfg.lambda_schedule, n, cfg.m, cfg.d, cfg.schedule_constant)
        base = generate_physical_data(n, 0.0, cfg.seed)
        proto = CalibrationProblem(base, sim, benchmark.KERNEL, lam, [cfg.theta_lower], [cfg.theta_upper])
        _ = proto.factor, proto.affine_parts
        est = np.empty(cfg.replicates)
        for r in range(cfg.replicates):
            data = generate_physical_data(n, cfg.noise_sd, cfg.seed, (j, r))
            p = proto.with_observations(data.y)
            est[r] = estimate_theta(p, grid_points=cfg.grid_points).theta_hat[0]
        logger.info("n=%d lambda=%.4g mean error %.4g", n, lam, np.mean(np.abs(est - theta_prime)))
        return est

    results, done, failure = _run_sizes(cfg.sizes, worker, threads)
    meta = {
        "study": "calibration",
        "config": cfg.to_dict(),
        "rng": RNG_SCHEME,
        "theta_prime": theta_prime,
        "published_theta_prime": benchmark.PUBLISHED_THETA_PRIME,
        "theta_prime_deviation": theta_prime - benchmark.PUBLISHED_THETA_PRIME,
        "expected_slope": -cfg.m / (4 * cfg.m + cfg.d),
    }
    ests = [results[j] for j in range(done)]
    report = RateReport(
        np.array(cfg.sizes[:done]), [np.abs(e - theta_prime) for e in ests], ests, None, theta_prime, meta
    )
    if failure is not None:
        j, exc = failure
        raise StudyAborted(f"replicate failure at n={cfg.sizes[j]}: {exc}", report) from exc
    return report.refit() if len(report.sizes) >= 2 else report


def _l2_rule(f: IntegralClassFunction, X: Design):
    if f.dim == 1:
        rule = QuadratureRule(16, f.rule.panels)
        return line_rule(f.lower[0], f.upper[0], rule, tuple(X.points[:, 0]) + tuple(f.breakpoints))
    return box_rule(f.lower, f.upper, f.rule)


def run_krr_rate_study(
    kernel: MaternKernel,
    f: IntegralClassFunction,
    schedule: str = "improved",
    sizes=(32, 64, 128, 256, 512),
    replicates: int = 50,
    noise_sd: float = 1.0,
    seed: int = 0,
    schedule_constant: float = 1.0,
    lam: float | None = None,
    jitter: float = 0.0,
    threads: int = 1,
) -> RateReport:
    """
    L2 error of kernel ridge regression for an integral-class target.

    Designs are Sobol points on the target's domain; the L2 error is computed
    by quadrature with panels split at every design point.  ``lam`` fixes the
    smoothing parameter instead of using ``schedule``.
    """
    sizes = [int(s) for s in sizes]
    m, d = kernel.m, kernel.dim

    def worker(j: int):
        n = sizes[j]
        lam_n = lam if lam is not None else lambda_schedule(schedule, n, m, d, schedule_constant)
        X = sobol_design(n, f.lower, f.upper, d)
        fX = integral_class_eval(f, X.points[:, 0] if d == 1 else X.points)
        A = kernel_matrix(kernel, X.points)
        A[np.diag_indices_from(A)] += n * lam_n + jitter
        try:
            cf = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"factorization failed at n={n}: {exc}") from None
        noise = np.column_stack([_stream(seed, j, r).standard_normal(n) for r in range(replicates)])
        C = linalg.cho_solve(cf, fX[:, None] + noise_sd * noise)
        t, w = _l2_rule(f, X)
        ft = integral_class_eval(f, t)
        pred = kernel_matrix(kernel, t.reshape(-1, d), X.points) @ C
        return np.sqrt(w @ (pred - ft[:, None]) ** 2)

    results, done, failure = _run_sizes(sizes, worker, threads)
    meta = {
        "study": "krr",
        "kernel": kernel.to_dict(),
        "schedule": schedule if lam is None else "fixed",
        "lambda": lam,
        "schedule_constant": schedule_constant,
        "sizes": sizes,
        "replicates": replicates,
        "noise_sd": noise_sd,
        "seed": seed,
        "rng": RNG_SCHEME,
        "expected_slope": -2 * m / (4 * m + d) if schedule == "improved" else -m / (2 * m + d),
    }
    report = RateReport(np.array(sizes[:done]), [results[j] for j in range(done)], None, None, None, meta)
    if failure is not None:
        j, exc = failure
        raise StudyAborted(f"replicate failure at n={sizes[j]}: {exc}", report) from exc
    return report.refit() if len(report.sizes) >= 2 else report


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{float(v):.17g}"


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_atomic(path: Path, text: str) -> None:
    """Write through a ``.partial`` file and rename into place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def results_csv(report: RateReport) -> str:
    """One row per replicate: n, replicate, estimate, error, mean_error."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "replicate", "estimate", "error", "mean_error"])
    for j, n in enumerate(report.sizes):
        errs = report.errors[j]
        mean = float(np.mean(errs))
        for r, e in enumerate(errs):
            est = report.estimates[j][r] if report.estimates is not None else None
            w.writerow([int(n), r, _fmt(est), _fmt(e), _fmt(mean)])
    return buf.getvalue()


def read_results_csv(path) -> RateReport:
    sizes, errors, estimates = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            n = int(row["n"])
            if not sizes or sizes[-1] != n:
                sizes.append(n)
                errors.append([])
                estimates.append([])
            errors[-1].append(float(row["error"]))
            estimates[-1].append(float(row["estimate"]) if row["estimate"] else np.nan)
    if not sizes:
        raise ConfigError(f"{path}: no result rows")
    has_est = not all(np.isnan(e).all() for e in map(np.asarray, estimates))
    return RateReport(
        np.array(sizes), [np.asarray(e) for e in errors], [np.asarray(e) for e in estimates] if has_est else None
    )


def report_json(report: RateReport) -> str:
    fit = report.fit
    body = {
        "metadata": report.metadata,
        "theta_prime": report.theta_prime,
        "sizes": report.sizes,
        "mean_errors": report.mean_errors,
        "a_hat": fit.a_hat if fit else None,
        "b_hat": fit.b_hat if fit else None,
        "r_squared": fit.r_squared if fit else None,
        "residuals": fit.residuals if fit else None,
    }
    return json.dumps(_to_jsonable(body), indent=2, sort_keys=True) + "\n"


def loglog_svg(report: RateReport, width: int = 480, height: int = 360) -> str:
    """Scatter of log mean error against log n with the fitted line, as standalone SVG."""
    x = np.log(report.sizes.astype(float))
    y = np.log(report.mean_errors)
    pad = 50
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    sx = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)  # noqa: E731
    sy = lambda v: height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)  # noqa: E731
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="13">log n</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {height / 2:.1f})">log mean error</text>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.3f}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" text-anchor="end">{x1:.3f}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3f}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3f}</text>',
    ]
    for xi, yi in zip(x, y):
        parts.append(f'<circle cx="{sx(xi):.3f}" cy="{sy(yi):.3f}" r="3" fill="steelblue"/>')
    if report.fit is not None:
        a, b = report.fit.a_hat, report.fit.b_hat
        parts.append(
            f'<line x1="{sx(x0):.3f}" y1="{sy(a + b * x0):.3f}" x2="{sx(x1):.3f}" y2="{sy(a + b * x1):.3f}" '
            'stroke="firebrick" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{width - pad}" y="{pad}" font-size="12" text-anchor="end">slope {b:.5f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: RateReport, out_dir) -> list[Path]:
    """
    Write results.csv, report.json and plot.svg into ``out_dir``.

    Nothing is written when the report has no replicate errors.
    """
    if len(report.sizes) == 0 or any(len(e) == 0 for e in report.errors):
        raise ConfigError("report has no replicate errors")
    if report.fit is None and len(report.sizes) >= 2:
        report.refit()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "results.csv", out / "report.json", out / "plot.svg"]
    texts = [results_csv(report), report_json(report), loglog_svg(report)]
    for path, text in zip(files, texts):
        write_atomic(path, text)
    return files

"""
Command-line entry point.

Every subcommand resolves its configuration as defaults < --config JSON file
< --set key=value overrides (and a few shortcut flags), rejects unknown keys,
and writes a manifest.json echoing the resolved configuration next to its
outputs.  Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from rkhscal import __version__, benchmark
from rkhscal.calibration import CalibrationProblem, estimate_theta
from rkhscal.design import Design, points_csv_text, quasi_uniformity_report, read_points_csv, sobol_design
from rkhscal.errors import ConfigError, NumericalError
from rkhscal.experiment import (
    StudyAborted,
    StudyConfig,
    _to_jsonable,
    loglog_svg,
    read_results_csv,
    report_json,
    results_csv,
    run_convergence_study,
    run_krr_rate_study,
    write_atomic,
)
from rkhscal.kernel import MaternKernel
from rkhscal.krr import Dataset, KrrFit, fit_rkhs_norm_sq, krr_fit, krr_predict, lambda_schedule
from rkhscal.rkhs import IntegralClassFunction

logger = logging.getLogger("rkhscal")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

_EXP_PHI = 2.0 ** -0.5

DEFAULTS: dict[str, dict] = {
    "kernel-eval": {"nu": 0.5, "phi": _EXP_PHI, "dim": 1, "lags": [0.0, 0.5, 1.0, 2.0], "method": "auto"},
    "design": {"n": 20, "dim": 1, "domain": [-1.0, 1.0], "fill_resolution": 1_000_000},
    "krr-fit": {
        "data": None,
        "domain": [-1.0, 1.0],
        "nu": 0.5,
        "phi": _EXP_PHI,
        "lambda": None,
        "schedule": "improved",
        "schedule_constant": 1.0,
        "jitter": 0.0,
    },
    "krr-predict": {"fit": None, "points": None},
    "calibrate": {
        "data": None,
        "domain": [-1.0, 1.0],
        "simulator": "ko-sec4",
        "reading": benchmark.ADOPTED_READING,
        "nu": 0.5,
        "phi": _EXP_PHI,
        "lambda": None,
        "schedule": "improved",
        "schedule_constant": 1.0,
        "theta_lower": benchmark.DEFAULT_THETA_BOX[0],
        "theta_upper": benchmark.DEFAULT_THETA_BOX[1],
        "grid_points": 101,
    },
    "study-sec4": StudyConfig().to_dict(),
    "study-krr": {
        "target": "xi",
        "nu": 0.5,
        "phi": _EXP_PHI,
        "domain": [-1.0, 1.0],
        "schedule": "improved",
        "schedule_constant": 1.0,
        "lambda": None,
        "sizes": [32, 64, 128, 256, 512],
        "replicates": 50,
        "noise_sd": 1.0,
        "seed": 0,
    },
    "report": {"input": None},
}

HELP = {
    "kernel-eval": "evaluate a Matérn kernel at lags",
    "design": "generate a Sobol design and its fill/separation diagnostics",
    "krr-fit": "fit kernel ridge regression to a dataset CSV",
    "krr-predict": "evaluate a fitted model at points from a CSV",
    "calibrate": "estimate the calibration parameter for a dataset CSV",
    "study-sec4": "Monte Carlo convergence study of the calibration estimator",
    "study-krr": "Monte Carlo L2 rate study of kernel ridge regression",
    "report": "re-fit and re-render a results.csv produced by a study",
}

# densities v for built-in integral-class targets on a 1-D domain
KRR_TARGETS = {
    "xi": (lambda t: np.exp(-np.abs(t)), (0.0,)),
    "one": (lambda t: np.ones_like(t), ()),
    "quadratic": (lambda t: 1.0 + np.asarray(t) ** 2, ()),
    "cosine": (lambda t: np.cos(3.0 * np.asarray(t)), ()),
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(sub: str, config_path: str | None, overrides: list[str], extra: dict) -> dict:
    defaults = DEFAULTS[sub]
    cfg = json.loads(json.dumps(defaults))
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"{config_path}: cannot read config ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: config must be a JSON object")
        _merge(cfg, loaded, defaults)
    pairs = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = _parse_value(v)
    _merge(cfg, pairs, defaults)
    _merge(cfg, {k: v for k, v in extra.items() if v is not None}, defaults)
    return cfg


def _merge(cfg: dict, new: dict, defaults: dict) -> None:
    unknown = sorted(set(new) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}; allowed: {sorted(defaults)}")
    cfg.update(new)


def _require(cfg: dict, *keys) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")


def _domain(cfg: dict, dim: int = 1):
    dom = np.asarray(cfg["domain"], dtype=float)
    if dom.shape == (2,):
        return np.full(dim, dom[0]), np.full(dim, dom[1])
    if dom.shape == (dim, 2):
        return dom[:, 0], dom[:, 1]
    raise ConfigError(f"domain must be [lo, hi] or {dim} pairs, got {cfg['domain']}")


def _kernel(cfg: dict, dim: int = 1) -> MaternKernel:
    try:
        return MaternKernel(float(cfg["nu"]), float(cfg["phi"]), int(cfg.get("dim", dim)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _lambda(cfg: dict, n: int, kernel: MaternKernel) -> float:
    if cfg.get("lambda") is not None:
        return float(cfg["lambda"])
    return lambda_schedule(cfg["schedule"], n, kernel.m, kernel.dim, float(cfg["schedule_constant"]))


def _dumps(obj) -> str:
    return json.dumps(_to_jsonable(obj), indent=2, sort_keys=True) + "\n"


# ---- subcommand bodies: validate fully, then return {filename: text} -------------


def cmd_kernel_eval(cfg: dict, args) -> dict:
    k = _kernel(cfg)
    lags = np.asarray(cfg["lags"], dtype=float)
    lags = lags.reshape(-1, 1) if lags.ndim == 1 else lags
    if lags.shape[1] != k.dim:
        raise ConfigError("lag vectors must have length dim")
    vals = np.atleast_1d(k(lags, method=cfg["method"]))
    return {"kernel_eval.csv": points_csv_text(lags, vals, "value")}


def cmd_design(cfg: dict, args) -> dict:
    dim = int(cfg["dim"])
    lo, hi = _domain(cfg, dim)
    X = sobol_design(int(cfg["n"]), lo, hi, dim)
    metrics = {"n": X.n, "dim": dim, "lower": lo, "upper": hi}
    if X.n >= 2:
        metrics.update(quasi_uniformity_report(X, resolution=int(cfg["fill_resolution"])).to_dict())
    return {"design.csv": points_csv_text(X.points), "metrics.json": _dumps(metrics)}


def _load_dataset(cfg: dict) -> Dataset:
    pts, y = read_points_csv(cfg["data"])
    if y is None:
        raise ConfigError("data CSV needs a y column")
    lo, hi = _domain(cfg, pts.shape[1])
    return Dataset(Design(pts, lo, hi), y)


def cmd_krr_fit(cfg: dict, args) -> dict:
    _require(cfg, "data")
    data = _load_dataset(cfg)
    k = _kernel({**cfg, "dim": data.design.dim})
    lam = _lambda(cfg, data.n, k)
    fit = krr_fit(k, data, lam, jitter=float(cfg["jitter"]))
    resid = data.y - krr_predict(fit, data.X)
    summary = {
        "n": data.n,
        "lambda": lam,
        "rkhs_norm_sq": fit_rkhs_norm_sq(fit),
        "training_rmse": float(np.sqrt(np.mean(resid**2))),
        "kernel": k.to_dict(),
    }
    return {"fit.csv": fit.to_csv_text(), "fit_summary.json": _dumps(summary)}


def cmd_krr_predict(cfg: dict, args) -> dict:
    _require(cfg, "fit", "points")
    fit = KrrFit.from_csv(cfg["fit"])
    pts, _ = read_points_csv(cfg["points"])
    if pts.shape[1] != fit.kernel.dim:
        raise ConfigError("point dimension does not match the fitted kernel")
    return {"predictions.csv": points_csv_text(pts, krr_predict(fit, pts), "prediction")}


def cmd_calibrate(cfg: dict, args) -> dict:
    _require(cfg, "data")
    if cfg["simulator"] != "ko-sec4":
        raise ConfigError(f"unknown simulator {cfg['simulator']!r}; registry has ['ko-sec4']")
    data = _load_dataset(cfg)
    k = _kernel(cfg)
    lam = _lambda(cfg, data.n, k)
    sim = benchmark.benchmark_simulator(cfg["reading"])
    p = CalibrationProblem(data, sim, k, lam, [cfg["theta_lower"]], [cfg["theta_upper"]])
    res = estimate_theta(p, grid_points=int(cfg["grid_points"]))
    out = {"theta_hat": res.theta_hat, "objective_value": res.objective_value, "lambda": lam, "trace": res.trace}
    return {"calibration.json": _dumps(out)}


def _report_files(report) -> dict:
    return {
        "results.csv": results_csv(report),
        "report.json": report_json(report),
        "plot.svg": loglog_svg(report),
    }


def cmd_study_sec4(cfg: dict, args) -> dict:
    try:
        study = StudyConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    report = run_convergence_study(study, threads=args.threads)
    if len(report.errors) == 0 or any(len(e) == 0 for e in report.errors):
        raise ConfigError("study produced no replicate errors")
    return _report_files(report)


def cmd_study_krr(cfg: dict, args) -> dict:
    if cfg["target"] not in KRR_TARGETS:
        raise ConfigError(f"unknown target {cfg['target']!r}; choose from {sorted(KRR_TARGETS)}")
    k = _kernel(cfg)
    lo, hi = _domain(cfg, 1)
    v, bps = KRR_TARGETS[cfg["target"]]
    f = IntegralClassFunction(k, v, lo, hi, bps)
    report = run_krr_rate_study(
        k,
        f,
        schedule=cfg["schedule"],
        sizes=cfg["sizes"],
        replicates=int(cfg["replicates"]),
        noise_sd=float(cfg["noise_sd"]),
        seed=int(cfg["seed"]),
        schedule_constant=float(cfg["schedule_constant"]),
        lam=cfg["lambda"],
        threads=args.threads,
    )
    report.metadata["target"] = cfg["target"]
    return _report_files(report)


def cmd_report(cfg: dict, args) -> dict:
    _require(cfg, "input")
    # input is a study output directory or its results.csv
    src = Path(cfg["input"])
    csv_path = src if src.is_file() else src / "results.csv"
    report = read_results_csv(csv_path)
    meta_path = csv_path.with_name("report.json")
    if meta_path.exists():
        prior = json.loads(meta_path.read_text())
        report.metadata = prior.get("metadata", {})
        report.theta_prime = prior.get("theta_prime")
    report.refit()
    return {"report.json": report_json(report), "plot.svg": loglog_svg(report)}


COMMANDS = {
    "kernel-eval": cmd_kernel_eval,
    "design": cmd_design,
    "krr-fit": cmd_krr_fit,
    "krr-predict": cmd_krr_predict,
    "calibrate": cmd_calibrate,
    "study-sec4": cmd_study_sec4,
    "study-krr": cmd_study_krr,
    "report": cmd_report,
}


def _key_listing(sub: str) -> str:
    lines = ["config keys (default):"]
    for k, v in DEFAULTS[sub].items():
        text = json.dumps(v)
        if len(text) > 60:
            text = text[:57] + "..."
        lines.append(f"  {k} = {text}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rkhscal", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = subs.add_parser(
            name, help=HELP[name], epilog=_key_listing(name), formatter_class=argparse.RawDescriptionHelpFormatter
        )
        sp.add_argument("--config", metavar="PATH", help="JSON config file")
        sp.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, metavar="U64", help="random seed override")
        sp.add_argument("--threads", type=int, default=1, metavar="N", help="worker cap (default: 1)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "design":
            sp.add_argument("--n", type=int, help="shortcut for --set n=N")
            sp.add_argument("--domain", help="shortcut: lo,hi")
    return parser


def _shortcuts(args) -> dict:
    extra = {}
    if getattr(args, "n", None) is not None:
        extra["n"] = args.n
    if getattr(args, "domain", None) is not None:
        try:
            extra["domain"] = [float(v) for v in args.domain.split(",")]
        except ValueError:
            raise ConfigError(f"--domain expects lo,hi, got {args.domain!r}") from None
    if args.seed is not None and "seed" in DEFAULTS[args.command]:
        extra["seed"] = args.seed
    return extra


def dispatch(args) -> int:
    try:
        cfg = resolve_config(args.command, args.config, args.set, _shortcuts(args))
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        files = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"rkhscal {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StudyAborted as exc:
        code = _write_partial(args, exc)
        print(f"rkhscal {args.command}: numerical failure: {exc}", file=sys.stderr)
        return code
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"rkhscal {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"rkhscal {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rkhscal {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    manifest = {"command": args.command, "version": __version__, "config": cfg, "threads": args.threads}
    files["manifest.json"] = _dumps(manifest)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            write_atomic(out / name, files[name])
    except OSError as exc:
        print(f"rkhscal {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for name in sorted(files):
        print(Path(args.out) / name)
    return EXIT_OK


def _write_partial(args, exc: StudyAborted) -> int:
    report = exc.partial
    if report is None or len(report.sizes) == 0:
        return EXIT_NUMERIC
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv.partial").write_text(results_csv(report))
    except OSError:
        return EXIT_IO
    return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    raw = list(sys.argv[1:] if argv is None else argv)
    # let "--domain -1,1" through: argparse would read "-1,1" as an option
    argv, i = [], 0
    while i < len(raw):
        if raw[i] == "--domain" and i + 1 < len(raw):
            argv.append(f"--domain={raw[i + 1]}")
            i += 2
        else:
            argv.append(raw[i])
            i += 1
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(levelname)s %(message)s"
    )
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())

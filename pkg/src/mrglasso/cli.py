"""Batch front-end: simulate -> fit -> predict/diagnose -> rate studies.

Every subcommand reads and writes plain JSON/CSV so runs are reproducible
and machine-checkable.  Exit codes: 0 success, 2 configuration error,
3 non-convergence, 4 certification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import (
    FOURIER,
    HAAR,
    NONPARAMETRIC,
    GroupedDesign,
    ResolutionScheme,
    assemble_design,
    make_scheme,
)
from .model import (
    Scenario,
    component_values,
    scenario_from_config,
    simulate,
    truth_values,
)
from .penalties import (
    PenaltySchedule,
    estimate_sigma,
    noise_majorization_check,
    penalty_levels,
)
from .solver import FitConfig, FitResult, fit, predict
from .theory import (
    CertifiedValue,
    ConeSpec,
    compatibility_bruteforce,
    compatibility_search,
    gram_concentration,
    prediction_error_bounds,
)
from .theory.compat import CertificationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_CERTIFICATION = 4


class ConfigError(ValueError):
    pass


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _jsonable(obj):
    """Strict-JSON representation: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_dataset(path: str, x: np.ndarray, y: np.ndarray, f_star: np.ndarray) -> None:
    p = x.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j}" for j in range(1, p + 1)] + ["y", "f_star"])
        for i in range(x.shape[0]):
            row = [f"{v:.17g}" for v in x[i]] + [f"{y[i]:.17g}", f"{f_star[i]:.17g}"]
            writer.writerow(row)


def _read_dataset(path: str) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader if row]
    data = np.asarray(rows)
    xcols = [i for i, name in enumerate(header) if name.startswith("x_")]
    if not xcols or "y" not in header:
        raise ConfigError(f"{path}: expected columns x_1..x_p and y, got {header}")
    y = data[:, header.index("y")]
    f_star = data[:, header.index("f_star")] if "f_star" in header else None
    return data[:, xcols], y, f_star


def _read_xmatrix(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader if row]
    data = np.asarray(rows)
    xcols = [i for i, name in enumerate(header) if name.startswith("x_")]
    if not xcols:
        raise ConfigError(f"{path}: expected columns x_1..x_p, got {header}")
    return data[:, xcols]


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON config {path}: {exc}") from exc


def _family(name: str):
    if name == "fourier":
        return FOURIER
    if name == "haar":
        return HAAR
    raise ConfigError(f"unknown basis family {name!r}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_json(args.scenario)
    if args.seed is not None:
        config["seed"] = args.seed
    try:
        scenario = scenario_from_config(config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    x, y, f_star, _ = simulate(scenario)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "dataset.csv")
    _write_dataset(data_path, x, y, f_star)
    truth = scenario.truth
    sidecar = {
        "scenario": config,
        "k_star": truth.k_star,
        "depth": truth.depth,
        "support": list(truth.support),
        "alpha": {str(j): a for j, a in truth.alpha.items()},
        "coeffs": {f"{j}:{k}": v.tolist() for (j, k), v in truth.coeffs.items()},
        "family": scenario.family.name,
        "design": scenario.design,
        "copula_rho": scenario.copula_rho,
        "sigma": scenario.sigma,
        "seed": scenario.seed,
    }
    truth_path = os.path.join(args.out, "truth.json")
    with open(truth_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    print(f"dataset.csv sha256:{_digest(data_path)}")
    print(f"truth.json sha256:{_digest(truth_path)}")
    return EXIT_OK


def _truth_from_sidecar(sidecar: dict):
    from .model import TruthSpec

    coeffs = {
        tuple(int(t) for t in key.split(":")): np.asarray(val, dtype=float)
        for key, val in sidecar["coeffs"].items()
    }
    return TruthSpec(
        p=int(sidecar["scenario"]["p"]),
        support=tuple(sidecar["support"]),
        alpha={int(j): float(a) for j, a in sidecar["alpha"].items()},
        k_star=int(sidecar["k_star"]),
        depth=int(sidecar["depth"]),
        coeffs=coeffs,
    )


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _scheme_for(
    p: int, n: int, eps: float, k_star: Optional[int], k_max: Optional[int]
) -> ResolutionScheme:
    scheme = make_scheme(p, n=n, eps=eps)
    k_star = scheme.k_star if k_star is None else k_star
    k_max = scheme.k_max if k_max is None else k_max
    return ResolutionScheme(k_star, k_max, (NONPARAMETRIC,) * p)


def cmd_fit(args: argparse.Namespace) -> int:
    x, y, _ = _read_dataset(args.data)
    n, p = x.shape
    try:
        scheme = _scheme_for(p, n, args.eps, args.k_star, args.k_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    family = _family(args.basis)
    design = assemble_design(x, family, scheme)
    if args.sigma == "auto":
        sigma = estimate_sigma(y, design, eps=args.eps, a0=args.a0)
        print(
            f"pilot noise-scale estimate sigma={sigma:.6g} "
            "(non-canonical; the method assumes sigma known)",
            file=sys.stderr,
        )
    else:
        sigma = float(args.sigma)
    schedule = penalty_levels(scheme, n, sigma, eps=args.eps, a0=args.a0)
    result = fit(y, design, schedule, FitConfig())
    os.makedirs(args.out, exist_ok=True)
    payload = json.loads(result.to_json())
    payload["family"] = family.name
    payload["schedule"] = json.loads(schedule.to_json())
    fit_path_ = os.path.join(args.out, "fit.json")
    with open(fit_path_, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    with open(os.path.join(args.out, "fitted.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fitted"])
        for v in result.fitted:
            writer.writerow([f"{v:.17g}"])
    print(
        f"active groups: {len(result.active_set)}; sweeps: {result.n_sweeps}; "
        f"kkt inactive ratio {result.kkt.inactive_max_ratio:.3e}, "
        f"active violation {result.kkt.active_max_violation:.3e}"
    )
    if not result.converged:
        print("fit did not converge within the sweep budget", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _result_from_fit_json(payload: dict) -> FitResult:
    from .solver import KktReport

    scheme = ResolutionScheme(
        int(payload["scheme"]["k_star"]),
        int(payload["scheme"]["k_max"]),
        (NONPARAMETRIC,) * int(payload["scheme"]["p"]),
    )
    beta = {
        tuple(int(t) for t in key.split(":")): np.asarray(val, dtype=float)
        for key, val in payload["beta"].items()
    }
    schedule = PenaltySchedule.from_json(json.dumps(payload["schedule"]))
    kkt = payload["kkt"]
    return FitResult(
        beta=beta,
        fitted_groups={},
        fitted=np.zeros(0),
        active_set=[tuple(int(t) for t in key.split(":")) for key in payload["active_set"]],
        objective_trace=list(payload["objective_trace"]),
        kkt=KktReport(
            inactive_max_ratio=float(kkt["inactive_max_ratio"]),
            active_max_violation=float(kkt["active_max_violation"]),
            inactive_argmax=tuple(kkt["inactive_argmax"]) if kkt["inactive_argmax"] else None,
            active_argmax=tuple(kkt["active_argmax"]) if kkt["active_argmax"] else None,
        ),
        converged=bool(payload["converged"]),
        n_sweeps=int(payload["n_sweeps"]),
        scheme=scheme,
        family=_family(payload["family"]),
        schedule=schedule,
        loss_variant=payload.get("loss_variant", "squared-half"),
    )


def cmd_predict(args: argparse.Namespace) -> int:
    payload = _load_json(args.fit)
    result = _result_from_fit_json(payload)
    x_new = _read_xmatrix(args.data)
    f_hat, per_component = predict(result, x_new)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "predictions.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["f_hat"] + [f"f_hat_{j}" for j in range(1, per_component.shape[1] + 1)]
        )
        for i in range(len(f_hat)):
            writer.writerow(
                [f"{f_hat[i]:.17g}"] + [f"{v:.17g}" for v in per_component[i]]
            )
    print(f"predictions.csv sha256:{_digest(out_path)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def cmd_diagnose(args: argparse.Namespace) -> int:
    x, y, f_star = _read_dataset(args.data)
    payload = _load_json(args.fit)
    result = _result_from_fit_json(payload)
    scheme = result.scheme
    design = assemble_design(x, result.family, scheme)
    schedule = result.schedule
    report: Dict[str, object] = {}

    max_dev, per_group = gram_concentration(design)
    report["gram_deviation"] = {
        "max": max_dev,
        "per_group": {f"{j}:{k}": v for (j, k), v in per_group.items()},
    }

    if f_star is not None:
        holds, worst, arg = noise_majorization_check(design, y - f_star, schedule)
        report["noise_majorization"] = {
            "holds": holds,
            "worst_ratio": worst,
            "argmax_group": list(arg) if arg else None,
        }

    s_set = tuple(result.active_set) or (design.groups()[0],)
    xi = (schedule.a0 + 1.0) / (schedule.a0 - 1.0)
    cone = ConeSpec(xi=xi, s_set=s_set)
    cc_entry: Dict[str, object] = {"xi": xi, "s_set": [list(g) for g in s_set]}
    certified: Optional[CertifiedValue] = None
    try:
        certified = compatibility_bruteforce(
            design, schedule, cone, resolution=args.cc_resolution
        )
        cc_entry.update(
            {
                "certified": True,
                "lower": certified.lo,
                "upper": certified.hi,
                "boxes": certified.n_boxes,
            }
        )
    except CertificationError as exc:
        cc_entry.update({"certified": False, "reason": str(exc)})
        upper = compatibility_search(
            design, schedule, cone, restarts=8, iterations=200, seed=0
        )
        cc_entry["upper"] = upper
    report["compatibility"] = cc_entry

    if f_star is not None and args.truth is not None:
        sidecar = _load_json(args.truth)
        truth = _truth_from_sidecar(sidecar)
        comps = component_values(truth, result.family, x)
        fbar_blocks = {
            key: vec for key, vec in comps.items() if key[1] <= scheme.k_max
        }
        c_pred = (
            1.0 / certified.lo ** 2
            if certified is not None and certified.lo > 0
            else math.inf
        )
        bounds = prediction_error_bounds(
            fbar_blocks, f_star, schedule, s_set, c_pred
        )
        n = len(y)
        fhat_full, _ = predict(result, x)
        err = float(np.linalg.norm(fhat_full - f_star) ** 2 / n)
        report["prediction_bound"] = {
            "error_insample": err,
            "bound_err": bounds.bound_err,
            "bound_sum": bounds.bound_sum,
            "bound_adaptive": bounds.bound_adaptive,
            "c_pred_upper": c_pred,
        }

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "diagnostics.json")
    with open(out_path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True, allow_nan=False)
    print(f"diagnostics.json sha256:{_digest(out_path)}")
    if args.require_cert and not cc_entry.get("certified", False):
        print("compatibility certification failed", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateStudyConfig:
    """Grid of sample sizes with replicates for a rate reproduction run."""

    base: dict
    n_grid: Tuple[int, ...]
    replicates: int
    target_exponent: float
    seed: int
    oos_points: int = 2048

    def __post_init__(self):
        if len(self.n_grid) < 3:
            raise ConfigError("n_grid needs at least 3 points")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")


def _rate_cell(job: Tuple[dict, int, int, int, int]) -> Tuple[int, int, dict]:
    """One (n, replicate) fit; module-level so process pools can pickle it."""
    base, n, replicate, seed, oos_points = job
    config = dict(base)
    config["seed"] = seed + replicate
    config["n"] = n
    scenario = scenario_from_config(config)
    x, y, f_star, _ = simulate(scenario)
    scheme = make_scheme(
        scenario.truth.p, n=n, eps=float(config.get("eps", 1.0))
    )
    scheme = ResolutionScheme(
        scenario.truth.k_star, scheme.k_max, (NONPARAMETRIC,) * scenario.truth.p
    )
    design = assemble_design(x, scenario.family, scheme)
    schedule = penalty_levels(
        scheme,
        n,
        scenario.sigma,
        eps=float(config.get("eps", 1.0)),
        a0=float(config.get("a0", 2.0)),
    )
    result = fit(y, design, schedule, FitConfig())
    err_in = float(np.linalg.norm(result.fitted - f_star) ** 2 / n)
    from .model import out_of_sample_error

    err_oos, oos_se = out_of_sample_error(
        result, scenario, m=oos_points, seed=seed + 7919 + replicate
    )
    return (
        n,
        replicate,
        {
            "err_in": err_in,
            "err_oos": err_oos,
            "oos_se": oos_se,
            "converged": result.converged,
            "active_groups": len(result.active_set),
        },
    )


def run_rate_study(config: RateStudyConfig, threads: int = 1) -> dict:
    """Execute the grid and summarize; deterministic in the config."""
    jobs = [
        (config.base, n, r, config.seed, config.oos_points)
        for n in config.n_grid
        for r in range(config.replicates)
    ]
    results: Dict[Tuple[int, int], dict] = {}
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            for n, r, cell in pool.map(_rate_cell, jobs):
                results[(n, r)] = cell
    else:
        for job in jobs:
            n, r, cell = _rate_cell(job)
            results[(n, r)] = cell

    points = []
    for n in config.n_grid:
        cells = [results[(n, r)] for r in range(config.replicates)]
        points.append(
            {
                "n": n,
                "median_in": float(np.median([c["err_in"] for c in cells])),
                "mean_in": float(np.mean([c["err_in"] for c in cells])),
                "median_oos": float(np.median([c["err_oos"] for c in cells])),
                "mean_oos": float(np.mean([c["err_oos"] for c in cells])),
                "n_nonconverged": sum(not c["converged"] for c in cells),
            }
        )
    degenerate = int(config.base.get("s0", 0)) == 0 or any(
        p["median_in"] <= 0 for p in points
    )
    summary = {
        "target_exponent": config.target_exponent,
        "degenerate": degenerate,
        "points": points,
    }
    if not degenerate:
        logs_n = np.log([p["n"] for p in points])
        logs_e = np.log([p["median_in"] for p in points])
        design_mat = np.column_stack([np.ones_like(logs_n), logs_n])
        coef, res_, *_ = np.linalg.lstsq(design_mat, logs_e, rcond=None)
        resid = logs_e - design_mat @ coef
        dof = max(len(logs_n) - 2, 1)
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design_mat.T @ design_mat)
        summary["slope"] = float(coef[1])
        summary["slope_stderr"] = float(np.sqrt(cov[1, 1]))
    return {"summary": summary, "cells": results}


def cmd_rates(args: argparse.Namespace) -> int:
    raw = _load_json(args.config)
    try:
        config = RateStudyConfig(
            base=raw["base"],
            n_grid=tuple(int(v) for v in raw["n_grid"]),
            replicates=int(raw["replicates"]),
            target_exponent=float(raw["target_exponent"]),
            seed=int(raw.get("seed", args.seed if args.seed is not None else 0)),
            oos_points=int(raw.get("oos_points", 2048)),
        )
    except KeyError as exc:
        raise ConfigError(f"rate study config missing field {exc}") from exc
    out = run_rate_study(config, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    points_path = os.path.join(args.out, "rate_points.csv")
    with open(points_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "replicate", "err_in", "err_oos", "oos_se", "converged"]
        )
        for n in config.n_grid:
            for r in range(config.replicates):
                cell = out["cells"][(n, r)]
                writer.writerow(
                    [
                        n,
                        r,
                        f"{cell['err_in']:.17g}",
                        f"{cell['err_oos']:.17g}",
                        f"{cell['oos_se']:.17g}",
                        int(cell["converged"]),
                    ]
                )
    summary_path = os.path.join(args.out, "rate_summary.json")
    with open(summary_path, "w") as fh:
        json.dump(out["summary"], fh, indent=2, sort_keys=True)
    summary = out["summary"]
    if summary["degenerate"]:
        print("degenerate study (zero truth or zero errors); slope not reported")
    else:
        print(
            f"slope {summary['slope']:.4f} +- {summary['slope_stderr']:.4f} "
            f"(target {config.target_exponent})"
        )
    print(f"rate_points.csv sha256:{_digest(points_path)}")
    print(f"rate_summary.json sha256:{_digest(summary_path)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrgl",
        description="multi-resolution group lasso: simulate, fit, predict, "
        "diagnose, and rate studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON path")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit the grouped estimator to a dataset")
    p_fit.add_argument("--data", required=True, help="dataset CSV path")
    p_fit.add_argument("--sigma", required=True, help="noise scale, or 'auto'")
    p_fit.add_argument("--eps", type=float, default=1.0)
    p_fit.add_argument("--a0", type=float, default=2.0)
    p_fit.add_argument("--k-star", dest="k_star", type=int, default=None)
    p_fit.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_fit.add_argument("--basis", default="fourier", choices=("fourier", "haar"))
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="evaluate a fit at new covariates")
    p_pred.add_argument("--fit", required=True, help="fit JSON path")
    p_pred.add_argument("--data", required=True, help="CSV with x_1..x_p columns")
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_diag = sub.add_parser("diagnose", help="bound-side diagnostics for a fit")
    p_diag.add_argument("--data", required=True)
    p_diag.add_argument("--fit", required=True)
    p_diag.add_argument("--truth", default=None, help="truth sidecar JSON")
    p_diag.add_argument("--cc-resolution", type=float, default=0.1)
    p_diag.add_argument("--require-cert", action="store_true")
    p_diag.add_argument("--out", required=True)
    p_diag.set_defaults(func=cmd_diagnose)

    p_rate = sub.add_parser("rates", help="error-vs-n study with slope fit")
    p_rate.add_argument("--config", required=True, help="rate study JSON")
    p_rate.add_argument("--seed", type=int, default=None)
    p_rate.add_argument("--threads", type=int, default=1)
    p_rate.add_argument("--out", required=True)
    p_rate.set_defaults(func=cmd_rates)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION


if __name__ == "__main__":
    sys.exit(main())

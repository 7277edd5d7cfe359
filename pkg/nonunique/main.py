"""
Command-line entry point: parses flags, merges the JSON run configuration and dispatches to
the module pipelines. Reports land in <out>/<command>/report.json.

Exit codes: 0 when every certificate passes, 1 on a certified failure, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from nonunique.config import configure_logging
from nonunique.construct import AdmissibleDirection, CoverMode, GridSpec, build_oscillation
from nonunique.construct import build_staircase
from nonunique.core.blocks import numeric_rank
from nonunique.core.flux import FluxFunction, get_flux
from nonunique.core.sampling import Sampler
from nonunique.errors import ConvergenceError, DecompositionError, RefinementError
from nonunique.geometry import (
    PointCloud,
    TNConfig,
    admissible_check,
    collinear_legs,
    convex_coeffs,
    convex_membership,
    lamination_hull,
    search_rank_one_in_K,
    tartar_fixture,
    tn_from_json,
)
from nonunique.refine import (
    RefineOptions,
    instability_witness,
    multi_refine,
    pm1d_demo_provider,
    pm1d_demo_subsolution,
    refine_step,
    residual_l2,
    write_checkpoint,
)
from nonunique.refine.subsolution import DEMO_SEEDS
from nonunique.reports import emit_report, write_cloud_csv, write_mask_rle_csv, write_report
from nonunique.reports import write_field_csv, write_wcif
from nonunique.schema import Certificate, Command, RunConfig, all_passed
from nonunique.tau import (
    decompose_sigma_point,
    dimension_check,
    find_equal_flux_pair,
    lift_tau,
    scalar_tau2,
    tau_residual,
)

load_dotenv()

logger = logging.getLogger(__name__)

Outcome = tuple[Any, bool]


def _float_list(text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        message = f"expected a comma-separated list of numbers: {text}"
        raise argparse.ArgumentTypeError(message) from exc


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out) / cfg.command.value
    path.mkdir(parents=True, exist_ok=True)
    return path


def _flux(cfg: RunConfig, m: int = 1, n: int = 1) -> FluxFunction:
    return get_flux(cfg.flux, m, n, cfg.flux_matrix)


def _write_field(directory: Path, name: str, values: np.ndarray, grid: GridSpec, csv: bool) -> None:
    if csv:
        write_field_csv(directory / f"{name}.csv", grid.coords(), values)
        return
    extra = [1.0] * (values.ndim - grid.ndim)
    write_wcif(directory / f"{name}.wcif", values, list(grid.spacing) + extra)


def _pairwise_ranks(points: np.ndarray) -> list[dict[str, int]]:
    return [
        {"i": i, "j": j, "rank": numeric_rank(points[i] - points[j])}
        for i in range(len(points))
        for j in range(i + 1, len(points))
    ]


def _reconstruction_error(cfg: TNConfig) -> tuple[list[np.ndarray], float]:
    nus = [convex_coeffs(cfg, j) for j in range(cfg.N)]
    worst = max(
        float(np.linalg.norm(cfg.anchors[j] - np.tensordot(nu, cfg.X, axes=1)))
        for j, nu in enumerate(nus)
    )
    return nus, worst


def cmd_verify_tn(cfg: RunConfig) -> Outcome:
    if "legs" in cfg.extra:
        tn = tn_from_json(cfg.extra)
    else:
        logger.info("no configuration in the run file, verifying the four-corner fixture")
        tn = tartar_fixture()[1]
    nus, worst = _reconstruction_error(tn)
    closure = float(np.linalg.norm(tn.C.sum(axis=0)))
    certificates = [
        Certificate.upper("nu_reconstruction", worst, 1e-9),
        Certificate.upper("closure", closure, 1e-9 * (1.0 + float(np.abs(tn.C).max()))),
    ]
    result: dict[str, Any] = {
        "N": tn.N,
        "kappa": tn.kappa,
        "mu": tn.mu,
        "corners": tn.X,
        "anchors": tn.anchors,
        "pairwise_ranks": _pairwise_ranks(tn.X),
        "nu": nus,
        "collinear_legs": collinear_legs(tn),
    }
    if tn.dims is not None:
        report = admissible_check(tn)
        result["admissible"] = report.admissible
        result["legs"] = report.legs
    result["certificates"] = certificates
    return result, all_passed(certificates)


def cmd_tartar_demo(cfg: RunConfig) -> Outcome:
    corners, tn = tartar_fixture()
    depth = int(cfg.extra.get("depth", 5))
    ranks = _pairwise_ranks(corners)
    cloud = PointCloud(corners)
    hull = lamination_hull(cloud, depth)
    membership = [convex_membership(tn.anchors[j], cloud, tol=1e-10) for j in range(tn.N)]
    certificates = [
        Certificate.lower("min_pairwise_rank", min(r["rank"] for r in ranks), 2),
        Certificate.upper("lamination_added", len(hull) - len(cloud), 0),
        Certificate.upper("anchor_membership", max(m.residual for m in membership), 1e-10),
    ]
    result = {
        "corners": corners,
        "pairwise_ranks": ranks,
        "hull_size": len(hull),
        "hull_depth": hull.depth,
        "anchor_weights": [m.coefficients for m in membership],
        "certificates": certificates,
    }
    return result, all_passed(certificates)


def cmd_hulls(cfg: RunConfig) -> Outcome:
    points = cfg.extra.get("points")
    cloud = PointCloud(np.asarray(points, dtype=float) if points else tartar_fixture()[0])
    depth = int(cfg.extra.get("depth", 2))
    samples = int(cfg.extra.get("lambda_samples", 7))
    hull = lamination_hull(cloud, depth, samples)
    write_cloud_csv(_out_dir(cfg) / "cloud.csv", list(hull.points), hull.provenance)
    queries = [np.asarray(q, dtype=float) for q in cfg.extra.get("queries", [])]
    members = [convex_membership(q.reshape(cloud.shape), hull) for q in queries]
    result = {
        "input_size": len(cloud),
        "hull_size": len(hull),
        "depth_reached": hull.depth,
        "fixed_point": len(hull) == len(cloud),
        "provenance": {tag: hull.provenance.count(tag) for tag in sorted(set(hull.provenance))},
        "queries": [{"member": m.member, "residual": m.residual} for m in members],
    }
    return result, True


def _sigma_tube_roundtrip(
    sigma: FluxFunction, pair, samples: int, seed: int, offset: float = 5e-3
) -> tuple[float, int]:
    """Decompose random points of the tube around the equal-flux pair; worst residual, failures."""
    rng = np.random.default_rng(seed)
    base = sigma(pair.p_plus.reshape(1, -1))[0]
    worst, failures = 0.0, 0
    for _ in range(samples):
        lam = rng.uniform(0.2, 0.8)
        p = lam * pair.p_plus + (1.0 - lam) * pair.p_minus
        beta = base + offset * rng.uniform(-1.0, 1.0, size=base.shape)
        try:
            dec = decompose_sigma_point(sigma, (p, beta), (pair.p_plus, lam))
        except DecompositionError:
            failures += 1
            continue
        worst = max(worst, dec.residual)
    return worst, failures


def cmd_search_tau(cfg: RunConfig) -> Outcome:
    m, n = int(cfg.extra.get("m", 1)), int(cfg.extra.get("n", 1))
    sigma = _flux(cfg, m, n)
    certificates: list[Certificate] = []
    result: dict[str, Any] = {"flux": sigma.label, "m": m, "n": n}
    if m == 1 and cfg.flux in ("perona-malik", "cubic"):
        seeds = tuple(tuple(s) for s in cfg.extra.get("seeds", DEMO_SEEDS))
        pair = find_equal_flux_pair(sigma, seeds)  # type: ignore[arg-type]
        tau = scalar_tau2(sigma, pair.p_plus, pair.p_minus)
        residual = float(np.max(np.abs(tau_residual(tau, sigma))))
        worst, failures = _sigma_tube_roundtrip(
            sigma, pair, int(cfg.extra.get("decompositions", 100)), cfg.seed
        )
        certificates += [
            Certificate.upper("flux_gap", pair.flux_gap, 1e-12),
            Certificate.lower("delta", abs(pair.delta), float(cfg.extra.get("delta_min", 0.1))),
            Certificate.upper("tau_residual", residual, 1e-10),
            Certificate.upper("decomposition_residual", worst, 1e-8),
            Certificate.upper("decomposition_failures", failures, 0),
        ]
        result.update(pair=pair, tau_residual=residual, kappa=tau.kappa)
    sampler = Sampler(count=int(cfg.extra.get("samples", 10000)), seed=cfg.seed)
    search = search_rank_one_in_K(sigma, sampler)
    result["rank_one_search"] = {
        "count": search.count,
        "refined": search.refined,
        "min_residual": search.min_residual,
        "findings": len(search.findings),
    }
    if cfg.flux == "identity":
        certificates.append(Certificate.upper("rank_one_findings", len(search.findings), 0))
    checks = []
    for dm, dN in cfg.extra.get("dimension_pairs", []):
        check = dimension_check(int(dm), int(dN), seed=cfg.seed)
        checks.append(check)
        certificates.append(
            Certificate.upper(f"dimension_m{dm}_N{dN}", abs(check.observed - check.formula), 0)
        )
    result["dimension_checks"] = checks
    result["certificates"] = certificates
    return result, all_passed(certificates)


def cmd_oscillate(cfg: RunConfig) -> Outcome:
    grid = GridSpec.cube(1, cfg.grid)
    direction_opts = cfg.extra.get("direction", {})
    direction = AdmissibleDirection(
        p=np.asarray(direction_opts.get("p", [1.0]), dtype=float),
        alpha=np.asarray(direction_opts.get("alpha", [1.0]), dtype=float),
        s=float(direction_opts.get("s", 0.0)),
        beta=np.asarray(direction_opts.get("beta", [[0.0]]), dtype=float),
    )
    lam = float(cfg.extra.get("lam", 0.5))
    frequency = float(cfg.extra.get("frequency", cfg.grid / 8))
    res = build_oscillation(direction, lam, grid, cfg.eps[0], frequency)
    out = _out_dir(cfg)
    _write_field(out, "u", res.field.u, grid, cfg.csv)
    _write_field(out, "v", res.field.v, grid, cfg.csv)
    write_mask_rle_csv(out / "masks.csv", [res.g_plus, res.g_minus])
    return res.report, res.report.passed


def cmd_staircase(cfg: RunConfig) -> Outcome:
    sigma = _flux(cfg)
    seeds = tuple(tuple(s) for s in cfg.extra.get("seeds", DEMO_SEEDS))
    pair = find_equal_flux_pair(sigma, seeds)  # type: ignore[arg-type]
    tn = lift_tau(scalar_tau2(sigma, pair.p_plus, pair.p_minus))
    position = float(cfg.extra.get("position", 0.5))
    Y = (1.0 - position) * tn.X[0] + position * tn.anchors[0]
    grid = GridSpec.cube(1, cfg.grid)
    res = build_staircase(
        tn,
        Y,
        grid,
        cfg.eps[0],
        float(cfg.extra.get("frequency", cfg.grid / 8)),
        mode=CoverMode(cfg.extra.get("mode", CoverMode.REGION.value)),
        workers=cfg.threads,
    )
    out = _out_dir(cfg)
    _write_field(out, "omega_u", res.field.u, grid, cfg.csv)
    _write_field(out, "omega_v", res.field.v, grid, cfg.csv)
    write_mask_rle_csv(out / "masks.csv", list(res.masks))
    return res.report, res.report.passed


def _demo(cfg: RunConfig):
    sigma = _flux(cfg)
    provider = pm1d_demo_provider(sigma, float(cfg.extra.get("tube_radius", 0.05)))
    grid = GridSpec.cube(1, cfg.grid)
    sub = pm1d_demo_subsolution(grid, sigma, provider, float(cfg.extra.get("perturb", 0.1)))
    options = RefineOptions(workers=cfg.threads, seed=cfg.seed, **cfg.extra.get("refine", {}))
    return sigma, provider, sub, options


def cmd_refine(cfg: RunConfig) -> Outcome:
    sigma, provider, sub, options = _demo(cfg)
    step = refine_step(sub, sigma, provider, cfg.eps[0], cfg.rho[0], options)
    write_checkpoint(_out_dir(cfg) / "checkpoint", step.subsolution, step.report, cfg.csv)
    return step.report, step.report.passed


def cmd_demo_pm1d(cfg: RunConfig) -> Outcome:
    sigma, provider, sub, options = _demo(cfg)
    run = multi_refine(sub, sigma, provider, cfg.eps, cfg.rho, options)
    out = _out_dir(cfg)
    for k, (iterate, report) in enumerate(zip(run.iterates, run.reports)):
        write_checkpoint(out / f"iterate_{k}", iterate, report, cfg.csv)
    result = {
        "base_residual_l2": residual_l2(sub, sigma),
        "base_witness": instability_witness(sub, sigma),
        "steps": run.reports,
        "iterate_witness": [instability_witness(it, sigma) for it in run.iterates],
        "failure": run.failure,
    }
    return result, run.passed


COMMANDS: dict[Command, Callable[[RunConfig], Outcome]] = {
    Command.VERIFY_TN: cmd_verify_tn,
    Command.TARTAR_DEMO: cmd_tartar_demo,
    Command.HULLS: cmd_hulls,
    Command.SEARCH_TAU: cmd_search_tau,
    Command.OSCILLATE: cmd_oscillate,
    Command.STAIRCASE: cmd_staircase,
    Command.REFINE: cmd_refine,
    Command.DEMO_PM1D: cmd_demo_pm1d,
}

HELP = {
    Command.VERIFY_TN: "Validate a T_N-configuration file (default: four-corner fixture)",
    Command.TARTAR_DEMO: "Four corners without rank-one connections and their hulls",
    Command.HULLS: "Lamination hull of a point cloud",
    Command.SEARCH_TAU: "Equal-flux pair, tau_2 configuration and rank-one search",
    Command.OSCILLATE: "Single oscillation block on the unit cube",
    Command.STAIRCASE: "Nested staircase on the lifted double well",
    Command.REFINE: "One refinement step of the demo subsolution",
    Command.DEMO_PM1D: "Refinement along the eps schedule with checkpoints",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON run configuration")
    common.add_argument("--flux", default=None, help="Flux label")
    common.add_argument("--grid", type=int, default=None, help="Nodes per axis (power of two)")
    common.add_argument("--eps", type=_float_list, default=None, help="Comma-separated eps list")
    common.add_argument("--rho", type=_float_list, default=None, help="Comma-separated rho list")
    common.add_argument("--seed", type=int, default=None, help="Random seed")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker cap")
    common.add_argument("--csv", action="store_true", default=None, help="Dump fields as CSV")
    common.add_argument("--log-level", default=None, help="Logging level")

    parser = argparse.ArgumentParser(
        description="Convex-integration toolkit for nonmonotone diffusion"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, func in COMMANDS.items():
        p = sub.add_parser(command.value, parents=[common], help=HELP[command])
        p.set_defaults(func=func)
    return parser


def _flags(args: argparse.Namespace) -> dict[str, Any]:
    keys = ("flux", "grid", "eps", "rho", "seed", "out", "threads", "csv")
    flags = {key: getattr(args, key) for key in keys}
    flags["command"] = args.command
    return flags


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, run and report one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)
    try:
        cfg = RunConfig.from_sources(_flags(args), args.config)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    echo = cfg.model_dump(mode="json")
    out = _out_dir(cfg)
    start = time.perf_counter()
    try:
        result, passed = args.func(cfg)
    except RefinementError as exc:
        logger.error("%s", exc)
        result, passed = exc.report, False
    except ConvergenceError as exc:
        logger.error("%s", exc)
        result, passed = {"error": str(exc), "residual": exc.residual}, False
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start

    path = write_report(out / "report.json", emit_report(result, config=echo, seed=cfg.seed))
    # timings vary between runs and stay out of the report
    write_report(out / "timings.json", json.dumps({"seconds": elapsed}, indent=2))
    verdict = "pass" if passed else "FAIL"
    print(f"{cfg.command.value}: {verdict} ({elapsed:.2f}s), report written to {path}")
    return 0 if passed else 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()

"""Command line interface.

Subcommands: ``simulate``, ``estimate``, ``infer``, ``segment-tree``,
``denoise``, ``bin-grid``.  Exit codes: 0 success, 2 input or validation
error, 3 inference refused (boundary change point).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import io as gio
from .estimator import ThresholdConfig, coarse_init, detect_change_point, estimate_change_point
from .grid import DataGrid, bin_scatter_to_grid
from .inference import (
    BoundaryChangePointError,
    asymptotic_variances,
    confidence_intervals,
    jump_profile,
    refit_means,
    sample_covariance,
)
from .segtree import build_segmentation_tree, reconstruct_means, tree_report
from .sim import SimDesign, run_replications

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REFUSED = 3


class CliError(Exception):
    """Input or validation failure mapped to exit code 2."""


def _parse_pair(text: str, name: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"--{name} expects two comma-separated values, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise CliError(f"--{name}: {exc}") from exc


def _load_grid(path, center: bool) -> DataGrid:
    try:
        grid = gio.read_grid_csv(path)
    except (OSError, gio.FormatError) as exc:
        raise CliError(f"cannot read grid {path}: {exc}") from exc
    if center:
        from .grid import center_grid

        grid = center_grid(grid)
    return grid


def _threshold_config(grid: DataGrid, args) -> ThresholdConfig:
    if getattr(args, "lambda_scale", "auto") == "auto":
        return ThresholdConfig.scaled_to(grid)
    return ThresholdConfig()


def cmd_simulate(args) -> int:
    try:
        design = SimDesign(
            t_w=args.tw,
            t_h=args.th,
            p=args.p,
            s=args.s,
            tau0_frac=_parse_pair(args.tau, "tau"),
            rho=args.rho,
            noise=args.noise,
            noise_scale=args.noise_scale,
            n_reps=args.reps,
            alpha=args.alpha,
            seed=args.seed,
            mc_draws=args.mc_draws,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    metrics = run_replications(design)

    header = [
        "tw", "th", "p", "s", "tau_w0", "tau_h0", "rho", "noise", "reps", "alpha", "seed",
        "bias_w", "rmse_w", "coverage_v_w", "avg_me_v_w", "coverage_nv_w", "avg_me_nv_w",
        "bias_h", "rmse_h", "coverage_v_h", "avg_me_v_h", "coverage_nv_h", "avg_me_nv_h",
        "n_refused",
    ]
    tau0 = design.tau0
    row = [
        design.t_w, design.t_h, design.p, design.s, tau0.tau_w, tau0.tau_h,
        design.rho, design.noise, design.n_reps, design.alpha, design.seed,
        repr(metrics.bias_w), repr(metrics.rmse_w),
        repr(metrics.coverage_v_w), repr(metrics.avg_me_v_w),
        repr(metrics.coverage_nv_w), repr(metrics.avg_me_nv_w),
        repr(metrics.bias_h), repr(metrics.rmse_h),
        repr(metrics.coverage_v_h), repr(metrics.avg_me_v_h),
        repr(metrics.coverage_nv_h), repr(metrics.avg_me_nv_h),
        metrics.n_refused,
    ]
    with open(args.out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerow(row)

    if args.out_jsonl:
        with open(args.out_jsonl, "w") as fh:
            for rec in metrics.records:
                fh.write(
                    json.dumps(
                        {
                            "rep": rec.rep,
                            "tau_hat": list(rec.tau_hat),
                            "tau0": list(rec.tau0),
                            "refused": rec.refused,
                            "me_v": [rec.me_v_w, rec.me_v_h],
                            "me_nv": [rec.me_nv_w, rec.me_nv_h],
                            "cover_v": [rec.cover_v_w, rec.cover_v_h],
                            "cover_nv": [rec.cover_nv_w, rec.cover_nv_h],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    print(f"simulate: {design.n_reps} replications -> {args.out_csv}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    grid = _load_grid(args.grid, args.center)
    config = _threshold_config(grid, args)
    try:
        init = coarse_init(grid, config)
        if args.select_boundary:
            trace = detect_change_point(grid, init, config, c_bic=args.cbic)
        else:
            trace = estimate_change_point(grid, init, config)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    gio.write_json(args.out, gio.trace_to_dict(trace))
    cp = trace.final_cp
    print(f"estimate: change point ({cp.tau_w}, {cp.tau_h}) -> {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    grid = _load_grid(args.grid, args.center)
    config = _threshold_config(grid, args)
    try:
        init = coarse_init(grid, config)
        trace = estimate_change_point(grid, init, config)
        tau = trace.final_cp
        refit = refit_means(grid, tau, trace.step2_means.supports)
        profile = jump_profile(refit, tau, grid.dims)
        cov = sample_covariance(grid, tau, refit)
        var = asymptotic_variances(profile, cov)
        cis = confidence_intervals(
            tau, profile, var, grid.dims,
            alpha=args.alpha, n_draws=args.mc_draws, seed=args.seed,
        )
    except BoundaryChangePointError as exc:
        print(f"infer: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    gio.write_json(
        args.out, gio.inference_report(tau, cis, profile, var, args.mc_draws, args.seed)
    )
    print(
        f"infer: tau=({tau.tau_w}, {tau.tau_h}) "
        f"vanishing ME=({cis.vanishing_w.margin:.4g}, {cis.vanishing_h.margin:.4g}) "
        f"nonvanishing ME=({cis.nonvanishing_w.margin:.4g}, {cis.nonvanishing_h.margin:.4g}) "
        f"-> {args.out}"
    )
    return EXIT_OK


def _segment(grid: DataGrid, args):
    config = _threshold_config(grid, args)
    tree = build_segmentation_tree(
        grid,
        config,
        c_bic=args.cbic,
        min_cells=args.min_cells,
        max_level=args.max_level,
        n_workers=args.threads,
    )
    return tree, tree_report(tree)


def cmd_segment_tree(args) -> int:
    if (args.grid is None) == (args.image is None):
        raise CliError("provide exactly one of --grid or --image")
    if args.grid is not None:
        grid = _load_grid(args.grid, center=False)
    else:
        try:
            grid = gio.read_image_grid(args.image)
        except OSError as exc:
            raise CliError(f"cannot read image {args.image}: {exc}") from exc
    tree, report = _segment(grid, args)
    gio.write_json(args.out, gio.tree_to_dict(tree, report))
    if args.reconstruct:
        gio.write_grid_csv(args.reconstruct, reconstruct_means(grid, tree))
    print(
        f"segment-tree: levels={report.levels} change_points={report.n_change_points} "
        f"leaves={report.n_leaves} -> {args.out}"
    )
    return EXIT_OK


def cmd_denoise(args) -> int:
    try:
        grid = gio.read_image_grid(args.input)
    except OSError as exc:
        raise CliError(f"cannot read image {args.input}: {exc}") from exc

    if args.add_noise is not None:
        if args.add_noise < 0:
            raise CliError("--add-noise variance must be >= 0")
        if args.seed is None:
            raise CliError("--add-noise requires --seed for reproducibility")
        rng = np.random.default_rng(args.seed)
        noisy = grid.values + np.sqrt(args.add_noise) * rng.standard_normal(grid.values.shape)
        grid = DataGrid(noisy)

    tree, report = _segment(grid, args)
    recon = reconstruct_means(grid, tree)
    try:
        gio.write_image_grid(args.output, recon)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot write image {args.output}: {exc}") from exc
    if args.tree_out:
        gio.write_json(args.tree_out, gio.tree_to_dict(tree, report))
    print(
        f"denoise: leaves={report.n_leaves} change_points={report.n_change_points} "
        f"-> {args.output}"
    )
    return EXIT_OK


def cmd_bin_grid(args) -> int:
    try:
        coords, obs = gio.read_scatter_csv(args.scatter)
    except (OSError, gio.FormatError) as exc:
        raise CliError(f"cannot read scatter {args.scatter}: {exc}") from exc
    try:
        grid = bin_scatter_to_grid(coords, obs, (args.tw, args.th), args.k)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    gio.write_grid_csv(args.out, grid)
    if args.mapping_out:
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        # affine cell-center map: the physical location of cell (w, h);
        # how to map inferential intervals back to physical units is the
        # caller's judgement call
        gio.write_json(
            args.mapping_out,
            {
                "schema": gio.SCHEMA,
                "bbox": {"x": [lo[0], hi[0]], "y": [lo[1], hi[1]]},
                "cell_center_x": "x_lo + (w - 0.5) / tw * (x_hi - x_lo)",
                "cell_center_y": "y_lo + (h - 0.5) / th * (y_hi - y_lo)",
                "tw": args.tw,
                "th": args.th,
            },
        )
    print(f"bin-grid: {coords.shape[0]} points -> {args.tw} x {args.th} grid {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridseg",
        description="2d change point estimation, inference and grid segmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo replication study")
    sim.add_argument("--tw", type=int, default=30)
    sim.add_argument("--th", type=int, default=30)
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("--s", type=int, default=5)
    sim.add_argument("--tau", default="0.2,0.2", help="change point as fractions fw,fh")
    sim.add_argument("--rho", type=float, default=0.5)
    sim.add_argument("--noise", choices=["gaussian", "laplace", "centered_exponential"],
                     default="gaussian")
    sim.add_argument("--noise-scale", type=float, default=1.0)
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--mc-draws", type=int, default=4000)
    sim.add_argument("--out-csv", required=True)
    sim.add_argument("--out-jsonl")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="single change point estimation from a grid CSV")
    est.add_argument("--grid", required=True)
    est.add_argument("--center", action="store_true", help="subtract the global mean first")
    est.add_argument("--lambda-scale", choices=["auto", "default"], default="auto")
    est.add_argument("--select-boundary", action="store_true",
                     help="allow no-split selection on each axis")
    est.add_argument("--cbic", type=float, default=1.0)
    est.add_argument("--out", required=True)
    est.set_defaults(func=cmd_estimate)

    inf = sub.add_parser("infer", help="estimation plus confidence intervals")
    inf.add_argument("--grid", required=True)
    inf.add_argument("--center", action="store_true")
    inf.add_argument("--lambda-scale", choices=["auto", "default"], default="auto")
    inf.add_argument("--alpha", type=float, default=0.05)
    inf.add_argument("--mc-draws", type=int, default=4000)
    inf.add_argument("--seed", type=int, required=True)
    inf.add_argument("--out", required=True)
    inf.set_defaults(func=cmd_infer)

    seg = sub.add_parser("segment-tree", help="hierarchical segmentation of a grid or image")
    seg.add_argument("--grid")
    seg.add_argument("--image")
    seg.add_argument("--lambda-scale", choices=["auto", "default"], default="auto")
    seg.add_argument("--cbic", type=float, default=1.0)
    seg.add_argument("--min-cells", type=int, default=16)
    seg.add_argument("--max-level", type=int, default=20)
    seg.add_argument("--threads", type=int, default=1)
    seg.add_argument("--reconstruct", help="also write the piecewise-mean grid CSV")
    seg.add_argument("--out", required=True)
    seg.set_defaults(func=cmd_segment_tree)

    den = sub.add_parser("denoise", help="piecewise-mean image denoising")
    den.add_argument("--input", required=True)
    den.add_argument("--output", required=True)
    den.add_argument("--tree-out")
    den.add_argument("--lambda-scale", choices=["auto", "default"], default="auto")
    den.add_argument("--cbic", type=float, default=1.0)
    den.add_argument("--min-cells", type=int, default=16)
    den.add_argument("--max-level", type=int, default=20)
    den.add_argument("--threads", type=int, default=1)
    den.add_argument("--add-noise", type=float, default=None,
                     help="add Gaussian noise of this variance before segmenting")
    den.add_argument("--seed", type=int, default=None)
    den.set_defaults(func=cmd_denoise)

    bing = sub.add_parser("bin-grid", help="bin scattered observations onto a uniform grid")
    bing.add_argument("--scatter", required=True)
    bing.add_argument("--tw", type=int, default=25)
    bing.add_argument("--th", type=int, default=25)
    bing.add_argument("--k", type=int, default=10)
    bing.add_argument("--mapping-out", help="write the affine cell-center mapping JSON")
    bing.add_argument("--out", required=True)
    bing.set_defaults(func=cmd_bin_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gridseg {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

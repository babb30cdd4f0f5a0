"""File formats: long-form grid CSV, scatter CSV, JSON reports, and images.

Grid CSV is long form with header ``w,h,x1,...,xp`` and exactly one row per
cell; duplicates or gaps are parse errors.  Scatter CSV carries
``cx,cy,x1,...,xp``.  JSON documents are versioned with a top-level
``schema: "gridseg/v1"`` field.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .grid import ChangePoint, DataGrid
from .inference import ConfidenceIntervals, Interval

SCHEMA = "gridseg/v1"


class FormatError(ValueError):
    """Malformed input file."""


def _check_header(header, fixed, prefix):
    if header is None:
        raise FormatError("empty file")
    header = [c.strip() for c in header]
    if header[: len(fixed)] != list(fixed):
        raise FormatError(f"expected header starting with {','.join(fixed)}")
    comps = header[len(fixed) :]
    expect = [f"{prefix}{i}" for i in range(1, len(comps) + 1)]
    if not comps or comps != expect:
        raise FormatError(f"expected component columns {prefix}1..{prefix}p")
    return len(comps)


def read_grid_csv(path) -> DataGrid:
    """Parse a long-form grid CSV; every cell must appear exactly once."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        p = _check_header(header, ("w", "h"), "x")
        cells = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + p:
                raise FormatError(f"line {lineno}: expected {2 + p} fields, got {len(row)}")
            try:
                w, h = int(row[0]), int(row[1])
                vec = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            if (w, h) in cells:
                raise FormatError(f"line {lineno}: duplicate cell ({w}, {h})")
            cells[(w, h)] = vec

    if not cells:
        raise FormatError("no grid cells found")
    t_w = max(w for w, _ in cells)
    t_h = max(h for _, h in cells)
    if min(w for w, _ in cells) < 1 or min(h for _, h in cells) < 1:
        raise FormatError("grid coordinates must be >= 1")
    if len(cells) != t_w * t_h:
        raise FormatError(
            f"grid has gaps: {len(cells)} cells given, {t_w} x {t_h} = {t_w * t_h} required"
        )
    values = np.empty((t_w, t_h, p))
    for (w, h), vec in cells.items():
        values[w - 1, h - 1] = vec
    return DataGrid(values)


def write_grid_csv(path, grid: DataGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "h"] + [f"x{i}" for i in range(1, grid.p + 1)])
        for w in range(1, grid.t_w + 1):
            for h in range(1, grid.t_h + 1):
                vec = grid.values[w - 1, h - 1]
                writer.writerow([w, h] + [repr(float(v)) for v in vec])


def read_scatter_csv(path):
    """Parse a scatter CSV into ``(coords (n,2), obs (n,p))`` arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        p = _check_header(header, ("cx", "cy"), "x")
        coords = []
        obs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + p:
                raise FormatError(f"line {lineno}: expected {2 + p} fields, got {len(row)}")
            try:
                coords.append((float(row[0]), float(row[1])))
                obs.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
    if not coords:
        raise FormatError("no scatter points found")
    return np.asarray(coords), np.asarray(obs)


def trace_to_dict(trace) -> dict:
    def cp(c):
        return None if c is None else [c.tau_w, c.tau_h]

    def means(est):
        if est is None:
            return None
        return {
            "theta": [None if v is None else [float(x) for x in v] for v in est.theta],
            "supports": [sorted(s) for s in est.supports],
        }

    return {
        "schema": SCHEMA,
        "init": cp(trace.init),
        "step1_cp": cp(trace.step1_cp),
        "step1_boundary_cp": cp(trace.step1_boundary_cp),
        "final_cp": cp(trace.final_cp),
        "lambda_used": list(trace.lambda_used),
        "gamma_used": None if trace.gamma_used is None else list(trace.gamma_used),
        "step1_means": means(trace.step1_means),
        "step2_means": means(trace.step2_means),
    }


def _interval_to_dict(iv: Interval) -> dict:
    return {"lo": iv.lo, "hi": iv.hi, "margin": iv.margin}


def inference_report(
    tau: ChangePoint,
    cis: ConfidenceIntervals,
    profile,
    variances,
    n_draws: int,
    seed: int,
) -> dict:
    return {
        "schema": SCHEMA,
        "tau": [tau.tau_w, tau.tau_h],
        "alpha": cis.alpha,
        "vanishing": {
            "w": _interval_to_dict(cis.vanishing_w),
            "h": _interval_to_dict(cis.vanishing_h),
        },
        "nonvanishing": {
            "w": _interval_to_dict(cis.nonvanishing_w),
            "h": _interval_to_dict(cis.nonvanishing_h),
        },
        "xi": list(profile.xi),
        "xi_w2": profile.xi_w2,
        "xi_h2": profile.xi_h2,
        "xi_w_inf": cis.xi_w_inf,
        "xi_h_inf": cis.xi_h_inf,
        "sigma2_w": variances.sigma2_w,
        "sigma2_h": variances.sigma2_h,
        "n_draws": n_draws,
        "seed": seed,
    }


def tree_to_dict(tree, report) -> dict:
    nodes = []
    for index in sorted(tree.nodes, key=lambda ix: (len(ix), ix)):
        node = tree.nodes[index]
        g = node.cp_global
        nodes.append(
            {
                "index": "".join(str(d) for d in index),
                "domain": list(node.domain),
                "cp": [g.tau_w, g.tau_h],
                "is_leaf": node.is_leaf,
            }
        )
    return {
        "schema": SCHEMA,
        "levels": report.levels,
        "n_change_points": report.n_change_points,
        "n_leaves": report.n_leaves,
        "nodes": nodes,
    }


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_image_grid(path) -> DataGrid:
    """Decode an image into a grid of [0, 1] rgb vectors.

    Width maps to ``w`` and height to ``h`` with ``h = 1`` at the bottom
    row, so grid coordinates read like plot coordinates.
    """
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    # arr[row, col, ch] with row 0 on top -> values[w-1, h-1, ch]
    values = np.transpose(arr[::-1], (1, 0, 2))
    return DataGrid(values)


def write_image_grid(path, grid: DataGrid) -> None:
    """Re-quantize a [0, 1] rgb grid and encode it by file extension."""
    from PIL import Image

    if grid.p != 3:
        raise ValueError(f"image output needs p=3 channels, got {grid.p}")
    arr = np.transpose(grid.values, (1, 0, 2))[::-1]
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)

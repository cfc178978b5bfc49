"""Figure emission for runs and sweeps: CSV as canon, minimal SVG on top.

The SVG output is hand-built polylines (no plotting dependency): solid lines
for estimates, dashed lines for ground truth references.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .harness import RunRecord, load_record
from .metrics import kde, silverman_bandwidth, write_kde_csv
from .synthdata import MixtureSpec

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

TRUE_OVERLAP_PROPORTIONS = (0.5, 0.25, 0.25)


def _svg_plot(path, series, x_range, y_range, title=""):
    """series: list of dicts with points (list of (x, y)), color, dashed, label."""
    width, height = 640, 400
    ml, mr, mt, mb = 60, 20, 30, 40
    x_lo, x_hi = x_range
    y_lo, y_hi = y_range
    span_x = (x_hi - x_lo) or 1.0
    span_y = (y_hi - y_lo) or 1.0

    def sx(x):
        return ml + (x - x_lo) / span_x * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y_lo) / span_y * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{ml}" y="{height - 8}" font-size="11">{x_lo:.3g}</text>',
        f'<text x="{width - mr}" y="{height - 8}" text-anchor="end" font-size="11">{x_hi:.3g}</text>',
        f'<text x="{ml - 6}" y="{height - mb}" text-anchor="end" font-size="11">{y_lo:.3g}</text>',
        f'<text x="{ml - 6}" y="{mt + 4}" text-anchor="end" font-size="11">{y_hi:.3g}</text>',
    ]
    legend_y = mt + 6
    for entry in series:
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in entry["points"])
        dash = ' stroke-dasharray="6,4"' if entry.get("dashed") else ""
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{entry["color"]}" '
            f'stroke-width="1.5"{dash}/>'
        )
        if entry.get("label"):
            parts.append(
                f'<text x="{width - mr - 4}" y="{legend_y}" text-anchor="end" '
                f'font-size="11" fill="{entry["color"]}">{entry["label"]}</text>'
            )
            legend_y += 14
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def _class_density(spec: MixtureSpec, k: int, grid: np.ndarray) -> np.ndarray:
    var = spec.stds[k] ** 2
    return np.exp(-0.5 * (grid - spec.means[k, 0]) ** 2 / var) / np.sqrt(2 * np.pi * var)


def emit_kde_plot(record: RunRecord, spec: MixtureSpec, out_dir) -> dict:
    """Per-class KDE of the final samples against the true class densities.

    Returns {"csv": path, "svg": path}; classes with no samples are omitted
    with a warning.
    """
    if spec.dims != 1 or record.final_x.shape[1] != 1:
        raise ValueError("KDE plots are defined for 1-d runs only")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lo = float(min(spec.means[:, 0].min() - 4 * spec.stds.max(), record.final_x.min()))
    hi = float(max(spec.means[:, 0].max() + 4 * spec.stds.max(), record.final_x.max()))
    grid = np.linspace(lo, hi, 512)

    columns: dict[str, np.ndarray] = {"x": grid}
    series = []
    present = []
    for k in range(spec.n_classes):
        truth = _class_density(spec, k, grid)
        columns[f"true_{k}"] = truth
        series.append(
            {
                "points": list(zip(grid, truth)),
                "color": _COLORS[k % len(_COLORS)],
                "dashed": True,
                "label": f"true class {k}",
            }
        )
        samples = record.final_x[record.final_y == k, 0]
        if samples.size < 2:
            warnings.warn(f"class {k} has no generated samples; curve omitted")
            continue
        est = kde(samples, silverman_bandwidth(samples), grid)
        columns[f"kde_{k}"] = est.density
        write_kde_csv(est, out_dir / f"{record.run_id}-kde-class{k}.csv")
        present.append(k)
        series.append(
            {
                "points": list(zip(grid, est.density)),
                "color": _COLORS[k % len(_COLORS)],
                "dashed": False,
                "label": f"generated class {k}",
            }
        )

    csv_path = out_dir / f"{record.run_id}-kde.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        names = list(columns)
        writer.writerow(names)
        for i in range(grid.size):
            writer.writerow([repr(float(columns[n][i])) for n in names])

    svg_path = out_dir / f"{record.run_id}-kde.svg"
    y_hi = max(float(np.max(c)) for n, c in columns.items() if n != "x")
    _svg_plot(svg_path, series, (lo, hi), (0.0, y_hi * 1.05), title=record.run_id)
    return {"csv": str(csv_path), "svg": str(svg_path)}


def emit_proportions_plot(records: list[RunRecord], out_dir) -> dict:
    """Oracle digit proportions against lambda_c, with dashed truth lines."""
    if not records:
        raise ValueError("no records to plot")
    experiments = {r.config.experiment for r in records}
    if experiments != {"mnist_overlap"}:
        raise ValueError(f"proportions plots need mnist_overlap records only, got {experiments}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for record in records:
        for digit in range(3):
            rows.append(
                (
                    record.config.lambda_c,
                    record.config.variant,
                    digit,
                    record.last(f"prop_digit{digit}"),
                )
            )
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    csv_path = out_dir / "proportions.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda_c", "variant", "digit", "proportion"])
        for lam, variant, digit, prop in rows:
            writer.writerow([repr(float(lam)), variant, digit, repr(float(prop))])

    lams = sorted({r[0] for r in rows})
    series = []
    for truth in sorted(set(TRUE_OVERLAP_PROPORTIONS), reverse=True):
        series.append(
            {
                "points": [(min(lams), truth), (max(lams), truth)],
                "color": "#333333",
                "dashed": True,
                "label": f"truth {truth}",
            }
        )
    variants = sorted({r[1] for r in rows})
    for vi, variant in enumerate(variants):
        for digit in range(3):
            pts = [(lam, p) for lam, var, d, p in rows if var == variant and d == digit]
            if not pts:
                continue
            series.append(
                {
                    "points": sorted(pts),
                    "color": _COLORS[(vi * 3 + digit) % len(_COLORS)],
                    "dashed": False,
                    "label": f"{variant} digit {digit}",
                }
            )
    svg_path = out_dir / "proportions.svg"
    _svg_plot(
        svg_path,
        series,
        (min(lams), max(lams)),
        (0.0, 1.0),
        title="oracle label proportions vs lambda_c",
    )
    return {"csv": str(csv_path), "svg": str(svg_path)}


def plot_run_dir(run_dir, out_dir=None) -> dict:
    """Dispatch plotting for a persisted run directory."""
    from .synthdata import make_mog_spec

    record = load_record(run_dir)
    out_dir = out_dir or run_dir
    if record.config.experiment == "mog1d":
        spec = make_mog_spec(record.config.d_m, stds=record.config.mog_stds)
        return emit_kde_plot(record, spec, out_dir)
    if record.config.experiment == "mnist_overlap":
        return emit_proportions_plot([record], out_dir)
    raise ValueError(f"no plot defined for experiment {record.config.experiment!r}")

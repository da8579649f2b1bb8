"""Run outputs: CSV files and hand-rolled SVG learning curves.

The data CSVs (metrics, summary, traffic) are byte-reproducible for a given
config and seed list; timing.csv carries wall-clock measurements and is the
one exception.  SVG plots embed their data points as plain polyline/polygon
coordinates so tests can parse them back.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .scenario import METRIC_NAMES, RunReport


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header_comment, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def emit_outputs(report: RunReport, out_dir) -> list:
    """Write metrics.csv, summary.csv, timing.csv, traffic.csv and one SVG
    learning-curve per metric.  Returns the created paths."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = report.config
    stamp = (f"strategy={cfg.strategy} fleet={cfg.fleet_size} "
             f"cycles={cfg.cycles} seeds={','.join(map(str, cfg.seeds))}")
    created = []

    rows = []
    for sr in report.seed_results:
        cycles, fleet, _ = sr.metrics.shape
        for c in range(cycles):
            for a in range(fleet):
                rows.append((sr.seed, c, a, *sr.metrics[c, a],
                             sr.collided[c, a]))
    path = os.path.join(out_dir, "metrics.csv")
    _write_csv(path, stamp, ("seed", "cycle", "agent", *METRIC_NAMES,
                             "collided"), rows)
    created.append(path)

    rows = []
    for sr in report.seed_results:
        for c in range(sr.metrics.shape[0]):
            for mi, name in enumerate(METRIC_NAMES):
                col = sr.metrics[c, :, mi]
                rows.append((sr.seed, c, name, col.mean(), col.min(),
                             col.max()))
    path = os.path.join(out_dir, "summary.csv")
    _write_csv(path, stamp, ("seed", "cycle", "metric", "mean", "min", "max"),
               rows)
    created.append(path)

    rows = []
    for sr in report.seed_results:
        for r, rep in enumerate(sr.regression_reports):
            if rep is None:
                continue
            for phase, secs in rep.phase_seconds.items():
                rows.append((sr.seed, r, phase, secs))
            rows.append((sr.seed, r, "total", rep.total_seconds))
    path = os.path.join(out_dir, "timing.csv")
    _write_csv(path, stamp + " (wall-clock; not byte-reproducible)",
               ("seed", "round", "phase", "seconds"), rows)
    created.append(path)

    rows = []
    for sr in report.seed_results:
        cum_up = cum_down = 0
        for r, round_rep in enumerate(sr.ledger.rounds):
            cum_up += round_rep.bytes_up
            cum_down += round_rep.bytes_down
            rows.append((sr.seed, r, round_rep.bytes_up, round_rep.bytes_down,
                         cum_up, cum_down))
    path = os.path.join(out_dir, "traffic.csv")
    _write_csv(path, stamp, ("seed", "round", "bytes_up", "bytes_down",
                             "cum_up", "cum_down"), rows)
    created.append(path)

    for name in METRIC_NAMES:
        path = os.path.join(out_dir, f"learning_{name}.svg")
        _learning_curve_svg(report, name, path)
        created.append(path)
    return created


# ---------------------------------------------------------------------------
# SVG


W, H = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 30, 40


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [(v - lo) / span * (out_hi - out_lo) + out_lo for v in vals]


def _learning_curve_svg(report: RunReport, metric: str, path):
    """Seed-averaged fleet mean with the seed-averaged min-max band."""
    mi = report.metric_index(metric)
    per_seed = np.stack([sr.metrics[:, :, mi] for sr in report.seed_results])
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(per_seed, axis=(0, 2))
        lo = np.nanmean(np.nanmin(per_seed, axis=2), axis=0)
        hi = np.nanmean(np.nanmax(per_seed, axis=2), axis=0)
    cycles = np.arange(per_seed.shape[1])
    ok = np.isfinite(mean) & np.isfinite(lo) & np.isfinite(hi)
    cycles, mean, lo, hi = cycles[ok], mean[ok], lo[ok], hi[ok]
    write_line_band_svg(path, cycles, mean, lo, hi,
                        title=f"{metric} (fleet mean, min-max band)",
                        xlabel="training cycle")


def write_line_band_svg(path, x, mean, lo, hi, title="", xlabel=""):
    x = np.asarray(x, float)
    mean = np.asarray(mean, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if len(x) == 0:
        x = np.array([0.0])
        mean = lo = hi = np.array([0.0])
    y_min = float(min(lo.min(), mean.min()))
    y_max = float(max(hi.max(), mean.max()))
    if y_max == y_min:
        y_max = y_min + 1.0
    xs = _scale(x, x.min(), max(x.max(), x.min() + 1), MARGIN_L, W - MARGIN_R)
    # SVG y grows downward
    ys_mean = _scale(mean, y_min, y_max, H - MARGIN_B, MARGIN_T)
    ys_lo = _scale(lo, y_min, y_max, H - MARGIN_B, MARGIN_T)
    ys_hi = _scale(hi, y_min, y_max, H - MARGIN_B, MARGIN_T)

    band = " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(xs, ys_hi))
    band += " " + " ".join(f"{px:.2f},{py:.2f}"
                           for px, py in zip(reversed(xs), reversed(ys_lo)))
    line = " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(xs, ys_mean))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" '
                 f'height="{H}" viewBox="0 0 {W} {H}">\n')
        fh.write(f'<rect width="{W}" height="{H}" fill="white"/>\n')
        fh.write(f'<text x="{W // 2}" y="18" text-anchor="middle" '
                 f'font-size="13">{title}</text>\n')
        fh.write(f'<polygon id="band" points="{band}" fill="#9ecae1" '
                 f'fill-opacity="0.5" stroke="none"/>\n')
        fh.write(f'<polyline id="mean" points="{line}" fill="none" '
                 f'stroke="#08519c" stroke-width="1.5"/>\n')
        fh.write(f'<line x1="{MARGIN_L}" y1="{H - MARGIN_B}" x2="{W - MARGIN_R}" '
                 f'y2="{H - MARGIN_B}" stroke="black"/>\n')
        fh.write(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
                 f'y2="{H - MARGIN_B}" stroke="black"/>\n')
        fh.write(f'<text x="{MARGIN_L - 6}" y="{H - MARGIN_B}" '
                 f'text-anchor="end" font-size="11">{y_min:.4g}</text>\n')
        fh.write(f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + 4}" '
                 f'text-anchor="end" font-size="11">{y_max:.4g}</text>\n')
        fh.write(f'<text x="{W // 2}" y="{H - 10}" text-anchor="middle" '
                 f'font-size="11">{xlabel}</text>\n')
        fh.write("</svg>\n")

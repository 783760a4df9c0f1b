"""Deterministic CSV/JSON writers and minimal SVG plots.

Every file carries the hash of the run configuration and the seed, and no
timestamps, so identical runs produce byte-identical files.
"""

import csv
import hashlib
import json
import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _fmt(value):
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("nan" if math.isnan(value) else repr(value))
    return str(value)


def write_csv(path, command, config, header, rows):
    """CSV with one ``#`` comment line (command, config hash, seed), a header row, then rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# headarray {command} config_sha256={config_hash(config)} seed={config.get('seed')}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, command, config, payload):
    doc = {
        "command": command,
        "config_sha256": config_hash(config),
        "seed": config.get("seed"),
        "config": config,
        "results": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(width, height, title, xlabel, ylabel, xr, yr):
    x0, x1, y0, y1 = xr + yr
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{escape(ylabel)}</text>',
        '<line x1="60" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>'.format(height - 40, width - 20),
        f'<line x1="60" y1="30" x2="60" y2="{height - 40}" stroke="black"/>',
        f'<text x="60" y="{height - 26}" font-size="10" text-anchor="middle">{x0:.4g}</text>',
        f'<text x="{width - 20}" y="{height - 26}" font-size="10" text-anchor="middle">{x1:.4g}</text>',
        f'<text x="56" y="{height - 40}" font-size="10" text-anchor="end">{y0:.4g}</text>',
        f'<text x="56" y="34" font-size="10" text-anchor="end">{y1:.4g}</text>',
    ]
    return parts


def _finite_range(values):
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    return min(vals), max(vals)


def line_plot(path, series, title="", xlabel="", ylabel="", width=640, height=400):
    """Write an SVG line plot. ``series`` maps a label to ``(xs, ys)``."""
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys]
    xr, yr = _finite_range(xs_all), _finite_range(ys_all)
    sx = _scale(*xr, 60, width - 20)
    sy = _scale(*yr, height - 40, 30)
    parts = _frame(width, height, title, xlabel, ylabel, xr, yr)
    for n, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        pts = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
            for x, y in zip(xs, ys)
            if math.isfinite(float(x)) and math.isfinite(float(y))
        )
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - 24}" y="{44 + 14 * n}" font-size="11" text-anchor="end" '
            f'fill="{color}">{escape(str(label))}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _color(t):
    # dark blue -> yellow
    t = min(max(t, 0.0), 1.0)
    r, g, b = int(40 + 215 * t), int(20 + 200 * t), int(120 - 90 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def scatter_plot(path, xs, ys, values, title="", xlabel="", ylabel="", width=640, height=400):
    """Write an SVG scatter plot with points colored by ``values``."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    values = [float(v) for v in values]
    xr, yr, vr = _finite_range(xs), _finite_range(ys), _finite_range(values)
    sx = _scale(*xr, 60, width - 20)
    sy = _scale(*yr, height - 40, 30)
    sv = _scale(*vr, 0.0, 1.0)
    parts = _frame(width, height, title, xlabel, ylabel, xr, yr)
    for x, y, v in zip(xs, ys, values):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="{_color(sv(v))}"/>')
    parts.append(
        f'<text x="{width - 24}" y="44" font-size="11" text-anchor="end">'
        f"range {vr[0]:.4g} .. {vr[1]:.4g}</text>"
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")

"""Volume-curve CSV and SVG plot."""
from pathlib import Path

import numpy as np

from .volumetrics import VolumeCurve, ejection_fraction

WIDTH, HEIGHT = 640, 400
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
_MARKERS = (("max", "V_max", "#c0392b"), ("preA", "V_preA", "#e67e22"), ("min", "V_min", "#2471a3"))


def _fmt(x):
    return f"{x:.6g}"


def write_curve_csv(path, curve):
    rows = ["phase,volume_ml"] + [f"{p},{_fmt(v)}" for p, v in enumerate(curve.volumes_ml)]
    Path(path).write_text("\n".join(rows) + "\n")


def render_svg(curve, landmarks=None, biomarkers=None):
    """SVG text for the curve; identical inputs give identical bytes."""
    v = np.asarray(curve.volumes_ml, dtype=np.float64)
    n = v.size
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    v_lo, v_hi = float(v.min()), float(v.max())
    lo, hi = v_lo, v_hi
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def xy(p, vol):
        x = left + (pw * p / (n - 1) if n > 1 else pw / 2)
        y = top + ph * (hi - vol) / (hi - lo)
        return x, y

    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (xy(p, vol) for p, vol in enumerate(v)))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">phase</text>',
        f'<text x="14" y="{top + ph / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2:.2f})">volume (mL)</text>',
        f'<text x="{left - 4}" y="{top + 4}" font-size="10" text-anchor="end">{_fmt(hi)}</text>',
        f'<text x="{left - 4}" y="{top + ph}" font-size="10" text-anchor="end">{_fmt(lo)}</text>',
        f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{pts}"/>',
    ]
    if landmarks is not None:
        for key, label, colour in _MARKERS:
            p = getattr(landmarks, f"{key}_phase")
            x, y = xy(p, v[p])
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{colour}"/>')
            out.append(
                f'<text x="{x + 6:.2f}" y="{y - 6:.2f}" font-size="11" fill="{colour}">'
                f"{label} {_fmt(getattr(landmarks, f'v_{key}_ml'))} mL (phase {p})</text>"
            )
    if biomarkers is not None:
        note = f"EF {biomarkers.ef_percent:.2f}%  aEF {biomarkers.aef_percent:.2f}%"
    elif v_hi > 0:
        note = f"EF {ejection_fraction(v_hi, v_lo):.2f}%  aEF n/a"
    else:
        note = "EF n/a  aEF n/a"
    out.append(f'<text x="{left + pw - 4}" y="{top + 14}" font-size="12" text-anchor="end">{note}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(curve, landmarks, biomarkers, path):
    """Write ``<path>.csv`` and ``<path>.svg``; returns both paths.

    ``landmarks`` and ``biomarkers`` may be ``None`` (e.g. a flat curve);
    the plot then annotates EF from the curve extremes alone.
    """
    if not isinstance(curve, VolumeCurve):
        curve = VolumeCurve(tuple(curve))
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_name(base.name + ".csv"), base.with_name(base.name + ".svg")
    write_curve_csv(csv_path, curve)
    svg_path.write_text(render_svg(curve, landmarks, biomarkers))
    return csv_path, svg_path

"""Static SVG renderings of the communication artifacts: quintile
fingerprint plots, scatter plots with 95% probability ellipses, and
index/tradeoff curve plots.  All renderers are pure functions of their
inputs and emit byte-identical SVG on identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .hier import Partition
from .preprocess import QUINTILE_DESCRIPTORS, PercentileTable

CHI2_95_2 = float(chi2.ppf(0.95, df=2))

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def cluster_color(label: int) -> str:
    return PALETTE[(label - 1) % len(PALETTE)]


def _f(x: float) -> str:
    return format(float(x), ".3f")


@dataclass
class FingerprintTable:
    """Per-cluster, per-variable quintile proportions (rows sum to 1)."""

    clusters: list[int]
    variables: list[str]
    proportions: np.ndarray  # (n_clusters, n_variables, 5)
    highlight_id: str | None = None
    highlight_cluster: int | None = None
    highlight_bins: np.ndarray | None = None  # (n_variables,)

    def __post_init__(self):
        self.proportions = np.asarray(self.proportions, dtype=float)
        expected = (len(self.clusters), len(self.variables), 5)
        if self.proportions.shape != expected:
            raise ValueError(f"proportions must have shape {expected}")
        if self.proportions.min() < 0:
            raise ValueError("proportions must be nonnegative")
        sums = self.proportions.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValueError("each (cluster, variable) row must sum to 1")


def fingerprint_table(percentiles: PercentileTable, partition: Partition,
                      variables: list[str] | None = None,
                      highlight: str | None = None) -> FingerprintTable:
    """Quintile membership proportions per cluster for selected variables."""
    if variables is None:
        variables = list(percentiles.names)
    missing = [v for v in variables if v not in percentiles.names]
    if missing:
        raise ValueError(f"unknown variable(s): {', '.join(missing)}")
    if percentiles.ids != partition.ids:
        raise ValueError("percentile table and partition ids differ")
    cols = [percentiles.names.index(v) for v in variables]
    clusters = list(range(1, partition.k + 1))
    props = np.zeros((len(clusters), len(variables), 5))
    for ci, c in enumerate(clusters):
        members = np.nonzero(partition.labels == c)[0]
        if len(members) == 0:
            raise ValueError(f"cluster {c} is empty")
        for vi, col in enumerate(cols):
            counts = np.bincount(percentiles.bins[members, col], minlength=6)[1:]
            props[ci, vi] = counts / len(members)
    h_cluster = h_bins = None
    if highlight is not None:
        if highlight not in percentiles.ids:
            raise ValueError(f"highlight id {highlight!r} not present")
        row = percentiles.ids.index(highlight)
        h_cluster = int(partition.labels[row])
        h_bins = percentiles.bins[row, cols]
    return FingerprintTable(clusters=clusters, variables=variables,
                            proportions=props, highlight_id=highlight,
                            highlight_cluster=h_cluster, highlight_bins=h_bins)


@dataclass
class EllipseSpec:
    center: tuple[float, float]
    axes: tuple[float, float]  # semi-axis lengths, major first
    rotation: float  # radians, in [0, pi)


def ellipse_95(points) -> EllipseSpec:
    """95% probability ellipse of a bivariate sample.

    Semi-axis lengths are sqrt(eigenvalue * chi2_{2,0.95}) of the empirical
    covariance; rotation comes from the leading eigenvector.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if pts.shape[0] < 3:
        raise ValueError("at least 3 points are required")
    cov = np.cov(pts, rowvar=False, ddof=1)
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 1e-12 * max(evals[1], 1.0):
        raise ValueError("points are collinear; ellipse is degenerate")
    center = pts.mean(axis=0)
    major, minor = evals[1], evals[0]
    v = evecs[:, 1]
    rot = math.atan2(v[1], v[0]) % math.pi
    return EllipseSpec(center=(float(center[0]), float(center[1])),
                       axes=(math.sqrt(major * CHI2_95_2),
                             math.sqrt(minor * CHI2_95_2)),
                       rotation=rot)


# fingerprint layout constants
FP_CELL_W = 70
FP_CELL_H = 26
FP_LEFT = 150
FP_TOP = 70
FP_PANEL_GAP = 30


def fingerprint_cell_rect(ci: int, vi: int, b: int):
    """Pixel rectangle (x, y, w, h) of a fingerprint cell.

    ci: cluster panel position, vi: variable row, b: quintile bin 1..5.
    """
    panel_w = 5 * FP_CELL_W + FP_PANEL_GAP
    x = FP_LEFT + ci * panel_w + (b - 1) * FP_CELL_W
    y = FP_TOP + vi * FP_CELL_H
    return x, y, FP_CELL_W, FP_CELL_H


def render_fingerprint(table: FingerprintTable) -> str:
    """Fingerprint plot: cell opacity is the quintile proportion scaled so
    the modal bin of each (cluster, variable) row is fully opaque.  Axis
    labels use the quintile descriptors only."""
    nc, nv = len(table.clusters), len(table.variables)
    panel_w = 5 * FP_CELL_W + FP_PANEL_GAP
    width = FP_LEFT + nc * panel_w
    height = FP_TOP + nv * FP_CELL_H + 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for vi, var in enumerate(table.variables):
        _, y, _, h = fingerprint_cell_rect(0, vi, 1)
        parts.append(
            f'<text x="{FP_LEFT - 8}" y="{y + h / 2 + 4:.0f}" '
            f'text-anchor="end" font-size="11" font-family="sans-serif">'
            f"{var}</text>"
        )
    for ci, cluster in enumerate(table.clusters):
        x0, _, _, _ = fingerprint_cell_rect(ci, 0, 1)
        parts.append(
            f'<text x="{x0 + 2.5 * FP_CELL_W:.0f}" y="24" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">Cluster {cluster}</text>'
        )
        for b in range(1, 6):
            bx, _, w, _ = fingerprint_cell_rect(ci, 0, b)
            parts.append(
                f'<text x="{bx + w / 2:.0f}" y="52" text-anchor="middle" '
                f'font-size="7" font-family="sans-serif">'
                f"{QUINTILE_DESCRIPTORS[b]}</text>"
            )
        color = cluster_color(cluster)
        for vi in range(len(table.variables)):
            row = table.proportions[ci, vi]
            rmax = row.max()
            for b in range(1, 6):
                x, y, w, h = fingerprint_cell_rect(ci, vi, b)
                opacity = 0.0 if rmax == 0 else row[b - 1] / rmax
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{w - 2}" height="{h - 2}" '
                    f'fill="{color}" fill-opacity="{_f(opacity)}" '
                    f'stroke="#cccccc" stroke-width="0.5"/>'
                )
    if table.highlight_id is not None:
        ci = table.clusters.index(table.highlight_cluster)
        for vi in range(len(table.variables)):
            b = int(table.highlight_bins[vi])
            x, y, w, h = fingerprint_cell_rect(ci, vi, b)
            cx, cy = x + (w - 2) / 2, y + (h - 2) / 2
            r = 6
            pts = (f"{_f(cx)},{_f(cy - r)} {_f(cx - r)},{_f(cy + r * 0.8)} "
                   f"{_f(cx + r)},{_f(cy + r * 0.8)}")
            parts.append(
                f'<polygon points="{pts}" fill="#ffd700" stroke="#333333" '
                f'stroke-width="0.8"/>'
            )
        parts.append(
            f'<text x="{FP_LEFT}" y="{height - 14}" font-size="10" '
            f'font-family="sans-serif">highlighted: {table.highlight_id}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _axis_map(lo, hi, out_lo, out_hi):
    span = hi - lo
    if span == 0:
        lo, hi, span = lo - 1.0, hi + 1.0, 2.0

    def f(v):
        return out_lo + (v - lo) / span * (out_hi - out_lo)

    return f, lo, hi


def render_scatter(points, labels, ellipses: bool = False,
                   width: int = 480, height: int = 400,
                   xlabel: str = "x", ylabel: str = "y") -> str:
    """Two-dimensional scatter coloured by cluster label, optionally with
    95% probability ellipses per cluster."""
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if len(labels) != len(pts):
        raise ValueError("labels length must match points")
    if len(pts) == 0:
        raise ValueError("empty point series")
    pad_x = 0.08 * (pts[:, 0].max() - pts[:, 0].min() or 1.0)
    pad_y = 0.08 * (pts[:, 1].max() - pts[:, 1].min() or 1.0)
    fx, _, _ = _axis_map(pts[:, 0].min() - pad_x, pts[:, 0].max() + pad_x,
                         50, width - 15)
    fy, _, _ = _axis_map(pts[:, 1].min() - pad_y, pts[:, 1].max() + pad_y,
                         height - 40, 15)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="50" y1="{height - 40}" x2="{width - 15}" '
        f'y2="{height - 40}" stroke="#333333"/>',
        f'<line x1="50" y1="15" x2="50" y2="{height - 40}" stroke="#333333"/>',
        f'<text x="{(width + 35) // 2}" y="{height - 10}" text-anchor="middle" '
        f'font-size="11" font-family="sans-serif">{xlabel}</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif" transform="rotate(-90 14 {height // 2})">'
        f"{ylabel}</text>",
    ]
    if ellipses:
        for c in np.unique(labels):
            sub = pts[labels == c]
            spec = ellipse_95(sub)
            cx, cy = fx(spec.center[0]), fy(spec.center[1])
            sx = abs(fx(spec.axes[0]) - fx(0.0))
            sy = abs(fy(spec.axes[1]) - fy(0.0))
            deg = -math.degrees(spec.rotation)
            parts.append(
                f'<ellipse cx="0" cy="0" rx="{_f(sx)}" ry="{_f(sy)}" '
                f'fill="none" stroke="{cluster_color(int(c))}" '
                f'stroke-width="1.2" transform="translate({_f(cx)} {_f(cy)}) '
                f'rotate({_f(deg)})"/>'
            )
    for (x, y), c in zip(pts, labels):
        parts.append(
            f'<circle cx="{_f(fx(x))}" cy="{_f(fy(y))}" r="3" '
            f'fill="{cluster_color(int(c))}" fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_curves(series, guidelines=None, width: int = 480,
                  height: int = 360, xlabel: str = "x",
                  ylabel: str = "y") -> str:
    """Line plot for one or more (x, y) series with optional dashed/dotted
    guideline overlays (e.g. the chosen tradeoff solution)."""
    if not series:
        raise ValueError("empty series")
    xs = np.concatenate([np.asarray(s["x"], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s["y"], dtype=float) for s in series])
    if xs.size == 0:
        raise ValueError("empty series")
    fx, _, _ = _axis_map(xs.min(), xs.max(), 55, width - 15)
    fy, _, _ = _axis_map(ys.min(), ys.max(), height - 40, 15)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="55" y1="{height - 40}" x2="{width - 15}" '
        f'y2="{height - 40}" stroke="#333333"/>',
        f'<line x1="55" y1="15" x2="55" y2="{height - 40}" stroke="#333333"/>',
        f'<text x="{(width + 40) // 2}" y="{height - 10}" text-anchor="middle" '
        f'font-size="11" font-family="sans-serif">{xlabel}</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif" transform="rotate(-90 14 {height // 2})">'
        f"{ylabel}</text>",
    ]
    for gl in guidelines or []:
        dash = "6,4" if gl.get("style", "dashed") == "dashed" else "2,3"
        if gl["orientation"] == "v":
            gx = _f(fx(gl["value"]))
            parts.append(
                f'<line x1="{gx}" y1="15" x2="{gx}" y2="{height - 40}" '
                f'stroke="#555555" stroke-dasharray="{dash}"/>'
            )
        elif gl["orientation"] == "h":
            gy = _f(fy(gl["value"]))
            parts.append(
                f'<line x1="55" y1="{gy}" x2="{width - 15}" y2="{gy}" '
                f'stroke="#555555" stroke-dasharray="{dash}"/>'
            )
        else:
            raise ValueError("guideline orientation must be 'h' or 'v'")
    for si, s in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        coords = " ".join(
            f"{_f(fx(x))},{_f(fy(y))}" for x, y in zip(s["x"], s["y"])
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if "label" in s:
            parts.append(
                f'<text x="{width - 150}" y="{24 + 14 * si}" font-size="10" '
                f'font-family="sans-serif" fill="{color}">{s["label"]}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

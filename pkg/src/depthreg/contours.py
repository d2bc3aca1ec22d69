"""Assembly of conditional quantile/depth cut contours from per-direction
fits, nesting repair, coverage diagnostics, and file exports.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators, geometry
from .errors import ContourFailureError, InvalidInputError

METHODS = ("local_constant", "local_bilinear", "global")
METHOD_ALIASES = {
    "constant": "local_constant",
    "bilinear": "local_bilinear",
    "local_constant": "local_constant",
    "local_bilinear": "local_bilinear",
    "global": "global",
}
VERTEX_HALFSPACE_REL = 1e-7
COVERAGE_REL = 1e-9
MAX_FAILURE_SHARE = 0.01


@dataclass
class CutContour:
    """One conditional tau-quantile/depth contour at a conditioning point."""

    w0: np.ndarray
    tau: float
    method: str
    polygon: object
    per_direction: list
    unbounded_suspect: bool
    skipped: list = field(default_factory=list)
    subgrad_records: list = field(default_factory=list)

    @property
    def is_empty(self):
        return self.polygon is None

    @property
    def subgrad_all_pass(self):
        return all(rec[2] for rec in self.subgrad_records)


@dataclass
class ContourFamily:
    w0: np.ndarray
    taus: list
    contours: list
    nested_repaired: bool


def resolve_method(name):
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise InvalidInputError(f"unknown method {name!r}", method=name) from None


def conditional_halfspace(frame, a, c):
    """Upper quantile halfspace {y : (u - Gamma c)'y >= a}."""
    b = frame.u - frame.gamma @ np.atleast_1d(c)
    return geometry.Halfspace2D(normal=b, offset=float(a))


def _fit_one_direction(data, tau, w0, frame, kernel, h, method):
    if method == "local_constant":
        fit = estimators.fit_local_constant(data, tau, frame, w0, kernel, h)
        return fit, float(fit.a), np.atleast_1d(fit.c)
    if method == "local_bilinear":
        fit = estimators.fit_local_bilinear(data, tau, frame, w0, kernel, h)
        cond = estimators.extract_conditional(fit)
        return fit, float(cond.a), np.atleast_1d(cond.c)
    weights = np.ones(data.n)
    fit = estimators.fit_global(data, tau, frame, weights)
    x0 = np.concatenate([[1.0], np.atleast_1d(np.asarray(w0, dtype=float))])
    offset = float(fit.a @ x0[: len(fit.a)])
    return fit, offset, np.atleast_1d(fit.c)


def _direction_chunk_worker(payload):
    (cov, resp, tau, w0, frames, kernel, h, method) = payload
    data = estimators.Dataset(covariates=cov, responses=resp)
    out = []
    for k, frame in frames:
        try:
            fit, a, c = _fit_one_direction(data, tau, w0, frame, kernel, h, method)
        except Exception as exc:  # recorded, possibly skipped by the caller
            out.append((k, None, str(exc)))
            continue
        out.append((k, (a, c, fit.subgrad_lo, fit.subgrad_hi, fit.subgrad_pass), None))
    return out


def build_cut(
    data,
    tau,
    w0,
    grid,
    kernel=None,
    h=None,
    method="local_bilinear",
    bound=geometry.DEFAULT_BOUND,
    workers=1,
):
    """Fit every grid direction and intersect the upper quantile halfspaces.

    Individual direction failures are skipped as long as they stay under
    one percent of the grid; beyond that the whole cut fails.
    """
    method = resolve_method(method)
    if data.m != 2:
        raise InvalidInputError("contour assembly requires bivariate responses", m=data.m)
    if method != "global" and (kernel is None or h is None):
        raise InvalidInputError("local methods need a kernel and a bandwidth")
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    m_dirs = len(grid)

    results = [None] * m_dirs
    failures = []
    if workers > 1:
        chunk_ids = [list(range(m_dirs))[i::workers] for i in range(workers)]
        payloads = [
            (
                data.covariates,
                data.responses,
                tau,
                w0,
                [(k, grid.directions[k]) for k in ids],
                kernel,
                h,
                method,
            )
            for ids in chunk_ids
            if ids
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_direction_chunk_worker, payloads):
                for k, ok, err in chunk:
                    results[k] = (ok, err)
    else:
        for k, frame in enumerate(grid):
            try:
                fit, a, c = _fit_one_direction(data, tau, w0, frame, kernel, h, method)
                results[k] = ((a, c, fit.subgrad_lo, fit.subgrad_hi, fit.subgrad_pass), None)
            except Exception as exc:
                results[k] = (None, str(exc))

    halfspaces = []
    per_direction = []
    subgrad_records = []
    for k, (ok, err) in enumerate(results):
        frame = grid.directions[k]
        if ok is None:
            failures.append((k, err))
            continue
        a, c, lo, hi, sg_ok = ok
        per_direction.append((frame.u.copy(), a, c))
        subgrad_records.append((lo, hi, sg_ok))
        halfspaces.append(conditional_halfspace(frame, a, c))

    if len(failures) / m_dirs >= MAX_FAILURE_SHARE or not halfspaces:
        raise ContourFailureError(
            f"{len(failures)} of {m_dirs} direction fits failed",
            first_error=failures[0][1] if failures else "",
        )

    polygon = geometry.intersect_halfspaces(halfspaces, bound=bound)
    unbounded = polygon is not None and geometry.touches_bounding_box(polygon, bound)
    return CutContour(
        w0=w0,
        tau=tau,
        method=method,
        polygon=polygon,
        per_direction=per_direction,
        unbounded_suspect=unbounded,
        skipped=failures,
        subgrad_records=subgrad_records,
    )


def build_family(
    data,
    taus,
    w0,
    grid,
    kernel,
    bandwidth_plan,
    method="local_bilinear",
    repair_nesting=True,
    bound=geometry.DEFAULT_BOUND,
    workers=1,
):
    """Cut contours for an ascending list of quantile levels at one w0.

    When nesting repair is on, each polygon is intersected with every
    lower-tau polygon, enforcing the nested-region construction exactly.
    """
    taus = [float(t) for t in taus]
    if any(t2 <= t1 for t1, t2 in zip(taus, taus[1:])):
        raise InvalidInputError("taus must be strictly ascending", taus=taus)
    contours = []
    for tau in taus:
        h = bandwidth_plan.bandwidth_for(tau) if method != "global" else None
        contours.append(
            build_cut(
                data, tau, w0, grid, kernel=kernel, h=h, method=method,
                bound=bound, workers=workers,
            )
        )
    if repair_nesting:
        running = None
        for contour in contours:
            if contour.polygon is None:
                running = None
                continue
            if running is not None:
                contour.polygon = geometry.intersect_polygons(contour.polygon, running)
            running = contour.polygon
    return ContourFamily(
        w0=np.atleast_1d(np.asarray(w0, dtype=float)),
        taus=taus,
        contours=contours,
        nested_repaired=repair_nesting,
    )


def empirical_coverage(contour, points, weights=None):
    """Weighted share of points inside or on the contour polygon."""
    if contour.polygon is None:
        raise InvalidInputError("coverage of an empty contour is undefined")
    pts = np.asarray(points, dtype=float)
    if weights is None:
        weights = np.ones(len(pts))
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise InvalidInputError("weights must have positive sum")
    scale = max(1.0, float(np.max(np.abs(pts))) if len(pts) else 1.0)
    tol = COVERAGE_REL * scale
    inside = np.fromiter(
        (geometry.contains_point(contour.polygon, p, tol=tol) for p in pts),
        dtype=bool,
        count=len(pts),
    )
    return float(np.sum(w[inside]) / total)


def vertices_satisfy_halfspaces(contour, scale=None):
    """Certificate that every polygon vertex lies in every generating upper
    halfspace, up to 1e-7 * response scale."""
    if contour.polygon is None:
        return True
    if scale is None:
        scale = max(1.0, float(np.max(np.abs(contour.polygon.vertices))))
    tol = VERTEX_HALFSPACE_REL * scale
    for u, a, c in contour.per_direction:
        frame = geometry.make_frame(u)
        b = frame.u - frame.gamma @ np.atleast_1d(c)
        if np.any(contour.polygon.vertices @ b < a - tol):
            return False
    return True


# ---------------------------------------------------------------------------
# exports

def contour_to_json(contour):
    return {
        "w0": [float(v) for v in contour.w0],
        "tau": contour.tau,
        "method": contour.method,
        "polygon": None if contour.polygon is None else geometry.polygon_to_json(contour.polygon),
        "unbounded_suspect": bool(contour.unbounded_suspect),
        "skipped_directions": [int(k) for k, _ in contour.skipped],
        "per_direction": [
            {"u": [float(x) for x in u], "a": float(a), "c": [float(x) for x in np.atleast_1d(c)]}
            for u, a, c in contour.per_direction
        ],
    }


def write_contour_csv(contour, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w0", "tau", "vertex_index", "y1", "y2"])
        if contour.polygon is not None:
            w0 = contour.w0[0] if len(contour.w0) == 1 else tuple(contour.w0)
            for i, (y1, y2) in enumerate(contour.polygon.vertices):
                writer.writerow(
                    [f"{float(w0):.12g}", f"{contour.tau:.12g}", i, f"{y1:.12g}", f"{y2:.12g}"]
                )


def _shade(rank, count, base):
    # lighter for higher conditioning value, matching the figure convention
    frac = 0.25 + 0.65 * (rank / max(count - 1, 1))
    r, g, b = base
    mix = lambda channel: int(channel + (255 - channel) * frac)
    return f"#{mix(r):02x}{mix(g):02x}{mix(b):02x}"


def write_svg(path, points, rings, size=720, margin=0.05):
    """Standalone SVG overlay: response points plus one polygon per ring.

    ``rings`` is a list of (w0_value, tau, ConvexPolygon); points is an
    (n, 2) array or None.  Point color shades with w0 rank in red, ring
    color in green.
    """
    xs, ys = [], []
    if points is not None and len(points):
        xs.extend(points[:, 0]); ys.extend(points[:, 1])
    for _, _, poly in rings:
        if poly is not None:
            xs.extend(poly.vertices[:, 0]); ys.extend(poly.vertices[:, 1])
    if not xs:
        raise InvalidInputError("nothing to draw")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, 1e-9)
    pad = margin * span
    x0, y0, span = x0 - pad, y0 - pad, span + 2 * pad

    def sx(x):
        return (x - x0) / span * size

    def sy(y):
        return size - (y - y0) / span * size

    w0_values = sorted({float(r[0]) for r in rings})
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if points is not None and len(points):
        lines.append('<g class="data-points">')
        for x, y in points:
            lines.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.5" fill="#c04040"/>')
        lines.append("</g>")
    for w0v, tau, poly in rings:
        if poly is None:
            continue
        rank = w0_values.index(float(w0v))
        color = _shade(rank, len(w0_values), (0, 120, 0))
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in poly.vertices)
        lines.append(
            f'<polygon class="ring" data-w0="{float(w0v):.6g}" data-tau="{tau:.6g}" '
            f'points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def cpu_workers(cap=None):
    n = os.cpu_count() or 1
    return max(1, min(n, cap) if cap else n)

"""Simulation models with known population contours, Monte Carlo rate
experiments, and CSV ingestion for real data.

Random numbers come from PCG64 generators seeded through SeedSequence;
replication r of a size-n experiment uses spawn_key (n, r), so results
are reproducible for a given (seed, spec) regardless of execution order.
Normal draws go through the inverse CDF applied to open-interval
uniforms, sharing the quantile implementation used for the bandwidth
rules.
"""

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import contours, estimators, geometry, kernels
from .errors import IngestionError, InvalidInputError

MODELS = ("parab_sine", "parab_homo", "parab_quad")


def _model_noise_sd(name):
    return 1.0 if name == "parab_sine" else 0.5


def _model_scale_fn(name):
    if name == "parab_sine":
        return lambda w: 1.0 + 1.5 * np.sin(np.pi / 2.0 * w) ** 2
    if name == "parab_homo":
        return lambda w: np.ones_like(np.asarray(w, dtype=float))
    return lambda w: 1.0 + np.asarray(w, dtype=float) ** 2


@dataclass
class ModelSpec:
    """One simulated dataset: bivariate response (W, W^2) plus scaled
    spherical Gaussian noise, covariate W uniform on [-2, 2]."""

    name: str
    n: int
    seed: int
    noise_scale: float = None

    def __post_init__(self):
        if self.name not in MODELS:
            raise InvalidInputError(f"unknown model {self.name!r}", model=self.name)
        if self.n < 50:
            raise InvalidInputError("model samples need n >= 50", n=self.n)
        if self.noise_scale is None:
            self.noise_scale = _model_noise_sd(self.name)

    @property
    def scale_fn(self):
        return _model_scale_fn(self.name)


def _open_uniform(rng, shape):
    # strictly inside (0, 1): 53-bit integers offset by half a step
    return (rng.integers(0, 1 << 53, size=shape).astype(np.float64) + 0.5) / float(1 << 53)


def _rng_for(seed, spawn_key=()):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key)))


def generate(spec, spawn_key=()):
    """Draw a dataset for the model; deterministic under (seed, spawn_key)."""
    rng = _rng_for(spec.seed, spawn_key)
    w = -2.0 + 4.0 * _open_uniform(rng, spec.n)
    eps = ndtri(_open_uniform(rng, (spec.n, 2))) * spec.noise_scale
    y = np.column_stack([w, w**2]) + spec.scale_fn(w)[:, None] * eps
    return estimators.Dataset(covariates=w, responses=y)


@dataclass
class PopulationOracle:
    """Population conditional contours of a model: circles centered on the
    parabola with model-dependent conditional scale."""

    model: str
    noise_sd: float

    def center(self, w0):
        w0 = float(np.atleast_1d(w0)[0])
        return np.array([w0, w0**2])

    def scale(self, w0):
        return float(_model_scale_fn(self.model)(float(np.atleast_1d(w0)[0])))

    def radius(self, tau):
        return float(self.noise_sd * ndtri(1.0 - tau))

    def contour_radius(self, w0, tau):
        return self.scale(w0) * self.radius(tau)


def population_oracle(model_name, noise_scale=None):
    if model_name not in MODELS:
        raise InvalidInputError(f"unknown model {model_name!r}", model=model_name)
    sd = noise_scale if noise_scale is not None else _model_noise_sd(model_name)
    return PopulationOracle(model=model_name, noise_sd=sd)


def oracle_contour(model_name, w0, tau, num_vertices=720, noise_scale=None):
    """Regular polygon inscribed in the population contour circle."""
    oracle = population_oracle(model_name, noise_scale)
    r = oracle.contour_radius(w0, tau)
    center = oracle.center(w0)
    ang = 2.0 * np.pi * np.arange(num_vertices) / num_vertices
    pts = np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])
    return geometry.ConvexPolygon(vertices=pts)


def circle_contour_distance(polygon, center, radius, samples=3600):
    """Hausdorff distance between a convex polygon boundary and a circle.

    The polygon-to-circle direction is exact (radial deviation along each
    edge is extremal at the vertices or at the closest approach to the
    center); the circle-to-polygon direction is sampled.
    """
    v = polygon.vertices
    starts, ends = v, np.roll(v, -1, axis=0)
    c = np.asarray(center, dtype=float)

    vertex_dev = np.abs(np.hypot(v[:, 0] - c[0], v[:, 1] - c[1]) - radius)
    closest = geometry._point_segment_distances(c, starts, ends)
    poly_to_circle = max(vertex_dev.max(), np.abs(closest - radius).max())

    ang = 2.0 * np.pi * np.arange(samples) / samples
    pts = np.column_stack([c[0] + radius * np.cos(ang), c[1] + radius * np.sin(ang)])
    diffs = pts[:, None, :] - starts[None, :, :]
    d = ends - starts
    lens2 = np.einsum("ij,ij->i", d, d)
    lens2 = np.where(lens2 <= 0.0, 1.0, lens2)
    t = np.clip(np.einsum("pej,ej->pe", diffs, d) / lens2, 0.0, 1.0)
    proj = starts[None, :, :] + t[:, :, None] * d[None, :, :]
    dists = np.hypot(pts[:, None, 0] - proj[:, :, 0], pts[:, None, 1] - proj[:, :, 1])
    circle_to_poly = dists.min(axis=1).max()
    return float(max(poly_to_circle, circle_to_poly))


def _rate_worker(args):
    (name, noise_scale, seed, n, rep, w0, tau, method, h, num_dirs) = args
    spec = ModelSpec(name=name, n=n, seed=seed, noise_scale=noise_scale)
    data = generate(spec, spawn_key=(n, rep))
    grid = geometry.direction_grid(2, num_dirs)
    kern = kernels.kernel_spec("gaussian", 1)
    cut = contours.build_cut(data, tau, w0, grid, kernel=kern, h=h, method=method)
    oracle = population_oracle(name, noise_scale)
    err = circle_contour_distance(
        cut.polygon, oracle.center(w0), oracle.contour_radius(w0, tau)
    )
    return n, rep, err


def rate_experiment(
    model,
    w0,
    tau,
    method,
    ns,
    reps,
    bandwidth_for,
    num_directions=360,
    workers=1,
):
    """Median contour error against the population oracle per sample size.

    ``bandwidth_for`` maps a sample size to the bandwidth used at that
    size (pass a constant function for a fixed-h run).  Returns
    (records, medians): records are (n, rep, error) rows, medians a list
    of (n, median_error) in the order of ``ns``.
    """
    ns = [int(n) for n in ns]
    if any(n2 <= n1 for n1, n2 in zip(ns, ns[1:])):
        raise InvalidInputError("sample sizes must be strictly ascending", ns=ns)
    if reps < 1:
        raise InvalidInputError("need at least one replication", reps=reps)
    jobs = [
        (model.name, model.noise_scale, model.seed, n, rep, float(np.atleast_1d(w0)[0]),
         float(tau), method, float(bandwidth_for(n)), num_directions)
        for n in ns
        for rep in range(reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_rate_worker, jobs))
    else:
        records = [_rate_worker(j) for j in jobs]
    records.sort(key=lambda r: (ns.index(r[0]), r[1]))
    medians = [
        (n, float(np.median([e for nn, _, e in records if nn == n]))) for n in ns
    ]
    return records, medians


class IngestWarning(UserWarning):
    pass


def ingest_csv(path, covariate_column, response_columns):
    """Load a dataset from a headed CSV file, dropping incomplete rows.

    Blank cells in the selected columns drop the row (with a warning
    carrying the count); any other non-numeric cell is an error naming the
    row and column.
    """
    columns = [covariate_column, *response_columns]
    rows = []
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise IngestionError(
                "missing columns: " + ", ".join(missing), path=str(path)
            )
        for i, row in enumerate(reader, start=2):  # header is line 1
            cells = [row[c] for c in columns]
            if any(c is None or str(c).strip() == "" for c in cells):
                dropped += 1
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in columns if not _is_number(row[c]))
                raise IngestionError(
                    f"non-numeric value {row[bad]!r}", path=str(path), line=i, column=bad
                ) from None
    if dropped:
        warnings.warn(f"dropped {dropped} rows with missing values", IngestWarning)
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        raise IngestionError("no complete rows in file", path=str(path))
    data = estimators.Dataset(covariates=arr[:, 0], responses=arr[:, 1:])
    data.dropped_rows = dropped
    return data


def _is_number(s):
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False

import math

import numpy as np
import pytest
from scipy.special import ndtri

from depthreg import contours, geometry, kernels
from depthreg.contours import build_cut, build_family, empirical_coverage
from depthreg.errors import ContourFailureError, InvalidInputError
from depthreg.estimators import Dataset
from depthreg.geometry import direction_grid

GAUSS = kernels.kernel_spec("gaussian", 1)


def gaussian_location_data(seed, n=2000):
    rng = np.random.default_rng(seed)
    return Dataset(covariates=rng.uniform(-1, 1, n), responses=rng.standard_normal((n, 2)))


class TestBuildCut:
    def test_gaussian_disk_oracle(self):
        # for N(0, I) the tau-u quantile hyperplane sits at ndtri(tau), so
        # the region is the disk of radius ndtri(1 - tau)
        data = gaussian_location_data(1, n=4000)
        grid = direction_grid(2, 90)
        cut = build_cut(data, 0.2, [0.0], grid, method="global")
        r = float(ndtri(0.8))
        dist = np.hypot(cut.polygon.vertices[:, 0], cut.polygon.vertices[:, 1])
        assert np.abs(dist - r).max() < 0.12
        assert not cut.unbounded_suspect
        assert cut.subgrad_all_pass

    def test_disk_oracle_brute_force(self):
        # brute-force check of the oracle itself: P(u'Z <= -r) = tau
        rng = np.random.default_rng(99)
        z = rng.standard_normal((10**6, 2))
        r = float(ndtri(0.8))
        for ang in (0.0, 1.0, 2.2):
            u = np.array([np.cos(ang), np.sin(ang)])
            assert np.mean(z @ u <= -r) == pytest.approx(0.2, abs=2e-3)

    def test_median_contour_small_on_symmetric_data(self):
        rng = np.random.default_rng(2)
        half = rng.standard_normal((500, 2))
        y = np.vstack([half, -half])
        data = Dataset(covariates=rng.uniform(-1, 1, 1000), responses=y)
        cut = build_cut(data, 0.499, [0.0], direction_grid(2, 60), method="global")
        if cut.polygon is not None:
            assert cut.polygon.area < 0.05

    def test_heteroskedastic_model_cell(self):
        # scale(0) = 1 for the sinusoidal-scale model: radius ndtri(0.8)
        from depthreg import simlab

        spec = simlab.ModelSpec(name="parab_sine", n=3000, seed=42)
        data = simlab.generate(spec)
        cut = build_cut(
            data, 0.2, [0.0], direction_grid(2, 72), kernel=GAUSS, h=0.37,
            method="local_bilinear",
        )
        center = cut.polygon.centroid
        assert np.hypot(center[0], center[1]) < 0.3
        dist = np.hypot(*(cut.polygon.vertices - center).T)
        assert abs(np.median(dist) - 0.8416) < 0.45

    def test_vertices_satisfy_generating_halfspaces(self):
        data = gaussian_location_data(3, n=1500)
        cut = build_cut(data, 0.25, [0.0], direction_grid(2, 48), method="global")
        assert contours.vertices_satisfy_halfspaces(cut)

    def test_refining_grid_shrinks_polygon(self):
        data = gaussian_location_data(4, n=1200)
        cut = build_cut(data, 0.2, [0.0], direction_grid(2, 64), method="global")
        halves = [
            contours.conditional_halfspace(geometry.make_frame(u), a, c)
            for u, a, c in cut.per_direction
        ]
        full = geometry.intersect_halfspaces(halves)
        sub = geometry.intersect_halfspaces(halves[::2])
        assert full.area <= sub.area + 1e-9

    def test_failure_policy(self, monkeypatch):
        data = gaussian_location_data(5, n=800)
        original = contours._fit_one_direction
        calls = {"k": 0}

        def flaky(data_, tau, w0, frame, kernel, h, method):
            calls["k"] += 1
            if calls["k"] == 1:
                raise RuntimeError("synthetic failure")
            return original(data_, tau, w0, frame, kernel, h, method)

        monkeypatch.setattr(contours, "_fit_one_direction", flaky)
        cut = build_cut(data, 0.2, [0.0], direction_grid(2, 200), method="global")
        assert len(cut.skipped) == 1  # 0.5% failures tolerated

        calls["k"] = -10**9  # now every direction fails at most once more
        def always_fail(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(contours, "_fit_one_direction", always_fail)
        with pytest.raises(ContourFailureError):
            build_cut(data, 0.2, [0.0], direction_grid(2, 50), method="global")

    def test_workers_match_serial(self):
        from depthreg import simlab

        spec = simlab.ModelSpec(name="parab_homo", n=500, seed=3)
        data = simlab.generate(spec)
        grid = direction_grid(2, 36)
        serial = build_cut(data, 0.2, [0.0], grid, kernel=GAUSS, h=0.4, workers=1)
        parallel = build_cut(data, 0.2, [0.0], grid, kernel=GAUSS, h=0.4, workers=2)
        assert np.array_equal(serial.polygon.vertices, parallel.polygon.vertices)

    def test_rotation_equivariance(self):
        data = gaussian_location_data(6, n=900)
        grid = direction_grid(2, 40)
        cut = build_cut(data, 0.2, [0.0], grid, method="global")
        ang = 0.61
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        rotated_data = Dataset(covariates=data.covariates, responses=data.responses @ rot.T)
        rotated_grid = geometry.grid_from_directions([rot @ f.u for f in grid])
        cut_rot = build_cut(rotated_data, 0.2, [0.0], rotated_grid, method="global")
        expected = geometry.ConvexPolygon(cut.polygon.vertices @ rot.T)
        assert geometry.hausdorff_distance(cut_rot.polygon, expected) < 1e-6


class TestBuildFamily:
    def test_repair_noop_without_crossing(self):
        data = gaussian_location_data(7, n=3000)
        grid = direction_grid(2, 36)
        plan = kernels.BandwidthPlan(base_h=1.0)
        raw = build_family(
            data, [0.15, 0.35], [0.0], grid, None, plan, method="global", repair_nesting=False
        )
        # verify no crossing occurred, then repair must be a no-op
        inner, outer = raw.contours[1].polygon, raw.contours[0].polygon
        assert all(geometry.contains_point(outer, v, tol=1e-9) for v in inner.vertices)
        rep = build_family(
            data, [0.15, 0.35], [0.0], grid, None, plan, method="global", repair_nesting=True
        )
        for c_raw, c_rep in zip(raw.contours, rep.contours):
            assert np.allclose(
                np.sort(c_raw.polygon.vertices, axis=0),
                np.sort(c_rep.polygon.vertices, axis=0),
                atol=1e-9,
            )

    def test_taus_must_ascend(self):
        data = gaussian_location_data(8, n=500)
        with pytest.raises(InvalidInputError):
            build_family(
                data, [0.4, 0.2], [0.0], direction_grid(2, 12), None,
                kernels.BandwidthPlan(base_h=1.0), method="global",
            )

    def test_repair_enforces_nesting_on_crossed_polygons(self):
        sq_small = geometry.ConvexPolygon(
            np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        )
        sq_shift = geometry.ConvexPolygon(sq_small.vertices + np.array([0.7, 0.0]))
        inter = geometry.intersect_polygons(sq_shift, sq_small)
        for v in inter.vertices:
            assert geometry.contains_point(sq_small, v, tol=1e-9)
            assert geometry.contains_point(sq_shift, v, tol=1e-9)


class TestEmpiricalCoverage:
    def test_centroid_points(self):
        data = gaussian_location_data(9, n=900)
        cut = build_cut(data, 0.2, [0.0], direction_grid(2, 24), method="global")
        center = cut.polygon.centroid
        assert empirical_coverage(cut, np.tile(center, (5, 1))) == 1.0

    def test_far_points(self):
        data = gaussian_location_data(10, n=900)
        cut = build_cut(data, 0.2, [0.0], direction_grid(2, 24), method="global")
        far = np.full((4, 2), 50.0)
        assert empirical_coverage(cut, far) == 0.0

    def test_gaussian_disk_mass(self):
        # chi-square(2): P(||Z|| <= r) = 1 - exp(-r^2/2)
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((20000, 2))
        from depthreg import simlab

        disk = simlab.oracle_contour("parab_sine", 0.0, 0.2, num_vertices=180)
        cut = contours.CutContour(
            w0=np.array([0.0]), tau=0.2, method="global", polygon=disk,
            per_direction=[], unbounded_suspect=False,
        )
        r = float(ndtri(0.8))
        expected = 1.0 - math.exp(-(r**2) / 2.0)
        assert empirical_coverage(cut, pts) == pytest.approx(expected, abs=0.012)

    def test_empty_polygon_rejected(self):
        cut = contours.CutContour(
            w0=np.array([0.0]), tau=0.2, method="global", polygon=None,
            per_direction=[], unbounded_suspect=False,
        )
        with pytest.raises(InvalidInputError):
            empirical_coverage(cut, np.zeros((3, 2)))

    def test_weighted(self):
        sq = geometry.ConvexPolygon(
            np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        )
        cut = contours.CutContour(
            w0=np.array([0.0]), tau=0.2, method="global", polygon=sq,
            per_direction=[], unbounded_suspect=False,
        )
        pts = np.array([[0.0, 0.0], [5.0, 5.0]])
        assert empirical_coverage(cut, pts, weights=[3.0, 1.0]) == pytest.approx(0.75)


class TestExports:
    def test_csv_and_json(self, tmp_path):
        data = gaussian_location_data(12, n=600)
        cut = build_cut(data, 0.2, [0.0], direction_grid(2, 24), method="global")
        path = tmp_path / "cut.csv"
        contours.write_contour_csv(cut, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "w0,tau,vertex_index,y1,y2"
        assert len(lines) == 1 + len(cut.polygon)
        doc = contours.contour_to_json(cut)
        assert doc["tau"] == 0.2
        assert len(doc["per_direction"]) == 24

    def test_svg(self, tmp_path):
        import xml.etree.ElementTree as ET

        data = gaussian_location_data(13, n=600)
        cut1 = build_cut(data, 0.2, [0.0], direction_grid(2, 24), method="global")
        cut2 = build_cut(data, 0.35, [0.0], direction_grid(2, 24), method="global")
        path = tmp_path / "rings.svg"
        contours.write_svg(
            str(path), data.responses,
            [(0.0, 0.2, cut1.polygon), (0.0, 0.35, cut2.polygon)],
        )
        tree = ET.parse(path)  # valid XML
        polys = tree.getroot().findall(".//{http://www.w3.org/2000/svg}polygon")
        assert len(polys) == 2

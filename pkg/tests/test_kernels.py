import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtri

from depthreg import kernels
from depthreg.errors import EmptyNeighborhoodError, InvalidBandwidthError, InvalidInputError
from depthreg.kernels import (
    BandwidthPlan,
    kernel_spec,
    kernel_values,
    local_weights,
    normalize_weights,
    rule_of_thumb_bandwidth,
    tau_adjusted_bandwidth,
)


def k1(spec):
    return lambda t: float(kernel_values(spec, np.array([t]))[0])


class TestKernelConstants:
    @pytest.mark.parametrize("family", kernels.FAMILIES)
    def test_normalization_1d(self, family):
        spec = kernel_spec(family, 1)
        lim = 8.0 if spec.infinite_support else 1.0
        total, _ = integrate.quad(k1(spec), -lim, lim)
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("family", kernels.FAMILIES)
    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    def test_normalization_2d(self, family):
        spec = kernel_spec(family, 2)
        lim = 8.0 if spec.infinite_support else 1.0
        total, _ = integrate.dblquad(
            lambda a, b: float(kernel_values(spec, np.array([[a, b]]))[0]), -lim, lim, -lim, lim
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("family", kernels.FAMILIES)
    def test_c0_and_mu2_match_quadrature(self, family):
        spec = kernel_spec(family, 1)
        lim = 10.0 if spec.infinite_support else 1.0
        c0, _ = integrate.quad(lambda t: k1(spec)(t) ** 2, -lim, lim)
        mu2, _ = integrate.quad(lambda t: t * t * k1(spec)(t), -lim, lim)
        mu1, _ = integrate.quad(lambda t: t * k1(spec)(t), -lim, lim)
        assert c0 == pytest.approx(spec.c0, abs=1e-8)
        assert mu2 == pytest.approx(float(spec.mu2[0, 0]), abs=1e-8)
        assert abs(mu1) < 1e-12  # symmetry


class TestLocalWeights:
    def test_uniform_example(self):
        spec = kernel_spec("uniform", 1)
        w = local_weights(np.array([-2.0, 0.0, 0.5]), [0.0], spec, 1.0)
        assert np.allclose(w, [0.0, 0.5, 0.5])

    def test_gaussian_at_center(self):
        spec = kernel_spec("gaussian", 1)
        h = 2.0
        w = local_weights(np.array([1.0]), [1.0], spec, h)
        assert w[0] == pytest.approx(1.0 / (h * math.sqrt(2.0 * math.pi)))

    def test_epanechnikov_example(self):
        spec = kernel_spec("epanechnikov", 1)
        w = local_weights(np.array([1.0]), [0.0], spec, 2.0)
        # 0.75 (1 - 0.25) / 2
        assert w[0] == pytest.approx(0.28125)

    def test_invalid_bandwidth(self):
        spec = kernel_spec("gaussian", 1)
        with pytest.raises(InvalidBandwidthError):
            local_weights(np.array([0.0]), [0.0], spec, 0.0)

    def test_empty_neighborhood(self):
        spec = kernel_spec("uniform", 1)
        with pytest.raises(EmptyNeighborhoodError):
            local_weights(np.array([10.0, 11.0]), [0.0], spec, 1.0)

    @pytest.mark.parametrize("family", ["uniform", "epanechnikov"])
    def test_compact_support_locality(self, family):
        spec = kernel_spec(family, 1)
        rng = np.random.default_rng(1)
        w_pts = rng.uniform(-3, 3, 200)
        h = 0.7
        w = local_weights(w_pts, [0.3], spec, h)
        outside = np.abs(w_pts - 0.3) > h * spec.support_radius
        assert np.all(w[outside] == 0.0)
        assert np.all(w[~outside] >= 0.0)
        strictly_inside = np.abs(w_pts - 0.3) < h * spec.support_radius * (1 - 1e-12)
        assert np.all(w[strictly_inside] > 0.0)

    def test_normalize_weights(self):
        w = normalize_weights(np.array([0.2, 0.3, 0.5]))
        assert w.sum() == pytest.approx(3.0)


class TestBandwidthRules:
    def test_rule_of_thumb_two_points(self):
        # sd({0,1}, ddof=1) = sqrt(1/2); direct arithmetic oracle
        expected = 3.0 * math.sqrt(0.5) * 2.0 ** (-0.2)
        assert rule_of_thumb_bandwidth([0.0, 1.0]) == pytest.approx(expected, abs=1e-12)

    def test_rule_of_thumb_scaling(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(50)
        lam = 4.2
        assert rule_of_thumb_bandwidth(lam * x) == pytest.approx(
            lam * rule_of_thumb_bandwidth(x), rel=1e-12
        )

    def test_rule_of_thumb_constant_covariate(self):
        with pytest.raises(InvalidInputError):
            rule_of_thumb_bandwidth(np.full(10, 2.5))

    def test_tau_adjust_half_factor(self):
        assert tau_adjusted_bandwidth(1.0, 0.5) == pytest.approx(
            (math.pi / 2.0) ** 0.2, abs=1e-12
        )

    def test_tau_adjust_symmetry_exact(self):
        # 1 - tau is exact for tau in [0.5, 1] (Sterbenz), so these pairs are
        # true float complements and the symmetry must be bitwise
        for tau in (0.95, 0.8, 0.63, 0.51, 0.75, 0.5):
            assert tau_adjusted_bandwidth(0.8, tau) == tau_adjusted_bandwidth(0.8, 1.0 - tau)

    def test_tau_adjust_symmetry_rounded_complements(self):
        # going the other way 1 - tau itself rounds; equality then holds to
        # a couple of ulps
        for tau in (0.05, 0.2, 0.37, 0.49):
            a = tau_adjusted_bandwidth(0.8, tau)
            b = tau_adjusted_bandwidth(0.8, 1.0 - tau)
            assert a == pytest.approx(b, rel=1e-14)

    def test_tau_ratio_identity(self):
        # ratio form: (h_t1/h_t2)^5 = t1(1-t1)/t2(1-t2) * [phi(ndtri(t2))/phi(ndtri(t1))]^2
        t1, t2 = 0.2, 0.4
        h1 = tau_adjusted_bandwidth(1.0, t1)
        h2 = tau_adjusted_bandwidth(1.0, t2)
        phi = lambda t: math.exp(-0.5 * ndtri(t) ** 2) / math.sqrt(2 * math.pi)
        expected = (
            (t1 * (1 - t1)) / (t2 * (1 - t2)) * (phi(t2) / phi(t1)) ** 2
        ) ** 0.2
        assert h1 / h2 == pytest.approx(expected, abs=1e-12)

    def test_half_relation_to_reference(self):
        # h_{1/2}^5 = (pi/2) h_ref^5
        h = tau_adjusted_bandwidth(1.3, 0.5)
        assert h**5 == pytest.approx((math.pi / 2.0) * 1.3**5, rel=1e-12)


class TestBandwidthPlan:
    def test_manual_plan(self):
        plan = BandwidthPlan(base_h=0.37)
        assert plan.bandwidth_for(0.2) == 0.37
        assert plan.bandwidth_for(0.4) == 0.37

    def test_tau_adjusted_plan(self):
        plan = BandwidthPlan(base_h=0.5, rule="fan_zhang_supplied", tau_adjust=True)
        assert plan.bandwidth_for(0.2) == pytest.approx(tau_adjusted_bandwidth(0.5, 0.2))

    def test_rule_of_thumb_plan(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 10, 100)
        plan = kernels.plan_from_rule_of_thumb(x)
        assert plan.base_h == pytest.approx(rule_of_thumb_bandwidth(x))
        assert plan.rule == "rule_of_thumb"

    def test_invalid_plan(self):
        with pytest.raises(InvalidBandwidthError):
            BandwidthPlan(base_h=-1.0)

"""Kernel functions, local weights, and bandwidth rules.

Kernels are product kernels over the covariate dimension.  The Gaussian
family has unbounded support; the weight-drop threshold in the solver
keeps its far tails from bloating the linear programs.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import EmptyNeighborhoodError, InvalidBandwidthError, InvalidInputError

FAMILIES = ("gaussian", "epanechnikov", "uniform")


@dataclass
class KernelSpec:
    """Kernel family with its analytic moment constants.

    c0 is the integral of K^2, mu2 the second-moment matrix; for the
    compact families support_radius is the sup-norm radius of the support.
    """

    family: str
    dimension: int
    c0: float
    mu2: np.ndarray
    support_radius: float

    @property
    def infinite_support(self):
        return not math.isfinite(self.support_radius)


def kernel_spec(family, dimension=1):
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown kernel family {family!r}", family=family)
    if dimension < 1:
        raise InvalidInputError("kernel dimension must be >= 1", dimension=dimension)
    d = dimension
    if family == "gaussian":
        return KernelSpec(family, d, (2.0 * math.sqrt(math.pi)) ** -d, np.eye(d), math.inf)
    if family == "epanechnikov":
        return KernelSpec(family, d, 0.6**d, 0.2 * np.eye(d), 1.0)
    return KernelSpec(family, d, 0.5**d, np.eye(d) / 3.0, 1.0)


def kernel_values(spec, z):
    """Evaluate the kernel density at rows of z, shape (n, d) or (n,)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if spec.family == "gaussian":
        return np.exp(-0.5 * np.sum(z * z, axis=1)) * (2.0 * math.pi) ** (-z.shape[1] / 2.0)
    inside = np.all(np.abs(z) <= 1.0, axis=1)
    if spec.family == "uniform":
        return np.where(inside, 0.5 ** z.shape[1], 0.0)
    vals = np.prod(np.clip(0.75 * (1.0 - z * z), 0.0, None), axis=1)
    return np.where(inside, vals, 0.0)


def local_weights(covariates, w0, kernel, h):
    """Kernel weights h^{-(p-1)} K((W_i - w0)/h), not renormalized.

    Downstream fits are invariant to a positive rescaling of all weights,
    so the sum-to-n convention is applied only when reporting subgradient
    bounds (see normalize_weights).
    """
    if h <= 0:
        raise InvalidBandwidthError("bandwidth must be positive", h=h)
    cov = np.asarray(covariates, dtype=float)
    if cov.ndim == 1:
        cov = cov[:, None]
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    if cov.shape[1] != w0.shape[0]:
        raise InvalidInputError(
            "conditioning point dimension mismatch", expected=cov.shape[1], got=w0.shape[0]
        )
    z = (cov - w0) / h
    weights = kernel_values(kernel, z) / h ** cov.shape[1]
    if not np.all(np.isfinite(weights)):
        raise InvalidInputError("non-finite kernel weights")
    if not np.any(weights > 0):
        raise EmptyNeighborhoodError(
            "no observation receives positive weight near w0", w0=w0.tolist(), h=h
        )
    return weights


def normalize_weights(weights):
    """Rescale weights so they sum to the sample size (reporting convention)."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise InvalidInputError("weights must have positive sum")
    return w * (len(w) / total)


def rule_of_thumb_bandwidth(covariate):
    """3 * sd(W) * n^{-1/5} with the sample (n-1) standard deviation."""
    x = np.asarray(covariate, dtype=float).reshape(-1)
    n = len(x)
    if n < 2:
        raise InvalidInputError("need at least two observations", n=n)
    sd = float(np.std(x, ddof=1))
    if sd <= 0:
        raise InvalidInputError("covariate is constant; bandwidth rule undefined")
    return 3.0 * sd * n ** (-0.2)


def tau_adjusted_bandwidth(h_fz, tau):
    """Quantile-level adjustment of a reference bandwidth:

        h_tau = [tau (1-tau)]^{1/5} * phi(Phi^{-1}(tau))^{-2/5} * h_fz.

    Computed from min(tau, 1-tau) so that h_tau == h_{1-tau} exactly.
    """
    if h_fz <= 0:
        raise InvalidBandwidthError("reference bandwidth must be positive", h_fz=h_fz)
    if not 0.0 < tau < 1.0:
        raise InvalidInputError("tau must lie strictly in (0, 1)", tau=tau)
    t = min(tau, 1.0 - tau)
    phi = math.exp(-0.5 * ndtri(t) ** 2) / math.sqrt(2.0 * math.pi)
    return (t * (1.0 - t)) ** 0.2 * phi ** (-0.4) * h_fz


@dataclass
class BandwidthPlan:
    """Resolved bandwidth choice for a sweep.

    base_h is the tau-independent reference bandwidth; when tau_adjust is
    on, per-tau bandwidths are derived from it with tau_adjusted_bandwidth.
    """

    base_h: float
    rule: str = "manual"
    sigma_w: float = float("nan")
    tau_adjust: bool = False

    def __post_init__(self):
        if self.base_h <= 0:
            raise InvalidBandwidthError("base bandwidth must be positive", h=self.base_h)
        if self.rule not in ("manual", "rule_of_thumb", "fan_zhang_supplied"):
            raise InvalidInputError(f"unknown bandwidth rule {self.rule!r}")

    def bandwidth_for(self, tau):
        if self.tau_adjust:
            return tau_adjusted_bandwidth(self.base_h, tau)
        return self.base_h


def plan_from_rule_of_thumb(covariate, tau_adjust=False):
    x = np.asarray(covariate, dtype=float).reshape(-1)
    h = rule_of_thumb_bandwidth(x)
    return BandwidthPlan(
        base_h=h, rule="rule_of_thumb", sigma_w=float(np.std(x, ddof=1)), tau_adjust=tau_adjust
    )

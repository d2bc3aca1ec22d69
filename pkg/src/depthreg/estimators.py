"""Directional quantile hyperplane fits: global weighted fits, local
constant fits, and local bilinear fits with augmented regressors.

For a direction frame (u, Gamma) a fit solves, over its coefficient
vector theta,

    minimize (1/n) sum_i w_i rho_tau(u'Y_i - theta' x_i),

where the regressor rows x_i are

    global          (X_i', (Gamma'Y_i)')          X_i = (1, W_i')'
    local constant  (1, (Gamma'Y_i)')
    local bilinear  (1, (Gamma'Y_i)') kron (1, (W_i - w0)')

The local bilinear regressors are centered at the conditioning point, so
the conditional hyperplane at w0 is directly the (1, Gamma'Y) coefficient
block; the remaining block gives the first-order correction in (w - w0).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, qr_solver
from .errors import (
    DegenerateDesignError,
    EmptyNeighborhoodError,
    InvalidInputError,
    SolverError,
)

SUBGRAD_SLACK = 1e-12


@dataclass
class Dataset:
    """Covariates W (n, p-1) paired with responses Y (n, m)."""

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.covariates.ndim == 1:
            self.covariates = self.covariates[:, None]
        self.responses = np.asarray(self.responses, dtype=float)
        n, m = self.responses.shape
        if m < 2:
            raise InvalidInputError("responses must be at least bivariate", m=m)
        if self.covariates.shape[0] != n:
            raise InvalidInputError("covariates and responses must share length")
        if not (np.all(np.isfinite(self.covariates)) and np.all(np.isfinite(self.responses))):
            raise InvalidInputError("dataset contains non-finite entries")
        if n < 2:
            raise InvalidInputError("need at least two observations", n=n)
        # identifiability (n >= number of fit parameters) is enforced per fit,
        # so small datasets can still be held and inspected

    @property
    def n(self):
        return self.responses.shape[0]

    @property
    def m(self):
        return self.responses.shape[1]

    @property
    def p(self):
        return self.covariates.shape[1] + 1


@dataclass
class QuantileHyperplane:
    """Fitted directional quantile hyperplane b'y = a'(1, w')'."""

    tau: float
    frame: object
    a: np.ndarray
    c: np.ndarray
    b: np.ndarray
    objective: float
    subgrad_lo: float
    subgrad_hi: float
    status: str

    @property
    def subgrad_pass(self):
        return self.subgrad_lo <= self.tau + SUBGRAD_SLACK and self.tau <= self.subgrad_hi + SUBGRAD_SLACK


@dataclass
class LocalConstantFit:
    w0: np.ndarray
    tau: float
    frame: object
    a: float
    c: np.ndarray
    objective: float = float("nan")
    subgrad_lo: float = float("nan")
    subgrad_hi: float = float("nan")
    status: str = ""

    @property
    def subgrad_pass(self):
        return self.subgrad_lo <= self.tau + SUBGRAD_SLACK and self.tau <= self.subgrad_hi + SUBGRAD_SLACK


@dataclass
class LocalBilinearFit:
    w0: np.ndarray
    tau: float
    frame: object
    a: float
    c: np.ndarray
    a_dot: np.ndarray
    c_dot: np.ndarray
    objective: float = float("nan")
    subgrad_lo: float = float("nan")
    subgrad_hi: float = float("nan")
    status: str = ""

    @property
    def subgrad_pass(self):
        return self.subgrad_lo <= self.tau + SUBGRAD_SLACK and self.tau <= self.subgrad_hi + SUBGRAD_SLACK


def subgradient_bounds(residuals, weights, scale=None):
    """Weighted fractions of strictly negative / nonpositive residuals.

    Weights are normalized to total mass one, matching the sum-to-n
    reporting convention after division by n.
    """
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise InvalidInputError("weights must have positive sum")
    if scale is None:
        scale = float(np.max(np.abs(residuals))) or 1.0
    tol = qr_solver.ZERO_RESIDUAL_REL * max(scale, 1e-12)
    lo = float(np.sum(w[residuals < -tol]) / total)
    hi = float(np.sum(w[residuals <= tol]) / total)
    return lo, hi


def subgradient_check(b, a, data, weights, tau):
    """Necessary optimality certificate for a hyperplane b'y = a'(1, w')':
    the weighted share of points strictly below must not exceed tau, which
    must not exceed the share below-or-on."""
    b = np.asarray(b, dtype=float)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x = np.column_stack([np.ones(data.n), data.covariates])[:, : len(a)]
    residuals = data.responses @ b - x @ a
    scale = float(np.max(np.abs(data.responses))) or 1.0
    lo, hi = subgradient_bounds(residuals, weights, scale=scale)
    ok = lo <= tau + SUBGRAD_SLACK and tau <= hi + SUBGRAD_SLACK
    return lo, hi, ok


def _solve_fit(response, design, weights, tau, n_total):
    problem = qr_solver.QrProblem(
        responses=response, regressors=design, weights=weights, tau=tau
    )
    sol = qr_solver.solve(problem)
    if sol.status == "failed":
        raise SolverError(f"quantile regression solve failed: {sol.diagnostic}")
    scale = float(np.max(np.abs(response))) or 1.0
    lo, hi = subgradient_bounds(sol.residuals, weights, scale=scale)
    objective = float(np.sum(weights * qr_solver.check_loss(sol.residuals, tau)) / n_total)
    return sol, objective, lo, hi


def fit_global(data, tau, frame, weights):
    """Weighted directional quantile hyperplane on the full covariate design."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if len(weights) != data.n:
        raise InvalidInputError("weights must have one entry per observation")
    u, gamma = frame.u, frame.gamma
    response = data.responses @ u
    t = data.responses @ gamma
    design = np.column_stack([np.ones(data.n), data.covariates, t])
    sol, objective, lo, hi = _solve_fit(response, design, weights, tau, data.n)
    p = data.p
    a, c = sol.coefficients[:p], sol.coefficients[p:]
    return QuantileHyperplane(
        tau=tau,
        frame=frame,
        a=a,
        c=c,
        b=u - gamma @ c,
        objective=objective,
        subgrad_lo=lo,
        subgrad_hi=hi,
        status=sol.status,
    )


def fit_local_constant(data, tau, frame, w0, kernel, h):
    """Kernel-weighted fit with covariate coefficients pinned to zero."""
    weights = kernels.local_weights(data.covariates, w0, kernel, h)
    if np.count_nonzero(weights > 0) < data.m:
        raise EmptyNeighborhoodError(
            "fewer positive-weight observations than parameters near w0",
            w0=np.atleast_1d(w0).tolist(),
            h=h,
        )
    u, gamma = frame.u, frame.gamma
    response = data.responses @ u
    design = np.column_stack([np.ones(data.n), data.responses @ gamma])
    sol, objective, lo, hi = _solve_fit(response, design, weights, tau, data.n)
    return LocalConstantFit(
        w0=np.atleast_1d(np.asarray(w0, dtype=float)),
        tau=tau,
        frame=frame,
        a=float(sol.coefficients[0]),
        c=sol.coefficients[1:],
        objective=objective,
        subgrad_lo=lo,
        subgrad_hi=hi,
        status=sol.status,
    )


def bilinear_design(data, frame, w0):
    """Augmented regressors (1, Gamma'Y)' kron (1, (W - w0)')', one row per
    observation; the column layout is (a, a_dot, c_1, c_dot[:,1], ...)."""
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    d = data.covariates - w0
    t = data.responses @ frame.gamma
    n, p = data.n, data.p
    cols = [np.ones(n), d]
    for j in range(data.m - 1):
        cols.append(t[:, j])
        cols.append(t[:, j][:, None] * d)
    return np.column_stack(cols)


def _bilinear_block_names(p, m):
    names = ["intercept (a)"] + ["covariate slope (a_dot)"] * (p - 1)
    for j in range(m - 1):
        names.append(f"response block (c[{j}])")
        names.extend([f"interaction block (c_dot[:, {j}])"] * (p - 1))
    return names


def fit_local_bilinear(data, tau, frame, w0, kernel, h):
    """Kernel-weighted fit on the augmented bilinear regressors."""
    weights = kernels.local_weights(data.covariates, w0, kernel, h)
    p, m = data.p, data.m
    if np.count_nonzero(weights > 0) < m * p:
        raise EmptyNeighborhoodError(
            "fewer positive-weight observations than parameters near w0",
            w0=np.atleast_1d(w0).tolist(),
            h=h,
        )
    design = bilinear_design(data, frame, w0)
    _check_bilinear_rank(design, weights, p, m)
    u = frame.u
    response = data.responses @ u
    sol, objective, lo, hi = _solve_fit(response, design, weights, tau, data.n)
    theta = sol.coefficients
    a = float(theta[0])
    a_dot = theta[1:p]
    c = np.empty(m - 1)
    c_dot = np.empty((p - 1, m - 1))
    for j in range(m - 1):
        base = p * (j + 1)
        c[j] = theta[base]
        c_dot[:, j] = theta[base + 1 : base + p]
    return LocalBilinearFit(
        w0=np.atleast_1d(np.asarray(w0, dtype=float)),
        tau=tau,
        frame=frame,
        a=a,
        c=c,
        a_dot=a_dot,
        c_dot=c_dot,
        objective=objective,
        subgrad_lo=lo,
        subgrad_hi=hi,
        status=sol.status,
    )


def _check_bilinear_rank(design, weights, p, m):
    from scipy import linalg

    sw = np.sqrt(weights)
    scaled = sw[:, None] * design
    r, piv = linalg.qr(scaled, mode="r", pivoting=True)
    diag = np.abs(np.diag(r))
    ref = diag.max() if diag.size else 0.0
    rank = int(np.sum(diag > qr_solver.RANK_TOL_REL * (ref if ref > 0 else 1.0)))
    q = design.shape[1]
    if rank < q:
        names = _bilinear_block_names(p, m)
        bad = sorted({names[j] for j in piv[rank:]})
        raise DegenerateDesignError(
            "bilinear design is rank deficient; unidentified: " + ", ".join(bad),
            rank=rank,
            needed=q,
        )


def extract_conditional(fit):
    """Conditional hyperplane block (a, c) of a bilinear fit at w = w0.

    The regressors are centered at w0, so this is a field read; the result
    is cross-checked against the correction formula evaluated at w0.
    """
    a_w, c_w = bilinear_correction(fit, fit.w0)
    if a_w != fit.a or np.any(c_w != fit.c):
        raise InvalidInputError("conditional extraction failed its consistency check")
    return LocalConstantFit(
        w0=fit.w0,
        tau=fit.tau,
        frame=fit.frame,
        a=fit.a,
        c=fit.c.copy(),
        objective=fit.objective,
        subgrad_lo=fit.subgrad_lo,
        subgrad_hi=fit.subgrad_hi,
        status=fit.status,
    )


def bilinear_correction(fit, w):
    """First-order hyperplane coefficients at a nearby conditioning point:
    a_w = a + (w - w0)' a_dot and c_w = c + c_dot' (w - w0)."""
    d = np.atleast_1d(np.asarray(w, dtype=float)) - fit.w0
    a_w = float(fit.a + d @ fit.a_dot)
    c_w = fit.c + fit.c_dot.T @ d
    return a_w, c_w


def fit_record(fit, method):
    """JSON-ready record for one fitted hyperplane."""
    rec = {
        "method": method,
        "tau": fit.tau,
        "u": [float(v) for v in fit.frame.u],
        "w0": None,
        "a": None,
        "c": [float(v) for v in np.atleast_1d(fit.c)],
        "a_dot": None,
        "c_dot": None,
        "objective": fit.objective,
        "subgrad_lo": fit.subgrad_lo,
        "subgrad_hi": fit.subgrad_hi,
        "status": fit.status,
    }
    if isinstance(fit, QuantileHyperplane):
        rec["a"] = [float(v) for v in fit.a]
    else:
        rec["a"] = float(fit.a)
        rec["w0"] = [float(v) for v in fit.w0]
    if isinstance(fit, LocalBilinearFit):
        rec["a_dot"] = [float(v) for v in fit.a_dot]
        rec["c_dot"] = [[float(v) for v in row] for row in fit.c_dot]
    return rec

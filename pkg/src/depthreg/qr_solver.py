"""Weighted single-output quantile regression by check-loss minimization.

Every directional and local fit in the package reduces to

    minimize_theta  (1/n) sum_i  w_i * rho_tau(y_i - x_i' theta),

a linear program.  We solve its dual

    maximize_d  y'd   subject to  X'd = 0,  -(1-tau) w_i <= d_i <= tau w_i,

which has only q equality constraints, with the HiGHS dual simplex; the
coefficient vector is recovered from the equality multipliers.  A basic
dual solution leaves at least q residuals at exactly zero, so the returned
theta is a vertex of the primal solution set, as required for the
subgradient certificates.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .errors import InvalidInputError

WEIGHT_DROP_REL = 1e-12
RANK_TOL_REL = 1e-10
ZERO_RESIDUAL_REL = 1e-8
FLAT_DERIV_REL = 1e-7

_pending_dump = {"path": None}


def request_dump(path):
    """Arrange for the next solve in this process to dump its LP arrays."""
    _pending_dump["path"] = path


@dataclass
class QrProblem:
    """One weighted quantile-regression instance.

    responses : (n,) response vector
    regressors : (n, q) design matrix, any intercept column included explicitly
    weights : (n,) nonnegative weights
    tau : quantile level, strictly inside (0, 1)
    """

    responses: np.ndarray
    regressors: np.ndarray
    weights: np.ndarray
    tau: float

    def __post_init__(self):
        self.responses = np.asarray(self.responses, dtype=float).reshape(-1)
        self.regressors = np.asarray(self.regressors, dtype=float)
        if self.regressors.ndim == 1:
            self.regressors = self.regressors[:, None]
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)


@dataclass
class QrSolution:
    coefficients: np.ndarray
    objective: float
    active_count: int
    iterations: int
    status: str
    diagnostic: str = ""
    residuals: np.ndarray = field(default=None, repr=False)


def check_loss(zeta, tau):
    """Asymmetric absolute loss max{(tau-1) zeta, tau zeta}."""
    z = np.asarray(zeta, dtype=float)
    out = np.maximum((tau - 1.0) * z, tau * z)
    return float(out) if np.isscalar(zeta) or out.ndim == 0 else out


def weighted_check_objective(residuals, weights, tau, n=None):
    """(1/n)-scaled weighted check loss; n defaults to the sample size."""
    if n is None:
        n = len(residuals)
    return float(np.sum(weights * check_loss(residuals, tau)) / n)


def reduce_weighted_to_scaled(problem):
    """Equivalent unit-weight problem with rows scaled by their weights.

    rho_tau(w z) = w rho_tau(z) for w >= 0, so the coefficient sets agree.
    """
    w = problem.weights
    return QrProblem(
        responses=problem.responses * w,
        regressors=problem.regressors * w[:, None],
        weights=np.ones_like(w),
        tau=problem.tau,
    )


def _validate(problem):
    y, x, w = problem.responses, problem.regressors, problem.weights
    n, q = x.shape
    if len(y) != n or len(w) != n:
        raise InvalidInputError("responses, regressors, weights must share length")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise InvalidInputError("non-finite values in quantile regression inputs")
    if np.any(w < 0):
        raise InvalidInputError("weights must be nonnegative")
    if not 0.0 < problem.tau < 1.0:
        raise InvalidInputError("tau must lie strictly in (0, 1)", tau=problem.tau)
    if n < q or q < 1:
        raise InvalidInputError("need n >= q >= 1", n=n, q=q)
    if np.count_nonzero(w > 0) < q:
        raise InvalidInputError("need at least q observations with positive weight")


def _one_sided_derivative(residuals, weights, slopes, tau, zero_tol):
    """One-sided derivative of the weighted check loss along a direction
    whose per-observation residual slopes are given."""
    pos = residuals > zero_tol
    neg = residuals < -zero_tol
    zero = ~(pos | neg)
    d = tau * np.sum(weights[pos] * slopes[pos])
    d += (tau - 1.0) * np.sum(weights[neg] * slopes[neg])
    sz = slopes[zero]
    d += np.sum(weights[zero] * np.maximum(tau * sz, (tau - 1.0) * sz))
    return float(d)


def _classify_status(y, x, w, tau, theta, pinned):
    """Optimal vs degenerate-optimal via flat descent directions at theta."""
    residuals = y - x @ theta
    scale = max(1.0, float(np.max(np.abs(y))) if len(y) else 1.0)
    zero_tol = ZERO_RESIDUAL_REL * scale
    q = x.shape[1]
    probe = [np.eye(q)[j] for j in range(q)]
    active = np.abs(residuals) <= zero_tol
    if active.sum() >= 1:
        xa = x[active]
        if np.linalg.matrix_rank(xa, tol=1e-12 * max(1.0, np.abs(xa).max())) < q:
            null = linalg.null_space(xa) if xa.size else np.eye(q)
            probe.extend(null.T)
    degenerate = bool(pinned.any())
    worst = np.inf
    for d in probe:
        ref = max(1.0, float(np.sum(w) * max(tau, 1.0 - tau) * max(np.abs(x @ d).max(), 1e-300)))
        flat_tol = FLAT_DERIV_REL * ref
        for sign in (1.0, -1.0):
            slopes = -(x @ (sign * d))
            deriv = _one_sided_derivative(residuals, w, slopes, tau, zero_tol)
            worst = min(worst, deriv / ref)
            if abs(deriv) <= flat_tol:
                degenerate = True
    status = "degenerate-optimal" if degenerate else "optimal"
    return status, residuals, zero_tol, worst


def solve(problem, dump_path=None):
    """Minimize the weighted check loss; returns a QrSolution.

    Observations with negligible weight are dropped, exactly-zero regressor
    columns are pinned to coefficient 0 (they carry no information and any
    value is optimal), and rank deficiency among the remaining columns
    yields status ``failed``.
    """
    _validate(problem)
    if dump_path is None and _pending_dump["path"] is not None:
        dump_path = _pending_dump["path"]
        _pending_dump["path"] = None
    y_all, x_all, w_all = problem.responses, problem.regressors, problem.weights
    n, q = x_all.shape
    tau = problem.tau

    keep = w_all >= WEIGHT_DROP_REL * (w_all.max() if w_all.max() > 0 else 1.0)
    y, x, w = y_all[keep], x_all[keep], w_all[keep]

    col_norms = np.sqrt((w[:, None] * x * x).sum(axis=0))
    ref_norm = col_norms.max()
    pinned = col_norms < WEIGHT_DROP_REL * (ref_norm if ref_norm > 0 else 1.0)
    live = ~pinned
    x_live = x[:, live]

    if x_live.shape[1] == 0:
        return QrSolution(
            coefficients=np.zeros(q),
            objective=float("nan"),
            active_count=0,
            iterations=0,
            status="failed",
            diagnostic="all regressor columns are zero under the weights",
        )

    # weighted rank check via pivoted QR
    r = linalg.qr(np.sqrt(w)[:, None] * x_live, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOL_REL * (diag.max() if diag.size else 1.0)))
    if rank < x_live.shape[1]:
        return QrSolution(
            coefficients=np.full(q, np.nan),
            objective=float("nan"),
            active_count=0,
            iterations=0,
            status="failed",
            diagnostic="rank-deficient weighted regressor matrix "
            f"(rank {rank} < {x_live.shape[1]})",
        )

    if dump_path is not None:
        _dump_lp(dump_path, y, x_live, w, tau)

    res = linprog(
        -y,
        A_eq=x_live.T,
        b_eq=np.zeros(x_live.shape[1]),
        bounds=np.column_stack([-(1.0 - tau) * w, tau * w]),
        method="highs-ds",
        options={"presolve": False},
    )
    if res.status != 0:
        res = linprog(
            -y,
            A_eq=x_live.T,
            b_eq=np.zeros(x_live.shape[1]),
            bounds=np.column_stack([-(1.0 - tau) * w, tau * w]),
            method="highs-ds",
        )
    if res.status != 0:
        return QrSolution(
            coefficients=np.full(q, np.nan),
            objective=float("nan"),
            active_count=0,
            iterations=0,
            status="failed",
            diagnostic=f"linear program terminated with status {res.status}: {res.message}",
        )

    theta = np.zeros(q)
    theta[live] = -res.eqlin.marginals

    status, residuals, zero_tol, _ = _classify_status(y, x, w, tau, theta, pinned)
    objective = weighted_check_objective(residuals, w, tau, n=n)
    active_count = int(np.sum(np.abs(residuals) <= zero_tol))
    full_residuals = y_all - x_all @ theta
    return QrSolution(
        coefficients=theta,
        objective=objective,
        active_count=active_count,
        iterations=int(res.nit),
        status=status,
        residuals=full_residuals,
    )


def optimality_gap(problem, coefficients):
    """Most negative one-sided directional derivative (coordinate directions)
    of the objective at the given coefficients, normalized per direction.
    Values >= -1e-7 certify optimality up to tolerance."""
    y, x, w, tau = (
        problem.responses,
        problem.regressors,
        problem.weights,
        problem.tau,
    )
    residuals = y - x @ coefficients
    scale = max(1.0, float(np.max(np.abs(y))) if len(y) else 1.0)
    zero_tol = ZERO_RESIDUAL_REL * scale
    worst = np.inf
    q = x.shape[1]
    for j in range(q):
        ref = max(1e-300, float(np.sum(w * np.abs(x[:, j]))))
        for sign in (1.0, -1.0):
            deriv = _one_sided_derivative(residuals, w, -sign * x[:, j], tau, zero_tol)
            worst = min(worst, deriv / ref)
    return worst


def _dump_lp(path, y, x, w, tau):
    with open(path, "w") as fh:
        n, q = x.shape
        fh.write(f"# weighted quantile regression LP dual: n={n} q={q} tau={tau}\n")
        fh.write("# maximize y'd  s.t.  X'd = 0,  -(1-tau) w <= d <= tau w\n")
        fh.write("y " + " ".join(f"{v:.17g}" for v in y) + "\n")
        fh.write("w " + " ".join(f"{v:.17g}" for v in w) + "\n")
        for j in range(q):
            fh.write(f"x{j} " + " ".join(f"{v:.17g}" for v in x[:, j]) + "\n")

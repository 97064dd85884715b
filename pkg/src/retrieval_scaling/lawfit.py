"""Power-law scaling fits with an irreducible loss floor.

Single-variable law::

    L(x) = (scale / x) ** exponent + floor

Joint model/data law::

    L(n, d) = ((a / n) ** (alpha / beta) + b / d) ** beta + floor

The single law is fit by a one-dimensional search over the floor with an
ordinary least-squares line of ``log(L - floor)`` on ``log(x)`` inside. The
joint law is fit by multi-start Nelder-Mead on log-loss residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._optimize import golden_section, grid_bracket
from .errors import ConvergenceError, FitError, InputError

FIT_SPACE = "log_residual"
FLOOR_CAP = 0.999
FLOOR_TOL = 1e-9
FLOOR_SCAN_POINTS = 64
JOINT_MAX_EVALS = 10_000

__all__ = [
    "Observation",
    "JointObservation",
    "PowerLawFit",
    "JointLawFit",
    "predict_single",
    "fit_single_law",
    "predict_joint",
    "fit_joint_law",
    "r_squared",
    "fit_to_dict",
    "fit_from_dict",
    "PowerLawRegressor",
    "JointScalingLawRegressor",
]


@dataclass(frozen=True)
class Observation:
    x: float
    loss: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.loss)):
            raise InputError("observation values must be finite")
        if self.x <= 0 or self.loss <= 0:
            raise InputError(f"observation needs x > 0 and loss > 0, got ({self.x}, {self.loss})")


@dataclass(frozen=True)
class JointObservation:
    n: float
    d: float
    loss: float

    def __post_init__(self):
        vals = (self.n, self.d, self.loss)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise InputError(f"joint observation values must be positive and finite, got {vals}")


@dataclass(frozen=True)
class PowerLawFit:
    scale: float
    exponent: float
    floor: float
    r_squared: float = float("nan")
    fit_space: str = FIT_SPACE
    n_points: int = 0

    def __post_init__(self):
        if not (self.scale > 0 and self.exponent > 0 and self.floor >= 0):
            raise InputError(
                "power law needs scale > 0, exponent > 0 and floor >= 0, got "
                f"({self.scale}, {self.exponent}, {self.floor})"
            )

    def predict(self, x):
        return predict_single(self, x)


@dataclass(frozen=True)
class JointLawFit:
    a: float
    b: float
    alpha: float
    beta: float
    floor: float
    rmse: float = float("nan")
    fit_space: str = FIT_SPACE
    n_points: int = 0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.alpha > 0 and self.beta > 0 and self.floor >= 0):
            raise InputError(
                "joint law needs a, b, alpha, beta > 0 and floor >= 0, got "
                f"({self.a}, {self.b}, {self.alpha}, {self.beta}, {self.floor})"
            )

    def predict(self, n, d):
        return predict_joint(self, n, d)


def _positive_array(values, name):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InputError(f"{name} must be positive and finite")
    return arr


def predict_single(fit: PowerLawFit, x):
    """Evaluate the single-variable law; accepts a scalar or an array."""
    xs = _positive_array(x, "x")
    out = (fit.scale / xs) ** fit.exponent + fit.floor
    return float(out) if out.ndim == 0 else out


def predict_joint(fit: JointLawFit, n, d):
    ns = _positive_array(n, "n")
    ds = _positive_array(d, "d")
    out = ((fit.a / ns) ** (fit.alpha / fit.beta) + fit.b / ds) ** fit.beta + fit.floor
    return float(out) if np.ndim(out) == 0 else out


def r_squared(observed, predicted) -> float:
    o = np.asarray(observed, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if o.shape != p.shape or o.ndim != 1:
        raise InputError(f"length mismatch: {o.shape} vs {p.shape}")
    if o.shape[0] < 2:
        raise InputError("r_squared needs at least two points")
    ss_tot = float(((o - o.mean()) ** 2).sum())
    if ss_tot == 0:
        raise InputError("observed values have zero variance")
    return 1.0 - float(((o - p) ** 2).sum()) / ss_tot


def _as_xy(points):
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], Observation):
        x, y = points
    else:
        points = list(points)
        x = [p.x for p in points]
        y = [p.loss for p in points]
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def _log_line(log_x, loss, floor):
    """OLS of log(loss - floor) on log_x. Returns (slope, intercept, ss_res, ss_tot)."""
    y = np.log(loss - floor)
    xc = log_x - log_x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean()) - slope * float(log_x.mean())
    resid = yc - slope * xc
    return slope, intercept, float(resid @ resid), float(yc @ yc)


def fit_single_law(points, floor_tol: float = FLOOR_TOL) -> PowerLawFit:
    """Fit ``(scale/x)**exponent + floor`` by log-space least squares.

    ``points`` is a sequence of :class:`Observation` or an ``(x, loss)``
    pair of arrays. The floor is chosen in [0, 0.999 * min(loss)] to minimise
    the residual sum of squares of the inner log-log line: a coarse scan
    brackets the minimum, golden-section search refines it to ``floor_tol``.
    """
    x, loss = _as_xy(points)
    if x.shape != loss.shape or x.ndim != 1:
        raise InputError("x and loss must be one-dimensional and equally long")
    if x.shape[0] < 3:
        raise InputError(f"need at least 3 points, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(loss))):
        raise InputError("points must be finite")
    if np.any(x <= 0):
        raise InputError("x values must be positive")
    if np.any(loss <= 0):
        raise InputError("loss values must be positive")
    if np.unique(x).shape[0] < 3:
        raise InputError("need at least 3 distinct x values")

    order = np.lexsort((loss, x))
    x, loss = x[order], loss[order]
    log_x = np.log(x)
    upper = FLOOR_CAP * float(loss.min())

    def sse(floor):
        return _log_line(log_x, loss, floor)[2]

    grid = np.linspace(0.0, upper, FLOOR_SCAN_POINTS)
    lo, hi, _ = grid_bracket(sse, grid)
    floor, _ = golden_section(sse, lo, hi, tol=floor_tol)
    floor = float(min(max(floor, 0.0), upper))

    slope, intercept, ss_res, ss_tot = _log_line(log_x, loss, floor)
    if slope >= 0:
        raise FitError("non-decreasing trend, power law with positive exponent not supported")
    exponent = -slope
    scale = math.exp(intercept / exponent)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(scale=scale, exponent=exponent, floor=floor, r_squared=r2,
                       n_points=int(x.shape[0]))


def _as_ndl(points):
    if isinstance(points, tuple) and len(points) == 3 and not isinstance(points[0], JointObservation):
        n, d, loss = points
    else:
        points = list(points)
        n = [p.n for p in points]
        d = [p.d for p in points]
        loss = [p.loss for p in points]
    return (np.asarray(n, dtype=float), np.asarray(d, dtype=float),
            np.asarray(loss, dtype=float))


def _joint_log_pred(theta, log_n, log_d, floor_cap):
    log_a, log_b, log_alpha, log_beta, floor = theta
    alpha, beta = math.exp(log_alpha), math.exp(log_beta)
    floor = min(max(floor, 0.0), floor_cap)
    term = np.exp((alpha / beta) * (log_a - log_n)) + np.exp(log_b - log_d)
    return np.log(term ** beta + floor)


def _marginal_fit(x, loss):
    """Single-law fit on the per-x minimum loss; None if it cannot be fit."""
    xs = np.unique(x)
    best = np.array([loss[x == v].min() for v in xs])
    try:
        return fit_single_law((xs, best))
    except (FitError, InputError):
        return None


def _joint_starts(n, d, loss):
    fit_n = _marginal_fit(n, loss)
    fit_d = _marginal_fit(d, loss)
    a0 = fit_n.scale if fit_n else float(np.median(n))
    alpha0 = fit_n.exponent if fit_n else 0.5
    b0 = fit_d.scale if fit_d else float(np.median(d))
    beta0 = fit_d.exponent if fit_d else 1.0
    floors = [f.floor for f in (fit_n, fit_d) if f is not None]
    floor_m = min(floors) if floors else 0.0

    def theta(a, b, alpha, beta, floor):
        return np.array([math.log(a), math.log(b), math.log(alpha), math.log(beta), floor])

    starts = [theta(a0, b0, alpha0, beta0, f) for f in (0.0, floor_m / 2, floor_m)]
    starts += [theta(a0, b0, alpha0, 1.0, f) for f in (0.0, floor_m / 2, floor_m)]
    starts.append(theta(a0, b0, alpha0 / 2, beta0 / 2, floor_m / 2))
    starts.append(theta(a0, b0, alpha0 * 2, beta0 * 2, floor_m / 2))
    return starts


def _nelder_mead(objective, x0, max_evals):
    """Nelder-Mead, restarted from its own result until it stops improving.

    Returns (x, value, converged).
    """
    used = 0
    x, value = np.asarray(x0, dtype=float), objective(x0)
    while used < max_evals:
        res = minimize(objective, x, method="Nelder-Mead",
                       options={"maxfev": max_evals - used, "xatol": 1e-10,
                                "fatol": 1e-16, "adaptive": True})
        used += res.nfev
        improved = value - res.fun
        if res.fun <= value:
            x, value = res.x, float(res.fun)
        if not res.success:
            return x, value, False
        if improved <= 1e-15 * (1.0 + abs(value)):
            return x, value, True
    return x, value, False


def fit_joint_law(points, max_evals: int = JOINT_MAX_EVALS) -> JointLawFit:
    """Fit the joint model/data law by multi-start Nelder-Mead.

    The objective is the sum of squared log-loss residuals over
    ``(log a, log b, log alpha, log beta, floor)``; the floor is clamped to
    [0, 0.999 * min(loss)]. Eight starts are built from marginal single-law
    fits; the best result wins, ties to the earlier start.
    """
    n, d, loss = _as_ndl(points)
    if not (n.shape == d.shape == loss.shape) or n.ndim != 1:
        raise InputError("n, d and loss must be one-dimensional and equally long")
    if n.shape[0] < 8:
        raise InputError(f"need at least 8 points, got {n.shape[0]}")
    for name, arr in (("n", n), ("d", d), ("loss", loss)):
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise InputError(f"{name} values must be positive and finite")
    if np.unique(n).shape[0] < 3 or np.unique(d).shape[0] < 3:
        raise InputError("need at least 3 distinct n values and 3 distinct d values")

    order = np.lexsort((loss, d, n))
    n, d, loss = n[order], d[order], loss[order]
    log_n, log_d, log_loss = np.log(n), np.log(d), np.log(loss)
    floor_cap = FLOOR_CAP * float(loss.min())

    def objective(theta):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = log_loss - _joint_log_pred(theta, log_n, log_d, floor_cap)
            val = float(r @ r)
        return val if math.isfinite(val) else math.inf

    best = None
    for start in _joint_starts(n, d, loss):
        x, value, converged = _nelder_mead(objective, start, max_evals)
        if best is None or value < best[1]:
            best = (x, value, converged)
    theta, value, converged = best
    params = {
        "a": math.exp(theta[0]),
        "b": math.exp(theta[1]),
        "alpha": math.exp(theta[2]),
        "beta": math.exp(theta[3]),
        "floor": min(max(float(theta[4]), 0.0), floor_cap),
    }
    if not converged:
        raise ConvergenceError(
            f"Nelder-Mead did not converge within {max_evals} evaluations",
            best_params=params, best_value=value,
        )
    rmse = math.sqrt(value / n.shape[0])
    return JointLawFit(**params, rmse=rmse, n_points=int(n.shape[0]))


def fit_to_dict(fit) -> dict:
    """JSON-ready representation of a fit."""
    if isinstance(fit, PowerLawFit):
        return {
            "model": "single",
            "params": {"scale": fit.scale, "exponent": fit.exponent, "floor": fit.floor},
            "r_squared": fit.r_squared,
            "fit_space": fit.fit_space,
            "n_points": fit.n_points,
        }
    if isinstance(fit, JointLawFit):
        return {
            "model": "joint",
            "params": {"a": fit.a, "b": fit.b, "alpha": fit.alpha, "beta": fit.beta,
                       "floor": fit.floor},
            "rmse": fit.rmse,
            "fit_space": fit.fit_space,
            "n_points": fit.n_points,
        }
    raise InputError(f"not a fit object: {type(fit).__name__}")


def fit_from_dict(doc: dict):
    try:
        model = doc["model"]
        params = doc["params"]
        if model == "single":
            return PowerLawFit(scale=float(params["scale"]), exponent=float(params["exponent"]),
                               floor=float(params["floor"]),
                               r_squared=float(doc.get("r_squared", float("nan"))),
                               fit_space=doc.get("fit_space", FIT_SPACE),
                               n_points=int(doc.get("n_points", 0)))
        if model == "joint":
            return JointLawFit(a=float(params["a"]), b=float(params["b"]),
                               alpha=float(params["alpha"]), beta=float(params["beta"]),
                               floor=float(params["floor"]),
                               rmse=float(doc.get("rmse", float("nan"))),
                               fit_space=doc.get("fit_space", FIT_SPACE),
                               n_points=int(doc.get("n_points", 0)))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed fit document: missing or invalid {exc}") from exc
    raise InputError(f"unknown fit model {doc.get('model')!r}")


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_single_law`.

    ``X`` holds the size variable as a single column (or a 1-d array).
    """

    def __init__(self, floor_tol=FLOOR_TOL):
        self.floor_tol = floor_tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = X.reshape(len(X), -1)
        if x.shape[1] != 1:
            raise InputError("PowerLawRegressor expects exactly one feature")
        self.fit_ = fit_single_law((x[:, 0], y), floor_tol=self.floor_tol)
        self.scale_ = self.fit_.scale
        self.exponent_ = self.fit_.exponent
        self.floor_ = self.fit_.floor
        self.r_squared_ = self.fit_.r_squared
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X, ensure_2d=False)
        return np.asarray(predict_single(self.fit_, X.reshape(len(X), -1)[:, 0]))


class JointScalingLawRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_joint_law`; ``X`` columns are (n, d)."""

    def __init__(self, max_evals=JOINT_MAX_EVALS):
        self.max_evals = max_evals

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 2:
            raise InputError("JointScalingLawRegressor expects two columns: model size, data size")
        self.fit_ = fit_joint_law((X[:, 0], X[:, 1], y), max_evals=self.max_evals)
        for name in ("a", "b", "alpha", "beta", "floor", "rmse"):
            setattr(self, name + "_", getattr(self.fit_, name))
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise InputError("expected two columns: model size, data size")
        return np.asarray(predict_joint(self.fit_, X[:, 0], X[:, 1]))

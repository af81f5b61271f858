"""Observation-weighted linear and logistic regression with optional L1/L2 penalties.

All fits minimise a *normalised* weighted objective, with weights rescaled to
sum to one (``wbar = w / w.sum()``)::

    identity:  1/2 * sum(wbar * (y - X @ b)**2)             + penalty(b)
    logit:     -sum(wbar * (y*log(mu) + (1-y)*log(1-mu)))    + penalty(b)

    ridge:     lam/2 * sum((s_j * b_j)**2),  j >= 1
    lasso:     lam   * sum(s_j * |b_j|),     j >= 1

Column 0 of every design matrix is the intercept and is never penalised.
``s_j`` is the weighted standard deviation of column j when the fit is
standardised and 1 otherwise, which is the same as fitting on standardised
columns and transforming the coefficients back.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit, xlogy

from .errors import DegenerateFoldsError, RankDeficiencyError, SeparationError, ValidationError
from .tabular import DesignMatrix

LINKS = ("identity", "logit")
PENALTIES = ("none", "ridge", "lasso")
WORKING_WEIGHT_FLOOR = 1e-10
SEPARATION_NORM = 1e6
N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-3


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GlmSpec:
    """Model specification.

    ``lam`` is a single penalty value, a sequence of values to choose from by
    cross-validation, or the string ``"cv"`` for the default 100-point grid.
    ``standardize=None`` means on for penalised fits and off otherwise.
    """

    link: str = "identity"
    penalty: str = "none"
    lam: float | tuple[float, ...] | str = 0.0
    standardize: bool | None = None
    max_iter: int = 10_000
    tol: float = 1e-7
    cv_folds: int = 5
    cv_seed: int = 0

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValidationError(f"link must be one of {LINKS}, got {self.link!r}")
        if self.penalty not in PENALTIES:
            raise ValidationError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        lam = self.lam
        if isinstance(lam, str):
            if lam != "cv":
                raise ValidationError(f"lam must be a number, a list, or 'cv'; got {lam!r}")
        elif isinstance(lam, (list, tuple, np.ndarray)):
            lam = tuple(float(v) for v in lam)
            if not lam:
                raise ValidationError("lambda grid must be non-empty")
            if any(not (v >= 0 and math.isfinite(v)) for v in lam):
                raise ValidationError("lambda values must be finite and >= 0")
            object.__setattr__(self, "lam", lam)
        else:
            lam = float(lam)
            if not (lam >= 0 and math.isfinite(lam)):
                raise ValidationError("lambda must be finite and >= 0")
            object.__setattr__(self, "lam", lam)
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValidationError("max_iter must be >= 1")
        if int(self.cv_folds) < 2:
            raise ValidationError("cv_folds must be >= 2")

    @property
    def uses_cv(self) -> bool:
        return self.penalty != "none" and (self.lam == "cv" or isinstance(self.lam, tuple))

    @property
    def standardized(self) -> bool:
        if self.standardize is None:
            return self.penalty != "none"
        return bool(self.standardize)

    def to_dict(self) -> dict:
        lam = list(self.lam) if isinstance(self.lam, tuple) else self.lam
        return {"link": self.link, "penalty": self.penalty, "lambda": lam,
                "standardize": self.standardize, "max_iter": int(self.max_iter), "tol": self.tol,
                "cv_folds": int(self.cv_folds), "cv_seed": int(self.cv_seed)}

    @classmethod
    def from_dict(cls, d) -> "GlmSpec":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError("unknown model spec keys: " + ", ".join(sorted(unknown)))
        return cls(**d)


@dataclass(frozen=True)
class FittedGlm:
    coefficients: np.ndarray
    column_names: tuple[str, ...]
    spec: GlmSpec
    lambda_used: float
    converged: bool
    iterations: int
    objective: float
    penalty_factors: np.ndarray = field(repr=False, default=None)
    warnings: tuple[str, ...] = ()

    @property
    def link(self) -> str:
        return self.spec.link

    @property
    def penalty(self) -> str:
        return self.spec.penalty

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_dict(self) -> dict:
        return {
            "coefficients": {n: float(b) for n, b in zip(self.column_names, self.coefficients)},
            "spec": self.spec.to_dict(),
            "lambda_used": float(self.lambda_used),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "objective": float(self.objective),
            "penalty_factors": [float(v) for v in self.penalty_factors],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d) -> "FittedGlm":
        names = tuple(d["coefficients"])
        coef = np.array([d["coefficients"][n] for n in names], dtype=float)
        coef.setflags(write=False)
        pf = np.array(d.get("penalty_factors", np.zeros(len(names))), dtype=float)
        return cls(coef, names, GlmSpec.from_dict(d["spec"]), d["lambda_used"], d["converged"],
                   d["iterations"], d["objective"], pf, tuple(d.get("warnings", ())))


def _as_matrix(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(X, DesignMatrix):
        return np.asarray(X.matrix, dtype=float), X.column_names
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("design matrix must be two-dimensional")
    return X, None


def _check_inputs(X, y, w, link):
    n = X.shape[0]
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != n:
        raise ValidationError(f"response has {len(y)} rows, design has {n}")
    if w is None:
        w = np.ones(n)
    w = np.asarray(w, dtype=float).ravel()
    if len(w) != n:
        raise ValidationError(f"weights have {len(w)} rows, design has {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise ValidationError("weights must be finite, non-negative, and not all zero")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite values in design or response")
    if link == "logit" and not np.all((y == 0) | (y == 1)):
        raise ValidationError("logit link requires a 0/1 response")
    return y, w / w.sum()


def _scaling(X, wbar, standardize):
    """Weighted column means and SDs; the intercept keeps (0, 1)."""
    p = X.shape[1]
    center = np.zeros(p)
    scale = np.ones(p)
    if standardize and p > 1:
        m = wbar @ X[:, 1:]
        s = np.sqrt(wbar @ (X[:, 1:] - m) ** 2)
        center[1:] = m
        scale[1:] = s
    return center, scale


def _to_fit_space(X, center, scale):
    Z = X - center
    Z[:, 0] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        Z[:, 1:] = np.where(scale[1:] > 0, Z[:, 1:] / np.where(scale[1:] > 0, scale[1:], 1.0), 0.0)
    return Z


def _from_fit_space(theta, center, scale):
    beta = np.zeros_like(theta)
    nz = scale > 0
    beta[1:] = np.where(nz[1:], theta[1:] / np.where(nz[1:], scale[1:], 1.0), 0.0)
    beta[0] = theta[0] - beta[1:] @ center[1:]
    return beta


def _to_fit_coef(beta, center, scale):
    theta = beta * scale
    theta[0] = beta[0] + beta[1:] @ center[1:]
    return theta


def _mean(eta, link):
    return expit(eta) if link == "logit" else eta


def _loss(eta, y, wbar, link):
    if link == "identity":
        return 0.5 * float(wbar @ (y - eta) ** 2)
    # log(1 + exp(eta)) - y*eta, stable for large |eta|
    return float(wbar @ (np.logaddexp(0.0, eta) - y * eta))


def _penalty(theta, lam, penalty):
    if penalty == "ridge":
        return 0.5 * lam * float(theta[1:] @ theta[1:])
    if penalty == "lasso":
        return lam * float(np.abs(theta[1:]).sum())
    return 0.0


def penalized_objective(beta, X, y, w, spec: GlmSpec, lam: float, penalty_factors=None) -> float:
    """Objective in original coordinates (``penalty_factors`` are the ``s_j``)."""
    X, _ = _as_matrix(X)
    y, wbar = _check_inputs(X, y, w, spec.link)
    beta = np.asarray(beta, dtype=float)
    pf = np.ones(len(beta)) if penalty_factors is None else np.asarray(penalty_factors)
    pf = pf.copy()
    pf[0] = 0.0
    return _loss(X @ beta, y, wbar, spec.link) + _penalty(beta * pf, lam, spec.penalty)


def smooth_gradient(beta, X, y, w, spec: GlmSpec, lam: float, penalty_factors=None) -> np.ndarray:
    """Analytic gradient of the loss plus (for ridge) the L2 term.

    The lasso term is left out; callers check its subgradient separately.
    """
    X, _ = _as_matrix(X)
    y, wbar = _check_inputs(X, y, w, spec.link)
    beta = np.asarray(beta, dtype=float)
    mu = _mean(X @ beta, spec.link)
    g = -(X.T @ (wbar * (y - mu)))
    if spec.penalty == "ridge":
        pf = np.ones(len(beta)) if penalty_factors is None else np.asarray(penalty_factors, dtype=float).copy()
        pf[0] = 0.0
        g = g + lam * pf**2 * beta
    return g


def _null_theta(y, wbar, link):
    ybar = float(wbar @ y)
    theta0 = ybar
    if link == "logit":
        if ybar <= 0.0 or ybar >= 1.0:
            raise SeparationError("response has a single class; logistic fit is undefined")
        theta0 = math.log(ybar / (1.0 - ybar))
    return theta0


def _lambda_max_fit_space(Z, y, wbar, link):
    theta0 = _null_theta(y, wbar, link)
    resid = y - _mean(np.full(len(y), theta0), link)
    if Z.shape[1] == 1:
        return 0.0, theta0
    return float(np.max(np.abs(Z[:, 1:].T @ (wbar * resid)))), theta0


def lambda_max(X, y, w=None, spec: GlmSpec | None = None) -> float:
    """Smallest lasso penalty at which every non-intercept coefficient is zero."""
    spec = spec or GlmSpec(penalty="lasso")
    X, _ = _as_matrix(X)
    y, wbar = _check_inputs(X, y, w, spec.link)
    center, scale = _scaling(X, wbar, spec.standardized)
    Z = _to_fit_space(X, center, scale)
    return _lambda_max_fit_space(Z, y, wbar, spec.link)[0]


def lambda_grid(X, y, w=None, spec: GlmSpec | None = None, n: int = N_LAMBDA) -> tuple[float, ...]:
    lmax = lambda_max(X, y, w, spec)
    if lmax <= 0:
        return (0.0,)
    return tuple(float(v) for v in np.geomspace(lmax, lmax * LAMBDA_MIN_RATIO, n))


def _soft(z, lam):
    return math.copysign(max(abs(z) - lam, 0.0), z)


def _cd_wls(Z, z, v, lam, theta, tol, max_iter):
    """Cyclic coordinate descent for 1/2 sum(v (z - Z theta)^2) + lam*|theta[1:]|_1.

    Returns (theta, sweeps, converged).
    """
    p = Z.shape[1]
    theta = theta.copy()
    r = z - Z @ theta
    zz = (v @ Z**2)
    vsum = v.sum()
    cols = [np.ascontiguousarray(Z[:, j]) for j in range(p)]
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        d = float(v @ r) / vsum
        if d != 0.0:
            theta[0] += d
            r -= d
            max_delta = abs(d)
        for j in range(1, p):
            if zz[j] == 0.0:
                continue
            old = theta[j]
            g = float(v @ (cols[j] * r)) + zz[j] * old
            new = _soft(g, lam) / zz[j]
            if new != old:
                r -= cols[j] * (new - old)
                theta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            return _polish_lasso(Z, z, v, lam, theta), sweep, True
    return theta, max_iter, False


def _polish_lasso(Z, z, v, lam, theta):
    """Solve the lasso optimality equations exactly on the active set.

    Coordinate descent stops on a step-size criterion, which can leave the
    coefficients further from the optimum than the step; with the signs
    known, the active-set equations are linear. The refined answer is kept
    only if it keeps the signs and the inactive set still satisfies the
    subgradient bound.
    """
    active = np.flatnonzero(theta != 0.0)
    if 0 not in active:
        active = np.concatenate([[0], active])
    A = Z[:, active]
    sign = np.sign(theta[active])
    sign[active == 0] = 0.0
    G = A.T @ (v[:, None] * A)
    b = A.T @ (v * z) - lam * sign
    try:
        sol = np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        return theta
    if not np.all(np.isfinite(sol)):
        return theta
    pen = active != 0
    if np.any(np.sign(sol[pen]) != sign[pen]):
        return theta
    cand = np.zeros_like(theta)
    cand[active] = sol
    inactive = np.setdiff1d(np.arange(1, Z.shape[1]), active)
    if len(inactive):
        grad = Z[:, inactive].T @ (v * (z - Z @ cand))
        if np.any(np.abs(grad) > lam * (1 + 1e-9) + 1e-15):
            return theta
    return cand


def _wls_solve(Z, z, v, lam, penalty):
    """Exact weighted least squares, optionally with an unpenalised-intercept ridge term."""
    p = Z.shape[1]
    if penalty == "ridge" and lam > 0:
        G = Z.T @ (v[:, None] * Z)
        G[np.arange(1, p), np.arange(1, p)] += lam
        try:
            return np.linalg.solve(G, Z.T @ (v * z))
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("ridge system is singular") from None
    sw = np.sqrt(v)
    A = Z * sw[:, None]
    sol, _, rank, sv = np.linalg.lstsq(A, z * sw, rcond=None)
    if rank < p:
        raise RankDeficiencyError(f"design is rank deficient (rank {rank} < {p} columns)")
    if sv[-1] < sv[0] * 1e-13:
        raise RankDeficiencyError("design is numerically singular")
    return sol


def _fit_identity(Z, y, wbar, lam, penalty, theta, tol, max_iter):
    if penalty == "lasso" and lam > 0:
        return _cd_wls(Z, y, wbar, lam, theta, tol, max_iter)
    return _wls_solve(Z, y, wbar, lam, penalty), 1, True


def _fit_logit(Z, y, wbar, lam, penalty, theta, tol, max_iter):
    """Newton / IRLS on the weighted log-loss; lasso steps solved by coordinate descent."""
    def objective(th):
        return _loss(Z @ th, y, wbar, "logit") + _penalty(th, lam, penalty)

    obj = objective(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = Z @ theta
        mu = expit(eta)
        var = np.maximum(mu * (1.0 - mu), WORKING_WEIGHT_FLOOR)
        v = wbar * var
        z = eta + (y - mu) / var
        if penalty == "lasso" and lam > 0:
            new, _, _ = _cd_wls(Z, z, v, lam, theta, tol * 0.1, max_iter)
        else:
            new = _wls_solve(Z, z, v, lam, penalty)
        new_obj = objective(new)
        step = 1.0
        while not new_obj <= obj + 1e-12 * abs(obj) and step > 1e-10:
            step *= 0.5
            new = theta + step * (new - theta)
            new_obj = objective(new)
        delta = float(np.max(np.abs(new - theta)))
        theta, obj = new, new_obj
        if float(np.linalg.norm(theta[1:])) > SEPARATION_NORM or (
                penalty == "none" and _separates(Z @ theta, y, wbar)):
            raise SeparationError(
                "logistic coefficients diverge (perfect separation); use a ridge or lasso penalty")
        if delta < tol * (1.0 + float(np.max(np.abs(theta)))):
            converged = True
            break
    return theta, it, converged


def _separates(eta, y, wbar):
    """True when eta classifies every weighted row strictly correctly.

    Such a hyperplane means complete separation, so no finite maximiser
    of the unpenalised likelihood exists.
    """
    live = wbar > 0
    e, t = eta[live], y[live]
    return bool(np.all(np.where(t == 1.0, e > 0.0, e < 0.0)))


def fit(X, y, w=None, spec: GlmSpec | None = None, start=None) -> FittedGlm:
    """Fit a weighted GLM.

    Parameters
    ----------
    X : DesignMatrix or 2-d array
        Column 0 must be the intercept.
    y : array
        Response; 0/1 for the logit link.
    w : array, optional
        Non-negative observation weights (default all ones). Only relative
        sizes matter.
    spec : GlmSpec
    start : array, optional
        Warm-start coefficients in original coordinates (penalised fits only).

    Raises
    ------
    RankDeficiencyError
        Unpenalised system is singular.
    SeparationError
        Logistic coefficients diverge.
    """
    spec = spec or GlmSpec()
    X, names = _as_matrix(X)
    y, wbar = _check_inputs(X, y, w, spec.link)
    n, p = X.shape
    if names is None:
        names = ("(Intercept)",) + tuple(f"x{j}" for j in range(1, p))
    notes = []
    if spec.penalty != "none" and p > 1:
        const = [names[j] for j in range(1, p) if np.ptp(X[:, j]) == 0.0]
        if const:
            notes.append("constant columns in penalised fit: " + ", ".join(const))

    if spec.uses_cv:
        lam = cv_lambda(X, y, w, spec)
    elif spec.penalty == "none":
        lam = 0.0
    else:
        lam = float(spec.lam)

    center, scale = _scaling(X, wbar, spec.standardized)
    Z = _to_fit_space(X, center, scale)
    pf = scale.copy()
    pf[0] = 0.0
    if spec.penalty == "none":
        pf[:] = 0.0

    penalty = spec.penalty if lam > 0 else "none"
    if spec.penalty == "lasso" and lam > 0:
        lmax, theta0 = _lambda_max_fit_space(Z, y, wbar, spec.link)
        if lam >= lmax:
            theta = np.zeros(p)
            theta[0] = theta0
            return _finish(theta, center, scale, X, y, wbar, spec, lam, True, 0, names, pf, notes)

    if start is not None:
        theta = _to_fit_coef(np.asarray(start, dtype=float), center, scale)
    else:
        theta = np.zeros(p)
        theta[0] = _null_theta(y, wbar, spec.link)

    if spec.link == "identity":
        theta, iters, converged = _fit_identity(Z, y, wbar, lam, penalty, theta, spec.tol, spec.max_iter)
    else:
        theta, iters, converged = _fit_logit(Z, y, wbar, lam, penalty, theta, spec.tol, spec.max_iter)
    if not converged:
        msg = f"{spec.link}/{spec.penalty} fit did not converge in {spec.max_iter} iterations"
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        notes.append(msg)
    return _finish(theta, center, scale, X, y, wbar, spec, lam, converged, iters, names, pf, notes)


def _finish(theta, center, scale, X, y, wbar, spec, lam, converged, iters, names, pf, notes):
    beta = _from_fit_space(theta, center, scale)
    if not np.all(np.isfinite(beta)):
        raise SeparationError("non-finite coefficients")
    beta.setflags(write=False)
    pf.setflags(write=False)
    obj = _loss(X @ beta, y, wbar, spec.link) + _penalty(beta * pf, lam, spec.penalty)
    return FittedGlm(beta, tuple(names), spec, float(lam), bool(converged), int(iters), float(obj), pf, tuple(notes))


def predict(model: FittedGlm, X) -> np.ndarray:
    """Mean-scale predictions: ``X @ b`` (identity) or ``expit(X @ b)`` (logit)."""
    X, names = _as_matrix(X)
    if X.shape[1] != len(model.coefficients):
        raise ValidationError(
            f"design has {X.shape[1]} columns, model has {len(model.coefficients)} coefficients")
    if names is not None and tuple(names) != tuple(model.column_names):
        raise ValidationError(f"design columns {list(names)} do not match model columns {list(model.column_names)}")
    return _mean(X @ model.coefficients, model.link)


def heldout_loss(model: FittedGlm, X, y, w=None) -> float:
    """Weighted mean squared error (identity) or log-loss (logit)."""
    X, _ = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    mu = predict(model, X)
    if model.link == "identity":
        loss = (y - mu) ** 2
    else:
        mu = np.clip(mu, 1e-15, 1 - 1e-15)
        loss = -(xlogy(y, mu) + xlogy(1 - y, 1 - mu))
    return float(w @ loss / w.sum())


def cv_lambda(X, y, w=None, spec: GlmSpec | None = None, folds: int | None = None,
              seed: int | None = None) -> float:
    """Pick the grid value with the smallest mean held-out weighted loss.

    Ties go to the larger penalty. Folds whose training part has a single
    outcome class (logit) or no weight are skipped with a warning.
    """
    spec = spec or GlmSpec(penalty="lasso", lam="cv")
    folds = int(spec.cv_folds if folds is None else folds)
    seed = int(spec.cv_seed if seed is None else seed)
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    X, _ = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float).ravel()
    _check_inputs(X, y, w, spec.link)
    if isinstance(spec.lam, tuple):
        grid = spec.lam
    elif spec.lam == "cv":
        grid = lambda_grid(X, y, w, replace(spec, lam=0.0))
    else:
        grid = (float(spec.lam),)
    if len(grid) == 1:
        return float(grid[0])
    grid = tuple(sorted(set(grid), reverse=True))
    n = len(y)
    if n < folds:
        raise ValidationError(f"{n} rows cannot form {folds} folds")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds
    single = replace(spec, lam=0.0)
    losses = []
    for k in range(folds):
        train, test = fold_of != k, fold_of == k
        if w[train].sum() <= 0 or w[test].sum() <= 0 or (
                spec.link == "logit" and len(np.unique(y[train][w[train] > 0])) < 2):
            warnings.warn(f"cv fold {k} is degenerate and was skipped", UserWarning, stacklevel=2)
            continue
        row = []
        start = None
        for lam in grid:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    m = fit(X[train], y[train], w[train], replace(single, lam=lam), start=start)
                start = m.coefficients
                row.append(heldout_loss(m, X[test], y[test], w[test]))
            except (SeparationError, RankDeficiencyError):
                row.append(math.inf)
                start = None
        losses.append(row)
    if not losses:
        raise DegenerateFoldsError("every cross-validation fold was degenerate")
    mean = np.mean(np.array(losses), axis=0)
    best = int(np.argmin(mean))  # grid is descending, so argmin's first hit is the largest tied lambda
    return float(grid[best])


def coefficient_table(model: FittedGlm) -> dict[str, float]:
    return dict(zip(model.column_names, map(float, model.coefficients)))


__all__: Sequence[str] = [
    "GlmSpec", "FittedGlm", "fit", "predict", "cv_lambda", "lambda_max", "lambda_grid",
    "penalized_objective", "smooth_gradient", "heldout_loss", "ConvergenceWarning",
]

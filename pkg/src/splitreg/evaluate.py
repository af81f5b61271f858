"""Rule evaluation on independent data: IPW treatment effects among test-positives
and test-negatives, the average benefit of the rule, and bootstrap intervals.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import glm
from .errors import NumericalError, ValidationError
from .glm import GlmSpec
from .propensity import DEFAULT_TRUNCATION, check_positivity, check_truncation, clamp
from .tabular import Dataset, RoleAssignment, encode

MAX_REDRAWS = 1000


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValidationError("bootstrap replicates must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("CI level must lie in (0, 1)")

    def to_dict(self):
        return {"replicates": int(self.replicates), "seed": int(self.seed), "level": float(self.level)}


@dataclass(frozen=True)
class Estimate:
    estimate: float
    ci_lower: float | None = None
    ci_upper: float | None = None

    def to_dict(self):
        return {"estimate": self.estimate, "ci_lower": self.ci_lower, "ci_upper": self.ci_upper}


@dataclass(frozen=True)
class EvaluationReport:
    n_positive: int
    n_negative: int
    ate_positive: Estimate | None
    ate_negative: Estimate | None
    abr: Estimate
    bootstrap: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def est(e):
            return None if e is None else e.to_dict()
        return {
            "positives": self.n_positive,
            "negatives": self.n_negative,
            "ate_in_positives": est(self.ate_positive),
            "ate_in_negatives": est(self.ate_negative),
            "abr": est(self.abr),
            "bootstrap": self.bootstrap,
            "diagnostics": self.diagnostics,
        }


def ipw_ate(y, t, p, extra_weights=None) -> float | None:
    """``mean(t*y/p) - mean((1-t)*y/(1-p))`` over the given rows; None if there are none."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        return None
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValidationError("propensities must lie strictly inside (0, 1)")
    e = 1.0 if extra_weights is None else np.asarray(extra_weights, dtype=float)
    n = len(y)
    return float(np.sum(e * t * y / p) / n - np.sum(e * (1 - t) * y / (1 - p)) / n)


def average_benefit(n_pos: int, n_neg: int, ate_pos: float | None, ate_neg: float | None) -> float:
    """Size-weighted mix of the benefit of treating positives and of withholding from negatives."""
    if n_pos + n_neg == 0:
        raise ValidationError("no rows to average over")
    if n_pos == 0:
        return -ate_neg
    if n_neg == 0:
        return ate_pos
    total = n_pos + n_neg
    return (n_pos / total) * ate_pos + (n_neg / total) * (-ate_neg)


def _fit_eval_propensity(X, t, extra, spec, truncation):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", glm.ConvergenceWarning)
        model = glm.fit(X, t, extra, spec)
    return model, clamp(glm.predict(model, X), truncation)


def _estimates(y, t, p, rec, extra):
    pos, neg = rec == 1, rec == 0
    e_pos = None if extra is None else extra[pos]
    e_neg = None if extra is None else extra[neg]
    ate_pos = ipw_ate(y[pos], t[pos], p[pos], e_pos)
    ate_neg = ipw_ate(y[neg], t[neg], p[neg], e_neg)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    return n_pos, n_neg, ate_pos, ate_neg, average_benefit(n_pos, n_neg, ate_pos, ate_neg)


def _degenerate(t, rec, need_pos, need_neg):
    if len(np.unique(t)) < 2:
        return True
    for flag, need in ((1, need_pos), (0, need_neg)):
        if need:
            sub = t[rec == flag]
            if len(sub) == 0 or len(np.unique(sub)) < 2:
                return True
    return False


def _replicate(b, cfg, X, y, t, rec, extra, spec, truncation, need_pos, need_neg):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(cfg.seed), spawn_key=(b,))))
    n = len(y)
    for redraws in range(MAX_REDRAWS):
        idx = rng.integers(0, n, n)
        tb, rb = t[idx], rec[idx]
        if _degenerate(tb, rb, need_pos, need_neg):
            continue
        eb = None if extra is None else extra[idx]
        try:
            _, pb = _fit_eval_propensity(X[idx], tb, eb, spec, truncation)
        except NumericalError:
            continue
        _, _, ap, an, abr = _estimates(y[idx], tb, pb, rb, eb)
        return ap, an, abr, redraws
    raise NumericalError(f"bootstrap replicate {b}: no usable resample in {MAX_REDRAWS} draws")


def _interval(values, level):
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(values, dtype=float), [a, 1.0 - a])
    return float(lo), float(hi)


def evaluate_rule(
    rule,
    eval_data: Dataset,
    roles: RoleAssignment | None = None,
    eval_propensity_spec: GlmSpec | None = None,
    truncation=DEFAULT_TRUNCATION,
    bootstrap: BootstrapConfig | None = None,
    extra_weights=None,
    c_t_eval=None,
    threads: int = 1,
) -> EvaluationReport:
    """Estimate ATE among test-positives and test-negatives, plus the ABR.

    The treatment model P(T=1 | C_T_eval) is fitted on ``eval_data`` itself,
    truncated, and refitted inside every bootstrap resample. Resamples that
    leave a non-empty recommendation group with a single treatment arm are
    redrawn; the number of redraws is reported.
    """
    if eval_data.n_rows == 0:
        raise ValidationError("evaluation set is empty")
    truncation = check_truncation(truncation)
    if c_t_eval is None:
        c_t_eval = roles.c_t_eval if roles is not None else ()
    c_t_eval = tuple(c_t_eval)
    if roles is not None:
        roles.check_against(eval_data, evaluation=True)
    if extra_weights is None:
        extra_weights = eval_data.extra_weights
    extra = None if extra_weights is None else np.asarray(extra_weights, dtype=float)
    check_positivity(eval_data.t, extra, "evaluation data")
    spec = eval_propensity_spec or GlmSpec(link="logit")
    if spec.link != "logit":
        spec = replace(spec, link="logit")

    rec = np.asarray(rule.recommendations(eval_data), dtype=int)
    X = encode(eval_data, c_t_eval).matrix
    y, t = np.asarray(eval_data.y), np.asarray(eval_data.t)
    model, p = _fit_eval_propensity(X, t, extra, spec, truncation)
    n_pos, n_neg, ate_pos, ate_neg, abr = _estimates(y, t, p, rec, extra)
    diagnostics = {
        "c_t_eval": list(c_t_eval),
        "eval_propensity": model.to_dict(),
        "truncation": list(truncation),
    }
    if eval_data.higher_is_better is False:
        diagnostics["note"] = "effects are on the outcome scale; lower outcome values are better"

    if bootstrap is None:
        return EvaluationReport(n_pos, n_neg,
                                None if ate_pos is None else Estimate(ate_pos),
                                None if ate_neg is None else Estimate(ate_neg),
                                Estimate(abr), None, diagnostics)

    args = (bootstrap, X, y, t, rec, extra, spec, truncation, n_pos > 0, n_neg > 0)
    B = int(bootstrap.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda b: _replicate(b, *args), range(B)))
    else:
        reps = [_replicate(b, *args) for b in range(B)]
    redraws = int(sum(r[3] for r in reps))

    def est(point, k):
        if point is None:
            return None
        return Estimate(point, *_interval([r[k] for r in reps], bootstrap.level))

    boot = dict(bootstrap.to_dict(), method="percentile", redraws=redraws)
    return EvaluationReport(n_pos, n_neg, est(ate_pos, 0), est(ate_neg, 1), est(abr, 2), boot, diagnostics)


__all__ = ["BootstrapConfig", "Estimate", "EvaluationReport", "evaluate_rule", "ipw_ate",
           "average_benefit"]

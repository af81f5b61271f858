"""Split-regression treatment rules.

One weighted outcome model is fitted per treatment arm on the development
data. A row is recommended treatment when the treated-arm prediction beats
the control-arm prediction.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import glm
from .errors import NumericalError, ValidationError
from .glm import FittedGlm, GlmSpec
from .propensity import (DEFAULT_TRUNCATION, PropensityPair, check_positivity, fit_propensity_pair,
                         stabilized_weights, weight_summary)
from .tabular import INTERCEPT, Dataset, RoleAssignment, encode

WEIGHTINGS = ("stabilized", "none")


@dataclass(frozen=True)
class TreatmentRule:
    f0: FittedGlm
    f1: FittedGlm
    rule_inputs: tuple[str, ...]
    encoding: Mapping[str, tuple[str, ...]]
    outcome_kind: str
    higher_is_better: bool = True
    benefit_threshold: float = 0.0
    weighting: str = "stabilized"
    propensity: PropensityPair | None = None
    diagnostics: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.f0.column_names) != tuple(self.f1.column_names):
            raise ValidationError("arm models were fitted on different design layouts")

    @property
    def label(self) -> str:
        return "split-regression"

    def _design(self, data: Dataset):
        data.require(self.rule_inputs)
        return encode(data, self.rule_inputs, self.encoding)

    def scores(self, data: Dataset) -> np.ndarray:
        """Predicted benefit of treatment, oriented so positive favours treating."""
        X = self._design(data)
        psi = glm.predict(self.f1, X) - glm.predict(self.f0, X)
        return psi if self.higher_is_better else -psi

    def recommendations(self, data: Dataset) -> np.ndarray:
        return (self.scores(data) > self.benefit_threshold).astype(int)

    def _row_vector(self, row: Mapping) -> np.ndarray:
        x = [1.0]
        for c in self.rule_inputs:
            if c not in row or row[c] is None or (isinstance(row[c], float) and np.isnan(row[c])):
                raise ValidationError(f"missing rule input {c!r}")
            if c in self.encoding:
                levels = self.encoding[c]
                label = str(row[c])
                if label not in levels:
                    raise ValidationError(f"column {c!r} has level {label!r} not seen at fit time")
                x += [float(label == lv) for lv in levels[1:]]
            else:
                x.append(float(row[c]))
        return np.array(x)

    def score(self, row: Mapping) -> float:
        x = self._row_vector(row)[None, :]
        psi = float(glm.predict(self.f1, x)[0] - glm.predict(self.f0, x)[0])
        return psi if self.higher_is_better else -psi

    def recommend(self, row: Mapping) -> int:
        return int(self.score(row) > self.benefit_threshold)

    def to_dict(self) -> dict:
        return {
            "kind": "split-regression",
            "rule_inputs": list(self.rule_inputs),
            "encoding": {k: list(v) for k, v in self.encoding.items()},
            "outcome_kind": self.outcome_kind,
            "higher_is_better": self.higher_is_better,
            "benefit_threshold": self.benefit_threshold,
            "weighting": self.weighting,
            "f0": self.f0.to_dict(),
            "f1": self.f1.to_dict(),
            "propensity": None if self.propensity is None else self.propensity.to_dict(),
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d) -> "TreatmentRule":
        return cls(
            f0=FittedGlm.from_dict(d["f0"]),
            f1=FittedGlm.from_dict(d["f1"]),
            rule_inputs=tuple(d["rule_inputs"]),
            encoding={k: tuple(v) for k, v in d["encoding"].items()},
            outcome_kind=d["outcome_kind"],
            higher_is_better=d["higher_is_better"],
            benefit_threshold=d.get("benefit_threshold", 0.0),
            weighting=d.get("weighting", "stabilized"),
            propensity=None if d.get("propensity") is None else PropensityPair.from_dict(d["propensity"]),
            diagnostics=d.get("diagnostics", {}),
        )


@dataclass(frozen=True)
class ConstantRule:
    """Benchmark policy: treat everyone (``treat=1``) or no one (``treat=0``)."""

    treat: int

    @property
    def label(self) -> str:
        return "treat-all" if self.treat else "treat-none"

    def recommendations(self, data: Dataset) -> np.ndarray:
        return np.full(data.n_rows, int(self.treat))

    def recommend(self, row: Mapping) -> int:
        return int(self.treat)

    def to_dict(self) -> dict:
        return {"kind": self.label}


def rule_from_dict(d):
    kind = d.get("kind", "split-regression")
    if kind == "treat-all":
        return ConstantRule(1)
    if kind == "treat-none":
        return ConstantRule(0)
    return TreatmentRule.from_dict(d)


def _outcome_spec(spec: GlmSpec | None, outcome_kind: str) -> GlmSpec:
    link = "logit" if outcome_kind == "binary" else "identity"
    spec = spec or GlmSpec(link=link)
    return spec if spec.link == link else replace(spec, link=link)


def build_rule(
    dev: Dataset,
    roles: RoleAssignment,
    propensity_spec: GlmSpec | None = None,
    rule_spec: GlmSpec | None = None,
    truncation=DEFAULT_TRUNCATION,
    extra_weights=None,
    weighting: str = "stabilized",
    numerator_spec: GlmSpec | None = None,
    benefit_threshold: float = 0.0,
    threads: int = 1,
) -> TreatmentRule:
    """Fit the two arm models on ``dev`` and return the resulting rule.

    With ``weighting="stabilized"`` the arm-t fit uses the ratio weights
    P(T=t|R)/P(T=t|R,C_T); ``weighting="none"`` gives every row the same
    weight (the naive variant). ``extra_weights`` defaults to the dataset's
    missingness-weight column and multiplies the weights either way. The
    outcome link follows the outcome kind: squared error for continuous
    outcomes, log-loss for binary ones.
    """
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"weighting must be one of {WEIGHTINGS}")
    roles.check_against(dev)
    if extra_weights is None:
        extra_weights = dev.extra_weights
    check_positivity(dev.t, extra_weights, "development data")
    spec = _outcome_spec(rule_spec, dev.outcome_kind)

    pair = None
    if weighting == "stabilized":
        pair = fit_propensity_pair(dev, roles, propensity_spec, truncation, numerator_spec, extra_weights)
        arm_weights = {t: stabilized_weights(pair, dev, t, extra_weights) for t in (0, 1)}
    else:
        base = np.ones(dev.n_rows) if extra_weights is None else np.asarray(extra_weights, dtype=float)
        arm_weights = {0: base, 1: base}

    X = encode(dev, roles.rule_inputs)

    def fit_arm(t):
        rows = dev.t == t
        try:
            return glm.fit(X.matrix[rows], dev.y[rows], arm_weights[t][rows], spec)
        except NumericalError as exc:
            raise type(exc)(f"arm T={t}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            f0, f1 = pool.map(fit_arm, (0, 1))
    else:
        f0, f1 = fit_arm(0), fit_arm(1)
    names = X.column_names
    f0, f1 = replace(f0, column_names=names), replace(f1, column_names=names)

    diagnostics = {
        "n_rows": int(dev.n_rows),
        "n_arm": {str(t): int(np.sum(dev.t == t)) for t in (0, 1)},
        "weights": {str(t): weight_summary(arm_weights[t][dev.t == t]) for t in (0, 1)},
        "converged": {"f0": f0.converged, "f1": f1.converged},
    }
    if pair is not None:
        diagnostics["propensity_converged"] = {
            "numerator": pair.numerator_model.converged,
            "denominator": pair.denominator_model.converged,
        }
    return TreatmentRule(f0, f1, tuple(roles.rule_inputs), dict(X.encoding), dev.outcome_kind,
                         dev.higher_is_better, float(benefit_threshold), weighting, pair, diagnostics)


def crossing_point(rule: TreatmentRule, column: str, at: Mapping[str, float] | None = None,
                   lo: float = -1e3, hi: float = 1e3) -> float | None:
    """Value of ``column`` where the two arm predictions cross, other inputs held at ``at``.

    Linear-predictor models cross where the coefficient difference vanishes;
    for the identity link this is exact, for logit it is the same point since
    expit is monotone. Returns None when the arm curves are parallel in
    ``column`` or the crossing is outside ``[lo, hi]``.
    """
    at = dict(at or {})
    names = rule.f0.column_names
    diff = np.asarray(rule.f1.coefficients) - np.asarray(rule.f0.coefficients)
    j = names.index(column)
    if diff[j] == 0.0:
        return None
    offset = diff[names.index(INTERCEPT)]
    for c in rule.rule_inputs:
        if c == column or c in rule.encoding:
            continue
        offset += diff[names.index(c)] * float(at.get(c, 0.0))
    x = -offset / diff[j]
    return float(x) if lo <= x <= hi else None

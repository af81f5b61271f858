"""Propensity models and ratio-of-propensity observation weights.

For arm ``t`` each row gets

    W_t = P(T=t | R) / P(T=t | R, C_T)

where both probabilities are clamped into ``[lo, hi]`` before the ratio,
so every weight lies in ``[lo/hi, hi/lo]``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import glm
from .errors import PositivityError, ValidationError
from .glm import FittedGlm, GlmSpec
from .tabular import Dataset, RoleAssignment, encode

DEFAULT_TRUNCATION = (0.05, 0.95)


def check_truncation(truncation) -> tuple[float, float]:
    lo, hi = (float(v) for v in truncation)
    if not 0.0 < lo < hi < 1.0:
        raise ValidationError(f"truncation bounds must satisfy 0 < lo < hi < 1, got {(lo, hi)}")
    return lo, hi


def check_positivity(t: np.ndarray, weights=None, where: str = "data"):
    active = np.ones(len(t), dtype=bool) if weights is None else np.asarray(weights) > 0
    for arm in (0, 1):
        if not np.any((t == arm) & active):
            raise PositivityError(f"{where}: treatment arm T={arm} is empty", arm=arm)


@dataclass(frozen=True)
class PropensityPair:
    numerator_model: FittedGlm
    denominator_model: FittedGlm
    numerator_inputs: tuple[str, ...]
    denominator_inputs: tuple[str, ...]
    encoding: dict
    truncation: tuple[float, float] = DEFAULT_TRUNCATION

    def __post_init__(self):
        check_truncation(self.truncation)
        for m in (self.numerator_model, self.denominator_model):
            if m.link != "logit":
                raise ValidationError("propensity models must use the logit link")

    def treated_probabilities(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Untruncated P(T=1|R) and P(T=1|R, C_T) for every row."""
        num = glm.predict(self.numerator_model, encode(data, self.numerator_inputs, self.encoding))
        den = glm.predict(self.denominator_model, encode(data, self.denominator_inputs, self.encoding))
        return num, den

    def to_dict(self) -> dict:
        return {
            "numerator_inputs": list(self.numerator_inputs),
            "denominator_inputs": list(self.denominator_inputs),
            "numerator_model": self.numerator_model.to_dict(),
            "denominator_model": self.denominator_model.to_dict(),
            "encoding": {k: list(v) for k, v in self.encoding.items()},
            "truncation": list(self.truncation),
        }

    @classmethod
    def from_dict(cls, d) -> "PropensityPair":
        return cls(
            FittedGlm.from_dict(d["numerator_model"]),
            FittedGlm.from_dict(d["denominator_model"]),
            tuple(d["numerator_inputs"]),
            tuple(d["denominator_inputs"]),
            {k: tuple(v) for k, v in d["encoding"].items()},
            tuple(d["truncation"]),
        )


def _logit_spec(spec: GlmSpec | None) -> GlmSpec:
    spec = spec or GlmSpec(link="logit")
    return spec if spec.link == "logit" else replace(spec, link="logit")


def fit_propensity_pair(
    data: Dataset,
    roles: RoleAssignment,
    spec: GlmSpec | None = None,
    truncation=DEFAULT_TRUNCATION,
    numerator_spec: GlmSpec | None = None,
    extra_weights=None,
) -> PropensityPair:
    """Fit P(T=1|R) on the rule inputs and P(T=1|R, C_T) on rule inputs plus confounders.

    ``extra_weights`` (e.g. inverse-probability-of-missingness weights) are
    used as observation weights in both fits. The numerator model uses
    ``numerator_spec`` when given, otherwise ``spec``.
    """
    truncation = check_truncation(truncation)
    roles.check_against(data)
    check_positivity(data.t, extra_weights, "propensity data")
    den_spec = _logit_spec(spec)
    num_spec = _logit_spec(numerator_spec) if numerator_spec is not None else den_spec
    num_inputs = roles.rule_inputs
    den_inputs = roles.denominator_inputs
    X_den = encode(data, den_inputs)
    X_num = encode(data, num_inputs, X_den.encoding)
    num = glm.fit(X_num, data.t, extra_weights, num_spec)
    den = glm.fit(X_den, data.t, extra_weights, den_spec)
    return PropensityPair(num, den, num_inputs, den_inputs, dict(X_den.encoding), truncation)


def confounder_free_pair(pair: PropensityPair, data: Dataset, extra_weights=None) -> PropensityPair:
    """Refit the denominator with every confounder coefficient held at zero.

    Holding those coefficients at zero reduces the denominator to a model on
    the rule inputs alone, so it is fitted that way and zeros are put back
    in for the confounder columns.
    """
    num_inputs = pair.numerator_inputs
    X_den = encode(data, pair.denominator_inputs, pair.encoding)
    X_num = encode(data, num_inputs, pair.encoding)
    restricted = glm.fit(X_num, data.t, extra_weights, pair.denominator_model.spec)
    coef = np.zeros(X_den.shape[1])
    lookup = dict(zip(restricted.column_names, restricted.coefficients))
    for j, name in enumerate(X_den.column_names):
        coef[j] = lookup.get(name, 0.0)
    coef.setflags(write=False)
    pf = np.zeros(X_den.shape[1])
    den = replace(restricted, coefficients=coef, column_names=X_den.column_names, penalty_factors=pf)
    return replace(pair, denominator_model=den)


def clamp(p: np.ndarray, truncation) -> np.ndarray:
    lo, hi = truncation
    return np.clip(p, lo, hi)


def stabilized_weights(pair: PropensityPair, data: Dataset, arm: int, extra=None) -> np.ndarray:
    """Weight vector for ``arm`` over every row of ``data``.

    Rows outside ``arm`` get weights too; callers pick the rows they need.
    """
    if arm not in (0, 1):
        raise ValidationError("arm must be 0 or 1")
    num1, den1 = pair.treated_probabilities(data)
    return ratio_weights(num1, den1, arm, pair.truncation, extra)


def ratio_weights(num_treated, den_treated, arm, truncation=DEFAULT_TRUNCATION, extra=None) -> np.ndarray:
    """Clamp each arm-``arm`` probability, then take numerator/denominator."""
    num_treated = np.asarray(num_treated, dtype=float)
    den_treated = np.asarray(den_treated, dtype=float)
    if arm == 1:
        p_num, p_den = num_treated, den_treated
    else:
        p_num, p_den = 1.0 - num_treated, 1.0 - den_treated
    w = clamp(p_num, truncation) / clamp(p_den, truncation)
    if extra is not None:
        w = w * np.asarray(extra, dtype=float)
    return w


def weight_summary(w: np.ndarray) -> dict:
    return {"n": int(len(w)), "min": float(np.min(w)), "max": float(np.max(w)), "mean": float(np.mean(w))}

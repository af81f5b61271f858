"""Model selection on a validation set.

Each candidate (propensity spec, rule spec) is built on development data and
scored on validation data alongside the treat-all and treat-none baselines.
The evaluation set never enters here; the final ``evaluate_rule`` call is a
separate step.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import SplitRegError, ValidationError
from .evaluate import evaluate_rule
from .glm import ConvergenceWarning, GlmSpec
from .propensity import DEFAULT_TRUNCATION
from .rule import ConstantRule, build_rule
from .tabular import Dataset, RoleAssignment

CRITERIA = ("abr", "ate_positive")


@dataclass(frozen=True)
class Candidate:
    label: str
    propensity_spec: GlmSpec = field(default_factory=lambda: GlmSpec(link="logit"))
    rule_spec: GlmSpec = field(default_factory=GlmSpec)
    weighting: str = "stabilized"

    def to_dict(self):
        return {"label": self.label, "propensity": self.propensity_spec.to_dict(),
                "rule": self.rule_spec.to_dict(), "weighting": self.weighting}


@dataclass(frozen=True)
class CandidateGrid:
    candidates: tuple[Candidate, ...]
    baselines: bool = True

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValidationError("candidate grid is empty")
        labels = [c.label for c in self.candidates]
        if not all(isinstance(lb, str) and lb.strip() for lb in labels):
            raise ValidationError("candidate labels must be non-empty strings")
        reserved = {"treat-all", "treat-none"} if self.baselines else set()
        if len(set(labels)) != len(labels) or reserved & set(labels):
            raise ValidationError("candidate labels must be unique and not reuse baseline names")


@dataclass
class Entry:
    label: str
    kind: str
    status: str = "ok"
    error: str | None = None
    n_positive: int | None = None
    n_negative: int | None = None
    ate_positive: float | None = None
    ate_negative: float | None = None
    abr: float | None = None
    rule: object = field(default=None, repr=False)
    flags: list = field(default_factory=list)

    def criterion(self, name: str) -> float:
        value = self.abr if name == "abr" else self.ate_positive
        return -math.inf if value is None else value

    def to_dict(self) -> dict:
        return {
            "label": self.label, "kind": self.kind, "status": self.status, "error": self.error,
            "positives": self.n_positive, "negatives": self.n_negative,
            "ate_in_positives": self.ate_positive, "ate_in_negatives": self.ate_negative,
            "abr": self.abr, "flags": list(self.flags),
            "rule": None if self.rule is None else self.rule.to_dict(),
        }


@dataclass
class ValidationReport:
    criterion: str
    ranking: list[Entry]

    @property
    def selected(self) -> Entry | None:
        """Top-ranked split-regression candidate that fitted successfully."""
        for e in self.ranking:
            if e.kind == "candidate" and e.status == "ok":
                return e
        return None

    def entry(self, label: str) -> Entry:
        for e in self.ranking:
            if e.label == label:
                return e
        raise KeyError(label)

    def to_dict(self) -> dict:
        sel = self.selected
        return {"criterion": self.criterion, "selected": None if sel is None else sel.label,
                "ranking": [e.to_dict() for e in self.ranking]}


def _score(label, kind, rule, val, roles, eval_spec, truncation):
    rep = evaluate_rule(rule, val, roles, eval_spec, truncation)
    return Entry(
        label, kind, n_positive=rep.n_positive, n_negative=rep.n_negative,
        ate_positive=None if rep.ate_positive is None else rep.ate_positive.estimate,
        ate_negative=None if rep.ate_negative is None else rep.ate_negative.estimate,
        abr=rep.abr.estimate, rule=rule)


def compare_on_validation(
    dev: Dataset,
    val: Dataset,
    roles: RoleAssignment,
    grid: CandidateGrid,
    eval_propensity_spec: GlmSpec | None = None,
    truncation=DEFAULT_TRUNCATION,
    criterion: str = "abr",
    threads: int = 1,
) -> ValidationReport:
    """Build each candidate on ``dev``, score it on ``val``, and rank.

    Ranking is by ``criterion`` (descending) then label. A candidate that
    fails to fit is kept in the report with status ``failed`` and ranked
    last. Candidates are flagged ``no_identified_benefit`` when their
    validation ATE among test-positives is not positive, and
    ``not_better_than_baseline`` when they do not beat the best baseline.
    """
    if criterion not in CRITERIA:
        raise ValidationError(f"criterion must be one of {CRITERIA}")
    if not isinstance(grid, CandidateGrid):
        grid = CandidateGrid(tuple(grid))

    def run(c: Candidate) -> Entry:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                rule = build_rule(dev, roles, c.propensity_spec, c.rule_spec, truncation,
                                  weighting=c.weighting)
                return _score(c.label, "candidate", rule, val, roles, eval_propensity_spec, truncation)
        except SplitRegError as exc:
            return Entry(c.label, "candidate", status="failed", error=f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(run, grid.candidates))
    else:
        entries = [run(c) for c in grid.candidates]
    baselines = []
    if grid.baselines:
        for rule in (ConstantRule(1), ConstantRule(0)):
            baselines.append(_score(rule.label, "baseline", rule, val, roles, eval_propensity_spec, truncation))

    best_baseline = max((b.criterion(criterion) for b in baselines), default=-math.inf)
    for e in entries:
        if e.status != "ok":
            continue
        if e.ate_positive is None or e.ate_positive <= 0:
            e.flags.append("no_identified_benefit")
        if baselines and not e.criterion(criterion) > best_baseline:
            e.flags.append("not_better_than_baseline")

    everything = entries + baselines
    ok = sorted((e for e in everything if e.status == "ok"), key=lambda e: (-e.criterion(criterion), e.label))
    failed = sorted((e for e in everything if e.status != "ok"), key=lambda e: e.label)
    return ValidationReport(criterion, ok + failed)

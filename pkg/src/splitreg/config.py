"""Run configuration: one TOML (or JSON) file with a section per subcommand."""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

import tomli

from .errors import ValidationError
from .evaluate import BootstrapConfig
from .glm import GlmSpec
from .propensity import DEFAULT_TRUNCATION, check_truncation
from .select import Candidate, CandidateGrid
from .splitting import DEFAULT_FRACTIONS, SplitSpec
from .tabular import Schema

SEED_ENV = "SPLITREG_SEED"
SCHEMA_VERSION = 1
SECTIONS = {"seed", "truncation", "schema", "data", "split", "propensity", "rule", "build",
            "evaluate", "compare", "simulate"}


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            cfg = json.loads(text)
        else:
            cfg = tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: cannot parse config: {exc}") from None
    unknown = set(cfg) - SECTIONS
    if unknown:
        raise ValidationError(f"{path}: unknown config sections: {', '.join(sorted(unknown))}")
    return cfg


def resolve_seed(cfg: dict, flag: int | None, section: str | None = None) -> int:
    """Flag, then section seed, then top-level seed, then $SPLITREG_SEED, then 0."""
    if flag is not None:
        return int(flag)
    if section and "seed" in cfg.get(section, {}):
        return int(cfg[section]["seed"])
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def schema_from(cfg: dict) -> Schema:
    if "schema" not in cfg:
        raise ValidationError("config has no [schema] section")
    return Schema.from_dict(cfg["schema"])


def truncation_from(cfg: dict) -> tuple[float, float]:
    return check_truncation(cfg.get("truncation", DEFAULT_TRUNCATION))


def glm_spec(d: dict | None, link: str, seed: int) -> GlmSpec:
    d = dict(d or {})
    d.pop("numerator", None)
    d.setdefault("link", link)
    d.setdefault("cv_seed", seed)
    try:
        return GlmSpec.from_dict(d)
    except TypeError as exc:
        raise ValidationError(f"invalid model spec: {exc}") from None


def propensity_specs(cfg: dict, seed: int) -> tuple[GlmSpec, GlmSpec | None]:
    section = cfg.get("propensity", {})
    den = glm_spec(section, "logit", seed)
    num = glm_spec(section["numerator"], "logit", seed) if "numerator" in section else None
    return den, num


def split_spec(cfg: dict, seed: int) -> SplitSpec:
    s = cfg.get("split", {})
    return SplitSpec(tuple(s.get("fractions", DEFAULT_FRACTIONS)), seed,
                     bool(s.get("stratify_by_treatment", False)))


def bootstrap_config(cfg: dict, seed: int, replicates: int | None = None) -> BootstrapConfig | None:
    e = cfg.get("evaluate", {})
    b = e.get("bootstrap_replicates", 1000) if replicates is None else replicates
    if int(b) == 0:
        return None
    return BootstrapConfig(int(b), seed, float(e.get("ci_level", 0.95)))


def candidate_grid(cfg: dict, seed: int) -> CandidateGrid:
    c = cfg.get("compare", {})
    raw = c.get("candidates") or [{"label": "logistic/logistic"}]
    cands = []
    for item in raw:
        item = dict(item)
        if "label" not in item:
            raise ValidationError("every compare candidate needs a label")
        cands.append(Candidate(
            label=str(item["label"]),
            propensity_spec=glm_spec(item.get("propensity"), "logit", seed),
            rule_spec=glm_spec(item.get("rule"), "identity", seed),
            weighting=item.get("weighting", "stabilized"),
        ))
    return CandidateGrid(tuple(cands), bool(c.get("baselines", True)))


def set_path(cfg: dict, keys: tuple[str, ...], value: Any):
    """Write a flag override into the resolved config (``None`` leaves it untouched)."""
    if value is None:
        return
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def resolved(cfg: dict) -> dict:
    return copy.deepcopy(cfg)

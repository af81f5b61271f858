"""Command-line entry point: ``splitreg {split,build,evaluate,compare,simulate}``.

Exit codes: 0 success, 1 invalid input or config, 2 numerical failure.
Every JSON report embeds the resolved config and seed, and is written to a
temporary file that is then renamed into place.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import NumericalError, SchemaError, SplitRegError, ValidationError
from .evaluate import evaluate_rule
from .rule import build_rule, rule_from_dict
from .select import compare_on_validation
from .simulate import METHODS, DEFAULT_SIZES, SimConfig, apply_preset, run_study
from .splitting import split_indices
from .tabular import load_csv, write_csv

log = logging.getLogger("splitreg")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set, frozenset)):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _atomic_write(path: Path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    _atomic_write(Path(path), lambda p: p.write_text(text, encoding="utf-8"))


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None


def _report(kind: str, cfg: dict, seed: int, body: dict) -> dict:
    return {"schema_version": cfgmod.SCHEMA_VERSION, "kind": kind, "seed": seed,
            "config": cfg, **body}


def _data_path(cfg, flag, key):
    path = flag or cfg.get("data", {}).get(key)
    if not path:
        raise ValidationError(f"no {key} data file: pass a path flag or set data.{key} in the config")
    return path


def cmd_split(args, cfg):
    seed = cfgmod.resolve_seed(cfg, args.seed, "split")
    cfgmod.set_path(cfg, ("split", "fractions"), args.fractions)
    cfgmod.set_path(cfg, ("split", "seed"), seed)
    schema = cfgmod.schema_from(cfg)
    source = _data_path(cfg, args.input, "input")
    spec = cfgmod.split_spec(cfg, seed)
    cfg["schema"] = schema.to_dict()
    cfg["split"]["fractions"] = list(spec.fractions)
    out_dir = Path(args.output_dir or cfg.get("split", {}).get("output_dir", "splits"))
    default_names = ["development", "validation", "evaluation"] if len(spec.fractions) == 3 \
        else ["development", "evaluation"]
    names = cfg.get("split", {}).get("names", default_names)
    if len(names) != len(spec.fractions):
        raise ValidationError("split.names must have one entry per fraction")

    data = load_csv(source, schema, purpose="full")
    parts = split_indices(data.n_rows, spec, data.t)
    manifest_parts = []
    for name, idx in zip(names, parts):
        part = data.subset(idx)
        path = out_dir / f"{name}.csv"
        _atomic_write(path, lambda p, part=part: write_csv(part, p))
        manifest_parts.append({"name": name, "path": str(path), "rows": [int(i) for i in part.row_ids]})
    body = {"source": str(source), "fractions": list(spec.fractions),
            "stratify_by_treatment": spec.stratify_by_treatment, "parts": manifest_parts}
    write_json(out_dir / "manifest.json", _report("split-manifest", cfg, seed, body))
    print(f"wrote {len(parts)} parts to {out_dir}")


def cmd_build(args, cfg):
    seed = cfgmod.resolve_seed(cfg, args.seed, "build")
    schema = cfgmod.schema_from(cfg)
    path = _data_path(cfg, args.data, "development")
    dev = load_csv(path, schema, purpose="development")
    roles = schema.roles()
    prop_spec, num_spec = cfgmod.propensity_specs(cfg, seed)
    rule_spec = cfgmod.glm_spec(cfg.get("rule"), "identity", seed)
    b = cfg.get("build", {})
    weighting = args.weighting or b.get("weighting", "stabilized")
    truncation = cfgmod.truncation_from(cfg)
    cfg.update(schema=schema.to_dict(), truncation=list(truncation), rule=rule_spec.to_dict(),
               propensity=dict(prop_spec.to_dict(), **({"numerator": num_spec.to_dict()} if num_spec else {})))
    cfgmod.set_path(cfg, ("build", "weighting"), weighting)
    rule = build_rule(dev, roles, prop_spec, rule_spec, truncation,
                      weighting=weighting, numerator_spec=num_spec,
                      benefit_threshold=float(b.get("benefit_threshold", 0.0)), threads=args.threads)
    out = Path(args.output or b.get("output", "rule.json"))
    write_json(out, _report("rule", cfg, seed, {"development_data": str(path), "rule": rule.to_dict()}))
    d = rule.diagnostics
    print(f"built rule on {d['n_rows']} rows (T=0: {d['n_arm']['0']}, T=1: {d['n_arm']['1']}) -> {out}")


def _load_rule(path, candidate=None):
    doc = read_json(path)
    if doc.get("kind") == "validation-report":
        ranking = doc["ranking"]
        label = candidate or doc.get("selected")
        if label is None:
            raise ValidationError(f"{path}: no candidate was selected; pass --candidate")
        for e in ranking:
            if e["label"] == label:
                if e["rule"] is None:
                    raise ValidationError(f"{path}: candidate {label!r} has no fitted rule")
                return rule_from_dict(e["rule"]), doc
        raise ValidationError(f"{path}: no candidate labelled {label!r}")
    if "rule" not in doc:
        raise ValidationError(f"{path}: not a rule file")
    return rule_from_dict(doc["rule"]), doc


def _check_manifest(manifest_path, dev_path, eval_path):
    manifest = read_json(manifest_path)
    by_path = {os.path.normpath(p["path"]): p for p in manifest["parts"]}
    dev = by_path.get(os.path.normpath(dev_path)) if dev_path else None
    ev = by_path.get(os.path.normpath(eval_path))
    if dev is None or ev is None:
        raise ValidationError(f"{manifest_path}: development/evaluation files are not parts of this split")
    if dev["name"] == ev["name"] or set(dev["rows"]) & set(ev["rows"]):
        raise ValidationError("evaluation data overlaps the rule's development data")


def _rule_inputs_present(rule, path):
    inputs = getattr(rule, "rule_inputs", ())
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    missing = [c for c in inputs if c not in header]
    if missing:
        raise SchemaError(f"{path}: rule inputs missing from evaluation data: " + ", ".join(missing))


def cmd_evaluate(args, cfg):
    seed = cfgmod.resolve_seed(cfg, args.seed, "evaluate")
    schema = cfgmod.schema_from(cfg)
    e = cfg.get("evaluate", {})
    rule_path = args.rule or e.get("rule", "rule.json")
    rule, rule_doc = _load_rule(rule_path, args.candidate)
    path = _data_path(cfg, args.data, "evaluation")
    if not Path(path).exists():
        raise ValidationError(f"file not found: {path}")
    _rule_inputs_present(rule, path)
    manifest = args.manifest or e.get("manifest")
    if manifest:
        _check_manifest(manifest, rule_doc.get("development_data"), path)
    data = load_csv(path, schema, purpose="evaluation")
    cfgmod.set_path(cfg, ("evaluate", "bootstrap_replicates"), args.replicates)
    boot = cfgmod.bootstrap_config(cfg, seed)
    eval_spec = cfgmod.glm_spec(e.get("propensity"), "logit", seed)
    truncation = cfgmod.truncation_from(cfg)
    cfg.update(schema=schema.to_dict(), truncation=list(truncation))
    cfg.setdefault("evaluate", {}).update(
        propensity=eval_spec.to_dict(), bootstrap=None if boot is None else boot.to_dict())
    report = evaluate_rule(rule, data, schema.roles(), eval_spec, truncation, boot,
                           threads=args.threads)
    out = Path(args.output or e.get("output", "evaluation.json"))
    body = {"rule_file": str(rule_path), "evaluation_data": str(path), "evaluation": report.to_dict()}
    write_json(out, _report("evaluation", cfg, seed, body))
    ap = report.ate_positive
    print(f"positives={report.n_positive} negatives={report.n_negative} "
          f"ATE+={'NA' if ap is None else f'{ap.estimate:.4f}'} ABR={report.abr.estimate:.4f} -> {out}")


def cmd_compare(args, cfg):
    seed = cfgmod.resolve_seed(cfg, args.seed, "compare")
    schema = cfgmod.schema_from(cfg)
    c = cfg.get("compare", {})
    dev_path = _data_path(cfg, args.dev, "development")
    val_path = _data_path(cfg, args.val, "validation")
    dev = load_csv(dev_path, schema, purpose="development")
    val = load_csv(val_path, schema, purpose="evaluation")
    grid = cfgmod.candidate_grid(cfg, seed)
    eval_spec = cfgmod.glm_spec(cfg.get("evaluate", {}).get("propensity"), "logit", seed)
    criterion = args.criterion or c.get("criterion", "abr")
    truncation = cfgmod.truncation_from(cfg)
    cfg.update(schema=schema.to_dict(), truncation=list(truncation))
    cfg.setdefault("compare", {}).update(
        criterion=criterion, baselines=grid.baselines, candidates=[x.to_dict() for x in grid.candidates])
    cfg.setdefault("evaluate", {})["propensity"] = eval_spec.to_dict()
    report = compare_on_validation(dev, val, schema.roles(), grid, eval_spec, truncation,
                                   criterion, threads=args.threads)
    out = Path(args.output or c.get("output", "validation_report.json"))
    body = {"development_data": str(dev_path), "validation_data": str(val_path), **report.to_dict()}
    write_json(out, _report("validation-report", cfg, seed, body))
    for e in report.ranking:
        val_str = "failed" if e.status != "ok" else f"{e.abr:.4f}"
        print(f"{e.label:30s} {e.kind:9s} ABR={val_str} {' '.join(e.flags)}")
    sel = report.selected
    print(f"selected: {None if sel is None else sel.label} -> {out}")


def cmd_simulate(args, cfg):
    s = dict(cfg.get("simulate", {}))
    if args.seed is not None:
        seed = args.seed
    elif "base_seed" in s:
        seed = int(s["base_seed"])
    elif "seed" in cfg or os.environ.get(cfgmod.SEED_ENV):
        seed = cfgmod.resolve_seed(cfg, None)
    else:
        seed = SimConfig.base_seed
    sim = SimConfig(
        betas=tuple(s.get("betas", SimConfig.betas)),
        n_eval=int(s.get("n_eval", SimConfig.n_eval)),
        replications=int(s.get("replications", SimConfig.replications)),
        base_seed=seed,
        benchmark_rows=int(s.get("benchmark_rows", SimConfig.benchmark_rows)),
    )
    preset = args.preset or s.get("preset")
    if preset:
        sim = apply_preset(sim, preset)
    overrides = {"replications": args.replications, "n_eval": args.n_eval}
    sim = replace(sim, **{k: v for k, v in overrides.items() if v is not None})
    sizes = tuple(args.sizes or s.get("sizes", DEFAULT_SIZES))
    methods = tuple(args.methods or s.get("methods", METHODS))
    cfg["simulate"] = dict(s, preset=preset, sizes=list(sizes), methods=list(methods), **sim.to_dict())
    result = run_study(sim, methods, sizes, threads=args.threads)
    out = Path(args.output or s.get("output", "simulation"))
    rows = result.table_rows()

    def write_table(p):
        with p.open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    _atomic_write(out.with_suffix(".csv"), write_table)
    write_json(out.with_suffix(".json"), _report("simulation", cfg, sim.base_seed, result.to_dict()))
    width = max(len(r[0]) for r in rows)
    for r in rows:
        print(r[0].ljust(width), *(v.rjust(9) for v in r[1:]))


def build_parser() -> Parser:
    p = Parser(prog="splitreg", description="Develop and evaluate treatment rules by split regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("--config", "-c", help="TOML or JSON config file")
        sp.add_argument("--seed", type=int, help=f"random seed (default: config, then ${cfgmod.SEED_ENV}, then 0)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        sp.add_argument("--output", "-o", help="output path")
        sp.add_argument("--verbose", "-v", action="store_true")
        return sp

    sp = common(sub.add_parser("split", help="partition a dataset into development/validation/evaluation"))
    sp.add_argument("--input", help="CSV to split")
    sp.add_argument("--fractions", type=float, nargs="+")
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_split)

    sp = common(sub.add_parser("build", help="build a rule on development data"))
    sp.add_argument("--data", help="development CSV")
    sp.add_argument("--weighting", choices=("stabilized", "none"))
    sp.set_defaults(func=cmd_build)

    sp = common(sub.add_parser("evaluate", help="evaluate a rule on independent data"))
    sp.add_argument("--rule", help="rule.json or validation_report.json")
    sp.add_argument("--candidate", help="candidate label when --rule is a validation report")
    sp.add_argument("--data", help="evaluation CSV")
    sp.add_argument("--manifest", help="split manifest used to check development/evaluation disjointness")
    sp.add_argument("--replicates", type=int, help="bootstrap replicates (0 disables)")
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("compare", help="rank candidate specifications on validation data"))
    sp.add_argument("--dev", help="development CSV")
    sp.add_argument("--val", help="validation CSV")
    sp.add_argument("--criterion", choices=("abr", "ate_positive"))
    sp.set_defaults(func=cmd_compare)

    sp = common(sub.add_parser("simulate", help="run the simulation study grid"))
    sp.add_argument("--preset", choices=("paper-desk", "paper-full", "smoke"))
    sp.add_argument("--sizes", type=int, nargs="+")
    sp.add_argument("--methods", nargs="+", choices=METHODS)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--n-eval", type=int)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        sys.stderr.write("splitreg: error: --threads must be >= 1\n")
        return 1
    try:
        cfg = cfgmod.load_config(args.config)
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            args.func(args, cfg)
    except (ValidationError, ValueError, OSError) as exc:
        sys.stderr.write(f"splitreg: error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"splitreg: numerical failure: {exc}\n")
        return 2
    except SplitRegError as exc:
        sys.stderr.write(f"splitreg: error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

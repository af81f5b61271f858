"""Simulation study: confounded binary-outcome generator, benchmark policies,
and the replication grid comparing weighted and unweighted split regression.

Generating mechanism for one row::

    X ~ Uniform(0, 2),  L ~ Bernoulli(0.5),  G ~ Normal(0, 1)
    T | L ~ Bernoulli(0.75) if L == 0 else Bernoulli(0.25)
    P(Y=1 | X, L, T=t) = expit(b0[t] + b1[t] * X + g[t] * L)

L confounds treatment and outcome and is unavailable to the rule; the rule
sees (X, G), and G is pure noise.
"""
from __future__ import annotations

import hashlib
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import SplitRegError
from .glm import ConvergenceWarning, GlmSpec
from .rule import ConstantRule, build_rule
from .tabular import Dataset, RoleAssignment

log = logging.getLogger(__name__)

# (b0, b1, g) for T=0 then T=1
DEFAULT_BETAS = (0.0, -0.55, 1.5, -1.4, 0.55, 1.5)
DEFAULT_SIZES = (50, 100, 200, 500, 1000)
METHODS = ("weighted", "naive")
ROLES = RoleAssignment.from_names(["L"], ["X", "G"])


@dataclass(frozen=True)
class SimConfig:
    n_dev: int = 1000
    betas: tuple[float, ...] = DEFAULT_BETAS
    n_eval: int = 10_000
    replications: int = 200
    base_seed: int = 20190101
    benchmark_rows: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.betas) != 6:
            raise ValueError("betas needs six values: (b0, b1, g) for T=0 then T=1")
        for name in ("n_dev", "n_eval", "replications", "benchmark_rows"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    def arm_coefficients(self, arm: int) -> tuple[float, float, float]:
        return self.betas[3 * arm:3 * arm + 3]

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


PRESETS = {
    "paper-desk": {"replications": 200, "n_eval": 10_000},
    "paper-full": {"replications": 1000, "n_eval": 10_000},
    "smoke": {"replications": 10, "n_eval": 2_000, "benchmark_rows": 100_000},
}


def response_probability(config: SimConfig, x, l, t) -> np.ndarray:
    b0, b1, g = (np.where(np.asarray(t) == 1, config.betas[3 + k], config.betas[k]) for k in range(3))
    return expit(b0 + b1 * np.asarray(x) + g * np.asarray(l))


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate(config: SimConfig, n: int | None = None, seed=0) -> Dataset:
    """Draw ``n`` rows (default ``config.n_dev``) with columns X, L, G, T, Y."""
    n = config.n_dev if n is None else int(n)
    rng = _rng(seed)
    x = rng.uniform(0.0, 2.0, n)
    l = (rng.random(n) < 0.5).astype(float)
    g = rng.standard_normal(n)
    t = (rng.random(n) < np.where(l == 0, 0.75, 0.25)).astype(float)
    y = (rng.random(n) < response_probability(config, x, l, t)).astype(float)
    return Dataset({"X": x, "L": l, "G": g, "T": t, "Y": y}, outcome="Y", treatment="T",
                   outcome_kind="binary", higher_is_better=True)


def optimal_policy(config: SimConfig):
    """Best policy using (X, G) only: treat when the L-averaged benefit is positive.

    L is independent of X, so averaging over L = 0, 1 with probability 1/2
    gives the benefit at X; G never enters the outcome.
    """
    def policy(x, g):
        x = np.asarray(x)
        diff = sum(0.5 * (response_probability(config, x, np.full_like(x, l), np.ones_like(x))
                          - response_probability(config, x, np.full_like(x, l), np.zeros_like(x)))
                   for l in (0.0, 1.0))
        return (diff > 0).astype(int)
    return policy


def _assignments(policy, data: Dataset) -> np.ndarray:
    if hasattr(policy, "recommendations"):
        return np.asarray(policy.recommendations(data))
    return np.asarray(policy(data["X"], data["G"]))


def true_mean_outcome(policy, config: SimConfig, n_eval: int | None = None, seed=0) -> float:
    """Mean true success probability when a fresh population is treated by ``policy``.

    ``policy`` is a rule object (anything with ``recommendations``) or a
    callable ``policy(X, G) -> 0/1 array``. Averaging the known response
    probabilities, rather than simulated outcomes, removes outcome noise.
    """
    n_eval = config.n_eval if n_eval is None else int(n_eval)
    pop = generate(config, n_eval, seed)
    t = _assignments(policy, pop)
    return float(np.mean(response_probability(config, pop["X"], pop["L"], t)))


def benchmarks(config: SimConfig, rows: int | None = None, seed=None) -> dict:
    rows = config.benchmark_rows if rows is None else rows
    seed = derive_seed(config.base_seed, "benchmark", rows, 0) if seed is None else seed
    return {
        "optimal": true_mean_outcome(optimal_policy(config), config, rows, seed),
        "treat_all": true_mean_outcome(ConstantRule(1), config, rows, seed),
        "treat_none": true_mean_outcome(ConstantRule(0), config, rows, seed),
    }


def derive_seed(base_seed: int, method: str, n_dev: int, replication: int) -> int:
    """``base_seed`` XOR a fixed 64-bit hash of the replication's coordinates."""
    digest = hashlib.sha256(f"{method}|{int(n_dev)}|{int(replication)}".encode()).digest()
    return int(base_seed) ^ int.from_bytes(digest[:8], "little")


PROPENSITY_SPEC = GlmSpec(link="logit")
RULE_SPEC = GlmSpec(link="logit")


def run_replication(config: SimConfig, method: str, n_dev: int, replication: int) -> dict:
    seed = derive_seed(config.base_seed, method, n_dev, replication)
    seq = np.random.SeedSequence(seed)
    dev_seq, eval_seq = seq.spawn(2)
    out = {"method": method, "n_dev": int(n_dev), "replication": int(replication), "seed": seed}
    dev = generate(config, n_dev, dev_seq)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            rule = build_rule(dev, ROLES, PROPENSITY_SPEC, RULE_SPEC,
                              weighting="stabilized" if method == "weighted" else "none")
    except SplitRegError as exc:
        out.update(value=None, error=f"{type(exc).__name__}: {exc}")
        return out
    out["value"] = true_mean_outcome(rule, config, config.n_eval, eval_seq)
    out["f0"] = [float(v) for v in rule.f0.coefficients]
    out["f1"] = [float(v) for v in rule.f1.coefficients]
    out["error"] = None
    return out


def _run_task(args):
    return run_replication(*args)


@dataclass
class StudyResult:
    config: SimConfig
    methods: tuple[str, ...]
    sizes: tuple[int, ...]
    replications: list[dict] = field(repr=False, default_factory=list)
    benchmarks: dict = field(default_factory=dict)

    def cell(self, method: str, n_dev: int) -> dict:
        reps = [r for r in self.replications if r["method"] == method and r["n_dev"] == n_dev]
        ok = [r["value"] for r in reps if r["value"] is not None]
        failed = len(reps) - len(ok)
        cell = {"mean": float(np.mean(ok)) if ok else None,
                "sd": float(np.std(ok, ddof=1)) if len(ok) > 1 else None,
                "n_ok": len(ok), "n_failed": failed}
        good = [r for r in reps if r["value"] is not None]
        if good:
            cell["mean_f0"] = [float(v) for v in np.mean([r["f0"] for r in good], axis=0)]
            cell["mean_f1"] = [float(v) for v in np.mean([r["f1"] for r in good], axis=0)]
        return cell

    def mean(self, method: str, n_dev: int) -> float | None:
        return self.cell(method, n_dev)["mean"]

    def grid(self) -> dict:
        return {m: {str(n): self.cell(m, n) for n in self.sizes} for m in self.methods}

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "methods": list(self.methods),
            "sizes": list(self.sizes),
            "grid": self.grid(),
            "benchmarks": self.benchmarks,
            "coefficient_names": ["(Intercept)", "X", "G"],
            "failures": [r for r in self.replications if r["error"] is not None],
        }

    def table_rows(self) -> list[list]:
        """Rows of the mean-outcome table: one per method and benchmark."""
        label = {"weighted": "Split-regression", "naive": "Split-regression (naive, no weights)"}
        rows = [["rule"] + [str(n) for n in self.sizes]]
        for m in self.methods:
            rows.append([label.get(m, m)] + [_fmt(self.mean(m, n)) for n in self.sizes])
        names = {"optimal": "Optimal rule", "treat_all": "Treating all", "treat_none": "Treating none"}
        for key, name in names.items():
            if key in self.benchmarks:
                rows.append([name] + [_fmt(self.benchmarks[key])] * len(self.sizes))
        return rows


def _fmt(v):
    return "" if v is None else repr(round(float(v), 6))


def run_study(config: SimConfig, methods=METHODS, sizes=DEFAULT_SIZES, threads: int = 1,
              with_benchmarks: bool = True) -> StudyResult:
    """Run every (method, n_dev, replication) cell and collect results in that order."""
    sizes = tuple(int(n) for n in sizes)
    methods = tuple(methods)
    if not sizes:
        raise ValueError("sizes must be non-empty")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    tasks = [(config, m, n, r) for m in methods for n in sizes for r in range(config.replications)]
    start = time.perf_counter()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    else:
        reps = [_run_task(t) for t in tasks]
    log.info("ran %d replications in %.1fs", len(tasks), time.perf_counter() - start)
    bench = benchmarks(config) if with_benchmarks else {}
    return StudyResult(config, methods, sizes, reps, bench)


def apply_preset(config: SimConfig, name: str) -> SimConfig:
    try:
        return replace(config, **PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

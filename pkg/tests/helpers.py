import numpy as np

from splitreg.tabular import Dataset


def randomized_dataset(n, seed, effect=0.0, outcome_kind="continuous"):
    """Coin-flip treatment, covariates X, Z, and an effect that grows with X."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    z = rng.normal(size=n)
    t = (rng.random(n) < 0.5).astype(float)
    if outcome_kind == "binary":
        eta = 0.3 * x - 0.2 * z + t * (effect + 0.8 * x)
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = 1.0 + 0.5 * x - 0.3 * z + t * (effect + 1.0 * x) + rng.normal(size=n)
    return Dataset({"X": x, "Z": z, "T": t, "Y": y}, outcome="Y", treatment="T", outcome_kind=outcome_kind)

"""Seeded development/validation/evaluation partitioning."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tabular import Dataset

DEFAULT_FRACTIONS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seed: int = 0
    stratify_by_treatment: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if len(self.fractions) not in (2, 3):
            raise ValidationError("split needs 2 or 3 fractions")
        if any(not f > 0 for f in self.fractions):
            raise ValidationError("split fractions must be positive")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-12:
            raise ValidationError(f"split fractions must sum to 1, got {math.fsum(self.fractions)!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def part_sizes(n: int, fractions) -> list[int]:
    """Floor each share, then hand the leftover rows to the first parts."""
    sizes = [int(math.floor(f * n + 1e-9)) for f in fractions]
    for k in range(n - sum(sizes)):
        sizes[k % len(sizes)] += 1
    return sizes


def _rng(seed: int) -> np.random.Generator:
    # PCG64 is numpy's documented default bit generator with a stable stream
    return np.random.Generator(np.random.PCG64(int(seed)))


def split_indices(n: int, spec: SplitSpec, treatment=None) -> list[np.ndarray]:
    k = len(spec.fractions)
    if n < k:
        raise ValidationError(f"cannot split {n} rows into {k} parts")
    rng = _rng(spec.seed)
    if not spec.stratify_by_treatment:
        perm = rng.permutation(n)
        bounds = np.cumsum([0] + part_sizes(n, spec.fractions))
        return [np.sort(perm[bounds[j]:bounds[j + 1]]) for j in range(k)]
    if treatment is None:
        raise ValidationError("stratified split needs the treatment column")
    treatment = np.asarray(treatment)
    parts = [[] for _ in range(k)]
    for arm in (0.0, 1.0):
        rows = np.flatnonzero(treatment == arm)
        perm = rows[rng.permutation(len(rows))]
        bounds = np.cumsum([0] + part_sizes(len(rows), spec.fractions))
        for j in range(k):
            parts[j].append(perm[bounds[j]:bounds[j + 1]])
    out = [np.sort(np.concatenate(p)) for p in parts]
    if any(len(p) == 0 for p in out):
        raise ValidationError("stratified split produced an empty part")
    return out


def split(data: Dataset, spec: SplitSpec) -> list[Dataset]:
    """Partition ``data`` into disjoint parts covering every row.

    Identical ``(data, spec)`` always gives identical parts.
    """
    idx = split_indices(data.n_rows, spec, data.t)
    return [data.subset(i) for i in idx]

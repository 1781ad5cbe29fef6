"""Subpopulation-shifted training sets built from a target-domain sample."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import EmptyCellError, GroupMarginal
from .data import LabeledDataset, largest_remainder, philox

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnderRepresentation:
    """Keep rows of cell (group, label) with probability ``keep_prob``."""

    group: object
    label: object
    keep_prob: float

    def __post_init__(self):
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError("keep_prob must lie in [0, 1]")


@dataclass(frozen=True)
class MarginalResample:
    target: GroupMarginal
    n_out: int


@dataclass(frozen=True)
class BiasSpec:
    kind: UnderRepresentation | MarginalResample
    seed: int = 0

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        if isinstance(self.kind, UnderRepresentation):
            return underrepresentation_filter(ds, self)
        return reweight_to_marginal(ds, self.kind.target, self.kind.n_out, self.seed)


def underrepresentation_filter(ds: LabeledDataset, spec: BiasSpec) -> LabeledDataset:
    """Independent Bernoulli thinning of one (group, label) cell."""
    kind = spec.kind
    if kind.group not in ds.groups:
        raise ValueError(f"unknown group {kind.group!r}; have {ds.groups}")
    if kind.label not in ds.labels:
        raise ValueError(f"unknown label {kind.label!r}; have {ds.labels}")
    gi, yi = ds.groups.index(kind.group), ds.labels.index(kind.label)
    rng = philox(spec.seed)
    u = rng.random(ds.n)
    target = (ds.a == gi) & (ds.y == yi)
    keep = ~target | (u < kind.keep_prob)
    return ds.subset(np.flatnonzero(keep))


def underrepresented_joint(p_star, group_index: int, label_index: int, keep_prob: float) -> np.ndarray:
    """Limiting training joint: p* thinned in one cell, renormalized."""
    p = np.array(p_star, dtype=float)
    p[group_index, label_index] *= keep_prob
    return p / p.sum()


def reweight_to_marginal(ds: LabeledDataset, target: GroupMarginal, n_out: int, seed=0) -> LabeledDataset:
    """Stratified resample of ``ds`` whose cell counts follow ``target``.

    Cells are drawn without replacement when the source has enough rows,
    otherwise with replacement (and a warning).
    """
    t = np.asarray(target.probs)
    shape = (len(ds.groups), len(ds.labels))
    if t.shape != shape:
        raise ValueError(f"target shape {t.shape} does not match dataset cells {shape}")
    want = largest_remainder(n_out, t).reshape(shape)
    have = ds.cell_counts()
    rng = philox(seed)
    flat = ds.a * shape[1] + ds.y
    picks = []
    for i in range(shape[0]):
        for j in range(shape[1]):
            k = int(want[i, j])
            if t[i, j] > 0 and have[i, j] == 0:
                raise EmptyCellError(ds.groups[i], ds.labels[j])
            if k == 0:
                continue
            idx = np.flatnonzero(flat == i * shape[1] + j)
            if k <= idx.size:
                picks.append(rng.choice(idx, size=k, replace=False))
            else:
                warnings.warn(f"cell ({ds.groups[i]}, {ds.labels[j]}) has {idx.size} rows, "
                              f"needs {k}; sampling with replacement", stacklevel=2)
                picks.append(rng.choice(idx, size=k, replace=True))
    out = np.sort(np.concatenate(picks)) if picks else np.array([], dtype=int)
    return ds.subset(out)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())

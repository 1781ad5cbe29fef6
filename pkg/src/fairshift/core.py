"""Risk profiles, group marginals and the fair subspaces they live in.

Profiles and marginals are both ``|A| x |V|`` arrays indexed
``[group][disc_value]``. Fair subspaces are linear, so everything here
reduces to column means and Euclidean inner products.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np

if TYPE_CHECKING:
    from .data import LabeledDataset

# disc-value label used when V is trivial (risk parity)
TRIVIAL_DISC = "all"


class ShapeError(ValueError):
    """Arrays or spaces do not line up."""


class EmptyCellError(ValueError):
    """A required (group, disc_value) cell has no rows."""

    def __init__(self, group, disc_value):
        super().__init__(f"empty cell (group={group!r}, disc_value={disc_value!r})")
        self.group = group
        self.disc_value = disc_value


@dataclass(frozen=True)
class GroupSpace:
    groups: tuple
    disc_values: tuple = (TRIVIAL_DISC,)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "disc_values", tuple(self.disc_values))
        if not self.groups or not self.disc_values:
            raise ValueError("GroupSpace needs at least one group and one disc value")
        if len(set(self.groups)) != len(self.groups):
            raise ValueError(f"duplicate group labels: {self.groups}")
        if len(set(self.disc_values)) != len(self.disc_values):
            raise ValueError(f"duplicate disc values: {self.disc_values}")

    @classmethod
    def rp(cls, groups: Sequence) -> "GroupSpace":
        return cls(tuple(groups), (TRIVIAL_DISC,))

    @classmethod
    def crp(cls, groups: Sequence, labels: Sequence) -> "GroupSpace":
        return cls(tuple(groups), tuple(labels))

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.groups), len(self.disc_values))

    @property
    def trivial_disc(self) -> bool:
        return self.disc_values == (TRIVIAL_DISC,)

    def cell_names(self) -> list[str]:
        return [f"{a}|{v}" for a in self.groups for v in self.disc_values]


def _as_matrix(values, space: GroupSpace) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and space.shape[1] == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != space.shape:
        raise ShapeError(f"expected shape {space.shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class RiskProfile:
    """Conditional expected losses, one per (group, disc_value) cell.

    ``mask`` is only set by lenient empirical estimation; ``False`` marks a
    cell that had no rows (its value is stored as 0).
    """

    space: GroupSpace
    values: np.ndarray
    mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = _as_matrix(self.values, self.space)
        if not np.all(np.isfinite(arr)):
            raise ValueError("risk profile entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class GroupMarginal:
    space: GroupSpace
    probs: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.probs, self.space)
        if np.any(arr < 0):
            raise ValueError("marginal probabilities must be non-negative")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError(f"marginal must sum to 1, got {arr.sum()!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    @classmethod
    def uniform(cls, space: GroupSpace) -> "GroupMarginal":
        return cls(space, np.full(space.shape, 1.0 / np.prod(space.shape)))

    @classmethod
    def normalized(cls, space: GroupSpace, weights) -> "GroupMarginal":
        w = _as_matrix(weights, space)
        return cls(space, w / w.sum())


class FairKind(str, Enum):
    RP = "rp"
    CRP = "crp"


@dataclass(frozen=True)
class FairSubspace:
    """Profiles satisfying (conditional) risk parity.

    RP: a single constant across every cell. CRP: constant across groups
    within each disc_value column. With a trivial disc axis the two agree.
    """

    space: GroupSpace
    kind: FairKind = FairKind.CRP

    def __post_init__(self):
        object.__setattr__(self, "kind", FairKind(self.kind))

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(project_fair_perp(x, self))) <= tol)


ArrayLike = Union[RiskProfile, GroupMarginal, np.ndarray]


def _array_of(x: ArrayLike, space: GroupSpace | None = None) -> np.ndarray:
    if isinstance(x, RiskProfile):
        arr = x.values
    elif isinstance(x, GroupMarginal):
        arr = x.probs
    else:
        arr = np.asarray(x, dtype=float)
        if space is not None:
            arr = _as_matrix(arr, space)
    if space is not None and arr.shape != space.shape:
        raise ShapeError(f"expected shape {space.shape}, got {arr.shape}")
    return arr


def _space_of(*xs) -> GroupSpace | None:
    spaces = {x.space for x in xs if isinstance(x, (RiskProfile, GroupMarginal))}
    if len(spaces) > 1:
        raise ShapeError("arguments live in different group spaces")
    return spaces.pop() if spaces else None


def overall_risk(marginal: ArrayLike, profile: ArrayLike) -> float:
    """Overall expected loss: the Euclidean inner product <marginal, profile>."""
    space = _space_of(marginal, profile)
    p = _array_of(marginal, space)
    r = _array_of(profile, space)
    if p.shape != r.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {r.shape}")
    return float(np.sum(p * r))


def project_fair(x: ArrayLike, fair: FairSubspace) -> np.ndarray:
    arr = _array_of(x, fair.space)
    if fair.kind is FairKind.RP:
        return np.full_like(arr, arr.mean())
    return np.broadcast_to(arr.mean(axis=0, keepdims=True), arr.shape).copy()


def project_fair_perp(x: ArrayLike, fair: FairSubspace) -> np.ndarray:
    arr = _array_of(x, fair.space)
    return arr - project_fair(arr, fair)


def fairness_gap(profile: ArrayLike, fair: FairSubspace) -> float:
    """Largest spread of the profile that the fair subspace forbids."""
    arr = _array_of(profile, fair.space)
    if fair.kind is FairKind.RP:
        return float(arr.max() - arr.min())
    return float(np.max(arr.max(axis=0) - arr.min(axis=0)))


def empirical_risk_profile(
    losses, dataset: "LabeledDataset", space: GroupSpace, strict: bool = True
) -> RiskProfile:
    """Per-cell mean of ``losses`` over the rows of ``dataset``.

    The disc axis is the class label unless ``space`` has a trivial disc
    axis. In strict mode an empty cell raises; otherwise it is masked out.
    """
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (dataset.n,):
        raise ShapeError(f"need one loss per row ({dataset.n}), got {losses.shape}")
    g_idx = _vocab_index(dataset.groups, space.groups, dataset.a)
    if space.trivial_disc:
        v_idx = np.zeros(dataset.n, dtype=int)
    else:
        v_idx = _vocab_index(dataset.labels, space.disc_values, dataset.y)
    n_a, n_v = space.shape
    flat = g_idx * n_v + v_idx
    counts = np.bincount(flat, minlength=n_a * n_v).reshape(space.shape)
    sums = np.bincount(flat, weights=losses, minlength=n_a * n_v).reshape(space.shape)
    mask = counts > 0
    if not mask.all():
        if strict:
            i, j = np.argwhere(~mask)[0]
            raise EmptyCellError(space.groups[i], space.disc_values[j])
        values = np.where(mask, sums / np.maximum(counts, 1), 0.0)
        return RiskProfile(space, values, mask=mask)
    return RiskProfile(space, sums / counts)


def _vocab_index(vocab, target, codes) -> np.ndarray:
    # map dataset codes into the ordering used by `target`
    lookup = {}
    for code, label in enumerate(vocab):
        if label in target:
            lookup[code] = target.index(label)
    missing = set(np.unique(codes).tolist()) - set(lookup)
    if missing:
        names = [vocab[m] for m in sorted(missing)]
        raise ShapeError(f"labels {names} are not in the group space")
    table = np.full(len(vocab), -1, dtype=int)
    for code, pos in lookup.items():
        table[code] = pos
    return table[np.asarray(codes, dtype=int)]


# -- CSV matrix serialization -------------------------------------------------

def matrix_to_csv(x: ArrayLike, space: GroupSpace) -> str:
    arr = _array_of(x, space)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", *space.disc_values])
    for a, row in zip(space.groups, arr):
        w.writerow([a, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def matrix_from_csv(text: str) -> tuple[GroupSpace, np.ndarray]:
    """Parse a group-by-disc_value matrix; errors name the offending line."""
    reader = csv.reader(io.StringIO(text))
    rows = [(reader.line_num, r) for r in reader if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError("line 1: empty matrix file")
    head_line, header = rows[0]
    if len(header) < 2:
        raise ValueError(
            f"line {head_line}: header needs a group column and at least one value column"
        )
    groups, values = [], []
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        groups.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    space = GroupSpace(tuple(groups), tuple(header[1:]))
    return space, np.array(values, dtype=float)


def save_matrix(path, x: ArrayLike, space: GroupSpace) -> None:
    Path(path).write_text(matrix_to_csv(x, space))


def load_profile(path) -> RiskProfile:
    space, arr = matrix_from_csv(Path(path).read_text())
    return RiskProfile(space, arr)


def load_marginal(path) -> GroupMarginal:
    space, arr = matrix_from_csv(Path(path).read_text())
    return GroupMarginal(space, arr)

"""Labeled datasets: Gaussian simulation, tabular CSV loading, splits."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import GroupMarginal, GroupSpace

log = logging.getLogger(__name__)


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of (features, group, label) with explicit vocabularies.

    ``a`` and ``y`` hold integer codes into ``groups`` and ``labels``.
    For binary tasks ``labels[1]`` is the positive class.
    """

    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    groups: tuple
    labels: tuple = (0, 1)
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        a = np.asarray(self.a, dtype=int)
        y = np.asarray(self.y, dtype=int)
        if not (X.shape[0] == a.shape[0] == y.shape[0]):
            raise DataError(f"length mismatch: X {X.shape[0]}, a {a.shape[0]}, y {y.shape[0]}")
        if a.size and (a.min() < 0 or a.max() >= len(self.groups)):
            raise DataError("group codes outside vocabulary")
        if y.size and (y.min() < 0 or y.max() >= len(self.labels)):
            raise DataError("label codes outside vocabulary")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.a[idx], self.y[idx], self.groups,
                              self.labels, self.feature_names)

    def space(self) -> GroupSpace:
        return GroupSpace.crp(self.groups, self.labels)

    def cell_counts(self) -> np.ndarray:
        flat = self.a * len(self.labels) + self.y
        return np.bincount(flat, minlength=len(self.groups) * len(self.labels)).reshape(
            len(self.groups), len(self.labels))

    def joint(self) -> GroupMarginal:
        counts = self.cell_counts()
        return GroupMarginal(self.space(), counts / counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.feature_names, "group", "label"])
        for x, a, y in zip(self.X, self.a, self.y):
            w.writerow([*(repr(float(v)) for v in x), self.groups[a], self.labels[y]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, groups: Sequence | None = None,
                 labels: Sequence | None = None) -> "LabeledDataset":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[-2:] != ["group", "label"]:
            raise SchemaError("dataset CSV must end with 'group,label' columns")
        g_raw = [r[-2] for r in body]
        y_raw = [r[-1] for r in body]
        groups = tuple(groups) if groups is not None else tuple(sorted(set(g_raw)))
        labels = tuple(labels) if labels is not None else tuple(sorted(set(y_raw)))
        gs = [str(g) for g in groups]
        ls = [str(v) for v in labels]
        X = np.array([[float(v) for v in r[:-2]] for r in body]).reshape(len(body), len(header) - 2)
        a = np.array([gs.index(g) for g in g_raw], dtype=int)
        y = np.array([ls.index(v) for v in y_raw], dtype=int)
        return cls(X, a, y, groups, labels, tuple(header[:-2]))


def concat(parts: Sequence[LabeledDataset]) -> LabeledDataset:
    first = parts[0]
    return LabeledDataset(
        np.vstack([p.X for p in parts]),
        np.concatenate([p.a for p in parts]),
        np.concatenate([p.y for p in parts]),
        first.groups, first.labels, first.feature_names,
    )


def philox(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


# -- Gaussian simulation --------------------------------------------------------

@dataclass
class GaussianSpec:
    """Per-cell Gaussian features with a prescribed (A, Y) joint.

    ``means`` and ``covs`` are indexed ``[a][y]``.
    """

    means: np.ndarray  # (|A|, |Y|, d)
    covs: np.ndarray  # (|A|, |Y|, d, d)
    joint: np.ndarray  # (|A|, |Y|)
    n: int = 2000
    seed: int = 0
    groups: tuple = (0, 1)
    labels: tuple = (0, 1)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        self.joint = np.asarray(self.joint, dtype=float)
        na, ny = self.joint.shape
        if self.means.shape[:2] != (na, ny) or self.covs.shape[:2] != (na, ny):
            raise ValueError("means/covs must be indexed like the joint")
        if np.any(self.joint < 0) or abs(self.joint.sum() - 1.0) > 1e-12:
            raise ValueError("joint must be a probability table")

    def with_joint(self, joint, n: int | None = None, seed: int | None = None) -> "GaussianSpec":
        return GaussianSpec(self.means, self.covs, joint, self.n if n is None else n,
                            self.seed if seed is None else seed, self.groups, self.labels)


def minority_joint(p_minor: float) -> np.ndarray:
    """Joint over (A, Y) with group 1 the minority and balanced labels."""
    if not 0.0 <= p_minor <= 0.5:
        raise ValueError("p_minor must lie in [0, 0.5]")
    return np.array([[0.5 - p_minor, 0.5 - p_minor], [p_minor, p_minor]])


def default_gaussian_spec(p_minor: float = 0.25, n: int = 2000, seed: int = 0) -> GaussianSpec:
    """Two groups, two labels, isotropic covariance 0.5 I in 2-D.

    Group 0 separates its classes along axis 1 at x1 = 0 (means -1.25 and
    +1.25). Group 1 sits 2.5 up axis 2 with its boundary at x1 = 2.5, so a
    boundary fitted to group 0 alone misclassifies group 1's negatives
    while a tilted line serves both groups. Knowing the group, each cell
    is classified with accuracy Phi(1.25 / sqrt(0.5)) ~ 0.96.
    """
    means = np.array([[[-1.25, 0.0], [1.25, 0.0]], [[1.25, 2.5], [3.75, 2.5]]])
    covs = np.broadcast_to(0.5 * np.eye(2), (2, 2, 2, 2)).copy()
    return GaussianSpec(means, covs, minority_joint(p_minor), n, seed)


def gaussian_sample(spec: GaussianSpec, rng: np.random.Generator | None = None) -> LabeledDataset:
    rng = philox(spec.seed) if rng is None else rng
    na, ny = spec.joint.shape
    chol = np.empty_like(spec.covs)
    for i in range(na):
        for j in range(ny):
            cov = spec.covs[i, j]
            if not np.allclose(cov, cov.T):
                raise ValueError(f"covariance of cell ({i},{j}) is not symmetric")
            try:
                chol[i, j] = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValueError(f"covariance of cell ({i},{j}) is not positive definite") from None
    counts = rng.multinomial(spec.n, spec.joint.ravel()).reshape(na, ny)
    d = spec.means.shape[2]
    Xs, As, Ys = [], [], []
    for i in range(na):
        for j in range(ny):
            k = counts[i, j]
            z = rng.standard_normal((k, d))
            Xs.append(spec.means[i, j] + z @ chol[i, j].T)
            As.append(np.full(k, i))
            Ys.append(np.full(k, j))
    X = np.vstack(Xs)
    a = np.concatenate(As)
    y = np.concatenate(Ys)
    perm = rng.permutation(spec.n)
    return LabeledDataset(X[perm], a[perm], y[perm], spec.groups, spec.labels)


# -- tabular data -----------------------------------------------------------------

@dataclass
class TabularSchema:
    """Column roles for a tabular CSV.

    ``protected`` columns are combined into one group attribute by
    cross-product. ``protected_binarize`` maps a protected column to the
    value kept as-is; every other value collapses to ``"not_<value>"``.
    """

    numeric: list = field(default_factory=list)
    categorical: list = field(default_factory=list)
    protected: list = field(default_factory=list)
    label: str = "label"
    positive: str = "1"
    protected_binarize: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = [*self.numeric, *self.categorical, *self.protected, self.label]
        if len(set(cols)) != len(cols):
            raise SchemaError("schema columns must be disjoint")
        if not self.protected:
            raise SchemaError("schema needs at least one protected column")


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass
class TabularData:
    """Encoded table before standardization.

    Numeric columns come first; ``n_numeric`` tells :func:`standardize`
    which columns to touch.
    """

    dataset: LabeledDataset
    n_numeric: int
    dropped_rows: int = 0


def load_csv(path, schema: TabularSchema) -> TabularData:
    """Read a header-first CSV into an unstandardized dataset.

    Rows with an empty value in any schema column are dropped and counted.
    Numeric columns must parse; the error names the 1-based data row.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [*schema.numeric, *schema.categorical, *schema.protected, schema.label]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"missing columns in {path.name}: {missing}")
        rows, dropped = [], 0
        for i, row in enumerate(reader, start=1):
            if any((row[c] or "").strip() == "" for c in needed):
                dropped += 1
                continue
            rows.append((i, row))
    if dropped:
        log.info("dropped %d rows with missing values from %s", dropped, path.name)
    if not rows:
        raise DataError(f"no usable rows in {path}")

    num = np.empty((len(rows), len(schema.numeric)))
    for k, (i, row) in enumerate(rows):
        for j, c in enumerate(schema.numeric):
            try:
                num[k, j] = float(row[c])
            except ValueError:
                raise DataError(f"row {i}: column {c!r} value {row[c]!r} is not numeric") from None

    cat_blocks, cat_names = [], []
    for c in schema.categorical:
        vals = [row[c].strip() for _, row in rows]
        levels = sorted(set(vals))
        idx = np.array([levels.index(v) for v in vals])
        cat_blocks.append(np.eye(len(levels))[idx])
        cat_names += [f"{c}={lv}" for lv in levels]

    labels_raw = [row[schema.label].strip() for _, row in rows]
    levels = sorted(set(labels_raw))
    if len(levels) > 2 or (len(levels) == 2 and schema.positive not in levels):
        raise DataError(f"label column {schema.label!r} must be binary with positive "
                        f"value {schema.positive!r}; saw {levels[:5]}")
    y = np.array([1 if v == schema.positive else 0 for v in labels_raw])
    negative = next((v for v in levels if v != schema.positive), f"not_{schema.positive}")

    group_raw = []
    for _, row in rows:
        parts = []
        for c in schema.protected:
            v = row[c].strip()
            keep = schema.protected_binarize.get(c)
            if keep is not None and v != keep:
                v = f"not_{keep}"
            parts.append(v)
        group_raw.append("&".join(parts))
    groups = tuple(sorted(set(group_raw)))
    a = np.array([groups.index(g) for g in group_raw])

    X = np.hstack([num, *cat_blocks]) if cat_blocks else num
    ds = LabeledDataset(X, a, y, groups, (negative, schema.positive),
                        tuple(schema.numeric) + tuple(cat_names))
    return TabularData(ds, len(schema.numeric), dropped)


def standardize(train: LabeledDataset, others: Sequence[LabeledDataset], n_numeric: int):
    """Fit numeric-column statistics on ``train`` only and apply them everywhere."""
    st = Standardizer.fit(train.X[:, :n_numeric])

    def apply(ds: LabeledDataset) -> LabeledDataset:
        X = ds.X.copy()
        X[:, :n_numeric] = st.apply(X[:, :n_numeric])
        return LabeledDataset(X, ds.a, ds.y, ds.groups, ds.labels, ds.feature_names)

    return apply(train), [apply(o) for o in others], st


# -- splits -------------------------------------------------------------------------

def largest_remainder(total: int, shares: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``total`` proportional to ``shares``.

    Leftover units go to the largest fractional parts, ties by index order.
    """
    shares = np.asarray(shares, dtype=float).ravel()
    raw = total * shares / shares.sum()
    base = np.floor(raw).astype(int)
    rem = int(total - base.sum())
    order = sorted(range(raw.size), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def split_train_test(ds: LabeledDataset, ratio: float = 0.7, seed=0):
    """Stratified split by (group, label) cell with exact total sizes."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = philox(seed)
    counts = ds.cell_counts().ravel()
    n_train = int(round(ratio * ds.n))
    per_cell = largest_remainder(n_train, counts)
    flat = ds.a * len(ds.labels) + ds.y
    train_idx, test_idx = [], []
    for cell in range(counts.size):
        idx = np.flatnonzero(flat == cell)
        idx = idx[rng.permutation(idx.size)]
        train_idx.append(idx[: per_cell[cell]])
        test_idx.append(idx[per_cell[cell]:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return ds.subset(tr), ds.subset(te)


def pstar_target(test: LabeledDataset) -> GroupMarginal:
    """Equal group mass within each label column, label marginal kept."""
    counts = test.cell_counts().astype(float)
    label_marg = counts.sum(axis=0) / counts.sum()
    target = np.broadcast_to(label_marg / len(test.groups), counts.shape)
    return GroupMarginal(test.space(), target)


def make_pstar_testset(test: LabeledDataset, seed=0) -> LabeledDataset:
    """Largest subsample of ``test`` that is balanced over groups per label."""
    from .bias import reweight_to_marginal

    target = pstar_target(test)
    counts = test.cell_counts()
    t = target.probs
    with np.errstate(divide="ignore"):
        caps = np.where(t > 0, counts / np.where(t > 0, t, 1.0), np.inf)
    n_out = int(np.floor(caps.min() + 1e-9))
    if n_out <= 0:
        i, j = np.unravel_index(np.argmin(caps), caps.shape)
        from .core import EmptyCellError
        raise EmptyCellError(test.groups[i], test.labels[j])
    return reweight_to_marginal(test, target, n_out, seed)

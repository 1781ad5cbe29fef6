"""Fairness-constrained classifier training by exponentiated gradient.

The constrained problem is treated as a saddle point between a randomized
classifier and non-negative Lagrange multipliers on signed parity
violations. Each round the multipliers are set by exponentiated gradient
and a weighted logistic regression plays best response against them;
the returned model is the uniform mixture over all rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import EmptyCellError, FairKind, GroupSpace, RiskProfile, empirical_risk_profile
from .data import LabeledDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearClassifier:
    weights: np.ndarray
    bias: float
    constant: bool = False  # fitted on single-class data

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("classifier parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def score(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.score(X) > 0).astype(int)

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.score(X))


@dataclass(frozen=True)
class RandomizedClassifier:
    members: tuple
    mix_weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.mix_weights, dtype=float).ravel()
        if len(self.members) == 0 or len(self.members) != w.size:
            raise ValueError("need one mixing weight per member (at least one member)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixing weights must be a probability vector")
        w.setflags(write=False)
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "mix_weights", w)

    def positive_rate(self, X) -> np.ndarray:
        """Probability that a draw from the mixture predicts the positive class."""
        preds = np.stack([m.predict(X) for m in self.members])
        return self.mix_weights @ preds

    def expected_loss(self, ds: LabeledDataset) -> np.ndarray:
        """Per-row expected 0-1 loss under the mixture."""
        p1 = self.positive_rate(ds.X)
        return np.where(ds.y == 1, 1.0 - p1, p1)

    def predict(self, X, rng: np.random.Generator) -> np.ndarray:
        """Sampled predictions: one member drawn per row."""
        k = rng.choice(len(self.members), size=len(X), p=self.mix_weights)
        preds = np.stack([m.predict(X) for m in self.members])
        return preds[k, np.arange(len(X))]


@dataclass(frozen=True)
class ConstraintSpec:
    kind: FairKind = FairKind.CRP
    eps: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", FairKind(self.kind))
        if not np.isfinite(self.eps) or self.eps < 0:
            raise ValueError("constraint tolerance must be finite and >= 0")


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 25
    bound: float | None = None  # None: 1 / eps
    eta0: float = 2.0
    scale_eta: bool = True  # step eta0 / (bound * sqrt(t))
    l2: float = 1e-6
    max_newton: int = 100
    tol: float = 1e-8
    selection: str = "average"  # or "best_gap"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if (self.bound is not None and self.bound <= 0) or self.eta0 <= 0 or self.l2 < 0:
            raise ValueError("bound and learning rate must be positive")
        if self.selection not in ("average", "best_gap", "lp"):
            raise ValueError(f"unknown selection {self.selection!r}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def weighted_logistic_fit(ds: LabeledDataset, row_weights, config: SolverConfig = SolverConfig(),
                          labels=None) -> LinearClassifier:
    """Newton's method on weight-normalized log-loss plus ``l2/2 * |w|^2``.

    ``labels`` overrides ``ds.y`` (0/1 per row). The bias is not penalized.
    """
    X = ds.X
    y = ds.y if labels is None else np.asarray(labels)
    w = np.asarray(row_weights, dtype=float)
    if w.shape != (ds.n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("row weights must be finite, non-negative, one per row")
    total = w.sum()
    if total <= 0:
        raise ValueError("row weights are all zero")
    w = w / total
    active = w > 0
    pos = float(w[y == 1].sum())
    if not np.any(active & (y == 1)) or not np.any(active & (y == 0)):
        b = 10.0 if pos > 0.5 else -10.0
        return LinearClassifier(np.zeros(ds.d), b, constant=True)

    Z = np.hstack([X, np.ones((ds.n, 1))])
    theta = np.zeros(ds.d + 1)
    theta[-1] = np.log(pos / (1.0 - pos))
    reg = np.full(ds.d + 1, config.l2)
    reg[-1] = 0.0
    s = 2.0 * y - 1.0

    def objective(th):
        return float(w @ _log1pexp(-s * (Z @ th)) + 0.5 * np.sum(reg * th * th))

    f = objective(theta)
    for _ in range(config.max_newton):
        p = _sigmoid(Z @ theta)
        grad = Z.T @ (w * (p - y)) + reg * theta
        if np.linalg.norm(grad) < config.tol:
            break
        H = (Z * (w * p * (1.0 - p))[:, None]).T @ Z + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f - 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            break
        theta, f = cand, fc
    return LinearClassifier(theta[:-1], theta[-1])


class _Moments:
    """Signed parity moments of a hard classifier's 0-1 errors.

    For CRP with V = Y: gamma[a, y] = err(a, y) - err(y). For RP:
    gamma[a] = err(a) - err. Each enters twice, as +gamma <= eps and
    -gamma <= eps.
    """

    def __init__(self, ds: LabeledDataset, kind: FairKind):
        self.ds = ds
        self.kind = kind
        n_a, n_y = len(ds.groups), len(ds.labels)
        if kind is FairKind.CRP:
            cell = ds.a * n_y + ds.y
            counts = np.bincount(cell, minlength=n_a * n_y)
            if np.any(counts == 0):
                i, j = divmod(int(np.flatnonzero(counts == 0)[0]), n_y)
                raise EmptyCellError(ds.groups[i], ds.labels[j])
            col = np.bincount(ds.y, minlength=n_y)
            # row coefficient matrix: gamma = C @ err, C is (n_a*n_y, n)
            C = np.zeros((n_a * n_y, ds.n))
            C[cell, np.arange(ds.n)] = 1.0 / counts[cell]
            for a in range(n_a):
                for yv in range(n_y):
                    C[a * n_y + yv, ds.y == yv] -= 1.0 / col[yv]
        else:
            counts = np.bincount(ds.a, minlength=n_a)
            if np.any(counts == 0):
                raise EmptyCellError(ds.groups[int(np.flatnonzero(counts == 0)[0])], "all")
            C = np.zeros((n_a, ds.n))
            C[ds.a, np.arange(ds.n)] = 1.0 / counts[ds.a]
            C -= 1.0 / ds.n
        self.C = C

    @property
    def size(self) -> int:
        return 2 * self.C.shape[0]

    def gamma(self, err: np.ndarray) -> np.ndarray:
        g = self.C @ err
        return np.concatenate([g, -g])

    def row_costs(self, lam: np.ndarray) -> np.ndarray:
        k = self.C.shape[0]
        net = lam[:k] - lam[k:]
        return 1.0 / self.ds.n + net @ self.C


def _best_response(ds, moments, lam, config) -> LinearClassifier:
    cost = moments.row_costs(lam)
    # negative cost on a row means erring there is rewarded: flip its label
    labels = np.where(cost >= 0, ds.y, 1 - ds.y)
    return weighted_logistic_fit(ds, np.abs(cost), config, labels=labels)


def train_constrained(ds: LabeledDataset, constraint: ConstraintSpec,
                      config: SolverConfig = SolverConfig()) -> RandomizedClassifier:
    """Exponentiated-gradient reductions with a logistic best response.

    No early stopping: all ``config.iterations`` rounds are run.
    """
    moments = _Moments(ds, constraint.kind)
    K = moments.size
    B = config.bound if config.bound is not None else 1.0 / max(constraint.eps, 1e-3)
    eta0 = config.eta0 / B if config.scale_eta else config.eta0
    theta = np.zeros(K)
    members, errs = [], []
    history = []
    for t in range(1, config.iterations + 1):
        lam = B * np.exp(theta - np.logaddexp.reduce(np.append(theta, 0.0)))
        h = _best_response(ds, moments, lam, config)
        err = (h.predict(ds.X) != ds.y).astype(float)
        gamma = moments.gamma(err)
        members.append(h)
        errs.append(err)
        history.append(gamma)
        theta = theta + (eta0 / np.sqrt(t)) * (gamma - constraint.eps)

    T = len(members)
    if config.selection == "average":
        return RandomizedClassifier(tuple(members), np.full(T, 1.0 / T))
    if config.selection == "lp":
        return _lp_mixture(members, np.array(errs), moments, constraint.eps)
    # best_gap: the running average with the smallest worst-case violation
    errs = np.array(errs)
    best_k, best_v = 1, np.inf
    for k in range(1, T + 1):
        viol = np.max(moments.gamma(errs[:k].mean(axis=0))) - constraint.eps
        score = max(viol, 0.0)
        if score < best_v - 1e-12:
            best_k, best_v = k, score
    return RandomizedClassifier(tuple(members[:best_k]), np.full(best_k, 1.0 / best_k))


def baseline_constraint(kind: FairKind = FairKind.CRP) -> ConstraintSpec:
    return ConstraintSpec(kind, 10.0)


@dataclass
class Evaluation:
    accuracy: float
    profile: RiskProfile
    gap: float


def evaluate(model: RandomizedClassifier, ds: LabeledDataset, space: GroupSpace | None = None,
             kind: FairKind = FairKind.CRP) -> Evaluation:
    """Expected 0-1 accuracy, risk profile and parity gap of a mixture."""
    if ds.n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    space = ds.space() if space is None else space
    loss = model.expected_loss(ds)
    profile = empirical_risk_profile(loss, ds, space, strict=False)
    observed = profile.mask if profile.mask is not None else np.ones(space.shape, bool)
    vals = profile.values
    if kind is FairKind.RP:
        gap = float(vals[observed].max() - vals[observed].min())
    else:
        gaps = [np.ptp(vals[observed[:, j], j]) for j in range(space.shape[1]) if observed[:, j].any()]
        gap = float(max(gaps)) if gaps else 0.0
    return Evaluation(1.0 - float(loss.mean()), profile, gap)


# -- flat text serialization -------------------------------------------------------

def dumps_model(model: RandomizedClassifier) -> str:
    """``members <k>`` then per member: ``weights ...``, ``bias b``, ``mix m``."""
    lines = [f"members {len(model.members)}"]
    for m, mw in zip(model.members, model.mix_weights):
        lines.append("weights " + " ".join(repr(float(v)) for v in m.weights))
        lines.append(f"bias {float(m.bias)!r}")
        lines.append(f"mix {float(mw)!r}")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> RandomizedClassifier:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0][0] != "members":
        raise ValueError("line 1: expected 'members <count>'")
    k = int(lines[0][1])
    if len(lines) != 1 + 3 * k:
        raise ValueError(f"expected {1 + 3 * k} lines for {k} members, got {len(lines)}")
    members, mix = [], []
    for i in range(k):
        wl, bl, ml = lines[1 + 3 * i: 4 + 3 * i]
        if (wl[0], bl[0], ml[0]) != ("weights", "bias", "mix"):
            raise ValueError(f"line {2 + 3 * i}: malformed member block")
        members.append(LinearClassifier(np.array([float(v) for v in wl[1:]]), float(bl[1])))
        mix.append(float(ml[1]))
    return RandomizedClassifier(tuple(members), np.array(mix))


def _lp_mixture(members, errs, moments, eps) -> RandomizedClassifier:
    """Reweight the rounds' classifiers by the fair LP over their risk points.

    Minimizes training error subject to every moment <= eps + s with a
    heavily penalized slack s >= 0, so an infeasible tolerance still yields
    the least-violating mixture.
    """
    from .lp import solve_lp

    # unique hypotheses only
    keys, uniq = {}, []
    for i, e in enumerate(errs):
        key = e.tobytes()
        if key not in keys:
            keys[key] = len(uniq)
            uniq.append(i)
    E = errs[uniq]
    T = len(uniq)
    G = np.stack([moments.gamma(e) for e in E], axis=1)  # (K, T)
    K = G.shape[0]
    err = E.mean(axis=1)
    # vars: q (T), s (1), slack per moment (K)
    c = np.concatenate([err, [1e3], np.zeros(K)])
    A = np.zeros((1 + K, T + 1 + K))
    A[0, :T] = 1.0
    A[1:, :T] = G
    A[1:, T] = -1.0
    A[1:, T + 1:] = np.eye(K)
    b = np.concatenate([[1.0], np.full(K, eps)])
    res = solve_lp(c, A, b)
    q = np.clip(res.x[:T], 0.0, None)
    keep = q > 1e-12
    q = q[keep] / q[keep].sum()
    return RandomizedClassifier(tuple(members[i] for i, k in zip(uniq, keep) if k), q)

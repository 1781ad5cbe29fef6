"""Seeded random problem instances in profile space.

Target-domain instances are built so the unconstrained optimum under the
target marginal is a single fair vertex: a fair point R* is drawn first,
and every other vertex is rejection-sampled until it is worse than R*
under ``p_star`` by a fixed margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FairKind, FairSubspace, GroupMarginal, GroupSpace
from .geometry import FairBasis, InfeasibleFairError, RiskPolytope, minimize_linear, minimize_linear_fair


@dataclass
class Instance:
    poly: RiskPolytope
    fair: FairSubspace
    p_star: GroupMarginal
    p_tilde: GroupMarginal
    r_star_index: int
    bias_kind: str


BIAS_KINDS = ("general", "label", "local", "orthogonal")


def crp_space(n_groups: int = 2, n_disc: int = 2) -> GroupSpace:
    return GroupSpace.crp(tuple(str(a) for a in range(n_groups)), tuple(str(v) for v in range(n_disc)))


def random_target_instance(
    rng: np.random.Generator,
    space: GroupSpace,
    kind: FairKind = FairKind.CRP,
    n_vertices: int = 5,
    bias: str = "general",
    margin: float = 0.005,
) -> Instance:
    """Random polytope whose target optimum is a unique fair vertex.

    ``bias`` picks how the training marginal departs from the target:
    ``"orthogonal"`` moves only along F-perp, ``"label"`` rescales whole
    disc_value columns, ``"local"`` is a small arbitrary perturbation and
    ``"general"`` is an unrelated draw.
    """
    fair = FairSubspace(space, kind)
    shape = space.shape
    p_star = rng.dirichlet(np.full(shape[0] * shape[1], 3.0)).reshape(shape)
    if kind is FairKind.RP:
        r_star = np.full(shape, rng.uniform(0.1, 0.5))
    else:
        r_star = np.broadcast_to(rng.uniform(0.1, 0.5, size=(1, shape[1])), shape).copy()
    floor = float(np.sum(p_star * r_star)) + margin
    others = []
    while len(others) < n_vertices - 1:
        v = rng.uniform(0.0, 1.0, size=shape)
        if rng.random() < 0.7:
            # slide onto a level set just above R*'s so the optimum is fragile
            level = floor + rng.exponential(0.02)
            v = v + (level - np.sum(p_star * v)) * p_star / np.sum(p_star**2)
        if np.sum(p_star * v) >= floor and v.min() >= 0.0:
            others.append(v)
    k = int(rng.integers(n_vertices))
    verts = others[:k] + [r_star] + others[k:]
    poly = RiskPolytope(space, np.stack(verts))
    p_tilde = training_marginal(rng, p_star, fair, bias)
    return Instance(
        poly=poly,
        fair=fair,
        p_star=GroupMarginal(space, p_star / p_star.sum()),
        p_tilde=GroupMarginal(space, p_tilde / p_tilde.sum()),
        r_star_index=k,
        bias_kind=bias,
    )


def training_marginal(rng, p_star: np.ndarray, fair: FairSubspace, bias: str) -> np.ndarray:
    shape = p_star.shape
    if bias == "general":
        return rng.dirichlet(np.ones(p_star.size)).reshape(shape)
    if bias == "label":
        out = p_star * np.exp(rng.normal(scale=1.0, size=(1, shape[1])))
        return out / out.sum()
    if bias == "local":
        out = p_star * np.exp(rng.normal(scale=0.3, size=shape))
        return out / out.sum()
    if bias == "orthogonal":
        basis = FairBasis.of(fair).vectors
        if basis.shape[0] == 0:
            return p_star.copy()
        d = (rng.normal(size=basis.shape[0]) @ basis).reshape(shape)
        neg = d < 0
        # largest step keeping every cell non-negative
        t_max = np.min(p_star[neg] / -d[neg]) if neg.any() else 1.0
        out = p_star + rng.uniform(0.05, 0.95) * t_max * d
        return np.clip(out, 0.0, None)
    raise ValueError(f"unknown bias kind {bias!r}")


def random_rp2_instance(rng: np.random.Generator, n_vertices: int | None = None):
    """Two-group RP polytope with a unique training argmin and a fair point.

    Returns ``(poly, p_tilde, majority_index, r_tilde, r_tilde_fair)``;
    redraws until the hull meets the diagonal and the argmin is unique.
    """
    space = GroupSpace.rp(("0", "1"))
    fair = FairSubspace(space, FairKind.RP)
    while True:
        n = int(rng.integers(3, 9)) if n_vertices is None else n_vertices
        poly = RiskPolytope(space, rng.uniform(0.0, 1.0, size=(n, 2, 1)))
        w = rng.uniform(0.5, 1.0)
        maj = int(rng.integers(2))
        p_tilde = np.empty(2)
        p_tilde[maj], p_tilde[1 - maj] = w, 1.0 - w
        _, argmin = minimize_linear(poly, p_tilde)
        if len(argmin) != 1:
            continue
        try:
            _, rf, _ = minimize_linear_fair(poly, p_tilde, fair)
        except InfeasibleFairError:
            continue
        return poly, p_tilde, maj, poly.vertices[argmin[0]].ravel(), rf.values.ravel()

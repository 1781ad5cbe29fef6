"""Achievable risk sets as polytopes, and linear risk minimization over them.

A risk polytope is stored by its vertices only; randomized classifiers make
the convex hull achievable, so every LP here is over mixture weights. The
recovery check decides membership in ``normal cone + F-perp`` by LP
feasibility over coordinates of F-perp, which needs no facet enumeration.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    FairSubspace,
    GroupMarginal,
    GroupSpace,
    RiskProfile,
    ShapeError,
    _array_of,
    fairness_gap,
    project_fair,
    project_fair_perp,
)
from .lp import solve_lp


class InfeasibleFairError(ValueError):
    """The hull of the polytope misses the fair subspace.

    ``certificate`` is a unit vector ``g`` in F-perp with ``<g, V_i> <= -margin``
    for every vertex, while ``<g, f> = 0`` for every fair ``f``.
    """

    def __init__(self, certificate: np.ndarray, margin: float):
        super().__init__(f"polytope does not meet the fair subspace (margin {margin:.3g})")
        self.certificate = certificate
        self.margin = margin


class AssumptionError(ValueError):
    """The unconstrained optimum under the target marginal is not fair."""


@dataclass(frozen=True)
class RiskPolytope:
    space: GroupSpace
    vertices: np.ndarray  # (n, |A|, |V|)

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim == 2 and self.space.shape[1] == 1:
            V = V[:, :, None]
        if V.ndim != 3 or V.shape[1:] != self.space.shape or V.shape[0] == 0:
            raise ShapeError(f"need (n>=1, {self.space.shape}) vertices, got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite")
        V = _dedupe(V)
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @classmethod
    def from_profiles(cls, profiles: Sequence[RiskProfile]) -> "RiskPolytope":
        if not profiles:
            raise ValueError("empty polytope")
        space = profiles[0].space
        if any(p.space != space for p in profiles):
            raise ShapeError("profiles live in different spaces")
        return cls(space, np.stack([p.values for p in profiles]))

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.vertices.reshape(len(self), -1)

    def vertex(self, i: int) -> RiskProfile:
        return RiskProfile(self.space, self.vertices[i])

    def tau(self) -> float:
        return 1e-7 * (1.0 + float(np.abs(self.vertices).max()))

    def mixture(self, weights) -> RiskProfile:
        w = np.asarray(weights, dtype=float)
        return RiskProfile(self.space, np.tensordot(w, self.vertices, axes=1))


def _dedupe(V: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    keep = []
    flat = V.reshape(V.shape[0], -1)
    for i in range(V.shape[0]):
        if all(np.max(np.abs(flat[i] - flat[j])) > tol for j in keep):
            keep.append(i)
    return V[keep].copy()


@dataclass(frozen=True)
class FairBasis:
    """Orthonormal basis of F-perp, flattened to profile-space vectors."""

    fair: FairSubspace
    vectors: np.ndarray  # (k, |A|*|V|)

    @classmethod
    def of(cls, fair: FairSubspace) -> "FairBasis":
        shape = fair.space.shape
        size = int(np.prod(shape))
        P = np.stack(
            [project_fair_perp(np.eye(size)[k].reshape(shape), fair).ravel() for k in range(size)]
        )
        # P is the symmetric projector onto F-perp; its unit eigenvectors span it
        evals, evecs = np.linalg.eigh(P)
        vecs = evecs[:, evals > 0.5].T
        # sign convention: first non-negligible entry positive
        for v in vecs:
            nz = np.flatnonzero(np.abs(v) > 1e-9)
            if nz.size and v[nz[0]] < 0:
                v *= -1
        return cls(fair, vecs)

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class RecoveryVerdict:
    recoverable: bool
    r_star: RiskProfile
    fair_optimum_under_bias: RiskProfile
    # recoverable: the F-perp element f; otherwise mixture weights of a fair
    # hull point with strictly lower training risk than R*
    certificate: np.ndarray
    r_star_index: int = 0
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ThresholdResult:
    """Target majority mass beyond which fair risk minimization does not help.

    ``comparator`` is ``">="`` when HARM holds for ``p >= threshold`` and
    ``"<="`` when the unconstrained minimizer favours the minority, which
    flips the inequality. ``threshold`` is None when the unconstrained
    optimum already has equal group risks.
    """

    threshold: float | None
    comparator: str
    numerator: float
    denominator: float

    def advantage(self, p: float) -> float:
        """<P*, R~ - R~_F> at majority mass p; <= 0 means fairness harms."""
        return self.numerator - p * self.denominator

    def verdict(self, p: float) -> str:
        if self.threshold is None:
            return "HARM" if self.numerator <= 0 else "HELP"
        if self.comparator == ">=":
            return "HARM" if p >= self.threshold else "HELP"
        return "HARM" if p <= self.threshold else "HELP"


def _cost_array(cost, space: GroupSpace) -> np.ndarray:
    if isinstance(cost, (GroupMarginal, RiskProfile)) and cost.space != space:
        raise ShapeError("cost and polytope live in different spaces")
    return _array_of(cost, space)


def minimize_linear(poly: RiskPolytope, cost) -> tuple[float, list[int]]:
    """Minimum of <cost, R> over the hull; it is attained at vertices."""
    c = _cost_array(cost, poly.space).ravel()
    vals = poly.flat @ c
    best = float(vals.min())
    tau = poly.tau()
    return best, [int(i) for i in np.flatnonzero(vals <= best + tau)]


def minimize_linear_fair(
    poly: RiskPolytope, cost, fair: FairSubspace
) -> tuple[float, RiskProfile, np.ndarray]:
    """Solve min <cost, R> over conv(vertices) intersected with F.

    Returns ``(value, profile, mixture_weights)``.
    """
    if fair.space != poly.space:
        raise ShapeError("fair subspace and polytope live in different spaces")
    c = _cost_array(cost, poly.space).ravel()
    basis = FairBasis.of(fair).vectors
    flat = poly.flat
    A = np.vstack([np.ones(len(poly)), basis @ flat.T])
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    res = solve_lp(flat @ c, A, b)
    if res.status == "infeasible":
        y = res.farkas
        g = basis.T @ y[1:]
        norm = np.linalg.norm(g)
        g = g / norm
        margin = float(-(flat @ g).max())
        raise InfeasibleFairError(g.reshape(poly.space.shape), margin)
    if res.status != "optimal":  # pragma: no cover - bounded by construction
        raise RuntimeError(f"fair LP ended with status {res.status}")
    w = res.x
    profile = poly.mixture(w)
    # drop numerical drift off F
    profile = RiskProfile(poly.space, project_fair(profile, fair))
    return float(flat @ c @ w), profile, w


def rp_threshold(r_tilde, r_tilde_fair, majority_index: int = 0, tau: float = 1e-12) -> ThresholdResult:
    """Majority-mass threshold for two-group risk parity.

    With ``1`` the majority and ``0`` the minority, the threshold is
    ``(R0 - RF0) / (R0 - R1)``.
    """
    r = np.asarray(r_tilde, dtype=float).ravel()
    rf = np.asarray(r_tilde_fair, dtype=float).ravel()
    if r.shape != (2,) or rf.shape != (2,):
        raise NotImplementedError("threshold is only defined for two groups and trivial V")
    if majority_index not in (0, 1):
        raise ValueError("majority_index must be 0 or 1")
    minority = 1 - majority_index
    r1, r0 = r[majority_index], r[minority]
    rf0 = rf[minority]
    num = r0 - rf0
    den = r0 - r1
    if abs(den) <= tau:
        return ThresholdResult(None, ">=", float(num), float(den))
    return ThresholdResult(float(num / den), ">=" if den > 0 else "<=", float(num), float(den))


def normal_cone_member(poly: RiskPolytope, point, c, tau: float | None = None) -> bool:
    """Is ``c`` in the normal cone of the hull at ``point``?"""
    tau = poly.tau() if tau is None else tau
    p = _array_of(point, poly.space).ravel()
    cv = _array_of(c, poly.space).ravel()
    return bool(np.all((poly.flat - p) @ cv <= tau))


def bayes_fair_check(poly: RiskPolytope, p_star, fair: FairSubspace) -> bool:
    _, argmin = minimize_linear(poly, p_star)
    tau = poly.tau()
    return all(fairness_gap(poly.vertices[i], fair) <= tau for i in argmin)


def r_star_index(poly: RiskPolytope, p_star) -> int:
    """Lexicographically smallest vertex among the target argmin."""
    _, argmin = minimize_linear(poly, p_star)
    return min(argmin, key=lambda i: tuple(poly.flat[i]))


def recovery_condition(poly: RiskPolytope, p_star, p_tilde, fair: FairSubspace) -> RecoveryVerdict:
    """Decide whether fair risk minimization under ``p_tilde`` lands on R*.

    Tests ``Pi_F(p* - p~) - p*`` for membership in the normal cone at R*
    plus F-perp, i.e. whether some ``f`` in F-perp gives
    ``<x - f, V_i - R*> <= 0`` for every vertex.
    """
    space = poly.space
    ps = _cost_array(p_star, space)
    pt = _cost_array(p_tilde, space)
    if not bayes_fair_check(poly, ps, fair):
        raise AssumptionError("unconstrained minimizer under the target marginal is not fair")
    k = r_star_index(poly, ps)
    r_star = poly.flat[k]
    x = (project_fair(ps - pt, fair) - ps).ravel()
    basis = FairBasis.of(fair).vectors
    D = poly.flat - r_star
    D = D[np.max(np.abs(D), axis=1) > 0]
    nb = basis.shape[0]

    res_info = {}
    if D.shape[0] == 0:
        ok, cert = True, np.zeros_like(x)
    elif nb == 0:
        ok = bool(np.all(D @ x <= poly.tau()))
        cert = np.zeros_like(x)
    else:
        # sum_j (c+_j - c-_j) <b_j, d_i> - s_i = <x, d_i>,  c+, c-, s >= 0
        G = D @ basis.T
        A = np.hstack([G, -G, -np.eye(D.shape[0])])
        res = solve_lp(np.zeros(A.shape[1]), A, D @ x)
        ok = res.status == "optimal"
        res_info["lp_infeasibility"] = res.infeasibility
        cert = basis.T @ (res.x[:nb] - res.x[nb : 2 * nb]) if ok else None

    value, fair_opt, weights = minimize_linear_fair(poly, pt, fair)
    if ok:
        cert = cert.reshape(space.shape)
    else:
        # a fair mixture whose training risk undercuts R*
        cert = weights
    return RecoveryVerdict(
        recoverable=ok,
        r_star=poly.vertex(k),
        fair_optimum_under_bias=fair_opt,
        certificate=cert,
        r_star_index=k,
        details={"x": x.reshape(space.shape), "fair_value_under_bias": value, **res_info},
    )


def decompose_bias(p_star, p_tilde, fair: FairSubspace) -> tuple[np.ndarray, np.ndarray]:
    """Split p~ - p* into its F-perp part (recoverable) and its F part."""
    delta = _array_of(p_tilde, fair.space) - _array_of(p_star, fair.space)
    return project_fair_perp(delta, fair), project_fair(delta, fair)


def orthogonality_check(p_star, p_tilde, fair: FairSubspace, tol: float = 1e-9) -> bool:
    _, residual = decompose_bias(p_star, p_tilde, fair)
    return bool(np.max(np.abs(residual)) <= tol)


# -- fixtures -----------------------------------------------------------------

def polytope_to_csv(poly: RiskPolytope) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(poly.space.cell_names())
    for row in poly.flat:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def polytope_from_csv(text: str) -> RiskPolytope:
    """One vertex per row; header cells are ``group|disc_value``."""
    reader = csv.reader(io.StringIO(text))
    rows = [(reader.line_num, r) for r in reader if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError("line 1: empty polytope file")
    head_line, header = rows[0]
    groups, discs = [], []
    for name in header:
        if "|" not in name:
            raise ValueError(f"line {head_line}: header cell {name!r} is not 'group|disc_value'")
        a, v = name.split("|", 1)
        if a not in groups:
            groups.append(a)
        if v not in discs:
            discs.append(v)
    space = GroupSpace(tuple(groups), tuple(discs))
    if header != space.cell_names():
        raise ValueError(f"line {head_line}: header cells must be in group-major order")
    verts = []
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            verts.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not verts:
        raise ValueError("polytope file has no vertices")
    return RiskPolytope(space, np.array(verts).reshape(len(verts), *space.shape))


def load_polytope(path) -> RiskPolytope:
    return polytope_from_csv(Path(path).read_text())


def save_polytope(path, poly: RiskPolytope) -> None:
    Path(path).write_text(polytope_to_csv(poly))

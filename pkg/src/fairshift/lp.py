"""Dense two-phase simplex for the small LPs that show up in profile space.

Problems are taken in standard form::

    minimize c @ x  subject to  A @ x = b,  x >= 0

Bland's rule is used for both entering and leaving variables, so the
method terminates on degenerate problems. Sizes here are a few dozen
variables at most; nothing is sparse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-12
_COST_TOL = 1e-11


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    value: float | None = None
    # y with y @ A <= 0 and y @ b > 0 when infeasible
    farkas: np.ndarray | None = None
    infeasibility: float = 0.0
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        for r in range(T.shape[0]):
            if r != row and T[r, col] != 0.0:
                T[r] -= T[r, col] * T[row]
        self.basis[row - 1] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        T = self.T
        while True:
            if self.iterations >= max_iter:
                raise RuntimeError("simplex iteration limit reached")
            reduced = T[0, :-1]
            candidates = np.flatnonzero((reduced < -_COST_TOL) & allowed)
            if candidates.size == 0:
                return "optimal"
            col = int(candidates[0])
            column = T[1:, col]
            pos = np.flatnonzero(column > _PIVOT_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = T[1:, -1][pos] / column[pos]
            best = ratios.min()
            # Bland: among minimum ratios, leave the smallest basic index
            ties = pos[ratios <= best + 1e-14 * max(1.0, abs(best))]
            row = min(ties, key=lambda i: self.basis[i]) + 1
            self.pivot(int(row), col)


def solve_lp(c, A_eq, b_eq, max_iter: int = 10_000, feas_tol: float = FEAS_TOL) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b = np.asarray(b_eq, dtype=float).ravel()
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError(f"inconsistent LP dimensions: c{c.shape}, A{A.shape}, b{b.shape}")
    if m == 0:
        if np.any(c < -_COST_TOL):
            return LPResult("unbounded")
        return LPResult("optimal", x=np.zeros(n), value=0.0)

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # columns: original (n) | artificial (m) | rhs
    T = np.zeros((m + 1, n + m + 1))
    T[1:, :n] = A
    T[1:, n : n + m] = np.eye(m)
    T[1:, -1] = b
    T[0, :n] = -A.sum(axis=0)
    T[0, -1] = -b.sum()
    tab = _Tableau(T, list(range(n, n + m)))

    allowed = np.ones(n + m, dtype=bool)
    tab.run(allowed, max_iter)
    infeas = -T[0, -1]
    if infeas > feas_tol:
        # phase-1 duals: reduced cost of artificial j is 1 - y_j
        y = (1.0 - T[0, n : n + m]) * sign
        return LPResult("infeasible", farkas=y, infeasibility=float(infeas),
                        iterations=tab.iterations)

    # drive artificials out of the basis; drop rows that turn out redundant
    keep = []
    for r in range(m):
        if tab.basis[r] >= n:
            row = T[r + 1, :n]
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            if nz.size:
                tab.pivot(r + 1, int(nz[0]))
                keep.append(r)
        else:
            keep.append(r)
    rows = [0] + [r + 1 for r in keep]
    T = T[rows][:, list(range(n)) + [n + m]]
    basis = [tab.basis[r] for r in keep]
    tab2 = _Tableau(T, basis)
    tab2.iterations = tab.iterations

    # phase 2 objective row: c - c_B B^-1 A
    T[0, :n] = c
    T[0, -1] = 0.0
    for r, j in enumerate(basis, start=1):
        if T[0, j] != 0.0:
            T[0] -= T[0, j] * T[r]
    status = tab2.run(np.ones(n, dtype=bool), max_iter)
    if status == "unbounded":
        return LPResult("unbounded", iterations=tab2.iterations)
    x = np.zeros(n)
    for r, j in enumerate(tab2.basis, start=1):
        x[j] = T[r, -1]
    x[np.abs(x) < 1e-15] = 0.0
    return LPResult("optimal", x=x, value=float(c @ x), iterations=tab2.iterations)

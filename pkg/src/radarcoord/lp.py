"""Dense two-phase tableau simplex with Bland's pivoting rule.

Solves ``min c'x  s.t.  A x <= b,  lb <= x <= ub``. Problems here are tiny
(tens of variables, at most a few hundred rows) so a dense tableau is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-10
PHASE1_TOL = 1e-9


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpError(ValueError):
    """Malformed program (dimension mismatch, lb > ub, NaN data)."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: NDArray
    A: NDArray
    b: NDArray
    lb: NDArray | None = None
    ub: NDArray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        nv = c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, nv)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        lb = np.zeros(nv) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.full(nv, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[1] != nv or A.shape[0] != b.size:
            raise LpError(f"A is {A.shape}, expected ({b.size}, {nv})")
        if lb.size != nv or ub.size != nv:
            raise LpError("bounds must have one entry per variable")
        if np.any(lb > ub) or np.any(lb == np.inf) or np.any(ub == -np.inf):
            raise LpError("need lb <= ub with lb < inf and ub > -inf")
        if np.isnan(A).any() or np.isnan(b).any() or np.isnan(c).any():
            raise LpError("NaN in program data")
        if np.isinf(A).any() or np.isinf(c).any() or np.isinf(b).any():
            raise LpError("infinite coefficient in program data")
        for name, val in (("c", c), ("A", A), ("b", b), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, val)

    @property
    def num_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True, eq=False)
class LpResult:
    status: LpStatus
    x: NDArray | None
    objective: float | None
    iterations: int
    phase1_objective: float


class _Tableau:
    """Rows ``[B^-1 A | B^-1 b]`` plus a reduced-cost row."""

    def __init__(self, rows: NDArray, basis: NDArray):
        self.T = rows
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, cost: NDArray, allowed: NDArray, max_iter: int, stop_at: float | None = None) -> str:
        """Minimize ``cost`` over the current basis with Bland's rule.

        ``cost`` is the reduced-cost row (last entry = -objective), updated
        in place. Returns "optimal", "unbounded" or "stopped".
        """
        T = self.T
        ncols = T.shape[1] - 1
        while True:
            if stop_at is not None and -cost[-1] <= stop_at:
                return "stopped"
            entering = np.flatnonzero((cost[:ncols] < -PIVOT_TOL) & allowed)
            if entering.size == 0:
                return "optimal"
            if self.iterations >= max_iter:
                raise RuntimeError(f"simplex exceeded {max_iter} iterations")
            j = entering[0]
            col = T[:, j]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = T[pos, -1] / col[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
            r = ties[np.argmin(self.basis[ties])]
            self.pivot(r, j)
            cost -= cost[j] * T[r]


def _standard_form(lp: LinearProgram):
    """Map ``x`` to nonnegative ``y`` with ``x = shift + D y``.

    Returns the row block ``A_y y <= b_y`` (upper bounds appended as rows)
    and the pieces needed to map back.
    """
    nv = lp.num_vars
    cols, c_y, D_cols, shift = [], [], [], np.zeros(nv)
    ub_rows = []
    for j in range(nv):
        lo, hi = lp.lb[j], lp.ub[j]
        a = lp.A[:, j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append(a)
            c_y.append(lp.c[j])
            D_cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append(-a)
            c_y.append(-lp.c[j])
            D_cols.append((j, -1.0))
        else:
            cols.extend([a, -a])
            c_y.extend([lp.c[j], -lp.c[j]])
            D_cols.extend([(j, 1.0), (j, -1.0)])
    ny = len(cols)
    A_y = np.column_stack(cols) if cols else np.zeros((lp.A.shape[0], 0))
    b_y = lp.b - lp.A @ shift
    if ub_rows:
        extra = np.zeros((len(ub_rows), ny))
        for k, (col, width) in enumerate(ub_rows):
            extra[k, col] = 1.0
        A_y = np.vstack([A_y, extra])
        b_y = np.concatenate([b_y, [w for _, w in ub_rows]])
    return A_y, b_y, np.asarray(c_y, dtype=float), D_cols, shift


def _recover_x(y: NDArray, D_cols, shift: NDArray) -> NDArray:
    x = shift.copy()
    for k, (j, sign) in enumerate(D_cols):
        x[j] += sign * y[k]
    return x


def solve(lp: LinearProgram, max_iter: int | None = None, phase1_only: bool = False) -> LpResult:
    """Solve ``lp``; with ``phase1_only`` stop as soon as a feasible point is found."""
    A_y, b_y, c_y, D_cols, shift = _standard_form(lp)
    m, ny = A_y.shape

    # Row equilibration makes verdicts invariant to positive row scaling.
    scale = np.abs(A_y).max(axis=1) if ny else np.ones(m)
    empty = scale == 0
    if np.any(empty & (b_y < -FEAS_TOL)):
        return LpResult(LpStatus.INFEASIBLE, None, None, 0, float(-b_y[empty].min()))
    scale[empty] = 1.0
    A_y = A_y / scale[:, None]
    b_y = b_y / scale

    neg = b_y < 0
    n_art = int(neg.sum())
    ncols = ny + m + n_art
    T = np.zeros((m, ncols + 1))
    T[:, :ny] = A_y
    T[np.arange(m), ny + np.arange(m)] = 1.0
    T[:, -1] = b_y
    T[neg] *= -1.0
    art_rows = np.flatnonzero(neg)
    T[art_rows, ny + m + np.arange(n_art)] = 1.0
    basis = ny + np.arange(m)
    basis[art_rows] = ny + m + np.arange(n_art)

    if max_iter is None:
        max_iter = 50 * (m + ncols) + 100
    tab = _Tableau(T, basis)

    # Phase 1: minimize the sum of artificials.
    cost = np.zeros(ncols + 1)
    cost[ny + m :ncols] = 1.0
    for r in art_rows:
        cost -= T[r]
    allowed = np.ones(ncols, dtype=bool)
    tab.run(cost, allowed, max_iter, stop_at=1e-12 if phase1_only else None)
    phase1 = max(0.0, float(-cost[-1]))
    if phase1 > PHASE1_TOL:
        return LpResult(LpStatus.INFEASIBLE, None, None, tab.iterations, phase1)
    if phase1_only:
        z = np.zeros(ncols)
        z[tab.basis] = np.maximum(T[:, -1], 0.0)
        x = _recover_x(z[:ny], D_cols, shift)
        return LpResult(LpStatus.OPTIMAL, x, float(lp.c @ x), tab.iterations, phase1)

    # Drive artificials out of the basis; rows that cannot pivot are redundant.
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if tab.basis[r] >= ny + m:
            row = np.abs(T[r, : ny + m])
            j = int(np.argmax(row))
            if row[j] > PIVOT_TOL:
                tab.pivot(r, j)
            else:
                keep[r] = False
    allowed[ny + m :] = False

    # Phase 2 on the original objective.
    cost = np.zeros(ncols + 1)
    cost[:ny] = c_y
    for r in np.flatnonzero(keep):
        j = tab.basis[r]
        if cost[j] != 0.0:
            cost -= cost[j] * T[r]
    T[~keep] = 0.0
    if tab.run(cost, allowed, max_iter) == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, None, None, tab.iterations, phase1)

    z = np.zeros(ncols)
    rows = np.flatnonzero(keep)
    z[tab.basis[rows]] = np.maximum(T[rows, -1], 0.0)
    x = _recover_x(z[:ny], D_cols, shift)
    return LpResult(LpStatus.OPTIMAL, x, float(lp.c @ x), tab.iterations, phase1)


def feasible(A, b, lb=None, ub=None) -> tuple[bool, NDArray | None]:
    """Is ``{x : A x <= b, lb <= x <= ub}`` nonempty? Returns a witness when it is."""
    A = np.asarray(A, dtype=float)
    nv = A.shape[1] if A.ndim == 2 else (len(lb) if lb is not None else 0)
    res = solve(LinearProgram(np.zeros(nv), A, b, lb, ub), phase1_only=True)
    if res.status is LpStatus.INFEASIBLE:
        return False, None
    return True, res.x


def max_violation(A, b, x, lb=None, ub=None) -> float:
    """Largest constraint violation of ``x`` (0 when feasible)."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.max(A @ x - b, initial=0.0)
    if lb is not None:
        v = max(v, np.max(np.asarray(lb) - x, initial=0.0))
    if ub is not None:
        v = max(v, np.max(x - np.asarray(ub), initial=0.0))
    return float(v)

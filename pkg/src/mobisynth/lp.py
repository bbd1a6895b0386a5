"""Dense two-phase simplex for small, bounded linear programs.

Problems here have a few dozen variables, so a full tableau with Bland's
anti-cycling rule is fast enough and easy to audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, UnboundedError

PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class LinearProgram:
    """maximize ``c @ x`` s.t. ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``, ``lb <= x <= ub``.

    All bounds must be finite. Row names are used in infeasibility reports.
    """

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    ub_names: tuple[str, ...] = ()
    eq_names: tuple[str, ...] = ()
    var_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.c)
        arrays = {
            "c": np.asarray(self.c, float),
            "A_ub": np.asarray(self.A_ub, float).reshape(-1, n),
            "b_ub": np.asarray(self.b_ub, float).reshape(-1),
            "A_eq": np.asarray(self.A_eq, float).reshape(-1, n),
            "b_eq": np.asarray(self.b_eq, float).reshape(-1),
            "lb": np.asarray(self.lb, float).reshape(-1),
            "ub": np.asarray(self.ub, float).reshape(-1),
        }
        for k, v in arrays.items():
            object.__setattr__(self, k, v)
        if self.A_ub.shape[0] != self.b_ub.shape[0] or self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise ValueError("constraint rows and right-hand sides disagree in length")
        if self.lb.shape[0] != n or self.ub.shape[0] != n:
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("variable bounds must be finite")
        if not self.ub_names:
            object.__setattr__(self, "ub_names", tuple(f"ub[{i}]" for i in range(self.A_ub.shape[0])))
        if not self.eq_names:
            object.__setattr__(self, "eq_names", tuple(f"eq[{i}]" for i in range(self.A_eq.shape[0])))
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x[{i}]" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.c)

    def with_objective(self, c: np.ndarray) -> "LinearProgram":
        return LinearProgram(np.asarray(c, float), self.A_ub, self.b_ub, self.A_eq, self.b_eq,
                             self.lb, self.ub, self.ub_names, self.eq_names, self.var_names)

    def violations(self, x: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Names of constraints ``x`` violates by more than ``tol``."""
        x = np.asarray(x, float)
        out = []
        for name, row, b in zip(self.ub_names, self.A_ub, self.b_ub):
            if row @ x > b + tol:
                out.append(name)
        for name, row, b in zip(self.eq_names, self.A_eq, self.b_eq):
            if abs(row @ x - b) > tol:
                out.append(name)
        for i, name in enumerate(self.var_names):
            if x[i] < self.lb[i] - tol or x[i] > self.ub[i] + tol:
                out.append(f"bounds({name})")
        return out


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int
    basis: tuple[int, ...] = field(default=())


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run(T: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray) -> int:
    """Maximize ``cost @ z`` over the tableau in place (Bland's rule).

    ``T`` holds the constraint rows ``[B^-1 A | B^-1 b]``. Returns the
    iteration count.
    """
    m = T.shape[0]
    iters = 0
    while True:
        cb = cost[basis]
        reduced = cost - cb @ T[:, :-1]
        reduced[basis] = 0.0
        entering = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] > PIVOT_TOL:
                entering = int(j)
                break
        if entering < 0:
            return iters
        col = T[:, entering]
        best_row, best_ratio = -1, np.inf
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = max(T[r, -1], 0.0) / col[r]
                if ratio < best_ratio - PIVOT_TOL or (
                        abs(ratio - best_ratio) <= PIVOT_TOL and basis[r] < basis[best_row]):
                    best_row, best_ratio = r, ratio
        if best_row < 0:
            raise UnboundedError(f"objective unbounded along column {entering}")
        _pivot(T, best_row, entering)
        basis[best_row] = entering
        iters += 1


def solve_lp(lp: LinearProgram) -> LPResult:
    """Return an optimal basic feasible solution (a vertex of the polytope)."""
    n = lp.n
    bad = [f"bounds({lp.var_names[i]})" for i in range(n) if lp.lb[i] > lp.ub[i] + PIVOT_TOL]
    if bad:
        raise InfeasibleError("empty variable range", tuple(bad))

    # shift x = lb + y, y >= 0; upper bounds become rows
    span = lp.ub - lp.lb
    rows_le = [(row, b - row @ lp.lb, name) for row, b, name in zip(lp.A_ub, lp.b_ub, lp.ub_names)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows_le.append((e, span[i], f"bounds({lp.var_names[i]})"))
    rows_eq = [(row, b - row @ lp.lb, name) for row, b, name in zip(lp.A_eq, lp.b_eq, lp.eq_names)]

    n_le = len(rows_le)
    m = n_le + len(rows_eq)
    # columns: y | slack per <= row | artificial per row needing one
    needs_art = [b < 0 for _, b, _ in rows_le] + [True] * len(rows_eq)
    n_art = sum(needs_art)
    width = n + n_le + n_art
    T = np.zeros((m, width + 1))
    basis: list[int] = []
    names: list[str] = []
    art_col = n + n_le
    art_cols: list[int] = []
    for r, (row, b, name) in enumerate(rows_le):
        sign = -1.0 if b < 0 else 1.0
        T[r, :n] = sign * row
        T[r, n + r] = sign
        T[r, -1] = sign * b
        if needs_art[r]:
            T[r, art_col] = 1.0
            basis.append(art_col)
            art_cols.append(art_col)
            art_col += 1
        else:
            basis.append(n + r)
        names.append(name)
    for k, (row, b, name) in enumerate(rows_eq):
        r = n_le + k
        sign = -1.0 if b < 0 else 1.0
        T[r, :n] = sign * row
        T[r, -1] = sign * b
        T[r, art_col] = 1.0
        basis.append(art_col)
        art_cols.append(art_col)
        art_col += 1
        names.append(name)

    iters = 0
    is_art = np.zeros(width, bool)
    is_art[art_cols] = True
    if n_art:
        cost1 = np.zeros(width)
        cost1[is_art] = -1.0
        iters += _run(T, basis, cost1, np.ones(width, bool))
        infeas = -(cost1[basis] @ T[:, -1])
        if infeas > 1e-7 * max(1.0, float(np.abs(T[:, -1]).max())):
            violated = tuple(names[r] for r, b in enumerate(basis) if is_art[b] and T[r, -1] > PIVOT_TOL)
            raise InfeasibleError("linear program is infeasible", violated)
        # drive zero-level artificials out of the basis
        keep = []
        for r, b in enumerate(basis):
            if not is_art[b]:
                keep.append(r)
                continue
            cand = np.flatnonzero((np.abs(T[r, :width]) > PIVOT_TOL) & ~is_art)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
                keep.append(r)
            # otherwise the row is redundant and is dropped
        T = T[keep]
        basis = [basis[r] for r in keep]

    cost2 = np.zeros(width)
    cost2[:n] = lp.c
    iters += _run(T, basis, cost2, ~is_art)
    z = np.zeros(width)
    z[basis] = T[:, -1]
    x = lp.lb + z[:n]
    return LPResult(x, float(lp.c @ x), iters, tuple(int(b) for b in basis))

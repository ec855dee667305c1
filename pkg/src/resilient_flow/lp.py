"""Linear-programming kernel.

Two interchangeable backends sit behind :func:`solve_lp`:

* ``"simplex"`` -- a dense bounded-variable revised simplex (phase 1 / phase 2,
  plus a dual simplex used for warm starts).  It exposes its basis so that
  repeated subproblem solves can be warm-started.
* ``"highs"`` -- scipy's HiGHS interface, used for programs too large for the
  dense kernel (extensive forms, Benders masters).

Both return an :class:`LpResult` with row duals and, for infeasible programs, a
Farkas ray.  Sign conventions (minimisation) for row ``i``::

    <= rows : dual <= 0        >= rows : dual >= 0        == rows : free

so that ``objective == b @ dual + sum(bound terms of reduced costs)``.  A Farkas
ray ``f`` obeys the same sign pattern and satisfies
``b @ f > max_{l <= x <= u} (A.T @ f) @ x``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-10

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)

# programs with rows * cols above this go to HiGHS under method="auto"
DENSE_LIMIT = 15_000


class LpError(RuntimeError):
    pass


class NumericFailure(LpError):
    """The basis became singular or the final solution failed its residual check."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min c @ x  s.t.  A[i] @ x (sense_i) b[i],  lower <= x <= upper``."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = sp.csr_matrix(self.A, dtype=float)
        if A.shape[1] != n and A.shape[0] == 0:
            A = sp.csr_matrix((0, n))
        b = np.asarray(self.b, dtype=float).ravel()
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        senses = tuple(self.senses)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "senses", senses)
        if A.shape != (b.size, n):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, n)}")
        if len(senses) != b.size:
            raise ValueError("one sense per row required")
        bad = [s for s in senses if s not in _SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
            raise ValueError("coefficients must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValueError("bounds may not be +inf (lower) or -inf (upper)")

    @classmethod
    def from_rows(cls, c, rows: Sequence[tuple[Sequence[float], str, float]], bounds=None):
        """Build from ``(coefficients, sense, rhs)`` triples; ``bounds`` defaults to ``[0, inf)``."""
        c = np.asarray(c, dtype=float)
        n = c.size
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        senses = tuple(r[1] for r in rows)
        b = np.array([r[2] for r in rows], dtype=float)
        if bounds is None:
            lower, upper = np.zeros(n), np.full(n, np.inf)
        else:
            lower = np.array([-np.inf if lo is None else lo for lo, _ in bounds], dtype=float)
            upper = np.array([np.inf if hi is None else hi for _, hi in bounds], dtype=float)
        return cls(c, sp.csr_matrix(A), senses, b, lower, upper)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def with_bounds(self, lower=None, upper=None) -> "LinearProgram":
        return dataclasses.replace(
            self,
            lower=self.lower if lower is None else lower,
            upper=self.upper if upper is None else upper,
        )

    def with_rhs(self, b) -> "LinearProgram":
        return dataclasses.replace(self, b=b)

    def with_objective(self, c) -> "LinearProgram":
        return dataclasses.replace(self, c=c)

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def primal_residual(self, x) -> float:
        """Largest violation of any row or bound at ``x``."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self.n_rows:
            r = self.A @ x - self.b
            s = np.array(self.senses)
            viol = max(
                float(np.max(np.where(s == LE, r, 0.0), initial=0.0)),
                float(np.max(np.where(s == GE, -r, 0.0), initial=0.0)),
                float(np.max(np.where(s == EQ, np.abs(r), 0.0), initial=0.0)),
            )
        viol = max(viol, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return viol


@dataclass(frozen=True)
class Basis:
    """Simplex basis over the extended columns ``[x | slacks | artificials]``."""

    basic: tuple[int, ...]
    at_upper: frozenset[int]
    shape: tuple[int, int]  # (rows, structural columns)


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    objective: float = float("nan")
    farkas_ray: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    iterations: int = 0
    method: str = ""
    warm_started: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# certificates


def bound_terms(reduced_costs, lower, upper) -> float:
    """``sum_j min(d_j l_j, d_j u_j)`` restricted to the bound each d_j prices."""
    d = np.asarray(reduced_costs, dtype=float)
    tot = 0.0
    pos = d > 0
    neg = d < 0
    if np.any(pos):
        lo = lower[pos]
        if np.any(~np.isfinite(lo)):
            return -np.inf
        tot += float(d[pos] @ lo)
    if np.any(neg):
        hi = upper[neg]
        if np.any(~np.isfinite(hi)):
            return -np.inf
        tot += float(d[neg] @ hi)
    return tot


def dual_objective(lp: LinearProgram, dual) -> float:
    dual = np.asarray(dual, dtype=float)
    d = lp.c - lp.A.T @ dual
    d = np.where(np.abs(d) < 1e-11, 0.0, d)
    return float(lp.b @ dual) + bound_terms(d, lp.lower, lp.upper)


def farkas_violation(lp: LinearProgram, ray) -> float:
    """``b @ f - max_box (A.T f) @ x`` for a sign-feasible ray scaled to unit max-norm.

    Positive values certify infeasibility; ``-inf`` means the ray is not sign feasible
    or the box maximum is unbounded.
    """
    f = np.asarray(ray, dtype=float)
    scale = np.max(np.abs(f), initial=0.0)
    if scale == 0:
        return -np.inf
    f = f / scale
    s = np.array(lp.senses)
    if np.any(f[s == LE] > 1e-9) or np.any(f[s == GE] < -1e-9):
        return -np.inf
    g = lp.A.T @ f
    g = np.where(np.abs(g) < 1e-12, 0.0, g)
    # max over the box is -(bound terms of -g)
    box_max = -bound_terms(-g, lp.lower, lp.upper)
    return float(lp.b @ f) - box_max


# ---------------------------------------------------------------------------
# dense bounded-variable simplex


class _Simplex:
    """Bounded revised simplex on ``[A | S | I] z = b`` with an explicit basis inverse."""

    REFACTOR_EVERY = 64
    BLAND_AFTER = 40

    def __init__(self, lp: LinearProgram, max_iter: int):
        self.lp = lp
        m, n = lp.n_rows, lp.n_vars
        self.m, self.n = m, n
        A = lp.A.toarray()
        senses = lp.senses
        ineq = [i for i, s in enumerate(senses) if s != EQ]
        self.n_slack = len(ineq)
        S = np.zeros((m, self.n_slack))
        for k, i in enumerate(ineq):
            S[i, k] = 1.0 if senses[i] == LE else -1.0
        self.M = np.hstack([A, S, np.eye(m)])
        self.N = self.M.shape[1]
        self.art0 = n + self.n_slack
        self.lo = np.concatenate([lp.lower, np.zeros(self.n_slack), np.zeros(m)])
        self.hi = np.concatenate([lp.upper, np.full(self.n_slack, np.inf), np.zeros(m)])
        self.b = lp.b.copy()
        self.colnorm = np.sqrt(np.sum(self.M**2, axis=0)) + 1e-12
        self.max_iter = max_iter
        self.iterations = 0
        self.x = np.zeros(self.N)
        self.basic = np.arange(self.art0, self.N)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.Binv = np.eye(m)
        self.pivots_since_refactor = 0

    # -- basis handling -------------------------------------------------

    def _nonbasic_value(self, j, upper_set=()):
        lo, hi = self.lo[j], self.hi[j]
        if j in upper_set and np.isfinite(hi):
            return hi
        if np.isfinite(lo):
            return lo
        if np.isfinite(hi):
            return hi
        return 0.0

    def _refactor(self):
        B = self.M[:, self.basic]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericFailure("singular basis") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise NumericFailure("singular basis")
        self._recompute_basic_values()
        self.pivots_since_refactor = 0

    def _recompute_basic_values(self):
        xn = self.x.copy()
        xn[self.basic] = 0.0
        self.x[self.basic] = self.Binv @ (self.b - self.M @ xn)

    def install(self, basic, at_upper=frozenset()) -> bool:
        basic = np.asarray(basic, dtype=int)
        if basic.size != self.m or len(set(basic.tolist())) != self.m:
            return False
        if np.any(basic < 0) or np.any(basic >= self.N):
            return False
        self.basic = basic.copy()
        self.is_basic[:] = False
        self.is_basic[self.basic] = True
        for j in range(self.N):
            if not self.is_basic[j]:
                self.x[j] = self._nonbasic_value(j, at_upper)
        self._refactor()
        if self.m and np.max(np.abs(self.Binv)) > 1e10:
            return False
        return True

    def basis(self) -> Basis:
        at_upper = frozenset(
            int(j)
            for j in np.flatnonzero(~self.is_basic)
            if np.isfinite(self.hi[j]) and self.x[j] == self.hi[j] and self.hi[j] != self.lo[j]
        )
        return Basis(tuple(int(j) for j in self.basic), at_upper, (self.m, self.n))

    def _pivot(self, r, j, alpha):
        """Replace basic position r by column j; alpha = Binv @ M[:, j]."""
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.is_basic[self.basic[r]] = False
        self.basic[r] = j
        self.is_basic[j] = True
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= self.REFACTOR_EVERY:
            self._refactor()

    # -- primal simplex ---------------------------------------------------

    def primal(self, cost) -> str:
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                raise NumericFailure("simplex iteration limit reached")
            y = cost[self.basic] @ self.Binv
            d = cost - y @ self.M
            nb = ~self.is_basic
            movable = nb & (self.hi > self.lo)
            at_lo = movable & (self.x <= self.lo) & np.isfinite(self.lo)
            at_hi = movable & (self.x >= self.hi) & np.isfinite(self.hi)
            free = movable & ~at_lo & ~at_hi
            cand = (at_lo & (d < -OPT_TOL)) | (at_hi & (d > OPT_TOL)) | (free & (np.abs(d) > OPT_TOL))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "optimal"
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]) / self.colnorm[idx])])
            sigma = 1.0 if d[j] < 0 else -1.0
            alpha = self.Binv @ self.M[:, j]
            step = sigma * alpha
            xb = self.x[self.basic]
            lb = self.lo[self.basic]
            ub = self.hi[self.basic]
            t_best = self.hi[j] - self.lo[j]
            r_best = -1
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = step > PIVOT_TOL
                inc = step < -PIVOT_TOL
                ratios = np.full(self.m, np.inf)
                ratios[dec] = np.where(np.isfinite(lb[dec]), (xb[dec] - lb[dec]) / step[dec], np.inf)
                ratios[inc] = np.where(np.isfinite(ub[inc]), (ub[inc] - xb[inc]) / -step[inc], np.inf)
            ratios = np.maximum(ratios, 0.0)
            if self.m:
                t_min = float(np.min(ratios))
                if t_min < t_best:
                    ties = np.flatnonzero(ratios <= t_min + 1e-12)
                    if bland:
                        r_best = int(ties[np.argmin(self.basic[ties])])
                    else:
                        r_best = int(ties[np.argmax(np.abs(alpha[ties]))])
                    t_best = t_min
            if not np.isfinite(t_best):
                return "unbounded"
            self.iterations += 1
            self.x[j] += sigma * t_best
            self.x[self.basic] = xb - t_best * step
            if t_best <= 1e-12:
                degenerate += 1
                if degenerate > self.BLAND_AFTER:
                    bland = True
            else:
                degenerate = 0
                bland = False
            if r_best >= 0:
                leaving = self.basic[r_best]
                # snap the leaving variable onto the bound it reached
                self.x[leaving] = self.lo[leaving] if step[r_best] > 0 else self.hi[leaving]
                self._pivot(r_best, j, alpha)

    # -- dual simplex -------------------------------------------------------

    def dual(self, cost) -> str:
        """Dual simplex from a dual-feasible basis; returns "optimal" or "infeasible"."""
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                raise NumericFailure("dual simplex iteration limit reached")
            xb = self.x[self.basic]
            lb = self.lo[self.basic]
            ub = self.hi[self.basic]
            below = lb - xb
            above = xb - ub
            infeas = np.maximum(below, above)
            rows = np.flatnonzero(infeas > FEAS_TOL)
            if rows.size == 0:
                return "optimal"
            if bland:
                r = int(rows[np.argmin(self.basic[rows])])
            else:
                r = int(rows[np.argmax(infeas[rows])])
            leave_low = below[r] > FEAS_TOL
            y = cost[self.basic] @ self.Binv
            d = cost - y @ self.M
            rho = self.Binv[r]
            arow = rho @ self.M
            nb = ~self.is_basic & (self.hi > self.lo)
            at_lo = nb & (self.x <= self.lo) & np.isfinite(self.lo)
            at_hi = nb & (self.x >= self.hi) & np.isfinite(self.hi)
            free = nb & ~at_lo & ~at_hi
            # x_Br moves by -arow[j] * delta_j
            if leave_low:
                elig = (at_lo & (arow < -PIVOT_TOL)) | (at_hi & (arow > PIVOT_TOL)) | (free & (np.abs(arow) > PIVOT_TOL))
            else:
                elig = (at_lo & (arow > PIVOT_TOL)) | (at_hi & (arow < -PIVOT_TOL)) | (free & (np.abs(arow) > PIVOT_TOL))
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return "infeasible"
            ratios = np.abs(d[idx]) / np.abs(arow[idx])
            t = float(np.min(ratios))
            ties = idx[ratios <= t + 1e-12]
            if bland:
                j = int(ties[0])
            else:
                j = int(ties[np.argmax(np.abs(arow[ties]))])
            alpha = self.Binv @ self.M[:, j]
            target = lb[r] if leave_low else ub[r]
            delta = (xb[r] - target) / alpha[r]
            self.iterations += 1
            self.x[j] += delta
            self.x[self.basic] = xb - delta * alpha
            leaving = self.basic[r]
            self.x[leaving] = target
            self._pivot(r, j, alpha)
            if t <= 1e-12:
                degenerate += 1
                if degenerate > self.BLAND_AFTER:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def dual_feasible(self, cost) -> bool:
        y = cost[self.basic] @ self.Binv
        d = cost - y @ self.M
        nb = ~self.is_basic & (self.hi > self.lo)
        at_lo = nb & (self.x <= self.lo) & np.isfinite(self.lo)
        at_hi = nb & (self.x >= self.hi) & np.isfinite(self.hi)
        free = nb & ~at_lo & ~at_hi
        bad = (at_lo & (d < -OPT_TOL)) | (at_hi & (d > OPT_TOL)) | (free & (np.abs(d) > OPT_TOL))
        return not np.any(bad)

    def primal_feasible(self) -> bool:
        xb = self.x[self.basic]
        return bool(np.all(xb >= self.lo[self.basic] - FEAS_TOL) and np.all(xb <= self.hi[self.basic] + FEAS_TOL))

    # -- phases -----------------------------------------------------------

    def cold_start(self):
        """Nonbasic structurals at a bound, artificials absorb the residual."""
        self.is_basic[:] = False
        for j in range(self.art0):
            self.x[j] = self._nonbasic_value(j)
        resid = self.b - self.M[:, : self.art0] @ self.x[: self.art0]
        self.basic = np.arange(self.art0, self.N)
        self.is_basic[self.basic] = True
        self.x[self.art0 :] = resid
        self.art_sign = np.where(resid >= 0, 1.0, -1.0)
        self.lo[self.art0 :] = np.where(resid >= 0, 0.0, -np.inf)
        self.hi[self.art0 :] = np.where(resid >= 0, np.inf, 0.0)
        self.Binv = np.eye(self.m)
        self.pivots_since_refactor = 0

    def phase1(self) -> tuple[str, Optional[np.ndarray]]:
        cost = np.zeros(self.N)
        cost[self.art0 :] = self.art_sign
        status = self.primal(cost)
        if status != "optimal":  # phase 1 is bounded below by 0
            raise NumericFailure("phase 1 did not terminate optimally")
        infeas = float(self.art_sign @ self.x[self.art0 :])
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(self.b), initial=0.0))):
            ray = cost[self.basic] @ self.Binv
            return "infeasible", ray
        self._fix_artificials()
        return "feasible", None

    def _fix_artificials(self):
        self.lo[self.art0 :] = 0.0
        self.hi[self.art0 :] = 0.0
        self.x[self.art0 :] = np.where(self.is_basic[self.art0 :], self.x[self.art0 :], 0.0)
        for r in range(self.m):
            j_art = self.basic[r]
            if j_art < self.art0:
                continue
            row = self.Binv[r] @ self.M[:, : self.art0]
            row[self.is_basic[: self.art0]] = 0.0
            cands = np.flatnonzero(np.abs(row) > 1e-7)
            if cands.size == 0:
                continue  # redundant row; artificial stays basic at zero
            j = int(cands[np.argmax(np.abs(row[cands]))])
            alpha = self.Binv @ self.M[:, j]
            self._pivot(r, j, alpha)
        self._recompute_basic_values()


def _result_from_simplex(lp: LinearProgram, s: _Simplex, status: str, warm: bool) -> LpResult:
    if status == "unbounded":
        return LpResult("unbounded", iterations=s.iterations, method="simplex", warm_started=warm)
    cost = np.concatenate([lp.c, np.zeros(s.N - s.n)])
    B = s.M[:, s.basic]
    try:
        xn = s.x.copy()
        xn[s.basic] = 0.0
        s.x[s.basic] = np.linalg.solve(B, s.b - s.M @ xn)
        y = np.linalg.solve(B.T, cost[s.basic])
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("singular final basis") from exc
    x = s.x[: s.n].copy()
    x = np.clip(x, lp.lower, lp.upper)
    if lp.primal_residual(x) > 10 * FEAS_TOL * max(1.0, float(np.max(np.abs(lp.b), initial=0.0))):
        raise NumericFailure(f"primal residual {lp.primal_residual(x):.3e} after simplex")
    d = lp.c - lp.A.T @ y
    return LpResult(
        "optimal",
        x=x,
        dual=y,
        objective=float(lp.c @ x),
        reduced_costs=d,
        basis=s.basis(),
        iterations=s.iterations,
        method="simplex",
        warm_started=warm,
    )


def _simplex_solve(lp: LinearProgram, basis: Optional[Basis] = None, max_iter: int = 50_000) -> LpResult:
    s = _Simplex(lp, max_iter)
    cost = np.concatenate([lp.c, np.zeros(s.N - s.n)])
    if basis is not None and basis.shape == (lp.n_rows, lp.n_vars):
        s.lo[s.art0 :] = 0.0
        s.hi[s.art0 :] = 0.0
        try:
            ok = s.install(basis.basic, basis.at_upper)
        except NumericFailure:
            ok = False
        if ok:
            try:
                if s.primal_feasible():
                    status = s.primal(cost)
                    return _result_from_simplex(lp, s, status, True)
                if s.dual_feasible(cost):
                    status = s.dual(cost)
                    if status == "optimal":
                        return _result_from_simplex(lp, s, status, True)
                    # infeasible: fall through to a cold phase 1 for a clean certificate
            except NumericFailure:
                pass
        s = _Simplex(lp, max_iter)
    s.cold_start()
    if s.m == 0:
        s.art_sign = np.zeros(0)
    phase, ray = s.phase1()
    if phase == "infeasible":
        return _infeasible_result(lp, ray, s.iterations, "simplex")
    status = s.primal(cost)
    return _result_from_simplex(lp, s, status, False)


def _infeasible_result(lp, ray, iterations, method) -> LpResult:
    ray = np.asarray(ray, dtype=float)
    s = np.array(lp.senses)
    # clean round-off on the sign pattern
    ray = np.where((s == LE) & (ray > 0), 0.0, ray)
    ray = np.where((s == GE) & (ray < 0), 0.0, ray)
    scale = np.max(np.abs(ray), initial=0.0)
    if scale > 0:
        ray = ray / scale
    return LpResult("infeasible", farkas_ray=ray, iterations=iterations, method=method)


# ---------------------------------------------------------------------------
# HiGHS backend


def _to_scipy(lp: LinearProgram):
    s = np.array(lp.senses)
    A = lp.A
    le = np.flatnonzero(s == LE)
    ge = np.flatnonzero(s == GE)
    eq = np.flatnonzero(s == EQ)
    ub_rows = np.concatenate([le, ge])
    sign = np.concatenate([np.ones(le.size), -np.ones(ge.size)])
    A_ub = sp.diags(sign) @ A[ub_rows] if ub_rows.size else None
    b_ub = sign * lp.b[ub_rows] if ub_rows.size else None
    A_eq = A[eq] if eq.size else None
    b_eq = lp.b[eq] if eq.size else None
    bounds = np.column_stack([lp.lower, lp.upper])
    return A_ub, b_ub, A_eq, b_eq, bounds, ub_rows, sign, eq


def _highs_solve(lp: LinearProgram) -> LpResult:
    if lp.n_rows == 0:
        # separable box problem
        x = np.where(lp.c > 0, lp.lower, np.where(lp.c < 0, lp.upper, np.clip(0.0, lp.lower, lp.upper)))
        if not np.all(np.isfinite(x)):
            return LpResult("unbounded", method="highs")
        return LpResult("optimal", x=x, dual=np.zeros(0), objective=float(lp.c @ x), reduced_costs=lp.c.copy(), method="highs")
    A_ub, b_ub, A_eq, b_eq, bounds, ub_rows, sign, eq = _to_scipy(lp)
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        y = np.zeros(lp.n_rows)
        if ub_rows.size:
            y[ub_rows] = sign * res.ineqlin.marginals
        if eq.size:
            y[eq] = res.eqlin.marginals
        x = np.clip(res.x, lp.lower, lp.upper)
        return LpResult(
            "optimal",
            x=x,
            dual=y,
            objective=float(lp.c @ x),
            reduced_costs=lp.c - lp.A.T @ y,
            iterations=int(res.nit),
            method="highs",
        )
    if res.status in (2, 3, 4):
        ray, infeas = _highs_farkas(lp)
        if infeas > FEAS_TOL:
            return _infeasible_result(lp, ray, int(res.nit), "highs")
        if res.status == 3:
            return LpResult("unbounded", iterations=int(res.nit), method="highs")
        # infeasibility not confirmed by the elastic program: treat as unbounded
        return LpResult("unbounded", iterations=int(res.nit), method="highs")
    raise NumericFailure(f"HiGHS failed: {res.message}")


def _highs_farkas(lp: LinearProgram):
    """Elastic phase-1 program; its row duals form a Farkas ray when it is positive."""
    m, n = lp.n_rows, lp.n_vars
    s = np.array(lp.senses)
    # a x + e_plus - e_minus (sense) b ; e_plus useful for >= and ==, e_minus for <= and ==
    plus = np.flatnonzero(s != LE)
    minus = np.flatnonzero(s != GE)
    E_plus = sp.csr_matrix((np.ones(plus.size), (plus, np.arange(plus.size))), shape=(m, plus.size))
    E_minus = sp.csr_matrix((-np.ones(minus.size), (minus, np.arange(minus.size))), shape=(m, minus.size))
    A = sp.hstack([lp.A, E_plus, E_minus]).tocsr()
    k = plus.size + minus.size
    c = np.concatenate([np.zeros(n), np.ones(k)])
    lower = np.concatenate([lp.lower, np.zeros(k)])
    upper = np.concatenate([lp.upper, np.full(k, np.inf)])
    elastic = LinearProgram(c, A, lp.senses, lp.b, lower, upper)
    A_ub, b_ub, A_eq, b_eq, bounds, ub_rows, sign, eq = _to_scipy(elastic)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise NumericFailure(f"elastic phase 1 failed: {res.message}")
    y = np.zeros(m)
    if ub_rows.size:
        y[ub_rows] = sign * res.ineqlin.marginals
    if eq.size:
        y[eq] = res.eqlin.marginals
    return y, float(res.fun)


# ---------------------------------------------------------------------------
# public entry points


def _pick_method(lp: LinearProgram, method: str) -> str:
    if method == "auto":
        return "simplex" if lp.n_rows * max(lp.n_vars, 1) <= DENSE_LIMIT else "highs"
    if method not in ("simplex", "highs"):
        raise ValueError(f"unknown LP method {method!r}")
    return method


def _presolve(lp: LinearProgram):
    """Drop empty rows (checking them for consistency); returns (reduced lp, kept rows) or an infeasible result."""
    if lp.n_rows == 0:
        return lp, np.arange(0), None
    nnz = np.diff(lp.A.indptr)
    empty = nnz == 0
    if not np.any(empty):
        return lp, np.arange(lp.n_rows), None
    s = np.array(lp.senses)
    b = lp.b
    for i in np.flatnonzero(empty):
        bad = (s[i] == LE and b[i] < -FEAS_TOL) or (s[i] == GE and b[i] > FEAS_TOL) or (s[i] == EQ and abs(b[i]) > FEAS_TOL)
        if bad:
            ray = np.zeros(lp.n_rows)
            ray[i] = -1.0 if s[i] == LE else (1.0 if b[i] > 0 else -1.0)
            return None, None, LpResult("infeasible", farkas_ray=ray, method="presolve")
    keep = np.flatnonzero(~empty)
    reduced = LinearProgram(lp.c, lp.A[keep], tuple(s[keep]), b[keep], lp.lower, lp.upper)
    return reduced, keep, None


def _expand(lp: LinearProgram, res: LpResult, keep: np.ndarray) -> LpResult:
    if keep.size == lp.n_rows:
        return res
    if res.dual is not None:
        y = np.zeros(lp.n_rows)
        y[keep] = res.dual
        res.dual = y
    if res.farkas_ray is not None:
        f = np.zeros(lp.n_rows)
        f[keep] = res.farkas_ray
        res.farkas_ray = f
    res.basis = None  # basis refers to the reduced program
    return res


def solve_lp(lp: LinearProgram, method: str = "auto") -> LpResult:
    """Solve ``lp`` to optimality or certify infeasibility/unboundedness."""
    reduced, keep, early = _presolve(lp)
    if early is not None:
        return early
    m = _pick_method(reduced, method)
    res = _simplex_solve(reduced) if m == "simplex" else _highs_solve(reduced)
    return _expand(lp, res, keep)


def warm_start_resolve(lp: LinearProgram, previous_basis: Optional[Basis], method: str = "auto") -> LpResult:
    """Re-solve ``lp`` starting from ``previous_basis``; cold start if the basis does not fit."""
    reduced, keep, early = _presolve(lp)
    if early is not None:
        return early
    m = _pick_method(reduced, method)
    if m == "highs" or keep.size != lp.n_rows:
        return _expand(lp, solve_lp(reduced, m), keep)
    return _simplex_solve(reduced, previous_basis)


# ---------------------------------------------------------------------------
# LP-format dump (CPLEX style) for cross-checking against third-party solvers


def to_lp_format(lp: LinearProgram, names: Optional[Sequence[str]] = None) -> str:
    names = list(names) if names is not None else [f"x{j}" for j in range(lp.n_vars)]

    def expr(coefs: dict) -> str:
        parts = []
        for j, v in coefs.items():
            if v == 0:
                continue
            sign = "-" if v < 0 else "+"
            parts.append(f"{sign} {abs(v):.17g} {names[j]}")
        if not parts:
            return "0 " + names[0] if names else "0"
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else s

    out = ["\\ generated by resilient_flow", "Minimize", " obj: " + expr({j: v for j, v in enumerate(lp.c)}), "Subject To"]
    A = lp.A.tocsr()
    for i in range(lp.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        coefs = dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()))
        op = {LE: "<=", GE: ">=", EQ: "="}[lp.senses[i]]
        out.append(f" r{i}: {expr(coefs)} {op} {lp.b[i]:.17g}")
    out.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == -np.inf and hi == np.inf:
            out.append(f" {names[j]} free")
        else:
            los = "-inf" if lo == -np.inf else f"{lo:.17g}"
            his = "+inf" if hi == np.inf else f"{hi:.17g}"
            out.append(f" {los} <= {names[j]} <= {his}")
    out.append("End")
    return "\n".join(out) + "\n"


def from_lp_format(text: str) -> LinearProgram:
    """Parse the subset of LP format written by :func:`to_lp_format`."""
    import re

    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    section = None
    obj_terms: dict[str, float] = {}
    rows: list[tuple[dict, str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    order: list[str] = []
    term_re = re.compile(r"([+-]?)\s*([0-9.eE+-]+)\s+([A-Za-z_][\w.]*)")

    def parse_expr(s: str) -> dict:
        coefs = {}
        for sign, val, name in term_re.findall(s):
            v = float(val) * (-1 if sign == "-" else 1)
            coefs[name] = coefs.get(name, 0.0) + v
            if name not in order:
                order.append(name)
        return coefs

    for ln in lines:
        low = ln.lower()
        if low in ("minimize", "subject to", "bounds", "end"):
            section = low
            continue
        if section == "minimize":
            obj_terms = parse_expr(ln.split(":", 1)[1])
        elif section == "subject to":
            body = ln.split(":", 1)[1]
            m = re.match(r"(.*)\s(<=|>=|=)\s*([-+0-9.eE]+|[-+]?inf)$", body.strip())
            sense = {"<=": LE, ">=": GE, "=": EQ}[m.group(2)]
            rows.append((parse_expr(m.group(1)), sense, float(m.group(3))))
        elif section == "bounds":
            if ln.endswith(" free"):
                bounds[ln[:-5].strip()] = (-np.inf, np.inf)
            else:
                lo, name, hi = [p.strip() for p in ln.split("<=")]
                bounds[name] = (float(lo), float(hi))
                if name not in order:
                    order.append(name)
    names = sorted(order, key=lambda s: int(s[1:]) if s[1:].isdigit() else s)
    idx = {nm: j for j, nm in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for nm, v in obj_terms.items():
        c[idx[nm]] = v
    A = np.zeros((len(rows), n))
    for i, (coefs, _, _) in enumerate(rows):
        for nm, v in coefs.items():
            A[i, idx[nm]] = v
    lower = np.array([bounds.get(nm, (0.0, np.inf))[0] for nm in names])
    upper = np.array([bounds.get(nm, (0.0, np.inf))[1] for nm in names])
    return LinearProgram(c, sp.csr_matrix(A), tuple(r[1] for r in rows), np.array([r[2] for r in rows]), lower, upper)

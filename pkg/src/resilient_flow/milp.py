"""Branch and bound over binary variables on top of :mod:`resilient_flow.lp`.

Best-bound node selection with FIFO tie-break; most-fractional branching with ties
broken by lowest index; the down branch is explored first.  A ``"highs"`` backend
(scipy's MILP interface) is available for programs too large for pure-Python
branching.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .lp import EQ, GE, LE, LinearProgram, NumericFailure, solve_lp, warm_start_resolve

INT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MixedIntegerProgram:
    lp: LinearProgram
    binary_vars: np.ndarray

    def __post_init__(self):
        b = np.unique(np.asarray(self.binary_vars, dtype=int))
        object.__setattr__(self, "binary_vars", b)
        if b.size and (b.min() < 0 or b.max() >= self.lp.n_vars):
            raise ValueError("binary index out of range")
        if np.any(self.lp.lower[b] < 0) or np.any(self.lp.upper[b] > 1):
            raise ValueError("binary variables need bounds within [0, 1]")


@dataclass
class MilpResult:
    status: str  # "optimal" | "infeasible" | "node_limit"
    incumbent: Optional[np.ndarray] = None
    objective: float = float("inf")
    nodes_explored: int = 0
    gap: float = float("inf")
    lower_bound: float = -float("inf")
    bound_trace: list = field(default_factory=list)
    method: str = "bnb"

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _rel_gap(inc: float, lb: float) -> float:
    if not np.isfinite(inc):
        return np.inf
    return max(0.0, inc - lb) / max(1.0, abs(inc))


def _snap(x, binaries):
    x = x.copy()
    x[binaries] = np.round(x[binaries])
    return x


def solve_milp(
    mip: MixedIntegerProgram,
    rel_gap_tol: float = 1e-9,
    node_limit: int = 100_000,
    method: str = "bnb",
    lp_method: str = "auto",
    initial_solution: Optional[np.ndarray] = None,
) -> MilpResult:
    """Minimise ``mip``; ``method`` is ``"bnb"`` (own branch and bound) or ``"highs"``."""
    if method == "highs":
        return _solve_highs(mip, rel_gap_tol, node_limit)
    if method != "bnb":
        raise ValueError(f"unknown MILP method {method!r}")
    return _BranchAndBound(mip, rel_gap_tol, node_limit, lp_method).run(initial_solution)


class _BranchAndBound:
    def __init__(self, mip, rel_gap_tol, node_limit, lp_method):
        self.mip = mip
        self.lp = mip.lp
        self.bin = mip.binary_vars
        self.tol = rel_gap_tol
        self.node_limit = node_limit
        self.lp_method = lp_method
        self.incumbent = None
        self.inc_obj = np.inf
        self.nodes = 0

    def _lp_at(self, lo, hi, basis):
        lp = self.lp.with_bounds(lower=lo, upper=hi)
        if basis is not None:
            return warm_start_resolve(lp, basis, self.lp_method)
        return solve_lp(lp, self.lp_method)

    def _try_incumbent(self, x, obj):
        if obj < self.inc_obj - 1e-12:
            self.incumbent = _snap(x, self.bin)
            self.inc_obj = float(self.lp.c @ self.incumbent)

    def _evaluate_fixed(self, ybin, basis=None):
        """Solve the LP with all binaries fixed to ``ybin``."""
        lo = self.lp.lower.copy()
        hi = self.lp.upper.copy()
        lo[self.bin] = ybin
        hi[self.bin] = ybin
        res = self._lp_at(lo, hi, basis)
        if res.optimal:
            self._try_incumbent(res.x, res.objective)

    def _prune_level(self):
        if not np.isfinite(self.inc_obj):
            return np.inf
        return self.inc_obj - self.tol * max(1.0, abs(self.inc_obj))

    def run(self, initial_solution=None) -> MilpResult:
        lo0, hi0 = self.lp.lower.copy(), self.lp.upper.copy()
        if initial_solution is not None:
            self._evaluate_fixed(np.round(np.asarray(initial_solution)[self.bin]))
        seq = itertools.count()
        heap = []
        root = self._lp_at(lo0, hi0, None)
        self.nodes = 1
        trace = []
        if root.status == "unbounded":
            raise NumericFailure("MILP relaxation is unbounded")
        if root.optimal:
            heapq.heappush(heap, (root.objective, next(seq), lo0, hi0, root))
        lb = root.objective if root.optimal else np.inf
        while heap:
            bound, _, lo, hi, res = heapq.heappop(heap)
            lb = max(lb, min(bound, self.inc_obj))
            trace.append(lb)
            if bound >= self._prune_level():
                continue
            x = res.x
            frac = np.abs(x[self.bin] - np.round(x[self.bin]))
            if np.all(frac <= INT_TOL):
                self._try_incumbent(x, res.objective)
                continue
            if self.nodes == 1 or self.nodes % 25 == 0:
                self._evaluate_fixed(np.round(x[self.bin]), res.basis)
                if bound >= self._prune_level():
                    continue
            # most fractional, lowest index on ties
            score = np.abs(x[self.bin] - np.floor(x[self.bin]) - 0.5)
            score = np.where(frac > INT_TOL, score, np.inf)
            j = int(self.bin[int(np.argmin(score))])
            if self.nodes >= self.node_limit:
                heapq.heappush(heap, (bound, next(seq), lo, hi, res))
                break
            for val in (0.0, 1.0):  # down branch first
                clo, chi = lo.copy(), hi.copy()
                clo[j] = chi[j] = val
                child = self._lp_at(clo, chi, res.basis)
                self.nodes += 1
                if child.optimal and child.objective < self._prune_level():
                    heapq.heappush(heap, (max(child.objective, bound), next(seq), clo, chi, child))
        open_bound = min((h[0] for h in heap), default=np.inf)
        final_lb = min(open_bound, self.inc_obj) if heap else self.inc_obj
        final_lb = max(lb, final_lb) if np.isfinite(final_lb) else lb
        if self.incumbent is None:
            status = "infeasible" if not heap else "node_limit"
            return MilpResult(status, nodes_explored=self.nodes, lower_bound=lb, bound_trace=trace)
        gap = _rel_gap(self.inc_obj, final_lb)
        status = "optimal" if (not heap or gap <= self.tol) else "node_limit"
        return MilpResult(
            status,
            incumbent=self.incumbent,
            objective=self.inc_obj,
            nodes_explored=self.nodes,
            gap=gap,
            lower_bound=final_lb,
            bound_trace=trace,
        )


def _solve_highs(mip: MixedIntegerProgram, rel_gap_tol: float, node_limit: int) -> MilpResult:
    lp = mip.lp
    s = np.array(lp.senses)
    lo = np.where(s == LE, -np.inf, lp.b)
    hi = np.where(s == GE, np.inf, lp.b)
    integrality = np.zeros(lp.n_vars)
    integrality[mip.binary_vars] = 1
    cons = [LinearConstraint(lp.A, lo, hi)] if lp.n_rows else []
    res = milp(
        lp.c,
        constraints=cons,
        integrality=integrality,
        bounds=Bounds(lp.lower, lp.upper),
        options={"mip_rel_gap": max(rel_gap_tol, 1e-12), "node_limit": int(node_limit), "presolve": True},
    )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        status = "infeasible" if res.status == 2 else "node_limit"
        if res.status not in (1, 2):
            raise NumericFailure(f"HiGHS MILP failed: {res.message}")
        return MilpResult(status, nodes_explored=nodes, method="highs")
    x = _snap(np.clip(res.x, lp.lower, lp.upper), mip.binary_vars)
    # polish the continuous part at the integral point
    flo, fhi = lp.lower.copy(), lp.upper.copy()
    flo[mip.binary_vars] = fhi[mip.binary_vars] = x[mip.binary_vars]
    polish = solve_lp(lp.with_bounds(flo, fhi), "highs")
    if polish.optimal:
        x = _snap(polish.x, mip.binary_vars)
    obj = float(lp.c @ x)
    bound = float(getattr(res, "mip_dual_bound", obj))
    if not np.isfinite(bound):
        bound = obj
    bound = min(bound, obj)
    gap = _rel_gap(obj, bound)
    status = "optimal" if res.status == 0 else "node_limit"
    return MilpResult(status, x, obj, nodes, gap, bound, [bound], method="highs")

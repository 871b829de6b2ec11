"""Bounded-variable primal simplex on sparse standard form.

Two-phase revised simplex: every row gets a slack column, every row gets an
artificial column forming the trivially factorizable initial basis, phase 1
minimizes the artificial sum. The basis inverse is never formed; FTRAN/BTRAN
go through a SuperLU factorization of the basis plus a product-form eta file
that is compacted by refactorizing every few dozen pivots.

Pricing is Dantzig (most negative reduced cost) with Bland's smallest-index
rule engaged after 1000 consecutive degenerate pivots, which guarantees
termination. Nonbasic variables rest on either bound; range-free rows and
free variables are handled without extra rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_AT_LB, _AT_UB, _BASIC, _FREE = 0, 1, 2, 3

_REFACTOR_EVERY = 64
_PIVOT_TOL = 1e-9
_DEGENERATE_STEP = 1e-9


class SimplexError(RuntimeError):
    """Internal failure (iteration cap, singular basis): indicates a bug or a
    pathological instance rather than a model property."""


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class StandardFormLp:
    """min c.x subject to rows (a.x sense rhs) and box bounds on x.

    Build once, solve repeatedly with different box bounds; branch-and-bound
    leans on that to fix binaries per node without rebuilding the matrix.
    """

    def __init__(
        self,
        n: int,
        rows: Sequence[tuple[Sequence[tuple[int, float]], str, float]],
        cost: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
    ) -> None:
        self.n = n
        self.m = len(rows)
        self.cost = np.asarray(cost, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        assert self.cost.shape == (n,) and self.lower.shape == (n,) and self.upper.shape == (n,)

        coo_r: list[int] = []
        coo_c: list[int] = []
        coo_v: list[float] = []
        self.b = np.zeros(self.m)
        slack_lower = np.zeros(self.m)
        slack_upper = np.zeros(self.m)
        for i, (terms, sense, rhs) in enumerate(rows):
            self.b[i] = rhs
            for idx, coef in terms:
                coo_r.append(i)
                coo_c.append(idx)
                coo_v.append(coef)
            coo_r.append(i)
            coo_c.append(n + i)
            coo_v.append(1.0)
            if sense == "<=":
                slack_lower[i], slack_upper[i] = 0.0, math.inf
            elif sense == ">=":
                slack_lower[i], slack_upper[i] = -math.inf, 0.0
            elif sense == "=":
                slack_lower[i], slack_upper[i] = 0.0, 0.0
            else:
                raise ValueError(f"bad sense {sense!r}")
        self.nr = n + self.m  # real columns: structural + slack
        self.A = sp.csc_matrix(
            (coo_v, (coo_r, coo_c)), shape=(self.m, self.nr)
        )
        self.AT = self.A.T.tocsr()
        self.slack_lower = slack_lower
        self.slack_upper = slack_upper

    # -- column access ---------------------------------------------------

    def _column(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        if j < self.nr:
            a, b = self.A.indptr[j], self.A.indptr[j + 1]
            out[self.A.indices[a:b]] = self.A.data[a:b]
        else:
            i = j - self.nr
            out[i] = self._art_sign[i]
        return out

    # -- factorization ---------------------------------------------------

    def _refactor(self, basis: np.ndarray) -> None:
        cols = []
        for j in basis:
            if j < self.nr:
                a, b = self.A.indptr[j], self.A.indptr[j + 1]
                cols.append(sp.csc_matrix(
                    (self.A.data[a:b], (self.A.indices[a:b], np.zeros(b - a, dtype=int))),
                    shape=(self.m, 1),
                ))
            else:
                i = j - self.nr
                cols.append(sp.csc_matrix(([self._art_sign[i]], ([i], [0])), shape=(self.m, 1)))
        B = sp.hstack(cols, format="csc") if cols else sp.csc_matrix((0, 0))
        try:
            self._lu = spla.splu(B)
        except RuntimeError as exc:  # singular to machine precision
            raise SimplexError(f"basis factorization failed: {exc}") from exc
        self._etas: list[tuple[int, np.ndarray]] = []

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        w = self._lu.solve(v)
        for r, d in self._etas:
            wr = w[r] / d[r]
            w -= d * wr
            w[r] = wr
        return w

    def _btran(self, v: np.ndarray) -> np.ndarray:
        u = v.copy()
        for r, d in reversed(self._etas):
            u[r] = (u[r] - (d @ u) + d[r] * u[r]) / d[r]
        return self._lu.solve(u, trans="T")

    # -- main ------------------------------------------------------------

    def solve(
        self,
        lower: np.ndarray | None = None,
        upper: np.ndarray | None = None,
        feas_tol: float = 1e-7,
        opt_tol: float = 1e-7,
        bland_after: int = 1000,
    ) -> LpResult:
        n, m, nr = self.n, self.m, self.nr
        lo = np.concatenate([
            self.lower if lower is None else np.asarray(lower, dtype=float),
            self.slack_lower,
            np.zeros(m),
        ])
        up = np.concatenate([
            self.upper if upper is None else np.asarray(upper, dtype=float),
            self.slack_upper,
            np.full(m, math.inf),
        ])
        if np.any(lo[:nr] > up[:nr] + feas_tol):
            return LpResult(INFEASIBLE, None, math.inf, 0)

        if m == 0:
            return self._solve_unconstrained(lo, up, opt_tol)

        status = np.empty(nr + m, dtype=np.int8)
        for j in range(nr):
            if math.isfinite(lo[j]):
                status[j] = _AT_LB
            elif math.isfinite(up[j]):
                status[j] = _AT_UB
            else:
                status[j] = _FREE
        status[nr:] = _BASIC

        xn = np.where(status[:nr] == _AT_LB, lo[:nr], np.where(status[:nr] == _AT_UB, up[:nr], 0.0))
        resid = self.b - self.A @ xn
        self._art_sign = np.where(resid >= 0, 1.0, -1.0)
        basis = np.arange(nr, nr + m)
        self._refactor(basis)
        xb = np.abs(resid)

        phase1_cost = np.zeros(nr + m)
        phase1_cost[nr:] = 1.0
        phase2_cost = np.zeros(nr + m)
        phase2_cost[:n] = self.cost

        iters = 0
        for phase, c_all in ((1, phase1_cost), (2, phase2_cost)):
            if phase == 2:
                infeas = float(np.sum(xb[basis >= nr])) if np.any(basis >= nr) else 0.0
                if infeas > feas_tol * max(1.0, float(np.abs(self.b).max(initial=0.0))):
                    return LpResult(INFEASIBLE, None, math.inf, iters)
                # lock artificials out for good
                lo[nr:] = 0.0
                up[nr:] = 0.0
            result = self._pivot_loop(
                phase, c_all, lo, up, status, basis, xb, xn,
                feas_tol, opt_tol, bland_after,
            )
            iters += result[1]
            if result[0] == UNBOUNDED:
                return LpResult(UNBOUNDED, None, -math.inf, iters)
            xb = result[2]

        # tighten: fresh factorization, recompute basic values once
        self._refactor(basis)
        xn_full = np.zeros(nr)
        nb = status[:nr] != _BASIC
        xn_full[nb] = np.where(
            status[:nr][nb] == _AT_LB, lo[:nr][nb],
            np.where(status[:nr][nb] == _AT_UB, up[:nr][nb], 0.0),
        )
        xb = self._lu.solve(self.b - self.A @ xn_full)
        x_full = xn_full
        real_basic = basis < nr
        x_full[basis[real_basic]] = xb[real_basic]
        x = x_full[:n]
        np.clip(x, lo[:n] - 1e-9, up[:n] + 1e-9, out=x)
        return LpResult(OPTIMAL, x.copy(), float(self.cost @ x), iters)

    def _solve_unconstrained(self, lo, up, opt_tol) -> LpResult:
        x = np.zeros(self.n)
        for j in range(self.n):
            if self.cost[j] > opt_tol:
                if not math.isfinite(lo[j]):
                    return LpResult(UNBOUNDED, None, -math.inf, 0)
                x[j] = lo[j]
            elif self.cost[j] < -opt_tol:
                if not math.isfinite(up[j]):
                    return LpResult(UNBOUNDED, None, -math.inf, 0)
                x[j] = up[j]
            else:
                x[j] = lo[j] if math.isfinite(lo[j]) else (up[j] if math.isfinite(up[j]) else 0.0)
        return LpResult(OPTIMAL, x, float(self.cost @ x), 0)

    def _pivot_loop(
        self, phase, c_all, lo, up, status, basis, xb, xn,
        feas_tol, opt_tol, bland_after,
    ) -> tuple[str, int, np.ndarray]:
        n, m, nr = self.n, self.m, self.nr
        iters = 0
        degenerate_run = 0
        bland = False
        cap = 50 * (m + nr) + 20000
        movable = (up[:nr] - lo[:nr]) > 1e-12

        while True:
            if iters >= cap:
                raise SimplexError(f"iteration cap {cap} reached in phase {phase}")
            if len(self._etas) >= _REFACTOR_EVERY:
                self._refactor(basis)
                nb_mask = status[:nr] != _BASIC
                xn_v = np.zeros(nr)
                xn_v[nb_mask] = np.where(
                    status[:nr][nb_mask] == _AT_LB, lo[:nr][nb_mask],
                    np.where(status[:nr][nb_mask] == _AT_UB, up[:nr][nb_mask], 0.0),
                )
                xb[:] = self._lu.solve(self.b - self.A @ xn_v)

            y = self._btran(c_all[basis].astype(float))
            z = c_all[:nr] - self.AT @ y

            eligible = np.zeros(nr, dtype=bool)
            nb = status[:nr]
            eligible |= (nb == _AT_LB) & movable & (z < -opt_tol)
            eligible |= (nb == _AT_UB) & movable & (z > opt_tol)
            eligible |= (nb == _FREE) & (np.abs(z) > opt_tol)
            if not eligible.any():
                return (OPTIMAL, iters, xb)

            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(z), 0.0)
                q = int(np.argmax(score))
            if status[q] == _AT_UB:
                sigma = -1.0
            elif status[q] == _FREE:
                sigma = 1.0 if z[q] < 0 else -1.0
            else:
                sigma = 1.0

            d = self._ftran(self._column(q))
            rate = -sigma * d  # change of each basic value per unit step of q

            lob = lo[basis]
            upb = up[basis]
            theta = np.full(m, math.inf)
            inc = rate > _PIVOT_TOL
            dec = rate < -_PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                theta[inc] = (upb[inc] - xb[inc]) / rate[inc]
                theta[dec] = (lob[dec] - xb[dec]) / rate[dec]
            np.maximum(theta, 0.0, out=theta)

            theta_bound = up[q] - lo[q] if status[q] != _FREE else math.inf
            blocking = float(theta.min(initial=math.inf))
            step = min(blocking, theta_bound)

            if math.isinf(step):
                if phase == 1:
                    raise SimplexError("phase 1 reported an unbounded direction")
                return (UNBOUNDED, iters, xb)

            iters += 1
            if step <= _DEGENERATE_STEP:
                degenerate_run += 1
                if degenerate_run >= bland_after:
                    bland = True
            else:
                degenerate_run = 0
                if not bland:
                    pass
                else:
                    bland = False  # leave Bland mode once progress resumes

            if theta_bound <= blocking:
                # entering variable swings to its other bound; basis unchanged
                xb -= sigma * theta_bound * d
                status[q] = _AT_UB if status[q] == _AT_LB else _AT_LB
                continue

            cands = np.flatnonzero(theta <= step + 1e-12)
            if bland:
                r_pos = int(cands[np.argmin(basis[cands])])
            else:
                r_pos = int(cands[np.argmax(np.abs(d[cands]))])
            if abs(d[r_pos]) < _PIVOT_TOL:
                raise SimplexError("vanishing pivot element")

            leaving = int(basis[r_pos])
            if status[q] == _AT_LB:
                enter_val = lo[q] + sigma * step
            elif status[q] == _AT_UB:
                enter_val = up[q] + sigma * step
            else:
                enter_val = sigma * step

            xb -= sigma * step * d
            xb[r_pos] = enter_val
            status[leaving] = _AT_UB if rate[r_pos] > 0 else _AT_LB
            if leaving >= nr:
                # an artificial that left never comes back
                lo[leaving] = 0.0
                up[leaving] = 0.0
            status[q] = _BASIC
            basis[r_pos] = q
            self._etas.append((r_pos, d))

"""Bounded-variable linear programs.

``solve_lp`` dispatches between an in-house revised simplex (dense basis
inverse, explicit variable bounds, Dantzig pricing with a Bland fallback on
degenerate steps) and scipy's HiGHS for problems too large for a dense basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

SIMPLEX_MAX_VARS = 400
SIMPLEX_MAX_ROWS = 300


@dataclass
class LpProblem:
    """``min c@x  s.t.  A_ub@x <= b_ub,  A_eq@x == b_eq,  lower <= x <= upper``."""

    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] | None = None
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        self.A_ub = sp.csr_matrix(self.A_ub, shape=(len(self.b_ub), n)) if n else sp.csr_matrix((len(self.b_ub), 0))
        self.A_eq = sp.csr_matrix(self.A_eq, shape=(len(self.b_eq), n)) if n else sp.csr_matrix((len(self.b_eq), 0))
        self.b_ub = np.asarray(self.b_ub, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")

    @property
    def n(self) -> int:
        return len(self.c)

    def residual(self, x: np.ndarray) -> float:
        """Largest violation over rows and bounds."""
        if self.n == 0:
            return 0.0
        viol = [0.0]
        if self.A_ub.shape[0]:
            viol.append(float(np.max(self.A_ub @ x - self.b_ub)))
        if self.A_eq.shape[0]:
            viol.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        viol.append(float(np.max(self.lower - x)))
        viol.append(float(np.max(x - self.upper)))
        return max(viol)


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str  # optimal | infeasible | unbounded | iteration_limit
    iterations: int = 0
    method: str = ""
    residual: float = float("nan")


def solve_lp(problem: LpProblem, method: str = "auto", max_iter: int | None = None) -> LpSolution:
    """Solve ``problem``; ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"``."""
    if problem.n == 0:
        infeasible = (np.any(problem.b_ub < 0) or np.any(np.abs(problem.b_eq) > 1e-9))
        return LpSolution(np.zeros(0), 0.0, "infeasible" if infeasible else "optimal",
                          method="trivial", residual=0.0)
    if method == "auto":
        rows = problem.A_ub.shape[0] + problem.A_eq.shape[0]
        small = problem.n <= SIMPLEX_MAX_VARS and rows <= SIMPLEX_MAX_ROWS
        method = "simplex" if small else "highs"
    if method == "simplex":
        sol = _solve_simplex(problem, max_iter)
    elif method == "highs":
        sol = _solve_highs(problem, max_iter)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.status in ("optimal", "iteration_limit"):
        sol.residual = problem.residual(sol.x)
    return sol


def _solve_highs(problem: LpProblem, max_iter: int | None) -> LpSolution:
    options = {"presolve": True}
    if max_iter is not None:
        options["maxiter"] = max_iter
    res = linprog(
        problem.c,
        A_ub=problem.A_ub if problem.A_ub.shape[0] else None,
        b_ub=problem.b_ub if problem.A_ub.shape[0] else None,
        A_eq=problem.A_eq if problem.A_eq.shape[0] else None,
        b_eq=problem.b_eq if problem.A_eq.shape[0] else None,
        bounds=np.column_stack([problem.lower, problem.upper]),
        method="highs", options=options,
    )
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "infeasible")
    x = res.x if res.x is not None else np.full(problem.n, np.nan)
    obj = float(res.fun) if res.fun is not None else float("nan")
    return LpSolution(np.asarray(x, dtype=float), obj, status, int(getattr(res, "nit", 0)), "highs")


# --- revised simplex ---------------------------------------------------------

_FEAS_TOL = 1e-9
_OPT_TOL = 1e-9
_PIVOT_TOL = 1e-11
_REFACTOR_EVERY = 50


def _standard_form(problem: LpProblem):
    """Equality form with finite lower bounds; returns data plus a recovery map."""
    n = problem.n
    A_ub = problem.A_ub.toarray()
    A_eq = problem.A_eq.toarray()
    lo, hi = problem.lower.copy(), problem.upper.copy()
    c = problem.c.copy()

    cols, costs, los, his = [], [], [], []
    recover = []  # (kind, column(s), offset) per original variable
    A_all = np.vstack([A_ub, A_eq]) if (A_ub.size or A_eq.size) else np.zeros((0, n))
    for j in range(n):
        a = A_all[:, j]
        if np.isfinite(lo[j]):
            recover.append(("shift", len(cols)))
            cols.append(a); costs.append(c[j]); los.append(lo[j]); his.append(hi[j])
        elif np.isfinite(hi[j]):
            # x = -y, y in [-hi, inf)
            recover.append(("neg", len(cols)))
            cols.append(-a); costs.append(-c[j]); los.append(-hi[j]); his.append(np.inf)
        else:
            recover.append(("free", len(cols)))
            cols.append(a); costs.append(c[j]); los.append(0.0); his.append(np.inf)
            cols.append(-a); costs.append(-c[j]); los.append(0.0); his.append(np.inf)
    m_ub = A_ub.shape[0]
    m = A_all.shape[0]
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    slack = np.vstack([np.eye(m_ub), np.zeros((m - m_ub, m_ub))]) if m_ub else np.zeros((m, 0))
    A = np.hstack([A, slack])
    c_sf = np.concatenate([np.array(costs, dtype=float), np.zeros(m_ub)])
    lo_sf = np.concatenate([np.array(los, dtype=float), np.zeros(m_ub)])
    hi_sf = np.concatenate([np.array(his, dtype=float), np.full(m_ub, np.inf)])
    b = np.concatenate([problem.b_ub, problem.b_eq])
    return A, b, c_sf, lo_sf, hi_sf, recover


def _recover(z: np.ndarray, recover) -> np.ndarray:
    x = np.empty(len(recover))
    for j, (kind, k) in enumerate(recover):
        if kind == "shift":
            x[j] = z[k]
        elif kind == "neg":
            x[j] = -z[k]
        else:
            x[j] = z[k] - z[k + 1]
    return x


class _Simplex:
    def __init__(self, A, b, lo, hi, basis, x, max_iter):
        self.A, self.b, self.lo, self.hi = A, b, lo, hi
        self.m, self.n = A.shape
        self.basis = list(basis)
        self.x = x
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        nonbasic = np.ones(self.n, dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    def run(self, c) -> str:
        """Iterate to optimality for cost ``c``; returns a status string."""
        bland = False
        since_refactor = 0
        basic = np.zeros(self.n, dtype=bool)
        fixed = (self.hi - self.lo) <= _FEAS_TOL
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            basic[:] = False
            basic[self.basis] = True
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            scale = 1.0 + np.abs(c).max(initial=0.0)
            improving = ~basic & ~fixed & (
                ((~self.at_upper) & (d < -_OPT_TOL * scale)) | (self.at_upper & (d > _OPT_TOL * scale)))
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return "optimal"
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if self.at_upper[j] else 1.0
            col = self.Binv @ self.A[:, j]
            w = col * direction

            theta = self.hi[j] - self.lo[j]
            leave = -1
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            for i in range(self.m):
                if w[i] > _PIVOT_TOL:
                    r = max(xb[i] - lob[i], 0.0) / w[i]
                elif w[i] < -_PIVOT_TOL and np.isfinite(hib[i]):
                    r = max(hib[i] - xb[i], 0.0) / (-w[i])
                else:
                    continue
                if r < theta - 1e-12 or (leave >= 0 and abs(r - theta) <= 1e-12
                                         and self.basis[i] < self.basis[leave]):
                    theta, leave = r, i
            if not np.isfinite(theta):
                return "unbounded"

            self.iterations += 1
            self.x[j] += direction * theta
            self.x[self.basis] = xb - theta * w
            bland = theta <= 1e-12
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = self.hi[j] if self.at_upper[j] else self.lo[j]
                continue
            out = self.basis[leave]
            if w[leave] > 0:
                self.x[out], self.at_upper[out] = self.lo[out], False
            else:
                self.x[out], self.at_upper[out] = self.hi[out], True
            self.basis[leave] = j
            self.at_upper[j] = False
            piv = col[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(col, row)
            self.Binv[leave] = row
            since_refactor += 1
            if since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0


def _solve_simplex(problem: LpProblem, max_iter: int | None) -> LpSolution:
    A, b, c, lo, hi, recover = _standard_form(problem)
    m, n = A.shape
    max_iter = max_iter or 50 * (m + n) + 1000

    # phase 1: structurals at their lower bounds, one artificial per row
    x = lo.copy()
    r = b - A @ x
    sign = np.where(r >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(sign)])
    lo1 = np.concatenate([lo, np.zeros(m)])
    hi1 = np.concatenate([hi, np.full(m, np.inf)])
    x1 = np.concatenate([x, np.abs(r)])
    solver = _Simplex(A1, b, lo1, hi1, range(n, n + m), x1, max_iter)
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = solver.run(c1)
    if status == "iteration_limit":
        return LpSolution(_recover(solver.x[:n], recover), float("nan"), status, solver.iterations, "simplex")
    infeas = float(solver.x[n:].sum())
    if infeas > 1e-7 * (1.0 + np.abs(b).max(initial=0.0)):
        return LpSolution(_recover(solver.x[:n], recover), float("nan"), "infeasible", solver.iterations, "simplex")

    # drive remaining artificials out of the basis where a structural can replace them
    for i, var in enumerate(list(solver.basis)):
        if var < n:
            continue
        row = solver.Binv[i] @ A
        basic = set(solver.basis)
        choices = [k for k in np.flatnonzero(np.abs(row) > 1e-9) if k not in basic]
        if not choices:
            continue  # redundant row; the artificial stays basic at zero
        k = int(choices[0])
        col = solver.Binv @ A1[:, k]
        piv = col[i]
        rowinv = solver.Binv[i] / piv
        solver.Binv -= np.outer(col, rowinv)
        solver.Binv[i] = rowinv
        solver.basis[i] = k
    solver.hi[n:] = 0.0
    solver.x[n:] = 0.0
    solver.refactor()

    c2 = np.concatenate([c, np.zeros(m)])
    status = solver.run(c2)
    z = solver.x[:n]
    x_orig = _recover(z, recover)
    obj = float(problem.c @ x_orig)
    return LpSolution(x_orig, obj, status, solver.iterations, "simplex")


# --- export ------------------------------------------------------------------

def _terms(row: sp.csr_matrix, names: Sequence[str]) -> str:
    parts = []
    for j, a in zip(row.indices, row.data):
        if a == 0:
            continue
        parts.append(f"{'-' if a < 0 else '+'} {abs(a)!r} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(text: str, width: int = 200) -> list[str]:
    out, line = [], ""
    for tok in text.split(" "):
        if len(line) + len(tok) + 1 > width and line:
            out.append(line)
            line = " "
        line += (" " if line.strip() else "") + tok
    out.append(line)
    return out


def write_lp(problem: LpProblem, path: str | Path) -> None:
    """Write ``problem`` in CPLEX LP text format (readable by HiGHS, GLPK, CBC)."""
    names = problem.names or [f"x{j}" for j in range(problem.n)]
    lines = ["\\ evflex offline flexibility LP", "Minimize"]
    lines += _wrap(" obj: " + _terms(sp.csr_matrix(problem.c.reshape(1, -1)), names))
    lines.append("Subject To")
    for i in range(problem.A_ub.shape[0]):
        lines += _wrap(f" u{i}: {_terms(problem.A_ub[i], names)} <= {problem.b_ub[i]!r}")
    for i in range(problem.A_eq.shape[0]):
        lines += _wrap(f" e{i}: {_terms(problem.A_eq[i], names)} = {problem.b_eq[i]!r}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = problem.lower[j], problem.upper[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {name} free")
        elif lo == hi:
            lines.append(f" {name} = {lo!r}")
        else:
            lo_s = "-inf" if np.isinf(lo) else repr(lo)
            hi_s = "+inf" if np.isinf(hi) else repr(hi)
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")

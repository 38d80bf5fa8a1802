"""Linear programming layer.

``LpProblem`` is a thin container for  min c'x  s.t.  A_ub x <= b_ub,
A_eq x = b_eq, lb <= x <= ub.  Two interchangeable engines solve it:

* ``"simplex"`` -- a self-contained dense two-phase simplex, adequate for
  desk-scale problems (up to roughly 20k nonzeros).  It supports warm starts
  from a previous optimal basis, which the conditional-gradient loop relies on
  (same polytope, changing objective).
* ``"highs"``   -- scipy.optimize.linprog/HiGHS for anything bigger.

``engine="auto"`` picks by problem size.  Both are cross-checked in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import ModelError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

SIMPLEX_NNZ_LIMIT = 20_000


@dataclass
class LpProblem:
    """Incremental LP builder; rows are (indices, coefficients, sense, rhs)."""

    n: int = 0
    c: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def add_var(self, name: str = "", lb: float = 0.0, ub: float = np.inf, cost: float = 0.0) -> int:
        self.n += 1
        self.c.append(float(cost))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.names.append(name or f"x{self.n - 1}")
        return self.n - 1

    def add_vars(self, k: int, prefix: str, lb=0.0, ub=np.inf, cost=0.0) -> np.ndarray:
        start = self.n
        for i in range(k):
            self.add_var(f"{prefix}{i}", lb, ub, cost)
        return np.arange(start, start + k)

    def set_cost(self, idx, cost) -> None:
        for i, v in zip(np.atleast_1d(idx), np.atleast_1d(cost)):
            self.c[int(i)] = float(v)

    def add_row(self, idx, coef, sense: str, rhs: float) -> None:
        if sense not in ("<=", "=", ">="):
            raise ModelError(f"unknown constraint sense {sense!r}")
        idx = np.asarray(idx, dtype=int)
        coef = np.asarray(coef, dtype=float)
        if idx.shape != coef.shape:
            raise ModelError("constraint index/coefficient length mismatch")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n):
            raise ModelError("constraint references unknown variable")
        if not np.isfinite(coef).all() or not np.isfinite(rhs):
            raise ModelError("constraint coefficients must be finite")
        self.rows.append((idx, coef, sense, float(rhs)))

    @property
    def nnz(self) -> int:
        return sum(len(idx) for idx, _, _, _ in self.rows)

    def matrices(self):
        """Split rows into (A_ub, b_ub, A_eq, b_eq); sparse CSR or None."""
        ub_rows, eq_rows = [], []
        for idx, coef, sense, rhs in self.rows:
            if sense == "=":
                eq_rows.append((idx, coef, rhs))
            elif sense == "<=":
                ub_rows.append((idx, coef, rhs))
            else:
                ub_rows.append((idx, -coef, -rhs))

        def build(rows):
            if not rows:
                return None, None
            data, ri, ci, rhs = [], [], [], []
            for r, (idx, coef, b) in enumerate(rows):
                ri.extend([r] * len(idx))
                ci.extend(idx.tolist())
                data.extend(coef.tolist())
                rhs.append(b)
            A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), self.n))
            return A, np.array(rhs)

        A_ub, b_ub = build(ub_rows)
        A_eq, b_eq = build(eq_rows)
        return A_ub, b_ub, A_eq, b_eq

    def to_lp_text(self) -> str:
        """Debug dump in LP-format-style text (behind the CLI --dump-lp flag)."""
        terms = [f"{v:g} {n}" for v, n in zip(self.c, self.names) if v]
        lines = ["\\ sitefolio LP debug dump", "Minimize",
                 " obj: " + (" + ".join(terms) or "0").replace("+ -", "- ")]
        lines.append("Subject To")
        for k, (idx, coef, sense, rhs) in enumerate(self.rows):
            body = " + ".join(f"{c:g} {self.names[i]}" for i, c in zip(idx, coef))
            lines.append(f" c{k}: {body.replace('+ -', '- ')} {sense} {rhs:g}")
        lines.append("Bounds")
        for i in range(self.n):
            lines.append(f" {self.lb[i]:g} <= {self.names[i]} <= {self.ub[i]:g}")
        lines.append("End")
        return "\n".join(lines)


@dataclass(frozen=True)
class SolverSettings:
    feasibility_tol: float = 1e-7
    fw_gap: float = 1e-4
    max_iterations: int = 2000
    lp_engine: str = "auto"  # auto | simplex | highs
    bisection_steps: int = 40
    bisection_resolution: float = 1e-6
    # finite p at or above this routes to the max-norm epigraph LP (large-scale
    # performance switch; off by default)
    pnorm_epigraph_threshold: float = float("inf")

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.fw_gap <= 0 or self.max_iterations <= 0:
            raise ModelError("solver settings must be positive")
        if self.bisection_steps <= 0 or self.bisection_resolution <= 0:
            raise ModelError("solver settings must be positive")


@dataclass(frozen=True)
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float | None


def solve_lp(prob: LpProblem, settings: SolverSettings | None = None) -> LpResult:
    settings = settings or SolverSettings()
    engine = settings.lp_engine
    if engine == "auto":
        engine = "simplex" if prob.nnz + prob.n <= SIMPLEX_NNZ_LIMIT else "highs"
    if engine == "highs":
        return solve_lp_highs(prob)
    if engine == "simplex":
        res, _ = SimplexPolytope(prob).solve(np.array(prob.c))
        return res
    raise ModelError(f"unknown LP engine {engine!r}")


def solve_lp_highs(prob: LpProblem, c: np.ndarray | None = None) -> LpResult:
    from scipy.optimize import linprog

    A_ub, b_ub, A_eq, b_eq = prob.matrices()
    res = linprog(
        c=np.array(prob.c) if c is None else np.asarray(c, dtype=float),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=list(zip(prob.lb, prob.ub)),
        method="highs",
    )
    if res.status == 0:
        return LpResult(OPTIMAL, res.x, float(res.fun))
    if res.status == 2:
        return LpResult(INFEASIBLE, None, None)
    if res.status == 3:
        return LpResult(UNBOUNDED, None, None)
    raise ModelError(f"LP solver failed: {res.message}")


class SimplexPolytope:
    """Standard form  min c'z, Az = b, z >= 0  for a fixed feasible region.

    Built once per polytope; ``solve`` accepts fresh objectives (over the
    original variables) and an optional warm-start basis from a prior solve.
    """

    def __init__(self, prob: LpProblem):
        n = prob.n
        lb = np.array(prob.lb, dtype=float)
        ub = np.array(prob.ub, dtype=float)
        if not np.isfinite(lb).all():
            raise ModelError("simplex engine requires finite lower bounds")
        rows = []
        for idx, coef, sense, rhs in prob.rows:
            rows.append((idx, coef, sense, rhs - float(coef @ lb[idx])))
        for i in np.where(np.isfinite(ub))[0]:
            rows.append((np.array([i]), np.array([1.0]), "<=", float(ub[i] - lb[i])))

        m = len(rows)
        n_slack = sum(1 for r in rows if r[2] != "=")
        A = np.zeros((m, n + n_slack))
        b = np.zeros(m)
        s = n
        for r, (idx, coef, sense, rhs) in enumerate(rows):
            A[r, idx] = coef
            b[r] = rhs
            if sense == "<=":
                A[r, s] = 1.0
                s += 1
            elif sense == ">=":
                A[r, s] = -1.0
                s += 1
            if b[r] < 0:
                A[r] *= -1.0
                b[r] *= -1.0
        self.A, self.b = A, b
        self.lb, self.n_orig = lb, n
        self.n_cols = A.shape[1]
        self._feasible_basis: list | None = None

    def _lift(self, c_orig: np.ndarray) -> np.ndarray:
        c = np.zeros(self.n_cols)
        c[: self.n_orig] = c_orig
        return c

    def solve(self, c_orig: np.ndarray, basis0: list | None = None):
        """Return (LpResult, basis).  ``basis0`` must be primal feasible."""
        A, b = self.A, self.b
        m = len(b)
        c = self._lift(np.asarray(c_orig, dtype=float))
        basis = list(basis0) if basis0 is not None else None

        if basis is None:
            if self._feasible_basis is not None:
                basis = list(self._feasible_basis)
            else:
                basis = self._phase1()
                if basis is None:
                    return LpResult(INFEASIBLE, None, None), None
                self._feasible_basis = list(basis)

        res, status = _simplex_core(A, b, c, basis)
        if res is None:
            if status == UNBOUNDED:
                return LpResult(UNBOUNDED, None, None), None
            raise ModelError(f"simplex failed: {status}")
        x, basis = res
        z = x[: self.n_orig] + self.lb
        return LpResult(OPTIMAL, z, float(np.asarray(c_orig) @ z)), basis

    def _phase1(self):
        A, b = self.A, self.b
        m, n = A.shape
        A1 = np.hstack([A, np.eye(m)])
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        basis = list(range(n, n + m))
        res, status = _simplex_core(A1, b, c1, basis)
        if res is None:
            raise ModelError(f"simplex phase 1 failed: {status}")
        x1, basis = res
        if c1 @ x1 > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
            return None
        for i in range(m):
            if basis[i] >= n:
                # pivot the artificial out, or accept the degenerate zero row
                B = A1[:, basis]
                try:
                    row = np.linalg.solve(B, A)[i]
                except np.linalg.LinAlgError:
                    continue
                cand = [j for j in range(n) if j not in basis and abs(row[j]) > 1e-9]
                if cand:
                    basis[i] = cand[0]
        if any(bi >= n for bi in basis):
            keep = [i for i in range(m) if basis[i] < n]
            self.A = A[keep]
            self.b = b[keep]
            return [basis[i] for i in keep]
        return basis


def _simplex_core(A, b, c, basis, tol=1e-9, max_iter=50_000):
    """Primal simplex, Bland's rule for entering columns; returns ((x, basis), status)."""
    m, n = A.shape
    basis = list(basis)
    for _ in range(max_iter):
        B = A[:, basis]
        try:
            xB = np.linalg.solve(B, b)
            lam = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            return None, "singular"
        reduced = c - lam @ A
        reduced[basis] = 0.0
        enter = -1
        best = -tol
        for j in range(n):
            if reduced[j] < best:
                enter = j
                break
        if enter < 0:
            x = np.zeros(n)
            x[basis] = np.maximum(xB, 0.0)
            return (x, basis), OPTIMAL
        d = np.linalg.solve(B, A[:, enter])
        pos = d > tol
        if not pos.any():
            return None, UNBOUNDED
        ratios = np.full(m, np.inf)
        xBc = np.maximum(xB, 0.0)
        ratios[pos] = xBc[pos] / d[pos]
        rmin = float(ratios.min())
        ties = np.where(ratios <= rmin + tol * (1.0 + rmin))[0]
        leave = int(ties[np.argmin([basis[t] for t in ties])])
        basis[leave] = enter
    return None, "iteration_limit"

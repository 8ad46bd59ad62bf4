"""Dense strictly convex quadratic programs with certified KKT residuals.

Solves
    min  1/2 u' H u + f' u
    s.t. L u <= w            (m inequality rows)
         A_eq u  = b_eq      (optional equality rows)

with H symmetric positive definite, using a dual active-set method: start
at the unconstrained minimiser, repeatedly pick the most violated row and
take full/partial dual steps, dropping blocking rows, until primal
feasibility.  Inequality multipliers stay nonnegative throughout, so every
accepted iterate is dual feasible and the method terminates at the global
optimum or with a Farkas infeasibility certificate (weights y >= 0 on the
inequality rows with L'y = 0 and w'y < 0).

Problems are rescaled by diag(H)^(-1/2) internally; residuals are reported
against the original data.  Construction factors H once, so one solver
instance can serve many (f, w) right-hand sides, as in rolling-horizon use.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

__all__ = [
    "QpProblem",
    "QpSolution",
    "DenseQpSolver",
    "solve",
    "solve_unconstrained",
    "dump_problem",
    "load_problem",
]


class _Infeasible(Exception):
    pass


@dataclass(frozen=True)
class QpProblem:
    """Problem data; hess must be symmetric positive definite."""

    hess: np.ndarray
    grad: np.ndarray
    l_rows: np.ndarray
    w: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        n = self.grad.size
        if self.hess.shape != (n, n):
            raise ValueError("hess/grad dimension mismatch")
        if self.l_rows.ndim != 2 or self.l_rows.shape[1] != n:
            raise ValueError("l_rows must be (m, n)")
        if self.w.shape != (self.l_rows.shape[0],):
            raise ValueError("l_rows/w dimension mismatch")
        if (self.a_eq is None) != (self.b_eq is None):
            raise ValueError("a_eq and b_eq must be given together")
        if self.a_eq is not None and (
            self.a_eq.ndim != 2 or self.a_eq.shape[1] != n
            or self.b_eq.shape != (self.a_eq.shape[0],)
        ):
            raise ValueError("equality data dimension mismatch")


@dataclass
class QpSolution:
    """Primal/dual solution with raw KKT residual norms."""

    u: np.ndarray
    duals: np.ndarray                 # inequality multipliers, length m
    status: str                       # optimal | infeasible | max-iterations
    stationarity: float
    primal: float
    complementarity: float
    iterations: int
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    certificate: np.ndarray | None = None
    objective: float = float("nan")
    active: tuple[int, ...] = ()


def solve_unconstrained(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Minimiser -H^(-1) f via Cholesky; raises ValueError if H is not SPD."""
    try:
        factor = cho_factor(hess, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("hessian is numerically singular or indefinite") from exc
    return cho_solve(factor, -np.asarray(grad, dtype=float), check_finite=False)


class DenseQpSolver:
    """Factors (H, L, A_eq) once and solves for many (f, w, b_eq)."""

    def __init__(
        self,
        hess: np.ndarray,
        l_rows: np.ndarray,
        a_eq: np.ndarray | None = None,
        scale: bool = True,
    ):
        hess = np.asarray(hess, dtype=float)
        l_rows = np.asarray(l_rows, dtype=float)
        n = hess.shape[0]
        if np.max(np.abs(hess - hess.T)) > 1e-10 * max(1.0, np.max(np.abs(hess))):
            raise ValueError("hessian must be symmetric")
        d = np.sqrt(np.diag(hess))
        if np.any(d <= 0) or not scale:
            d = np.ones(n)
        self._d = d
        self._hess = hess
        self._hs = hess * np.outer(1.0 / d, 1.0 / d)
        try:
            self._chol = cho_factor(self._hs, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError("hessian is numerically singular or indefinite") from exc

        self.n_eq = 0 if a_eq is None else a_eq.shape[0]
        self._l_orig = l_rows
        self._a_eq = a_eq
        rows = l_rows if a_eq is None else np.vstack([a_eq, l_rows])
        self._rows = rows / d                     # rows act on scaled variables
        # H^(-1) R' and the Gram matrix M = R H^(-1) R' (scaled space)
        self._hinv_rt = cho_solve(self._chol, self._rows.T, check_finite=False)
        self._m = self._rows @ self._hinv_rt
        self.n = n
        self.m = l_rows.shape[0]

    # -- helpers over the active-set Cholesky ------------------------------

    def _refactor(self, act: list[int]) -> np.ndarray:
        s = self._m[np.ix_(act, act)]
        try:
            return np.linalg.cholesky(s).T
        except np.linalg.LinAlgError as exc:
            raise _Infeasible("degenerate active set") from exc

    @staticmethod
    def _solve_s(chol_r: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        half = solve_triangular(chol_r, rhs, trans="T", lower=False,
                                check_finite=False)
        return solve_triangular(chol_r, half, lower=False, check_finite=False)

    def solve(
        self,
        grad: np.ndarray,
        w: np.ndarray,
        b_eq: np.ndarray | None = None,
        tol: float = 1e-8,
        max_iter: int | None = None,
        warm_active: tuple[int, ...] = (),
    ) -> QpSolution:
        """Solve for one right-hand side; see module docstring.

        warm_active may carry inequality row indices from a previous,
        similar solve; rows whose multipliers come out negative are
        discarded, so warm starting never changes the result.
        """
        d = self._d
        f = np.asarray(grad, dtype=float) / d
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m,):
            raise ValueError("w has wrong length")
        if (b_eq is None) != (self.n_eq == 0):
            raise ValueError("b_eq required iff equalities were given")
        targets = w if self.n_eq == 0 else np.concatenate([b_eq, w])
        if max_iter is None:
            max_iter = 25 * (self.n + self.m + 1)

        y0 = cho_solve(self._chol, -f, check_finite=False)
        act: list[int] = list(range(self.n_eq))
        lam = np.zeros(len(act))
        chol_r: np.ndarray | None = None

        def multipliers() -> np.ndarray:
            rhs = self._rows[act] @ y0 - targets[np.asarray(act)]
            return self._solve_s(chol_r, rhs)

        status = "optimal"
        certificate = None
        iters = 0
        try:
            if act:
                chol_r = self._refactor(act)
                lam = multipliers()

            for idx in warm_active:
                row = self.n_eq + int(idx)
                if row in act or not self.n_eq <= row < self.n_eq + self.m:
                    continue
                kappa_est = self._m[row, row]
                if act:
                    r12 = solve_triangular(chol_r, self._m[act, row], trans="T",
                                           lower=False, check_finite=False)
                    kappa_est -= r12 @ r12
                if kappa_est <= 1e-10 * max(1.0, self._m[row, row]):
                    continue
                act.append(row)
                chol_r = self._refactor(act)
                lam = multipliers()
                while act and np.any(lam[self.n_eq:] < 0):
                    pos = self.n_eq + int(np.argmin(lam[self.n_eq:]))
                    act.pop(pos)
                    chol_r = self._refactor(act) if act else None
                    lam = multipliers() if act else np.zeros(0)

            y = y0 - (self._hinv_rt[:, act] @ lam if act else 0.0)

            while True:
                iters += 1
                if iters > max_iter:
                    status = "max-iterations"
                    break
                s_all = self._rows @ y - targets
                if act:
                    s_all[np.asarray(act)] = 0.0
                s_ineq = s_all[self.n_eq:]
                p_rel = int(np.argmax(s_ineq)) if self.m else 0
                viol = s_ineq[p_rel] if self.m else 0.0
                if self.m == 0 or viol <= tol * (1.0 + abs(w[p_rel])):
                    break
                p = self.n_eq + p_rel
                lam_p = 0.0
                s_p = viol

                while True:
                    iters += 1
                    if iters > max_iter:
                        status = "max-iterations"
                        break
                    if act:
                        s12 = self._m[act, p]
                        r_dir = self._solve_s(chol_r, s12)
                        kappa = self._m[p, p] - s12 @ r_dir
                    else:
                        r_dir = np.zeros(0)
                        kappa = self._m[p, p]
                    dep_tol = 1e-11 * max(1.0, self._m[p, p])

                    t2 = np.inf
                    drop_at = -1
                    for pos in range(self.n_eq, len(act)):
                        if r_dir[pos] > 1e-13:
                            ratio = lam[pos] / r_dir[pos]
                            if ratio < t2:
                                t2 = ratio
                                drop_at = pos
                    t1 = s_p / kappa if kappa > dep_tol else np.inf

                    if not np.isfinite(t1) and not np.isfinite(t2):
                        # direction vanishes and nothing can be dropped
                        cert = np.zeros(self.m)
                        cert[p - self.n_eq] = 1.0
                        for pos in range(self.n_eq, len(act)):
                            cert[act[pos] - self.n_eq] = max(0.0, -r_dir[pos])
                        certificate = cert
                        raise _Infeasible("constraint row unreachable")

                    t = min(t1, t2)
                    if act:
                        lam = lam - t * r_dir
                    lam_p += t
                    step = self._hinv_rt[:, p].copy()
                    if act:
                        step -= self._hinv_rt[:, act] @ r_dir
                    y = y - t * step
                    if np.isfinite(t1):
                        s_p -= t * kappa

                    if t2 <= t1:
                        act.pop(drop_at)
                        lam = np.delete(lam, drop_at)
                        chol_r = self._refactor(act) if act else None
                        continue
                    act.append(p)
                    lam = np.append(lam, lam_p)
                    chol_r = self._refactor(act)
                    break
                if status != "optimal":
                    break
        except _Infeasible:
            status = "infeasible"

        u = y * d
        duals = np.zeros(self.m)
        eq_duals = np.zeros(self.n_eq)
        for pos, row in enumerate(act):
            if row < self.n_eq:
                eq_duals[row] = lam[pos]
            else:
                duals[row - self.n_eq] = lam[pos]

        grad_res = self._hess @ u + np.asarray(grad, dtype=float)
        grad_res += self._l_orig.T @ duals
        if self.n_eq:
            grad_res += self._a_eq.T @ eq_duals
        slack = self._l_orig @ u - w
        primal = float(slack.max(initial=0.0)) if self.m else 0.0
        primal = max(primal, 0.0)
        if self.n_eq:
            primal = max(primal, float(np.max(np.abs(self._a_eq @ u - b_eq))))
        comp = float(np.max(np.abs(duals * slack), initial=0.0)) if self.m else 0.0
        obj = float(0.5 * u @ self._hess @ u + np.asarray(grad, dtype=float) @ u)

        return QpSolution(
            u=u,
            duals=duals,
            status=status,
            stationarity=float(np.max(np.abs(grad_res), initial=0.0)),
            primal=primal,
            complementarity=comp,
            iterations=iters,
            eq_duals=eq_duals,
            certificate=certificate,
            objective=obj,
            active=tuple(sorted(row - self.n_eq for row in act if row >= self.n_eq)),
        )


def solve(problem: QpProblem, tol: float = 1e-8,
          max_iter: int | None = None) -> QpSolution:
    """One-shot convenience wrapper around DenseQpSolver."""
    solver = DenseQpSolver(problem.hess, problem.l_rows, a_eq=problem.a_eq)
    return solver.solve(problem.grad, problem.w, b_eq=problem.b_eq,
                        tol=tol, max_iter=max_iter)


def dump_problem(problem: QpProblem, directory: str) -> None:
    """Write problem matrices as CSV files (hess/grad/l_rows/w[/a_eq/b_eq])."""
    os.makedirs(directory, exist_ok=True)
    parts = {"hess": problem.hess, "grad": problem.grad,
             "l_rows": problem.l_rows, "w": problem.w}
    if problem.a_eq is not None:
        parts["a_eq"] = problem.a_eq
        parts["b_eq"] = problem.b_eq
    for name, arr in parts.items():
        np.savetxt(os.path.join(directory, f"{name}.csv"),
                   np.atleast_2d(arr), delimiter=",")


def load_problem(directory: str) -> QpProblem:
    """Read a problem previously written by dump_problem."""
    def read(name, flat=False):
        path = os.path.join(directory, f"{name}.csv")
        if not os.path.exists(path):
            return None
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
        return arr.ravel() if flat else arr

    a_eq = read("a_eq")
    return QpProblem(
        hess=read("hess"),
        grad=read("grad", flat=True),
        l_rows=read("l_rows"),
        w=read("w", flat=True),
        a_eq=a_eq,
        b_eq=read("b_eq", flat=True) if a_eq is not None else None,
    )

"""QP core: unconstrained solve, active-set solve, KKT certificates."""

import itertools

import numpy as np
import pytest

from gateflow.qp import (
    DenseQpSolver,
    QpProblem,
    dump_problem,
    load_problem,
    solve,
    solve_unconstrained,
)


def random_spd(rng, n, cond=None):
    a = rng.normal(size=(n, n))
    h = a @ a.T + n * np.eye(n)
    if cond:
        d = np.sqrt(np.logspace(0, np.log10(cond), n))
        h = h * np.outer(d, d)
    return h


def random_feasible_problem(rng, n, m):
    """Random SPD objective with rows guaranteed feasible at a point."""
    hess = random_spd(rng, n)
    grad = rng.normal(size=n) * 3.0
    l_rows = rng.normal(size=(m, n))
    anchor = rng.normal(size=n)
    w = l_rows @ anchor + rng.uniform(0.05, 2.0, size=m)
    return QpProblem(hess=hess, grad=grad, l_rows=l_rows, w=w)


def brute_force_active_set(problem, tol=1e-9):
    """Enumerate every subset of rows as equalities; keep the best KKT point.

    Exhaustive oracle, exponential in the row count; n <= 4, m <= 6 keeps
    it instant.  Independent of the production solver's search path.
    """
    hess, grad = problem.hess, problem.grad
    l_rows, w = problem.l_rows, problem.w
    m = l_rows.shape[0]
    best_obj, best_u = np.inf, None
    for size in range(m + 1):
        for subset in itertools.combinations(range(m), size):
            rows = l_rows[list(subset)]
            kkt = np.block([
                [hess, rows.T],
                [rows, np.zeros((size, size))],
            ]) if size else hess
            rhs = np.concatenate([-grad, w[list(subset)]]) if size else -grad
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            u, lam = sol[:len(grad)], sol[len(grad):]
            if np.any(lam < -tol):
                continue
            if np.any(l_rows @ u - w > tol * (1 + np.abs(w))):
                continue
            obj = 0.5 * u @ hess @ u + grad @ u
            if obj < best_obj:
                best_obj, best_u = obj, u
    return best_obj, best_u


def assert_kkt(problem, sol, tol=1e-8):
    f_scale = 1.0 + np.max(np.abs(problem.grad))
    assert sol.status == "optimal"
    assert sol.stationarity <= tol * f_scale
    assert sol.primal <= tol * (1.0 + np.max(np.abs(problem.w), initial=0.0))
    assert sol.complementarity <= tol * f_scale * 10
    assert np.all(sol.duals >= -tol)


class TestUnconstrained:
    def test_identity_hessian(self):
        u = solve_unconstrained(np.eye(2), np.array([-1.0, -1.0]))
        np.testing.assert_allclose(u, [1.0, 1.0])

    def test_diagonal_solve(self):
        u = solve_unconstrained(np.diag([2.0, 4.0]), np.array([-2.0, -8.0]))
        np.testing.assert_allclose(u, [1.0, 2.0])

    def test_residual_on_random_spd(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            hess = random_spd(rng, 20)
            grad = rng.normal(size=20)
            u = solve_unconstrained(hess, grad)
            res = np.max(np.abs(hess @ u + grad))
            assert res <= 1e-10 * (1.0 + np.max(np.abs(grad)))

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            solve_unconstrained(np.zeros((2, 2)), np.ones(2))


class TestConstrainedSolve:
    def test_hand_worked_kkt(self):
        problem = QpProblem(
            hess=np.eye(2),
            grad=np.array([-1.0, -1.0]),
            l_rows=np.array([[1.0, 0.0]]),
            w=np.array([0.5]),
        )
        sol = solve(problem)
        np.testing.assert_allclose(sol.u, [0.5, 1.0], atol=1e-10)
        np.testing.assert_allclose(sol.duals, [0.5], atol=1e-10)
        assert_kkt(problem, sol)

    def test_inactive_constraints_match_unconstrained(self):
        rng = np.random.default_rng(1)
        hess = random_spd(rng, 5)
        grad = rng.normal(size=5)
        u_free = solve_unconstrained(hess, grad)
        l_rows = rng.normal(size=(8, 5))
        w = l_rows @ u_free + 1.0          # strictly satisfied at optimum
        problem = QpProblem(hess=hess, grad=grad, l_rows=l_rows, w=w)
        sol = solve(problem)
        np.testing.assert_allclose(sol.u, u_free, rtol=1e-8, atol=1e-10)
        assert sol.iterations <= 2

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 7))
            problem = random_feasible_problem(rng, n, m)
            sol = solve(problem)
            assert_kkt(problem, sol)
            obj_ref, _ = brute_force_active_set(problem)
            assert sol.objective == pytest.approx(obj_ref, abs=1e-8)

    def test_determinism(self):
        rng = np.random.default_rng(3)
        problem = random_feasible_problem(rng, 6, 10)
        first = solve(problem)
        second = solve(problem)
        assert np.max(np.abs(first.u - second.u)) <= 1e-10

    def test_tightening_never_improves_objective(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            problem = random_feasible_problem(rng, 4, 5)
            base = solve(problem)
            shrink = QpProblem(
                hess=problem.hess, grad=problem.grad,
                l_rows=problem.l_rows,
                w=problem.w - rng.uniform(0.0, 0.04, size=5),
            )
            tightened = solve(shrink)
            if tightened.status == "optimal":
                assert tightened.objective >= base.objective - 1e-9

    def test_badly_scaled_problem(self):
        # mixed units: condition number around 1e6
        rng = np.random.default_rng(5)
        hess = random_spd(rng, 8, cond=1e6)
        grad = rng.normal(size=8) * 1e3
        l_rows = np.vstack([np.eye(8), -np.eye(8)])
        w = np.concatenate([np.full(8, 0.5), np.full(8, 0.5)])
        problem = QpProblem(hess=hess, grad=grad, l_rows=l_rows, w=w)
        sol = solve(problem)
        assert sol.status == "optimal"
        assert np.all(np.abs(sol.u) <= 0.5 + 1e-8)
        res = problem.hess @ sol.u + problem.grad + problem.l_rows.T @ sol.duals
        assert np.max(np.abs(res)) <= 1e-7 * (1 + np.max(np.abs(grad)))

    def test_infeasible_certificate(self):
        # u <= -1 and u >= 0 cannot hold together
        problem = QpProblem(
            hess=np.eye(1),
            grad=np.zeros(1),
            l_rows=np.array([[1.0], [-1.0]]),
            w=np.array([-1.0, 0.0]),
        )
        sol = solve(problem)
        assert sol.status == "infeasible"
        cert = sol.certificate
        assert cert is not None and np.all(cert >= 0)
        assert np.max(np.abs(problem.l_rows.T @ cert)) <= 1e-9
        assert cert @ problem.w < 0

    def test_unconstrained_via_empty_rows(self):
        hess = np.diag([2.0, 4.0])
        problem = QpProblem(hess=hess, grad=np.array([-2.0, -8.0]),
                            l_rows=np.zeros((0, 2)), w=np.zeros(0))
        sol = solve(problem)
        np.testing.assert_allclose(sol.u, [1.0, 2.0], atol=1e-12)


class TestEqualities:
    def test_single_equality(self):
        # min 1/2||u||^2 s.t. u1 + u2 = 2 -> (1, 1)
        problem = QpProblem(
            hess=np.eye(2), grad=np.zeros(2),
            l_rows=np.zeros((0, 2)), w=np.zeros(0),
            a_eq=np.array([[1.0, 1.0]]), b_eq=np.array([2.0]),
        )
        sol = solve(problem)
        np.testing.assert_allclose(sol.u, [1.0, 1.0], atol=1e-10)
        assert sol.primal <= 1e-10

    def test_equality_with_active_box(self):
        # min sum (u - 1)^2 s.t. sum u = 4, u <= [1.5, 1.5, 3]
        hess = 2 * np.eye(3)
        grad = -2 * np.ones(3)
        problem = QpProblem(
            hess=hess, grad=grad,
            l_rows=np.eye(3), w=np.array([1.5, 1.5, 3.0]),
            a_eq=np.ones((1, 3)), b_eq=np.array([4.0]),
        )
        sol = solve(problem)
        assert sol.status == "optimal"
        assert sol.u.sum() == pytest.approx(4.0, abs=1e-9)
        # symmetric optimum: u = (4/3 each) satisfies bounds, no clipping
        np.testing.assert_allclose(sol.u, [4.0 / 3] * 3, atol=1e-8)

    def test_equality_forcing_bound_activation(self):
        hess = 2 * np.diag([1.0, 1.0])
        grad = np.zeros(2)
        problem = QpProblem(
            hess=hess, grad=grad,
            l_rows=np.array([[1.0, 0.0]]), w=np.array([0.25]),
            a_eq=np.ones((1, 2)), b_eq=np.array([1.0]),
        )
        sol = solve(problem)
        np.testing.assert_allclose(sol.u, [0.25, 0.75], atol=1e-9)
        assert sol.duals[0] > 0


class TestWarmStart:
    def test_warm_start_reproduces_cold_result(self):
        rng = np.random.default_rng(6)
        hess = random_spd(rng, 10)
        l_rows = np.vstack([np.eye(10), -np.eye(10)])
        solver = DenseQpSolver(hess, l_rows)
        prev_active = ()
        for trial in range(10):
            grad = rng.normal(size=10) * 5
            w = np.concatenate([np.full(10, 0.3), np.full(10, 0.3)])
            cold = solver.solve(grad, w)
            warm = solver.solve(grad, w, warm_active=prev_active)
            np.testing.assert_allclose(warm.u, cold.u, atol=1e-9)
            prev_active = warm.active


class TestDumpLoad:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        problem = random_feasible_problem(rng, 3, 4)
        dump_problem(problem, str(tmp_path / "qp"))
        loaded = load_problem(str(tmp_path / "qp"))
        np.testing.assert_allclose(loaded.hess, problem.hess)
        np.testing.assert_allclose(loaded.grad, problem.grad)
        np.testing.assert_allclose(loaded.l_rows, problem.l_rows)
        np.testing.assert_allclose(loaded.w, problem.w)
        assert solve(loaded).objective == pytest.approx(solve(problem).objective)

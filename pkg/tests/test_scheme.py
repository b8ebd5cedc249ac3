import numpy as np
import pytest

from modeswitch.model import (
    COMPONENTS,
    MINUS,
    PLUS,
    CoefficientFunction,
    Driver,
    SwitchingProblem,
    Terminal,
    validate_assumptions,
)
from modeswitch.scheme import (
    SchemeError,
    first_iterate,
    initialize_scheme,
    iterate_once,
    solve_system,
    system_obstacles,
)
from modeswitch.verify import closed_form_family, counterexample_problem

from conftest import bin_backend, build_problem, det_backend, random_affine_driver


def multi_sweep_problem():
    """Cost staircase: both cost rates are 5 with zero terminals, switching
    cost 0.5, exits blocked. The warm start caps both cost components at the
    switching cost, and each sweep can raise the mutual cap by at most one
    more switching cost, so convergence takes ~T*5/0.5 sweeps.
    """
    drivers = {(MINUS, 1): (5.0, 0.0, 0.0), (MINUS, 2): (5.0, 0.0, 0.0)}
    return build_problem(drivers=drivers, ell=0.5, a=10.0, b=10.0)


class TestInitializeScheme:
    def test_counterexample_stage0_matches_exponential(self):
        problem = counterexample_problem(1.0)
        be = det_backend(512)
        start = initialize_scheme(problem, be)
        exact = np.exp(1.0 - be.grid.times)
        err = max(
            abs(float(start.y_plus0[1].y.at(k)[0]) - exact[k]) for k in range(513)
        )
        assert err <= 2.0 * be.grid.dt

    def test_zero_problem_all_zero(self, zero_problem):
        start = initialize_scheme(zero_problem, det_backend(64))
        for mode in (1, 2):
            assert start.y_plus0[mode].y.sup_norm() == 0.0
        assert start.dot_y.sup_norm() == 0.0
        assert start.alpha(0.0, 0.0, 0.0, 0.0) == 0.0

    def test_alpha_minimum_on_counterexample(self):
        # at t=0, y=1 the four candidate rates are 1, 1+1, 2, 2+1
        problem = counterexample_problem(1.0)
        start = initialize_scheme(problem, det_backend(64))
        assert start.alpha(0.0, np.zeros(1), 1.0, 0.0) == pytest.approx(1.0)

    def test_warm_start_bounded_by_shifted_profits(self):
        problem = counterexample_problem(1.0)
        be = det_backend(256)
        start = initialize_scheme(problem, be)
        for mode in (1, 2):
            for k in range(257):
                assert np.all(start.dot_y.at(k) <= start.big_l[mode].at(k) + 1e-10)

    def test_validation_failure_aborts_with_report(self):
        bad = build_problem(ell=0.0)
        with pytest.raises(SchemeError, match="A2"):
            initialize_scheme(bad, det_backend(16))
        try:
            initialize_scheme(bad, det_backend(16))
        except SchemeError as exc:
            assert not exc.report.all_passed
            assert any("A2" in c.name for c in exc.report.failures())


class TestFirstIterate:
    def test_zero_problem_stays_zero(self, zero_problem):
        be = det_backend(64)
        start = initialize_scheme(zero_problem, be)
        it1 = first_iterate(start, zero_problem, be)
        for key in COMPONENTS:
            assert it1.sol[key].y.sup_norm() == 0.0
            assert it1.sol[key].dk.sup_norm() == 0.0

    def test_counterexample_orderings(self):
        problem = counterexample_problem(1.0)
        be = det_backend(256)
        start = initialize_scheme(problem, be)
        it1 = first_iterate(start, problem, be)
        for mode in (1, 2):
            for k in range(257):
                assert np.all(
                    it1.sol[(PLUS, mode)].y.at(k) >= start.y_plus0[mode].y.at(k) - 1e-10
                )
                assert np.all(it1.sol[(MINUS, mode)].y.at(k) >= start.dot_y.at(k) - 1e-10)


class TestIterateOnce:
    def test_zero_problem_immediate_fixed_point(self, zero_problem):
        be = det_backend(64)
        start = initialize_scheme(zero_problem, be)
        it1 = first_iterate(start, zero_problem, be)
        it2 = iterate_once(it1, zero_problem, be)
        for key in COMPONENTS:
            assert it2.sol[key].y.sup_diff(it1.sol[key].y) == 0.0

    def test_converged_iterate_is_fixed(self):
        problem = counterexample_problem(1.0)
        be = det_backend(256)
        solution, trace = solve_system(problem, be)
        assert trace.converged
        from modeswitch.scheme import Iterate

        again = iterate_once(Iterate(n=99, sol=solution.sol), problem, be)
        for key in COMPONENTS:
            assert again.sol[key].y.sup_diff(solution.sol[key].y) <= 1e-10

    def test_decreasing_sweep_flagged_as_scheme_failure(self):
        # an iterate sitting above the fixed point must come back down, which
        # the monotonicity guard reports as a scheme failure
        problem = counterexample_problem(1.0)
        be = det_backend(128)
        solution, trace = solve_system(problem, be)
        assert trace.converged
        from modeswitch.scheme import Iterate
        from modeswitch.rbsde import RbsdeSolution

        doctored = {}
        for key in COMPONENTS:
            comp = solution.sol[key]
            lift = 1.0 if key[0] == MINUS else 0.0
            doctored[key] = RbsdeSolution(comp.y + lift, comp.z, comp.dk)
        with pytest.raises(SchemeError, match="cost mode"):
            iterate_once(Iterate(n=1, sol=doctored), problem, be)

    def test_counterexample_delta_trace(self):
        problem = counterexample_problem(1.0)
        be = det_backend(512)
        start = initialize_scheme(problem, be)
        current = first_iterate(start, problem, be)
        deltas = []
        for _ in range(200):
            nxt = iterate_once(current, problem, be)
            deltas.append(
                max(nxt.sol[key].y.sup_diff(current.sol[key].y) for key in COMPONENTS)
            )
            current = nxt
            if deltas[-1] < 1e-8:
                break
        assert deltas[-1] < 1e-8
        assert len(deltas) <= 200
        assert all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))


class TestSolveSystem:
    def test_counterexample_minimal_solution(self):
        problem = counterexample_problem(1.0)
        be = det_backend(2000)
        solution, trace = solve_system(problem, be, tol=1e-8)
        assert trace.converged
        assert solution.y0(PLUS, 1) <= np.e + 1e-3
        fam1 = closed_form_family(1, 1.0)
        times = be.grid.times
        for side, mode in COMPONENTS:
            exact = fam1.y(side, mode, times)
            for k in range(0, 2001, 100):
                assert float(solution.sol[(side, mode)].y.at(k)[0]) <= exact[k] + 1e-3

    def test_zero_problem_converges_in_two_sweeps(self, zero_problem):
        solution, trace = solve_system(zero_problem, det_backend(64))
        assert trace.converged and trace.iterations <= 2
        for side, mode in COMPONENTS:
            assert solution.y0(side, mode) == 0.0

    def test_terminal_values_exact(self):
        problem = counterexample_problem(1.0)
        solution, _ = solve_system(problem, det_backend(256))
        for side, mode in COMPONENTS:
            assert float(solution.sol[(side, mode)].y.at(256)[0]) == 1.0

    def test_refinement_order_at_least_one(self):
        problem = counterexample_problem(1.0)
        y0 = {}
        for n in (500, 1000, 2000):
            solution, _ = solve_system(problem, det_backend(n))
            y0[n] = solution.y0(PLUS, 1)
        coarse = abs(y0[500] - y0[1000])
        fine = abs(y0[1000] - y0[2000])
        order = np.log2(coarse / fine)
        assert order >= 0.8
        assert fine <= 2.0 * (1.0 / 1000)

    def test_uniform_bound_stable_under_refinement(self):
        problem = counterexample_problem(1.0)
        sup = {}
        for n in (250, 500):
            solution, _ = solve_system(problem, det_backend(n))
            sup[n] = max(solution.sol[key].y.sup_norm() for key in COMPONENTS)
        assert sup[500] / sup[250] <= 1.5

    def test_reflection_density_bounded(self):
        problem = counterexample_problem(1.0)
        phi0 = np.e + (1 - np.exp(-3)) / 3
        for n in (500, 1000):
            solution, _ = solve_system(problem, det_backend(n))
            dt = 1.0 / n
            density_1 = max(
                float(solution.sol[(MINUS, 1)].dk.at(k)[0]) / dt for k in range(n)
            )
            density_2 = max(
                float(solution.sol[(MINUS, 2)].dk.at(k)[0]) / dt for k in range(n)
            )
            assert np.e / 2 <= density_1 <= 2 * np.e
            assert density_2 == pytest.approx(phi0, rel=0.05)
            # the limit puts all reflection mass on the cost side
            assert all(solution.sol[(PLUS, m)].dk.sup_norm() == 0.0 for m in (1, 2))

    def test_multi_sweep_convergence_and_nonconvergence_report(self):
        problem = multi_sweep_problem()
        be = det_backend(128)
        solution, trace = solve_system(problem, be)
        assert trace.converged
        assert trace.iterations >= 5
        # once converged the mutual caps no longer bind: plain rate-5 integral
        assert solution.y0(MINUS, 1) == pytest.approx(5.0, abs=1e-10)

        short, short_trace = solve_system(problem, be, max_iter=1)
        assert not short_trace.converged
        assert short_trace.iterations == 1
        assert short_trace.deltas[0] >= short_trace.tol

    def test_bad_tolerance_rejected(self, zero_problem):
        with pytest.raises(ValueError):
            solve_system(zero_problem, det_backend(16), tol=-1.0)
        with pytest.raises(ValueError):
            solve_system(zero_problem, det_backend(16), max_iter=0)

    def test_counterexample_on_lattice_matches_deterministic(self):
        # the fixture problem has no state dependence, so every lattice node
        # carries the single-node value
        problem = counterexample_problem(1.0)
        solution, trace = solve_system(problem, bin_backend(200))
        assert trace.converged
        assert solution.y0(PLUS, 1) == pytest.approx(np.e, abs=2e-2)
        spread = max(
            float(np.ptp(solution.sol[key].y.at(k)))
            for key in COMPONENTS
            for k in range(201)
        )
        assert spread <= 1e-10

    def test_lattice_with_state_and_z_dependence(self):
        from modeswitch.verify import audit_solution

        drivers = {
            (PLUS, 1): Driver(1, PLUS, CoefficientFunction.constant(0.2), c1=0.3, c2=0.2, state_feature="x"),
            (PLUS, 2): Driver(2, PLUS, CoefficientFunction.constant(0.1), c1=0.3, c2=-0.2, state_feature="x"),
            (MINUS, 1): (0.1, 0.2, 0.0),
            (MINUS, 2): (0.1, 0.0, 0.2),
        }
        problem = build_problem(drivers=drivers, ell=2.0, a=2.0, b=2.0, terminals=Terminal(0.0, 1.0))
        be = bin_backend(64)
        solution, trace = solve_system(problem, be)
        assert trace.converged
        report = audit_solution(solution, problem, be)
        assert report.max_over("max_constraint_violation") <= 1e-10
        assert report.max_over("skorokhod_sum") <= 1e-8
        assert report.max_over("k_sign_violation") == 0.0


def random_admissible_problem(rng):
    """Random affine problem satisfying every admissibility check.

    All four terminals sit within ell(T)/2 of a common level, which is enough
    for the horizon inequalities whatever the exit costs; driver slopes stay
    small enough that the one-step operator is monotone on both backends.
    """
    ell_level = float(rng.uniform(0.5, 1.5))
    ell = CoefficientFunction.constant(ell_level)
    a = CoefficientFunction.constant(float(rng.uniform(0.0, 1.0)))
    b = CoefficientFunction.constant(float(rng.uniform(0.0, 1.0)))
    base = float(rng.uniform(-1.0, 1.0))
    lift = rng.uniform(0.0, ell_level / 2, size=2)
    drop = rng.uniform(0.0, ell_level / 2, size=2)
    terminals = {
        (PLUS, 1): Terminal(base + lift[0]),
        (PLUS, 2): Terminal(base + lift[1]),
        (MINUS, 1): Terminal(base - drop[0]),
        (MINUS, 2): Terminal(base - drop[1]),
    }
    drivers = {
        (side, mode): random_affine_driver(rng, mode=mode, side=side, max_slope=0.5)
        for side, mode in COMPONENTS
    }
    return SwitchingProblem(
        horizon=1.0, drivers=drivers, ell=(ell, ell), a=(a, a), b=(b, b), terminals=terminals
    )


class TestRandomizedMonotoneConvergence:
    """The iteration's structural claims on generic admissible data: every
    sweep is pointwise nondecreasing and the limit satisfies the system."""

    @pytest.mark.parametrize("case", range(10))
    def test_sweeps_increase_and_converge(self, case):
        rng = np.random.default_rng(9000 + case)
        problem = random_admissible_problem(rng)
        backend = bin_backend(24) if case % 2 else det_backend(48)
        assert validate_assumptions(problem, backend.grid).all_passed
        n = backend.grid.n_steps

        start = initialize_scheme(problem, backend)
        current = first_iterate(start, problem, backend)
        for mode in (1, 2):
            for k in range(n + 1):
                assert np.all(
                    current.sol[(PLUS, mode)].y.at(k) >= start.y_plus0[mode].y.at(k) - 1e-10
                )
                assert np.all(current.sol[(MINUS, mode)].y.at(k) >= start.dot_y.at(k) - 1e-10)

        delta = np.inf
        for _ in range(300):
            nxt = iterate_once(current, problem, backend)  # raises on any decrease
            delta = max(nxt.sol[key].y.sup_diff(current.sol[key].y) for key in COMPONENTS)
            current = nxt
            if delta < 1e-6:
                break
        assert delta < 1e-6

        obstacles = system_obstacles(
            problem, {key: current.sol[key].y for key in COMPONENTS}, backend
        )
        slack = 10 * delta + 1e-10
        for side, mode in COMPONENTS:
            comp = current.sol[(side, mode)]
            xi = problem.terminal(side, mode)(backend.state(n))
            np.testing.assert_array_equal(comp.y.at(n), np.asarray(xi, dtype=float))
            for k in range(n + 1):
                gap = (
                    comp.y.at(k) - obstacles[(side, mode)].at(k)
                    if side == PLUS
                    else obstacles[(side, mode)].at(k) - comp.y.at(k)
                )
                assert float(np.min(gap)) >= -slack
                assert float(np.min(comp.dk.at(k))) >= 0.0

import numpy as np
import pytest
from scipy import linalg

from zoprolab import analysis
from zoprolab.analysis import (
    TheoremParams,
    check_proximal_condition,
    descriptive_alpha_floor,
    envelope_bound,
    envelope_check,
    estimate_k_bound,
    minimal_gamma,
    q_distance,
    slope_trace,
    theorem_constants,
)
from zoprolab.errors import ConsistencyError, ParameterError, PreconditionError
from zoprolab.estimators import SmoothingConfig, curvature_theta
from zoprolab.graph import (
    complete_graph,
    path_graph,
    random_connected_graph,
    ring_graph,
    spectral_summary,
    weight_matrix,
)
from zoprolab.objectives import make_logistic_problem, make_quadratic_problem, solve_reference
from zoprolab.solvers import AlgoConfig, DPolicy, RunRecord, choose_D, run_sopro, run_zopro
from zoprolab.solvers.driver import initial_point

RHO = 0.5


def identical_problem(m=1.0, M=1.0, d=2):
    return make_quadratic_problem(4, d, seed=0, m=m, M=M, identical=True)


def constants_for(problem, graph, tau=10.0, cfg=None, **kwargs):
    cfg = cfg or AlgoConfig(rho=RHO)
    d_mats = [tau * np.eye(problem.dim)] * problem.n_nodes
    return theorem_constants(problem, graph, cfg, d_mats, theta=1.0, alpha_floor=1.0, k_bound=1.0, **kwargs)


def reference_setup():
    """N=4 ring of identical unit quadratics with D from the global proximal rule."""
    problem = identical_problem()
    graph = ring_graph(4)
    lambda_max = spectral_summary(weight_matrix(graph)).lambda_max
    policy = DPolicy(theta=1.0, eta=2.0, alpha_floor=1.0)
    d_mats = choose_D(policy, problem.bounds(), RHO, lambda_max, problem.dim)
    return problem, graph, d_mats


class TestTheoremParams:
    def test_defaults(self):
        eta, beta, gamma = TheoremParams().resolve(alpha_floor=0.5, m=1.0)
        assert (eta, beta) == (2.0, 4.0)
        assert gamma == pytest.approx(1.1 * minimal_gamma(1.0, 2.0, 4.0))

    def test_minimal_gamma(self):
        assert minimal_gamma(1.0, 2.0, 2.0) == pytest.approx(6.0)

    @pytest.mark.parametrize(
        "params", [TheoremParams(eta=1.0), TheoremParams(beta=0.5), TheoremParams(gamma=5.0)]
    )
    def test_constraints(self, params):
        with pytest.raises(ParameterError):
            params.resolve(alpha_floor=1.0, m=1.0)


class TestProximalCondition:
    def test_global_rule_satisfies_condition(self):
        problem = make_logistic_problem(8, 3, 5, lam=1.0, seed=2)
        graph = random_connected_graph(8, 4, seed=2)
        lambda_max = spectral_summary(weight_matrix(graph)).lambda_max
        for theta in (0.5, 1.0):
            policy = DPolicy(theta=theta)
            d_mats = choose_D(policy, problem.bounds(), RHO, lambda_max, problem.dim)
            assert check_proximal_condition(problem, graph, d_mats, theta, policy.eta, RHO) > 0

    def test_reference_margin(self):
        problem, graph, d_mats = reference_setup()
        np.testing.assert_allclose(d_mats[0], 1.8375 * np.eye(2))
        # tau - c - rho (1 + lambda_max) = 1.8375 + 0.75 - 2.5
        assert check_proximal_condition(problem, graph, d_mats, 1.0, 2.0, RHO) == pytest.approx(0.0875)

    def test_small_proximal_term_is_rejected(self):
        problem = identical_problem(M=3.0)
        with pytest.raises(PreconditionError) as info:
            constants_for(problem, ring_graph(4), tau=0.01)
        assert info.value.margin < 0


def _dense_delta(problem, graph, d_mats, eta=2.0, beta=2.0, grid=61) -> float:
    """Grid-only sup of the contraction factor, built from full Nd x Nd matrices."""
    n, d = problem.n_nodes, problem.dim
    bounds = problem.bounds()
    lam_M = np.kron(np.diag([b.M for b in bounds]), np.eye(d))
    lam_m = np.kron(np.diag([b.m for b in bounds]), np.eye(d))
    big_d = linalg.block_diag(*d_mats)
    w = np.kron(weight_matrix(graph), np.eye(d))
    eigs = linalg.eigvalsh(w)
    lambda_w = eigs[eigs > 1e-9 * eigs[-1]][0]
    r = (lam_M + lam_m) / 2 + big_d
    lam_bar = lam_M - (lam_M + lam_m) / 2
    coupling = RHO * (np.eye(n * d) + w)
    kappa = linalg.eigvalsh(r - lam_M / (2 * eta) - lam_bar @ lam_bar / beta - 2 * lam_bar - coupling)[0]
    m = min(b.m for b in bounds)
    gamma = 1.1 * (2 * m * (eta - 1) + eta + beta) / (eta - 1)
    delta_c = (2 * m - gamma) * (1 - eta) - eta - beta
    norm_sq = linalg.norm(lam_M + big_d, 2) ** 2

    best = 0.0
    for c1 in np.logspace(-3, 3, grid):
        for c2 in np.logspace(-3, 3, grid):
            b_over_rho = (1 + 1 / c1) * (1 + 1 / c2) * lam_M @ lam_M / (RHO * lambda_w) + r
            t1 = RHO * lambda_w * kappa / (2 * (1 + c1) * norm_sq)
            t2 = 1 / ((1 + 1 / c1) * (1 + c2))
            t3 = delta_c / linalg.eigvalsh(b_over_rho)[-1]
            best = max(best, min(t1, t2, t3))
    return best


class TestTheoremConstants:
    def test_reference_delta(self, golden):
        problem, graph, d_mats = reference_setup()
        c = theorem_constants(problem, graph, AlgoConfig(rho=RHO), d_mats, 1.0, 1.0, 1.0)
        assert 0 < c.delta < 1
        assert c.kappa == pytest.approx(0.0875)
        assert c.delta_c == pytest.approx(0.6)
        coarse = _dense_delta(problem, graph, d_mats)
        assert coarse * (1 - 1e-9) <= c.delta <= 1.3 * coarse
        # Closed-form supremum where the three contraction terms balance; the grid can only undershoot it.
        (delta_sup,) = golden("delta_reference_ring4", [c.delta], rtol=0.021)
        assert 0.98 * delta_sup <= c.delta <= delta_sup * (1 + 1e-4)

    def test_exact_oracle_has_no_offset(self):
        c = constants_for(identical_problem(), ring_graph(4), exact_oracle=True)
        assert c.g1_sq == c.g2_sq == 0.0
        assert c.g_offset == 0.0
        assert c.floor == 0.0

    def test_matrices(self):
        c = constants_for(identical_problem(M=2.0), ring_graph(4))
        assert c.r_matrix.shape == (8, 8)
        np.testing.assert_allclose(c.r_blocks[0], (1.5 + 10.0) * np.eye(2), atol=1e-12)
        q = c.q_matrix
        assert q.shape == (16, 16)
        np.testing.assert_allclose(q[:8, :8], RHO * c.r_matrix)
        np.testing.assert_array_equal(q[8:, 8:], np.eye(8))
        assert c.to_json()["delta"] == c.delta

    def test_delta_grows_with_connectivity(self):
        problem = identical_problem()
        deltas = [constants_for(problem, g).delta for g in (path_graph(4), ring_graph(4), complete_graph(4))]
        assert deltas[0] <= deltas[1] <= deltas[2]

    def test_delta_shrinks_with_smoothness(self):
        deltas = [constants_for(identical_problem(M=M), ring_graph(4)).delta for M in (1.0, 1.5, 2.0)]
        assert deltas[0] >= deltas[1] >= deltas[2]

    def test_delta_grows_with_convexity(self):
        deltas = [constants_for(identical_problem(m=m, M=2.0), ring_graph(4)).delta for m in (1.0, 1.5, 2.0)]
        assert deltas[0] <= deltas[1] <= deltas[2]

    def test_floor_follows_smoothing_radius_and_batch(self):
        problem, graph = identical_problem(), ring_graph(4)

        def floor(mu, batch):
            cfg = AlgoConfig(rho=RHO, smoothing=SmoothingConfig(mu=mu, batch=batch))
            return constants_for(problem, graph, cfg=cfg).floor

        by_mu = [floor(mu, 50) for mu in (0.01, 0.05, 0.1)]
        by_batch = [floor(0.05, b) for b in (10, 50, 100)]
        assert by_mu[0] <= by_mu[1] <= by_mu[2]
        assert by_batch[0] >= by_batch[1] >= by_batch[2]


class TestQDistance:
    @pytest.fixture
    def scenario(self):
        problem = make_quadratic_problem(4, 2, seed=3)
        graph = ring_graph(4)
        x_star = solve_reference(problem)
        c = constants_for(problem, graph, tau=12.0)
        return problem, graph, x_star, c

    def test_zero_at_optimum(self, scenario):
        problem, graph, x_star, c = scenario
        xs = np.tile(x_star, (4, 1))
        qs = -problem.stacked_gradient(xs)
        assert q_distance((xs, qs), x_star, problem, weight_matrix(graph), RHO, c.r_blocks) <= 1e-20

    def test_zero_dual_gives_dual_optimum_norm(self, scenario):
        problem, graph, x_star, c = scenario
        xs = np.tile(x_star, (4, 1))
        geometry = analysis.DualGeometry(weight_matrix(graph))
        v_star = analysis.optimal_dual(problem, x_star, geometry)
        value = q_distance((xs, np.zeros_like(xs)), x_star, problem, weight_matrix(graph), RHO, c.r_blocks)
        assert value == pytest.approx(float(np.sum(v_star**2)), rel=1e-12)

    def test_matches_dense_construction(self, scenario):
        problem, graph, x_star, c = scenario
        rng = np.random.default_rng(8)
        xs = rng.standard_normal((4, 2))
        qs = rng.standard_normal((4, 2))
        qs -= qs.mean(axis=0)

        w = np.kron(weight_matrix(graph), np.eye(2))
        vals, vecs = linalg.eigh(w)
        inv_sqrt = np.where(vals > 1e-9 * vals[-1], 1 / np.sqrt(np.clip(vals, 1e-300, None)), 0.0)
        half_pinv = (vecs * inv_sqrt) @ vecs.T
        grads = problem.stacked_gradient(np.tile(x_star, (4, 1))).reshape(-1)
        dv = half_pinv @ qs.reshape(-1) + half_pinv @ grads
        dx = (xs - x_star).reshape(-1)
        expected = RHO * dx @ c.r_matrix @ dx + dv @ dv

        p = weight_matrix(graph)
        assert q_distance((xs, qs), x_star, problem, p, RHO, c.r_blocks) == pytest.approx(expected, rel=1e-8)
        assert q_distance((xs, qs), x_star, problem, p, RHO, c.r_matrix) == pytest.approx(expected, rel=1e-8)

    def test_dual_outside_range(self, scenario):
        problem, graph, x_star, c = scenario
        xs = np.tile(x_star, (4, 1))
        with pytest.raises(ConsistencyError):
            q_distance((xs, np.ones_like(xs)), x_star, problem, weight_matrix(graph), RHO, c.r_blocks)


class TestEnvelope:
    def test_bound_converges_to_floor(self):
        bound = envelope_bound(10.0, 0.1, 0.05, 400)
        assert bound[0] == 10.0
        assert np.all(np.diff(bound) <= 0)
        assert bound[-1] == pytest.approx(0.5, rel=1e-9)

    def test_runs_at_optimum(self):
        problem = make_quadratic_problem(4, 2, seed=3)
        graph = ring_graph(4)
        x_star = solve_reference(problem)
        c = constants_for(problem, graph, tau=12.0)
        xs = np.tile(x_star, (4, 1))
        qs = -problem.stacked_gradient(xs)
        runs = []
        for _ in range(10):
            run = RunRecord("zopro")
            run.states_history = [(xs, qs)] * 20
            runs.append(run)
        report = envelope_check(runs, c, problem, graph, x_star)
        assert report.violations == ()
        assert report.tail_within_floor
        assert report.notes == ()
        np.testing.assert_allclose(report.measured, 0.0, atol=1e-20)

    def test_needs_recorded_states(self):
        problem = identical_problem()
        c = constants_for(problem, ring_graph(4))
        with pytest.raises(ParameterError):
            envelope_check([RunRecord("zopro")], c, problem, ring_graph(4), np.zeros(2))


def _record(slopes, stepsizes=None, accepted=None) -> RunRecord:
    run = RunRecord("zopro")
    run.slopes = [np.asarray(s, dtype=float) for s in slopes]
    run.stepsizes = [np.asarray(a, dtype=float) for a in (stepsizes or [[1.0] * len(s) for s in slopes])]
    run.armijo_accepted = [np.asarray(ok, dtype=bool) for ok in (accepted or [[True] * len(s) for s in slopes])]
    return run


class TestSlopeTrace:
    def test_single_iteration(self):
        trace = slope_trace(_record([[-0.3]]))
        assert trace.window == 1
        assert trace.window_min_abs == pytest.approx(0.3)

    def test_zero_directions(self):
        trace = slope_trace(_record([[0.0, 0.0]] * 5))
        assert trace.window_min_abs == 0.0
        assert np.all(trace.slopes == 0)

    def test_window_is_last_tenth(self):
        slopes = [[-1.0]] * 18 + [[-0.2], [-0.4]]
        trace = slope_trace(_record(slopes))
        assert trace.window == 2
        assert trace.window_min_abs == pytest.approx(0.2)

    def test_requires_slopes(self):
        with pytest.raises(ParameterError):
            slope_trace(RunRecord("zopro"))


class TestEmpiricalFloors:
    def test_descriptive_alpha_skips_safeguarded_steps(self):
        alphas = [[0.5, 2.0**-30], [0.25, 1.0]]
        run = _record([[-1.0, -1.0]] * 2, stepsizes=alphas, accepted=[[True, False], [True, True]])
        assert descriptive_alpha_floor([run]) == 0.25

    def test_a_priori_alpha(self):
        assert analysis.a_priori_alpha_floor(AlgoConfig(shrink=0.5, max_backtracks=10)) == 0.5**10
        assert analysis.a_priori_alpha_floor(AlgoConfig()) == 0.25
        assert analysis.a_priori_alpha_floor(AlgoConfig(d_policy=DPolicy(alpha_floor=0.1))) == 0.1

    def test_k_bound_scales_largest_gradient(self):
        problem = identical_problem()
        run = RunRecord("zopro")
        xs = np.ones((4, 2))
        run.states_history = [(xs, np.zeros_like(xs))]
        expected = 1.5 * np.linalg.norm(problem.stacked_gradient(xs))
        assert estimate_k_bound(problem, [run]) == pytest.approx(expected)


@pytest.mark.slow
class TestEmpiricalEnvelope:
    def test_exact_baseline_decays_geometrically(self):
        graph = ring_graph(4)
        problem = make_quadratic_problem(4, 2, seed=5, m=1.0, M=1.0)
        x_star = solve_reference(problem)
        lambda_max = spectral_summary(weight_matrix(graph)).lambda_max
        cfg = AlgoConfig(rho=RHO, max_iterations=300, record_states=True, d_policy=DPolicy(theta=1.0))
        d_mats = choose_D(cfg.d_policy, problem.bounds(), RHO, lambda_max, problem.dim, theta=1.0)
        c = theorem_constants(problem, graph, cfg, d_mats, 1.0, 1.0, 1.0, exact_oracle=True)
        runs = [run_sopro(problem, graph, cfg, x_star, seed) for seed in range(10)]
        report = envelope_check(runs, c, problem, graph, x_star)
        assert report.violations == ()

    def test_zopro_reference_envelope(self):
        problem = identical_problem()
        graph = ring_graph(4)
        x_star = solve_reference(problem)
        smoothing = SmoothingConfig(mu=0.01, batch=64)
        curvature = curvature_theta(problem, [initial_point(problem, s) for s in range(3)], smoothing)
        assert curvature.verified
        cfg = AlgoConfig(
            rho=RHO,
            smoothing=smoothing,
            d_policy=DPolicy(theta=curvature.theta),
            max_iterations=400,
            record_states=True,
        )
        runs = [run_zopro(problem, graph, cfg, seed, x_star) for seed in range(10)]
        # D was chosen at the a priori floor; every step, safeguarded or not, is at least that long.
        assert min(min(run.min_stepsize) for run in runs) >= cfg.alpha_floor
        d_mats = [s.d_mat for s in runs[0].final_states]
        k_bound = estimate_k_bound(problem, runs)
        c = theorem_constants(problem, graph, cfg, d_mats, curvature.theta, cfg.alpha_floor, k_bound)
        assert c.kappa > 0
        report = envelope_check(runs, c, problem, graph, x_star)
        assert report.violation_fraction <= 0.05
        assert report.tail_within_floor

    def test_slopes_vanish_on_converged_quadratic(self):
        problem = make_quadratic_problem(4, 3, seed=1)
        x_star = solve_reference(problem)
        smoothing = SmoothingConfig(mu=1e-3, batch=64, direction_mode="fixed_at_init")
        cfg = AlgoConfig(rho=RHO, smoothing=smoothing, max_iterations=800)
        run = run_zopro(problem, ring_graph(4), cfg, 0, x_star)
        assert slope_trace(run).window_min_abs <= 1e-3

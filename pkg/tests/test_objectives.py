import numpy as np
import pytest
from scipy import linalg
from scipy.optimize import approx_fprime

from zoprolab.errors import ParameterError
from zoprolab.objectives import (
    LogisticObjective,
    Problem,
    QuadraticObjective,
    make_logistic_problem,
    make_quadratic_problem,
    problem_from_json,
    softplus,
    solve_reference,
)


@pytest.fixture
def logistic():
    return make_logistic_problem(4, 5, 5, lam=1.0, seed=11)


@pytest.fixture
def quadratic():
    return make_quadratic_problem(4, 3, seed=2, m=1.0, M=4.0)


class TestLogisticObjective:
    def test_gradient_matches_finite_difference(self, logistic):
        rng = np.random.default_rng(0)
        node = logistic.nodes[0]
        x = rng.standard_normal(node.dim)
        fd = approx_fprime(x, node.value, 1e-7)
        np.testing.assert_allclose(node.gradient(x), fd, rtol=1e-4, atol=1e-5)

    def test_hessian_matches_gradient_difference(self, logistic):
        rng = np.random.default_rng(1)
        node = logistic.nodes[1]
        x = rng.standard_normal(node.dim)
        h = 1e-6
        fd = np.column_stack([(node.gradient(x + h * e) - node.gradient(x - h * e)) / (2 * h) for e in np.eye(5)])
        np.testing.assert_allclose(node.hessian(x), fd, rtol=1e-5, atol=1e-6)

    def test_values_match_value(self, logistic):
        rng = np.random.default_rng(2)
        node = logistic.nodes[2]
        xs = rng.standard_normal((7, node.dim))
        np.testing.assert_allclose(node.values(xs), [node.value(x) for x in xs], rtol=1e-13)

    def test_bounds_sandwich_hessian(self, logistic):
        rng = np.random.default_rng(3)
        for node in logistic.nodes:
            b = node.convexity_bounds()
            assert b.m == pytest.approx(1.0 / 4)
            for _ in range(5):
                eigs = linalg.eigvalsh(node.hessian(3 * rng.standard_normal(node.dim)))
                assert eigs[0] >= b.m - 1e-12
                assert eigs[-1] <= b.M + 1e-12

    def test_value_is_finite_far_out(self, logistic):
        node = logistic.nodes[0]
        assert np.isfinite(node.value(np.full(node.dim, 1e4)))

    def test_rejects_bad_labels(self):
        with pytest.raises(ParameterError, match="-1 or \\+1"):
            LogisticObjective(np.ones((2, 2)), np.array([0.0, 1.0]), 1.0)

    def test_data_is_read_only(self, logistic):
        with pytest.raises(ValueError):
            logistic.nodes[0].features[0, 0] = 1.0

    def test_golden_two_node_values(self, golden):
        # lam = 1 over N = 2 nodes gives reg = 0.5; rows are (f, f', f'') at x = 0 and x = 1.
        nodes = (
            LogisticObjective(np.array([[1.0]]), np.array([1.0]), lam=1.0, n_nodes=2),
            LogisticObjective(np.array([[2.0]]), np.array([-1.0]), lam=1.0, n_nodes=2),
        )
        table = [
            [[node.value(x), node.gradient(x)[0], node.hessian(x)[0, 0]] for x in (np.zeros(1), np.ones(1))]
            for node in nodes
        ]
        golden("logistic_two_node_values", table, rtol=1e-12)
        assert [node.convexity_bounds().M for node in nodes] == pytest.approx([0.75, 1.5])

    def test_seeded_two_node_problem(self):
        problem = make_logistic_problem(2, 1, 1, lam=1.0, seed=3)
        again = make_logistic_problem(2, 1, 1, lam=1.0, seed=3)
        assert problem.digest() == again.digest()
        assert (problem.n_nodes, problem.dim) == (2, 1)
        for node in problem.nodes:
            assert node.features.shape == (1, 1)
            assert node.labels[0] in (-1.0, 1.0)
            assert node.reg == 0.5
            x = np.array([0.7])
            expected = 0.5 * 0.5 * 0.49 + softplus(-node.labels[0] * node.features[0, 0] * 0.7)
            assert node.value(x) == pytest.approx(expected, rel=1e-12)
        x_star = solve_reference(problem)
        assert abs(problem.nodes[0].gradient(x_star)[0] + problem.nodes[1].gradient(x_star)[0]) <= 1e-8


class TestQuadraticObjective:
    def test_spectrum_spans_bounds(self, quadratic):
        for node in quadratic.nodes:
            b = node.convexity_bounds()
            assert b.m == pytest.approx(1.0)
            assert b.M == pytest.approx(4.0)

    def test_values_match_value(self, quadratic):
        rng = np.random.default_rng(4)
        node = quadratic.nodes[0]
        xs = rng.standard_normal((6, node.dim))
        np.testing.assert_allclose(node.values(xs), [node.value(x) for x in xs], rtol=1e-12)

    def test_gradient_vanishes_at_center(self, quadratic):
        node = quadratic.nodes[3]
        np.testing.assert_allclose(node.gradient(node.center), 0, atol=1e-14)

    def test_rejects_indefinite(self):
        with pytest.raises(ParameterError, match="positive definite"):
            QuadraticObjective(np.diag([1.0, -1.0]), np.zeros(2))

    def test_rejects_wrong_point_shape(self, quadratic):
        with pytest.raises(ParameterError):
            quadratic.nodes[0].value(np.zeros(5))


class TestProblem:
    def test_rejects_mixed_dimensions(self):
        a = QuadraticObjective(np.eye(2), np.zeros(2))
        b = QuadraticObjective(np.eye(3), np.zeros(3))
        with pytest.raises(ParameterError, match="dimension"):
            Problem((a, b))

    def test_rejects_single_node(self):
        with pytest.raises(ParameterError, match="at least 2"):
            make_quadratic_problem(1, 2, seed=0)

    def test_digest_survives_json(self, logistic):
        assert problem_from_json(logistic.to_json()).digest() == logistic.digest()

    def test_generator_is_deterministic(self):
        a = make_logistic_problem(3, 4, 5, lam=0.5, seed=9)
        b = make_logistic_problem(3, 4, 5, lam=0.5, seed=9)
        assert a.digest() == b.digest()
        assert a.meta["synthetic"] is True


class TestSolveReference:
    def test_logistic_stationary(self, logistic):
        x_star = solve_reference(logistic)
        assert np.linalg.norm(logistic.total_gradient(x_star)) < 1e-9

    def test_identical_quadratics_share_center(self):
        p = make_quadratic_problem(5, 3, seed=4, identical=True)
        np.testing.assert_allclose(solve_reference(p), p.nodes[0].center, atol=1e-10)

    def test_quadratic_closed_form(self, quadratic):
        a = sum(n.matrix for n in quadratic.nodes)
        rhs = sum(n.matrix @ n.center for n in quadratic.nodes)
        np.testing.assert_allclose(solve_reference(quadratic), np.linalg.solve(a, rhs), atol=1e-9)


def test_softplus_stable():
    z = np.array([-800.0, 0.0, 800.0])
    np.testing.assert_allclose(softplus(z), [0.0, np.log(2.0), 800.0])

import json
from pathlib import Path

import numpy as np
import pytest

from zoprolab.estimators import Estimates
from zoprolab.graph import ring_graph
from zoprolab.objectives import make_quadratic_problem, solve_reference

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden():
    """Compare against a committed, hand-derived fixture under tests/golden and return its values."""

    def check(name: str, values, rtol: float = 1e-10, atol: float = 0.0) -> np.ndarray:
        path = GOLDEN_DIR / f"{name}.json"
        if not path.exists():
            pytest.fail(f"missing golden fixture {path}")
        expected = np.array(json.loads(path.read_text()), dtype=float)
        np.testing.assert_allclose(np.asarray(values, dtype=float), expected, rtol=rtol, atol=atol)
        return expected

    return check


def _exact(node, obj, oracle, x, round):
    return Estimates(obj.gradient(x), obj.hessian(x), oracle(x))


@pytest.fixture
def exact_estimator():
    """Exact derivatives in place of the smoothing estimates; still one value query per round."""
    return _exact


@pytest.fixture
def ring4_quadratic():
    problem = make_quadratic_problem(4, 3, seed=1, m=1.0, M=4.0)
    return problem, ring_graph(4), solve_reference(problem)

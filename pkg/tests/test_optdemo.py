import numpy as np
import pytest

from mfhier import (REFERENCE, ModelHierarchy, ObjectiveOracle, ParameterBox,
                    descend, fd_gradient, himmelblau)
from mfhier.optdemo import (DescentSamples, FullObjectiveLevel,
                            SurrogateObjectiveLevel)


@pytest.fixture
def opt_box():
    return ParameterBox([[-5.0, 5.0], [-5.0, 5.0]])


HIMMELBLAU_MINIMA = np.array([
    [3.0, 2.0],
    [-2.805118086952745, 3.131312518250573],
    [-3.779310253377747, -3.283185991286170],
    [3.584428340330492, -1.848126526964404],
])


# ---------------------------------------------------------------- descent


def test_descend_quadratic_converges(opt_box):
    target = np.array([1.0, -2.0])

    def quadratic(x):
        return float(np.sum((x - target) ** 2))

    result = descend(quadratic, [4.0, 4.0], opt_box)
    assert np.linalg.norm(result.x - target) <= 1e-6
    assert result.converged


def test_descend_stationary_start_returns_immediately(opt_box):
    target = np.array([0.5, 0.5])

    def quadratic(x):
        return float(np.sum((x - target) ** 2))

    result = descend(quadratic, target, opt_box)
    np.testing.assert_array_equal(result.x, target)
    assert result.n_iters == 0
    assert len(result.samples) == 1


def test_descend_himmelblau_reaches_minimum(opt_box):
    oracle = ObjectiveOracle(delay_s=0.0)
    result = descend(oracle, [3.5, 2.0], opt_box)
    grad = fd_gradient(oracle, result.x, opt_box)
    assert np.linalg.norm(grad) <= 1e-6
    distances = np.linalg.norm(HIMMELBLAU_MINIMA - result.x, axis=1)
    assert distances.min() <= 1e-4
    assert result.j <= 1e-10


def test_descend_iterates_stay_in_box():
    box = ParameterBox([[-1.0, 1.0], [-1.0, 1.0]])

    def pull_outside(x):
        return float((x[0] - 10.0) ** 2 + x[1] ** 2)

    result = descend(pull_outside, [0.0, 0.5], box)
    for x, _ in result.samples:
        assert box.contains(x)
    assert result.x[0] == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- gradient


def test_fd_gradient_linear_function(opt_box):
    a = np.array([2.0, -3.0])
    grad = fd_gradient(lambda x: float(a @ x), [0.5, 0.5], opt_box)
    np.testing.assert_allclose(grad, a, atol=1e-9)


def test_fd_gradient_at_quadratic_minimum(opt_box):
    grad = fd_gradient(lambda x: float(np.sum(np.square(x))), [0.0, 0.0], opt_box)
    assert np.linalg.norm(grad) <= 1e-9


def test_fd_gradient_at_himmelblau_minimum(opt_box):
    grad = fd_gradient(himmelblau, [3.0, 2.0], opt_box)
    assert np.linalg.norm(grad) <= 1e-6


def test_fd_gradient_one_sided_at_boundary(opt_box):
    oracle = ObjectiveOracle(fn=lambda x: float(x[0] + x[1] ** 2), delay_s=0.0)
    grad = fd_gradient(oracle, [5.0, 0.0], opt_box)  # x at the right face
    assert grad[0] == pytest.approx(1.0, abs=1e-6)
    assert oracle.eval_counter == 4  # constant charge: 2 per dimension


# ---------------------------------------------------------------- oracle


def test_oracle_counts_every_call():
    oracle = ObjectiveOracle(delay_s=0.0)
    oracle([1.0, 1.0])
    oracle([2.0, 2.0])
    assert oracle.eval_counter == 2


# ---------------------------------------------------------------- levels


def build_hierarchy(opt_box, tol=1e-3, n_min=10):
    oracle = ObjectiveOracle(delay_s=0.0)
    full = FullObjectiveLevel(oracle, opt_box)
    surrogate = SurrogateObjectiveLevel(oracle, opt_box, n_min=n_min)
    hierarchy = ModelHierarchy([surrogate, full], tolerance=tol, box=opt_box)
    return hierarchy, oracle, surrogate, full


def test_first_request_goes_to_full_and_trains_surrogate(opt_box):
    hierarchy, oracle, surrogate, _ = build_hierarchy(opt_box)
    assert not surrogate.is_ready()
    answer, events = hierarchy.handle_request([3.5, 2.0])
    assert answer.stage == 2
    assert answer.estimate is REFERENCE
    assert surrogate.training.n >= 1
    assert (2, 1) in events


def test_infinite_tolerance_accepts_any_ready_candidate(opt_box):
    hierarchy, oracle, surrogate, _ = build_hierarchy(opt_box,
                                                      tol=float("inf"))
    hierarchy.handle_request([3.5, 2.0])   # trains the surrogate
    assert surrogate.is_ready()
    answer, _ = hierarchy.handle_request([-2.0, 3.0])
    assert answer.stage == 1
    assert answer.estimate <= float("inf")


def test_accepted_candidates_reverify(opt_box):
    hierarchy, oracle, surrogate, _ = build_hierarchy(opt_box)
    rng_starts = [[3.5, 2.0], [-3.0, 3.0], [3.4, 1.8], [-3.5, -3.0],
                  [3.2, 2.2], [2.8, 1.9], [3.6, -1.7], [-2.9, 3.2]]
    for start in rng_starts:
        answer, _ = hierarchy.handle_request(start)
        if answer.stage == 1:
            grad = fd_gradient(himmelblau, answer.payload.x, opt_box)
            assert np.linalg.norm(grad) <= hierarchy.tolerance + 1e-12
            assert answer.estimate == pytest.approx(
                np.linalg.norm(grad), abs=1e-12)


def test_surrogate_ignores_foreign_payloads(opt_box):
    _, _, surrogate, _ = build_hierarchy(opt_box)
    assert surrogate.absorb({"alien": 1}) is None


def test_near_duplicate_samples_thinned(opt_box):
    _, _, surrogate, _ = build_hierarchy(opt_box)
    x = np.array([1.0, 1.0])
    batch = DescentSamples([(x, 2.0), (x + 1e-9, 2.0000001), (x, 3.0)])
    surrogate.absorb(batch)
    # the exact duplicate replaced the value, the near-duplicate was skipped
    assert surrogate.training.n == 1
    assert surrogate.training.outputs[0][0] == 3.0


def test_disabled_surrogate_equals_plain_multistart(opt_box):
    # with adaptation off the surrogate never becomes ready, so the
    # hierarchy must reproduce plain multistart descent bit for bit
    oracle = ObjectiveOracle(delay_s=0.0)
    full = FullObjectiveLevel(oracle, opt_box)
    surrogate = SurrogateObjectiveLevel(oracle, opt_box)
    hierarchy = ModelHierarchy([surrogate, full], tolerance=1e-3, box=opt_box,
                               adaptation_enabled=False)
    starts = [[3.5, 2.0], [-3.0, 3.0], [1.0, -1.0], [0.1, 4.2]]
    records = hierarchy.run_query_stream(starts)
    reference_oracle = ObjectiveOracle(delay_s=0.0)
    for start, record in zip(starts, records):
        assert record.answer.stage == 2
        result = descend(reference_oracle, start, opt_box)
        assert np.array_equal(result.x, record.answer.payload.x)
        assert result.j == record.answer.payload.j


def test_oracle_accounting_no_hidden_evaluations(opt_box):
    hierarchy, oracle, surrogate, _ = build_hierarchy(opt_box, n_min=5)
    starts = [[3.5, 2.0], [-3.0, 3.0], [1.0, 1.0], [-3.5, -3.0], [0.5, -2.0]]
    records = hierarchy.run_query_stream(starts)
    stage2_calls = sum(r.answer.payload.descent_calls for r in records
                       if r.answer.stage == 2)
    stage1_attempts = sum(1 for r in records
                          for a in r.answer.attempts if a.stage == 1)
    expected = stage2_calls + SurrogateObjectiveLevel.CRITERION_CALLS * stage1_attempts
    assert oracle.eval_counter == expected

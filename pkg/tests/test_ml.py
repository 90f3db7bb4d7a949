import numpy as np
import pytest

from mfhier import (NotReadyError, ParameterBox, SplitMix64,
                    StaleGenerationError, error_estimate, fit,
                    predict_trajectory, rebase, solve_fom, solve_rb)
from mfhier.mlsurrogate import (MLCoefficientLevel, TrainingSet,
                                median_lengthscale)
from mfhier.rb import BasisChanged, ReducedBasisLevel


@pytest.fixture
def rb_level(small_system, diffusivity_box):
    level = ReducedBasisLevel(small_system)
    level.absorb(solve_fom(small_system, [1.0, 4.0]))
    level.absorb(solve_fom(small_system, [5.0, 0.5]))
    return level


def training_from_rb(rb_level, box, mus):
    ts = TrainingSet(generation=rb_level.generation)
    for mu in mus:
        mu = np.asarray(mu, dtype=float)
        rt = solve_rb(rb_level.reduced_system, mu)
        ts.add(mu, box.scale01(mu), rt.coefficients)
    return ts


def seeded_mus(n, seed=1234):
    rng = SplitMix64(seed)
    box = ParameterBox([[0.1, 10.0]] * 2)
    return [box.sample(rng) for _ in range(n)]


# ---------------------------------------------------------------- training set


def test_duplicate_input_replaces_output():
    ts = TrainingSet()
    ts.add([1.0, 2.0], [0.1, 0.2], [1.0, 1.0])
    ts.add([1.0, 2.0], [0.1, 0.2], [5.0, 5.0])
    assert ts.n == 1
    np.testing.assert_array_equal(ts.outputs[0], [5.0, 5.0])


def test_fit_requires_n_min(rb_level, diffusivity_box):
    ts = training_from_rb(rb_level, diffusivity_box, seeded_mus(3))
    with pytest.raises(NotReadyError):
        fit(ts, n_min=10)
    fit(ts, n_min=3)  # enough once the bar is lowered


def test_zero_outputs_give_zero_predictions(diffusivity_box):
    ts = TrainingSet()
    for mu in seeded_mus(12):
        ts.add(mu, diffusivity_box.scale01(mu), np.zeros(8))
    regressor = fit(ts, lengthscale=0.3)
    pred = regressor.predict(diffusivity_box.scale01([3.0, 3.0]))
    assert np.max(np.abs(pred)) <= 1e-12
    assert np.max(np.abs(regressor.weights)) <= 1e-12


def test_median_lengthscale_fallbacks():
    assert median_lengthscale(np.zeros((1, 2))) == 0.5
    assert median_lengthscale(np.zeros((4, 2))) == 0.5  # all-equal inputs
    spread = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert median_lengthscale(spread) == 1.0


def test_weights_satisfy_ridge_system(rb_level, diffusivity_box):
    ts = training_from_rb(rb_level, diffusivity_box, seeded_mus(15))
    regressor = fit(ts, lengthscale=0.3, ridge=1e-8)
    gram = regressor._kernel(regressor.inputs, regressor.inputs)
    gram[np.diag_indices_from(gram)] += regressor.ridge
    residual = gram @ regressor.weights - regressor.targets
    rel = np.linalg.norm(residual) / np.linalg.norm(regressor.targets)
    assert rel <= 1e-8


def test_near_interpolation_at_training_point(rb_level, diffusivity_box):
    mus = seeded_mus(15)
    ts = training_from_rb(rb_level, diffusivity_box, mus)
    regressor = fit(ts, lengthscale=0.3, ridge=1e-8)
    for idx in (0, 7, 14):
        pred = regressor.predict(diffusivity_box.scale01(mus[idx]))
        stored = ts.outputs[idx]
        rel = np.linalg.norm(pred - stored) / np.linalg.norm(stored)
        assert rel <= 1e-4


def test_far_query_prediction_decays(diffusivity_box):
    # single pair: prediction at distance >> lengthscale is near zero
    ts = TrainingSet()
    mu = np.array([0.2, 0.2])
    ts.add(mu, diffusivity_box.scale01(mu), np.full(5, 3.0))
    regressor = fit(ts, lengthscale=0.05, ridge=1e-8, n_min=1)
    far = regressor.predict(diffusivity_box.scale01([9.0, 9.0]))
    assert np.linalg.norm(far) <= 1e-6 * np.linalg.norm(ts.outputs[0])


def test_incremental_append_matches_full_fit(rb_level, diffusivity_box):
    mus = seeded_mus(20)
    full_ts = training_from_rb(rb_level, diffusivity_box, mus)
    base_ts = training_from_rb(rb_level, diffusivity_box, mus[:12])
    incremental = fit(base_ts, lengthscale=0.3, ridge=1e-10)
    for mu, out in zip(full_ts.raw_inputs[12:], full_ts.outputs[12:]):
        incremental.append(diffusivity_box.scale01(mu), out)
    reference = fit(full_ts, lengthscale=0.3, ridge=1e-10)
    probe = diffusivity_box.scale01([4.4, 6.1])
    np.testing.assert_allclose(incremental.predict(probe),
                               reference.predict(probe), rtol=1e-6, atol=1e-12)


def test_prediction_feeds_estimator(rb_level, diffusivity_box, small_system):
    ts = training_from_rb(rb_level, diffusivity_box, seeded_mus(12))
    regressor = fit(ts, lengthscale=0.3)
    mu = np.array([2.5, 2.5])
    trajectory = predict_trajectory(regressor, diffusivity_box, mu,
                                    small_system.K)
    delta = error_estimate(rb_level.reduced_system, mu, trajectory)
    assert np.isfinite(delta) and delta >= 0.0


# ---------------------------------------------------------------- rebase


def test_rebase_empty_set_stays_empty(rb_level):
    ts = TrainingSet(generation=0)
    out = rebase(ts, rb_level.generation, lambda mu: solve_rb(
        rb_level.reduced_system, mu))
    assert out.n == 0
    assert out.generation == rb_level.generation


def test_rebase_same_generation_is_noop(rb_level, diffusivity_box):
    ts = training_from_rb(rb_level, diffusivity_box, seeded_mus(4))
    before = [o.copy() for o in ts.outputs]
    rebase(ts, ts.generation, lambda mu: pytest.fail("solver must not run"))
    for old, new in zip(before, ts.outputs):
        np.testing.assert_array_equal(old, new)


def test_rebase_restores_interpolation(small_system, diffusivity_box):
    rb = ReducedBasisLevel(small_system)
    rb.absorb(solve_fom(small_system, [1.0, 4.0]))
    mus = seeded_mus(12)
    ts = training_from_rb(rb, diffusivity_box, mus)
    # basis grows: stored outputs now have the wrong width and generation
    rb.absorb(solve_fom(small_system, [8.0, 0.2]))
    rebase(ts, rb.generation, lambda mu: solve_rb(rb.reduced_system, mu))
    regressor = fit(ts, lengthscale=0.3, ridge=1e-8)
    fresh = solve_rb(rb.reduced_system, mus[3]).coefficients.ravel()
    pred = regressor.predict(diffusivity_box.scale01(mus[3]))
    assert np.linalg.norm(pred - fresh) / np.linalg.norm(fresh) <= 1e-4


# ---------------------------------------------------------------- level


def make_ml(small_system, diffusivity_box, n_absorb=0):
    rb = ReducedBasisLevel(small_system)
    rb.absorb(solve_fom(small_system, [1.0, 4.0]))
    ml = MLCoefficientLevel(diffusivity_box, rb, n_min=10, lengthscale=0.3)
    for mu in seeded_mus(n_absorb):
        trajectory = solve_rb(rb.reduced_system, mu)
        ml.absorb(trajectory)
    return rb, ml


def test_ml_level_not_ready_without_data(small_system, diffusivity_box):
    _, ml = make_ml(small_system, diffusivity_box, n_absorb=0)
    assert not ml.is_ready()


def test_ml_level_ready_after_n_min(small_system, diffusivity_box):
    _, ml = make_ml(small_system, diffusivity_box, n_absorb=9)
    assert not ml.is_ready()
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=10)
    assert ml.is_ready()
    mu = np.array([2.0, 3.0])
    output = ml.evaluate(mu)
    delta = ml.estimate_error(output, mu, next_level=rb)
    assert np.isfinite(delta) and delta >= 0.0
    assert output.payload.producer == "ml"


def test_ml_level_ignores_fom_trajectories(small_system, diffusivity_box):
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=3)
    assert ml.absorb(solve_fom(small_system, [1.0, 1.0])) is None
    assert ml.training.n == 3


def test_ml_level_rebases_on_basis_change(small_system, diffusivity_box):
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=12)
    assert ml.is_ready()
    old_width = len(ml.training.outputs[0])
    emitted = rb.absorb(solve_fom(small_system, [9.0, 0.15]))
    assert isinstance(emitted[0], BasisChanged)
    assert not ml.is_ready()  # regressor is stale now
    assert ml.absorb(emitted[0]) == []
    assert ml.is_ready()
    assert len(ml.training.outputs[0]) > old_width
    assert ml.training.n == 12  # inputs never shrink


def test_ml_level_stale_generation_guard(small_system, diffusivity_box):
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=12)
    rb.absorb(solve_fom(small_system, [9.0, 0.15]))  # bump, no rebase
    with pytest.raises(StaleGenerationError):
        ml.evaluate(np.array([1.0, 1.0]))


def test_ml_estimate_requires_next_level(small_system, diffusivity_box):
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=10)
    output = ml.evaluate(np.array([2.0, 2.0]))
    from mfhier import ConfigurationError
    with pytest.raises(ConfigurationError):
        ml.estimate_error(output, np.array([2.0, 2.0]), next_level=None)


def test_ml_training_set_monotone(small_system, diffusivity_box):
    rb, ml = make_ml(small_system, diffusivity_box, n_absorb=0)
    sizes = []
    for mu in seeded_mus(15):
        ml.absorb(solve_rb(rb.reduced_system, np.asarray(mu)))
        sizes.append(ml.training.n)
    assert sizes == sorted(sizes)

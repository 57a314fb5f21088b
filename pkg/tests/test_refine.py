import numpy as np
import pytest

from depthfill.metrics import invalid_count
from depthfill.predictor import NetworkSpec, PredictorModel, TrainConfig, dataset_loss, init_model, parameter_count
from depthfill.raster import DisparityRaster
from depthfill.refine import (
    RefineConfig,
    RefinementDivergedError,
    correct,
    default_eval_indices,
    iterative_refine,
    timed_correct,
    train_corrector,
)
from depthfill.synth import SceneConfig, generate_dataset

SPEC = NetworkSpec(input_size=(16, 16), levels=1, base_channels=2, seed=0)
FAST = TrainConfig(epochs=4, learning_rate=0.05, batch_size=2, seed=0)


@pytest.fixture(scope="module")
def samples():
    return generate_dataset(SceneConfig(seed=0, width=16, height=16, object_count=2, hole_fraction=0.5), 6)


def refine_cfg(k):
    return RefineConfig(iterations=k, predictor_spec=SPEC, train_cfg=FAST, eval_split_fraction=0.34)


def test_default_eval_indices():
    assert default_eval_indices(50, 0.2) == list(range(40, 50))
    assert default_eval_indices(2, 0.01) == [1]
    assert default_eval_indices(3, 0.99) == [1, 2]
    assert default_eval_indices(1, 0.5) == []


def test_hole_free_dataset(samples):
    data = [(s.rgb, s.truth) for s in samples]
    refined, reports = iterative_refine(data, refine_cfg(1))
    assert len(reports) == 1
    assert reports[0].corrected_pct is None
    assert all(r == s.truth for (_, r), s in zip(refined, samples))


def test_three_iterations(samples):
    data = [(s.rgb, s.holed) for s in samples]
    seen = []
    refined, reports = iterative_refine(data, refine_cfg(3), on_iteration=lambda it, m, t, r: seen.append((it, t)))
    assert [r.iteration for r in reports] == [1, 2, 3]
    assert [it for it, _ in seen] == [1, 2, 3]
    remaining = [r.remaining_invalid_avg for r in reports]
    assert remaining == sorted(remaining, reverse=True)
    for r in reports:
        assert r.corrected_pct is None or 0 <= r.corrected_pct <= 100

    # per-image target monotonicity and where each pixel came from, across iterations
    prev = [s.holed for s in samples]
    for _, targets in seen:
        for before, after in zip(prev, targets):
            assert invalid_count(after) <= invalid_count(before)
        prev = targets
    for s, (_, final) in zip(samples, refined):
        valid = s.holed.codes != 0
        assert np.array_equal(final.codes[valid], s.holed.codes[valid])


def test_refinement_is_reproducible(samples):
    data = [(s.rgb, s.holed) for s in samples]
    a = iterative_refine(data, refine_cfg(2))
    b = iterative_refine(data, refine_cfg(2))
    assert a[1] == b[1]
    assert all(x[1] == y[1] for x, y in zip(a[0], b[0]))


def test_divergence_names_iteration(samples):
    data = [(s.rgb, s.holed) for s in samples]
    bad = RefineConfig(iterations=2, predictor_spec=SPEC, train_cfg=TrainConfig(epochs=30, learning_rate=1e7))
    with pytest.raises(RefinementDivergedError) as info:
        with np.errstate(all="ignore"):
            iterative_refine(data, bad)
    assert info.value.iteration == 1


def test_refine_rejects_bad_input(samples):
    with pytest.raises(ValueError):
        iterative_refine([], refine_cfg(1))
    mixed = [(samples[0].rgb, samples[0].holed), (samples[1].rgb, DisparityRaster(np.ones((8, 8), dtype=int)))]
    with pytest.raises(ValueError):
        iterative_refine(mixed, refine_cfg(1))
    with pytest.raises(ValueError):
        RefineConfig(iterations=0)
    with pytest.raises(ValueError):
        RefineConfig(eval_split_fraction=1.0)


def test_corrector_identity_pairs_reduce_loss(samples):
    pairs = [(s.truth, s.truth) for s in samples]
    cfg = TrainConfig(epochs=10, learning_rate=0.05, batch_size=2)
    model = train_corrector(pairs, SPEC, cfg)
    assert model.spec.in_channels == 1
    start = init_model(NetworkSpec(input_size=(16, 16), levels=1, base_channels=2, seed=0, in_channels=1))
    assert dataset_loss(model, pairs) < dataset_loss(start, pairs)


def test_corrector_is_deterministic(samples):
    pairs = [(s.holed, s.truth) for s in samples]
    a = train_corrector(pairs, SPEC, FAST)
    b = train_corrector(pairs, SPEC, FAST)
    assert np.array_equal(a.parameters, b.parameters)


def test_correct_passes_valid_pixels_through(samples):
    model = train_corrector([(s.holed, s.truth) for s in samples], SPEC, FAST)
    for s in samples:
        out = correct(model, s.holed)
        valid = s.holed.codes != 0
        assert np.array_equal(out.codes[valid], s.holed.codes[valid])
        assert correct(model, s.truth) == s.truth
    _, ms = timed_correct(model, samples[0].holed)
    assert ms >= 0


def test_correct_with_dense_prediction_leaves_no_holes(samples):
    spec = NetworkSpec(input_size=(16, 16), levels=1, base_channels=2, in_channels=1)
    params = np.zeros(parameter_count(spec))
    params[-1] = 0.5  # head bias: constant mid-range output
    model = PredictorModel(spec, params)
    out = correct(model, samples[0].holed)
    assert invalid_count(out) == 0


def test_corrector_rejects_mismatched_pairs(samples):
    with pytest.raises(ValueError):
        train_corrector([], SPEC, FAST)
    with pytest.raises(ValueError):
        train_corrector([(samples[0].holed, DisparityRaster(np.ones((4, 4), dtype=int)))], SPEC, FAST)

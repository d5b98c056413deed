import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepred import (
    ScalerParams,
    ValidationError,
    apply_scaler,
    fit_scaler,
    gpt_to_residual,
    invert_scaler,
    residual_to_gpt,
)


def test_residual_substitution_example():
    out = gpt_to_residual([2.0, 50.0, 30.0, 40.0, 80.0])
    assert np.array_equal(out, [2.0, 50.0, 10.0, 40.0, 80.0])


def test_residual_zero_when_gpt_equals_trt():
    out = gpt_to_residual([1.0, 2.0, 40.0, 40.0, 5.0])
    assert out[2] == 0.0


def test_residual_can_be_negative():
    out = gpt_to_residual([1.0, 2.0, 50.0, 40.0, 5.0])
    assert out[2] == -10.0


def test_residual_inverse_example():
    back = residual_to_gpt([2.0, 50.0, 10.0, 40.0, 80.0])
    assert back[2] == 30.0


def test_residual_round_trip_over_random_targets():
    rng = np.random.default_rng(99)
    targets = rng.uniform(0.0, 100.0, size=(100, 5))
    back = residual_to_gpt(gpt_to_residual(targets))
    assert np.max(np.abs(back - targets)) < 1e-12


def test_min_max_fit():
    p = fit_scaler(np.array([[0.0], [50.0], [100.0]]), "min_max")
    assert p.stat_a[0] == 0.0
    assert p.stat_b[0] == 100.0


def test_standard_fit_population_convention():
    p = fit_scaler(np.array([[1.0], [3.0]]), "standard")
    assert p.stat_a[0] == 2.0
    assert p.stat_b[0] == 1.0  # divide by N, not N-1


def test_degenerate_column_scales_to_zero_and_inverts_to_constant():
    p = fit_scaler(np.array([[5.0], [5.0], [5.0]]), "min_max")
    assert p.degenerate[0]
    scaled = apply_scaler(np.array([[5.0], [7.0]]), p)
    assert np.array_equal(scaled, [[0.0], [0.0]])
    assert np.array_equal(invert_scaler(scaled, p), [[5.0], [5.0]])


def test_apply_min_max_example():
    data = np.array([[0.0], [50.0], [100.0]])
    p = fit_scaler(data, "min_max")
    assert np.array_equal(apply_scaler(data, p).ravel(), [0.0, 0.5, 1.0])


def test_mode_none_is_identity():
    p = fit_scaler(np.array([[1.0, 2.0]]), "none")
    x = np.array([3.0, -4.0])
    assert np.array_equal(apply_scaler(x, p), x)
    assert np.array_equal(invert_scaler(x, p), x)


def test_empty_data_errors():
    with pytest.raises(ValidationError):
        fit_scaler(np.zeros((0, 3)), "min_max")


def test_dimension_mismatch_errors():
    p = fit_scaler(np.array([[1.0, 2.0], [3.0, 4.0]]), "standard")
    with pytest.raises(ValidationError):
        apply_scaler(np.zeros(3), p)
    with pytest.raises(ValidationError):
        invert_scaler(np.zeros(3), p)


@pytest.mark.parametrize("mode", ["min_max", "standard"])
def test_scaled_training_data_properties(mode):
    rng = np.random.default_rng(3)
    data = rng.uniform(-20.0, 80.0, size=(200, 4))
    p = fit_scaler(data, mode)
    scaled = apply_scaler(data, p)
    if mode == "min_max":
        assert scaled.min() >= 0.0 and scaled.max() <= 1.0
    else:
        assert np.max(np.abs(scaled.mean(axis=0))) < 1e-9
        assert np.max(np.abs(scaled.std(axis=0) - 1.0)) < 1e-6


@pytest.mark.parametrize("mode", ["min_max", "standard"])
def test_scaler_round_trip(mode):
    rng = np.random.default_rng(17)
    data = rng.uniform(-5.0, 5.0, size=(50, 3))
    p = fit_scaler(data, mode)
    x = rng.uniform(-10.0, 10.0, size=(40, 3))
    back = invert_scaler(apply_scaler(x, p), p)
    assert np.max(np.abs(back - x)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2,
                max_size=30))
def test_scaler_round_trip_property(values):
    data = np.array(values)[:, None]
    for mode in ("min_max", "standard"):
        p = fit_scaler(data, mode)
        if p.degenerate[0]:
            continue
        back = invert_scaler(apply_scaler(data, p), p)
        assert np.max(np.abs(back - data)) < 1e-6 * max(1.0,
                                                        np.abs(data).max())


def test_scaler_serialization_round_trip():
    data = np.random.default_rng(1).uniform(0, 10, size=(20, 3))
    for mode in ("min_max", "standard", "none"):
        p = fit_scaler(data, mode)
        q = ScalerParams.from_dict(p.to_dict())
        assert q.mode == p.mode
        x = np.linspace(-1, 11, 3 * 4).reshape(4, 3)
        assert np.array_equal(apply_scaler(x, p), apply_scaler(x, q))


def test_fit_ignores_rows_it_is_not_given():
    """Fitting on the training rows only: perturbing other rows is invisible."""
    rng = np.random.default_rng(8)
    train = rng.uniform(0, 1, size=(30, 2))
    val = rng.uniform(0, 1, size=(10, 2))
    p1 = fit_scaler(train, "standard")
    val += 100.0  # perturb validation rows
    p2 = fit_scaler(train, "standard")
    assert np.array_equal(p1.stat_a, p2.stat_a)
    assert np.array_equal(p1.stat_b, p2.stat_b)

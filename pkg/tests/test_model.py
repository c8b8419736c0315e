import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import fd_gradient, fd_jacobian, rel_err
from forcingset.errors import EmptyDatasetError, ShapeError
from forcingset.model import (
    Claim,
    Dataset,
    Instance,
    ModelParams,
    class_probability,
    gradient,
    hessian,
    log_odds,
    per_sample_loss,
    predict,
    predict_proba,
    total_loss,
)
from forcingset.solver import train

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


class TestDataset:
    def test_ids_default_to_rows(self):
        ds = Dataset(np.zeros((3, 2)), [0, 1, 0])
        assert list(ds.active_ids) == [0, 1, 2]
        assert ds.n_active == 3 and ds.dim == 2

    def test_remove_is_functional(self):
        ds = Dataset(np.arange(6.0).reshape(3, 2), [0, 1, 0])
        smaller = ds.remove([1])
        assert ds.n_active == 3
        assert list(smaller.active_ids) == [0, 2]
        assert not smaller.is_active(1)
        np.testing.assert_array_equal(smaller.design, [[0, 1, 1], [4, 5, 1]])

    def test_arrays_are_read_only(self):
        ds = Dataset(np.zeros((2, 1)), [0, 1])
        with pytest.raises(ValueError):
            ds.X[0, 0] = 1.0

    def test_rejects_bad_labels_and_shapes(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 1)), [0, 2])
        with pytest.raises(ShapeError):
            Dataset(np.zeros((2, 1)), [0, 1, 1])

    def test_append_assigns_fresh_id(self):
        ds = Dataset(np.zeros((2, 1)), [0, 1]).remove([1])
        bigger, new_id = ds.append([3.0], 1)
        assert new_id == 2
        assert bigger.instance(2).label == 1


class TestLoss:
    def test_zero_weights_give_ln2(self):
        ds = Dataset(np.array([[0.0]]), [1])
        assert total_loss(ds, ModelParams(np.zeros(2), 0.0)) == pytest.approx(math.log(2), abs=1e-15)

    def test_hand_evaluated_pair(self):
        ds = Dataset(np.array([[1.0], [-1.0]]), [1, 0])
        got = total_loss(ds, ModelParams(np.array([2.0, 0.0]), 0.0))
        assert got == pytest.approx(math.log1p(math.exp(-2)), rel=1e-14)
        assert got == pytest.approx(0.1269, abs=1e-4)

    def test_regularizer_skips_intercept(self):
        ds = Dataset(np.array([[0.0]]), [1])
        a = total_loss(ds, ModelParams(np.array([0.0, 3.0]), 5.0))
        b = total_loss(ds, ModelParams(np.array([0.0, 3.0]), 0.0))
        assert a == b
        c = total_loss(ds, ModelParams(np.array([2.0, 0.0]), 0.5))
        assert c == pytest.approx(math.log(2) + 0.25 * 4, rel=1e-14)

    def test_trained_optimum_is_minimal(self, small_dataset, rng):
        p = train(small_dataset, 0.1, tol=1e-10)
        f = total_loss(small_dataset, p)
        for _ in range(50):
            other = p.replace(p.theta + rng.normal(scale=0.5, size=p.theta.size))
            assert f <= total_loss(small_dataset, other)

    def test_empty_and_mismatch(self):
        ds = Dataset(np.zeros((1, 2)), [1])
        with pytest.raises(EmptyDatasetError):
            total_loss(ds.remove([0]), ModelParams(np.zeros(3), 0.0))
        with pytest.raises(ShapeError):
            total_loss(ds, ModelParams(np.zeros(2), 0.0))

    @pytest.mark.parametrize("t", [0.3, -7.0, 100.0])
    def test_per_sample_zero_logit(self, t):
        inst = Instance(0, np.array([0.0]), 1)
        assert per_sample_loss(inst, ModelParams(np.array([t, 0.0]))) == pytest.approx(math.log(2))

    def test_saturation(self):
        inst = Instance(0, np.array([1.0]), 1)
        losses = [per_sample_loss(inst, ModelParams(np.array([t, 0.0]))) for t in (5, 20, 50, 700)]
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-300

    def test_negative_class_hand_value(self):
        inst = Instance(0, np.array([1.0]), 0)
        got = per_sample_loss(inst, ModelParams(np.array([2.0, 0.0])))
        assert got == pytest.approx(2 + math.log1p(math.exp(-2)), rel=1e-14)

    def test_no_overflow_far_from_boundary(self):
        inst = Instance(0, np.array([1.0]), 0)
        assert per_sample_loss(inst, ModelParams(np.array([1e4, 0.0]))) == pytest.approx(1e4)


class TestGradient:
    def test_zero_logit_example(self):
        g = gradient(Instance(0, np.array([0.0]), 1), ModelParams(np.zeros(2)))
        np.testing.assert_array_equal(g, [0.0, -0.5])

    def test_vanishes_at_optimum(self, small_dataset):
        p = train(small_dataset, 0.05, tol=1e-10)
        assert np.linalg.norm(gradient(small_dataset, p)) <= 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences_single(self, seed):
        rng = np.random.default_rng(seed)
        inst = Instance(0, rng.normal(size=4), int(rng.integers(2)))
        theta = rng.normal(size=5)
        fd = fd_gradient(lambda t: per_sample_loss(inst, ModelParams(t)), theta)
        assert rel_err(gradient(inst, ModelParams(theta)), fd) <= 1e-5

    def test_aggregate_matches_finite_differences(self, small_dataset, rng):
        theta = rng.normal(size=4)
        fd = fd_gradient(lambda t: total_loss(small_dataset, ModelParams(t, 0.3)), theta)
        assert rel_err(gradient(small_dataset, ModelParams(theta, 0.3)), fd) <= 1e-5


class TestHessian:
    @pytest.mark.parametrize("alpha", [0.0, 0.7])
    def test_single_zero_instance(self, alpha):
        ds = Dataset(np.array([[0.0]]), [1])
        H = hessian(ds, ModelParams(np.zeros(2), alpha))
        np.testing.assert_allclose(H, [[alpha, 0.0], [0.0, 0.25]], atol=1e-16)

    def test_ridge_shift_bounds_weight_block(self, small_dataset, rng):
        H = hessian(small_dataset, ModelParams(rng.normal(size=4) * 4, 1.0))
        assert np.linalg.eigvalsh(H[:3, :3])[0] >= 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.normal(size=(15, 3)), rng.integers(0, 2, size=15))
        theta = rng.normal(size=4)
        fd = fd_jacobian(lambda t: gradient(ds, ModelParams(t, 0.2)), theta)
        assert rel_err(hessian(ds, ModelParams(theta, 0.2)), fd) <= 1e-4


class TestLogOdds:
    def test_zero_params(self):
        v, _ = log_odds(np.array([3.0]), ModelParams(np.zeros(2)), 0)
        assert v == 0.0

    def test_linear_form_and_sign(self):
        p = ModelParams(np.array([1.0, 0.0]))
        v, a = log_odds(np.array([2.0]), p, 0)
        assert v == 2.0
        np.testing.assert_array_equal(a, [2.0, 1.0])
        v, a = log_odds(np.array([2.0]), p, 1)
        assert v == -2.0
        np.testing.assert_array_equal(a, [-2.0, -1.0])

    def test_claim_validation(self):
        with pytest.raises(ValueError):
            Claim(np.array([0.0]), 2)
        with pytest.raises(ValueError):
            Claim(np.array([0.0]), 0, -0.1)

    def test_claim_from_model(self):
        p = ModelParams(np.array([1.0, -0.5]))
        assert Claim.from_model(np.array([2.0]), p).decided_class == 1
        assert Claim.from_model(np.array([0.0]), p).decided_class == 0


@settings(max_examples=200, deadline=None)
@given(
    theta=arrays(np.float64, 4, elements=finite),
    x=arrays(np.float64, 3, elements=finite),
    c0=st.integers(0, 1),
)
def test_log_odds_consistent_with_probabilities(theta, x, c0):
    p = ModelParams(theta)
    v, a = log_odds(x, p, c0)
    assert v == pytest.approx(float(a @ theta), abs=1e-12)
    p_c1 = class_probability(x, p, 1 - c0)
    assert p_c1 == pytest.approx(1.0 / (1.0 + math.exp(-v)), rel=1e-12)
    assert class_probability(x, p, 0) + class_probability(x, p, 1) == pytest.approx(1.0)
    z = v if c0 == 0 else -v
    assert predict(x, p) == int(z > 0)
    assert predict_proba(x, p) == pytest.approx(class_probability(x, p, 1))


@settings(max_examples=100, deadline=None)
@given(
    X=arrays(np.float64, (6, 2), elements=finite),
    y=arrays(np.int64, 6, elements=st.integers(0, 1)),
    t1=arrays(np.float64, 3, elements=finite),
    t2=arrays(np.float64, 3, elements=finite),
    lam=st.floats(0, 1),
)
def test_loss_is_convex(X, y, t1, t2, lam):
    ds = Dataset(X, y)
    f = lambda t: total_loss(ds, ModelParams(t, 0.1))  # noqa: E731
    mid = f(lam * t1 + (1 - lam) * t2)
    assert mid <= lam * f(t1) + (1 - lam) * f(t2) + 1e-9


@settings(max_examples=100, deadline=None)
@given(
    X=arrays(np.float64, (5, 2), elements=finite),
    theta=arrays(np.float64, 3, elements=st.floats(-30, 30)),
)
def test_hessian_is_psd(X, theta):
    ds = Dataset(X, [0, 1, 0, 1, 1])
    H = hessian(ds, ModelParams(theta, 0.0))
    assert np.linalg.eigvalsh(H)[0] >= -1e-12

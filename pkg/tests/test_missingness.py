import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from penn.missingness import (
    IMPUTERS,
    MCAR,
    ImputationError,
    IterativeImputer,
    LogisticMNAR,
    MeanImputer,
    PartialMatrix,
    ThresholdMNAR,
    ZeroImputer,
    draw_mask,
    fit_imputer,
    impute,
    mask,
    mechanism_from_dict,
    mechanism_to_dict,
)


class TestMask:
    def test_fully_observed(self):
        np.testing.assert_array_equal(mask([1, 2, 3], [1, 1, 1]), [1, 2, 3])

    def test_fully_missing(self):
        assert np.isnan(mask([1, 2, 3], [0, 0, 0])).all()

    def test_partial(self):
        out = mask([0.5, -2.0], [1, 0])
        assert out[0] == 0.5 and np.isnan(out[1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mask([1, 2], [1])


class TestMechanisms:
    def test_mcar_all_observed(self, rng):
        assert draw_mask(MCAR.uniform(4, 1.0), rng.normal(size=(100, 4)), rng).all()

    def test_threshold(self, rng):
        mech = ThresholdMNAR([1], 0.4, [1.0, 1.0, 1.0])
        om = draw_mask(mech, np.array([[0.0, 0.7, 0.0], [0.0, 0.4, 0.0]]), rng)
        assert om[0, 1] == 0 and om[1, 1] == 1

    def test_mcar_frequency(self):
        rng = np.random.default_rng(0)
        om = draw_mask(MCAR.uniform(5, 0.7), np.zeros((100_000, 5)), rng)
        assert np.all(np.abs(om.mean(axis=0) - 0.7) < 0.01)

    def test_logistic_probability(self):
        mech = LogisticMNAR([0], [2.0], [0.0], [1.0, 0.5])
        p = mech.observe_prob(np.array([[0.0, 0.0], [1.0, 0.0]]))
        np.testing.assert_allclose(p[:, 0], [0.5, 1.0 / (np.exp(2.0) + 1.0)])
        np.testing.assert_allclose(p[:, 1], 0.5)

    @pytest.mark.parametrize("mech", [
        MCAR([0.3, 0.9]),
        ThresholdMNAR([0], [0.1], [0.5, 0.5]),
        LogisticMNAR([1], [1.5], [-0.2], [0.8, 0.8]),
    ])
    def test_dict_round_trip(self, mech):
        assert mechanism_from_dict(mechanism_to_dict(mech)) == mech

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            MCAR([1.2])

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError):
            draw_mask(MCAR.uniform(3, 0.5), np.zeros((2, 4)), rng)


class TestImputers:
    def test_mean_identity_on_complete(self, rng):
        x = rng.normal(size=(20, 3))
        data = PartialMatrix(x, np.ones_like(x, bool))
        np.testing.assert_array_equal(MeanImputer().fit_transform(data), x)

    def test_mean_value(self):
        imp = MeanImputer().fit(PartialMatrix.from_nan([[1.0], [np.nan], [3.0]]))
        np.testing.assert_array_equal(imp.means_, [2.0])

    def test_zero_row(self):
        np.testing.assert_array_equal(impute(ZeroImputer().fit(), [0.5, np.nan]), [0.5, 0.0])

    def test_mean_row(self):
        imp = MeanImputer().fit(PartialMatrix.from_nan([[1.0, 7.0], [3.0, 7.0]]))
        np.testing.assert_array_equal(impute(imp, [9.0, 7.0], [0, 1]), [2.0, 7.0])

    def test_iterative_linear_column(self):
        rng = np.random.default_rng(1)
        x1 = rng.uniform(-1, 1, size=500)
        x = np.column_stack([x1, 2 * x1])
        obs = np.ones_like(x, bool)
        obs[:, 1] = rng.random(500) >= 0.2
        imp = IterativeImputer(rounds=3, ridge=1e-6)
        out = imp.fit_transform(PartialMatrix(x, obs))
        assert np.max(np.abs(out[~obs[:, 1], 1] - 2 * x1[~obs[:, 1]])) < 1e-3
        # the transform path uses the stored coefficients
        out2 = imp.transform(PartialMatrix(x, obs))
        assert np.max(np.abs(out2[~obs[:, 1], 1] - 2 * x1[~obs[:, 1]])) < 1e-3

    @pytest.mark.parametrize("kind", sorted(IMPUTERS))
    def test_observed_row_unchanged(self, kind, rng):
        x = rng.normal(size=(50, 3))
        obs = rng.random((50, 3)) < 0.7
        imp = fit_imputer(kind, PartialMatrix(x, obs))
        np.testing.assert_array_equal(impute(imp, x[0], [1, 1, 1]), x[0])

    def test_empty_column_named(self):
        data = PartialMatrix.from_nan([[1.0, np.nan], [2.0, np.nan]], columns=["a", "b"])
        with pytest.raises(ImputationError, match="b") as err:
            MeanImputer().fit(data)
        assert err.value.column == 1

    def test_unfitted(self):
        with pytest.raises(ImputationError):
            MeanImputer().transform([[1.0]])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            fit_imputer("missforest", PartialMatrix.from_nan([[1.0]]))

    @settings(max_examples=30, deadline=None)
    @given(
        x=arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)),
        obs=arrays(np.bool_, (12, 3)),
        kind=st.sampled_from(sorted(IMPUTERS)),
    )
    def test_observed_entries_preserved(self, x, obs, kind):
        obs[0] = True  # every column needs an observed entry
        out = fit_imputer(kind, PartialMatrix(x, obs)).transform(PartialMatrix(x, obs))
        np.testing.assert_array_equal(out[obs], x[obs])
        assert np.all(np.isfinite(out))

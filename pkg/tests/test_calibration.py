"""Box-coordinate calibration: slices, config, the solver and determinism."""

from __future__ import annotations

import math

import numpy as np
import pytest

import butterfree.calibration as calibration_module
from butterfree.calibration import (
    CalibrationConfig,
    MarketSlice,
    calibrate,
    sigma_upper_bound,
    vega_weights,
)
from butterfree.domain import box_to_params
from butterfree.errors import (
    InfeasibleStart,
    InsufficientData,
    InvalidInput,
    NoConvergedStart,
)
from butterfree.svi import SviParams, svi
from conftest import MODEL_GRID, MODEL_ROWS, model_slice, params_vector

#: Cheap but reliable config for module-level tests; the informed start is
#: appended on top of the uniform ones, so even one draw is a 2-start run.
FAST = CalibrationConfig(n_starts=2, seed=0)


class TestMarketSlice:
    def test_accepts_model_slice(self):
        s = model_slice(MODEL_ROWS[0])
        assert len(s) == len(MODEL_GRID)

    def test_rejects_unsorted_k(self):
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([0.0, -0.1, 0.1]), w_mid=np.ones(3))

    def test_rejects_duplicate_k(self):
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([-0.1, 0.0, 0.0]), w_mid=np.ones(3))

    def test_rejects_non_positive_w(self):
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([-0.1, 0.0, 0.1]), w_mid=np.array([0.1, 0.0, 0.1]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([-0.1, 0.0, 0.1]), w_mid=np.ones(2))
        with pytest.raises(InvalidInput):
            MarketSlice(
                k=np.array([-0.1, 0.0, 0.1]), w_mid=np.ones(3), w_bid=np.ones(2)
            )

    def test_rejects_crossed_bid(self):
        with pytest.raises(InvalidInput):
            MarketSlice(
                k=np.array([-0.1, 0.0, 0.1]),
                w_mid=np.full(3, 0.04),
                w_bid=np.array([0.03, 0.05, 0.03]),
            )

    def test_nan_sides_are_fine(self):
        s = MarketSlice(
            k=np.array([-0.1, 0.0, 0.1]),
            w_mid=np.full(3, 0.04),
            w_bid=np.array([0.03, math.nan, 0.03]),
            w_ask=np.array([math.nan, 0.05, 0.05]),
        )
        assert len(s) == 3

    def test_rejects_bad_metadata(self):
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([0.0, 0.1]), w_mid=np.ones(2), t=-1.0)
        with pytest.raises(InvalidInput):
            MarketSlice(k=np.array([0.0, 0.1]), w_mid=np.ones(2), forward=0.0)


class TestConfig:
    def test_defaults(self):
        c = CalibrationConfig()
        assert c.n_starts == 8
        assert c.seed == 0
        assert not c.vega_weighted

    def test_rejects_bad_values(self):
        with pytest.raises(InvalidInput):
            CalibrationConfig(n_starts=0)
        with pytest.raises(InvalidInput):
            CalibrationConfig(r=0.0)
        with pytest.raises(InvalidInput):
            CalibrationConfig(alpha_cap=-1.0)


class TestSigmaUpperBound:
    def test_strike_span_rule(self):
        s = MarketSlice(k=np.array([-0.5, 0.0, 0.4]), w_mid=np.full(3, 0.04))
        assert sigma_upper_bound(s, 2.0, 0.1) == pytest.approx(5.0)
        assert sigma_upper_bound(s, 0.0, 0.1) == pytest.approx(5.0)

    def test_floor_rule_dominates(self):
        s = MarketSlice(k=np.array([-0.1, 0.0, 0.1]), w_mid=np.full(3, 0.04))
        assert sigma_upper_bound(s, 0.0, 0.1) == pytest.approx(1.0)
        assert sigma_upper_bound(s, 10.0, 0.1) == pytest.approx(15.0)

    def test_rejects_bad_r(self):
        s = MarketSlice(k=np.array([-0.1, 0.1]), w_mid=np.full(2, 0.04))
        with pytest.raises(InvalidInput):
            sigma_upper_bound(s, 1.0, 0.0)


class TestVegaWeights:
    def test_decay_away_from_the_money(self):
        s = MarketSlice(k=MODEL_GRID, w_mid=np.full(len(MODEL_GRID), 0.04))
        w = vega_weights(s)
        assert w.shape == (len(MODEL_GRID),)
        i_atm = int(np.argmin(np.abs(MODEL_GRID)))
        assert int(np.argmax(w)) in (i_atm, i_atm + 1)
        assert w[0] < w[i_atm] and w[-1] < w[i_atm]
        assert np.all(w > 0.0)


class TestCalibrate:
    def test_needs_five_strikes(self):
        s = MarketSlice(k=np.array([-0.2, -0.1, 0.0, 0.1]), w_mid=np.full(4, 0.04))
        with pytest.raises(InsufficientData):
            calibrate(s, FAST)

    def test_recovers_exact_data(self):
        truth = MODEL_ROWS[2]
        result = calibrate(model_slice(truth), FAST)
        assert result.diagnostic.is_free
        assert result.rel_error_fro < 1e-8
        got = params_vector(result.params)
        want = params_vector(truth)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-6

    def test_result_is_consistent(self):
        result = calibrate(model_slice(MODEL_ROWS[2]), FAST)
        rebuilt = box_to_params(result.box)
        assert rebuilt.a == pytest.approx(result.params.a, abs=1e-9)
        assert rebuilt.sigma == pytest.approx(result.params.sigma, abs=1e-9)
        assert result.wall_time > 0.0
        # one informed start is appended to the uniform draws
        assert len(result.starts) == FAST.n_starts + 1
        assert min(s.cost for s in result.starts) == result.cost

    def test_deterministic_under_seed(self):
        s = model_slice(MODEL_ROWS[0])
        first = calibrate(s, FAST)
        second = calibrate(s, FAST)
        assert params_vector(first.params).tolist() == params_vector(second.params).tolist()
        assert first.cost == second.cost

    def test_seed_changes_starts_not_quality(self):
        s = model_slice(MODEL_ROWS[2])
        a = calibrate(s, CalibrationConfig(n_starts=2, seed=1))
        b = calibrate(s, CalibrationConfig(n_starts=2, seed=2))
        assert a.starts[0].x0 != b.starts[0].x0
        assert a.rel_error_fro < 1e-6 and b.rel_error_fro < 1e-6

    def test_refits_own_output(self):
        first = calibrate(model_slice(MODEL_ROWS[1]), FAST)
        second = calibrate(model_slice(first.params), FAST)
        got = params_vector(second.params)
        want = params_vector(first.params)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-6

    def test_vega_weighting_still_fits_exact_data(self):
        truth = MODEL_ROWS[2]
        cfg = CalibrationConfig(n_starts=2, seed=0, vega_weighted=True)
        result = calibrate(model_slice(truth), cfg)
        assert result.rel_error_fro < 1e-7

    def test_alpha_cap_binds_and_releases(self):
        # row 4 has alpha = a/sigma = 2.8; the default cap of 1 cannot
        # express it, a cap of 3 can
        truth = MODEL_ROWS[4]
        s = model_slice(truth)
        capped = calibrate(s, CalibrationConfig(n_starts=1, seed=0, alpha_cap=1.0))
        released = calibrate(s, CalibrationConfig(n_starts=1, seed=0, alpha_cap=3.0))
        assert released.rel_error_fro < 1e-7
        assert capped.rel_error_fro > 1e-4
        assert capped.params.a / capped.params.sigma <= 1.0 + 1e-9

    def test_noisy_data_still_certified(self):
        truth = MODEL_ROWS[0]
        rng = np.random.default_rng(5)
        w = np.asarray(svi(truth, MODEL_GRID)) * (1.0 + 0.002 * rng.standard_normal(len(MODEL_GRID)))
        s = MarketSlice(k=MODEL_GRID.copy(), w_mid=w)
        result = calibrate(s, FAST)
        assert result.diagnostic.is_free
        assert result.rel_error_fro < 0.01

    def test_no_converged_start(self, monkeypatch):
        def always_fails(*args, **kwargs):
            raise InfeasibleStart("forced failure")

        monkeypatch.setattr(
            calibration_module, "least_squares_bounded", always_fails
        )
        with pytest.raises(NoConvergedStart):
            calibrate(model_slice(MODEL_ROWS[2]), FAST)

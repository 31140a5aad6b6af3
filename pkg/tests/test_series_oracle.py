import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gldeg.errors import ParameterError, TruncationError
from gldeg.series_oracle import (POWER_TAGS, S_closed, S_direct, SeriesCheck, Y_ratio_check, check_fk_estimates,
                                 check_power_identity, check_profile_closed_forms, check_S, fit_estimates,
                                 full_suite)


def test_full_suite_passes():
    rows = full_suite()
    assert len(rows) >= 20
    assert all(r.passed for r in rows), [r.tag for r in rows if not r.passed]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(POWER_TAGS), st.floats(-0.95, 0.95), st.floats(0.05, 1.5))
def test_power_identities_property(tag, X, delta):
    r = check_power_identity(tag, X, delta, K=1000)
    assert r.passed, (tag, X, delta, r.error, r.bound)


def test_power_identity_detects_wrong_closed_form():
    r = check_power_identity("geometric", 0.9, K=1000)
    bad = SeriesCheck("geometric", {}, r.partial, r.closed * (1 + 1e-6), r.bound)
    assert r.passed and not bad.passed


def test_power_identity_preconditions():
    with pytest.raises(ParameterError):
        check_power_identity("log_series", 1.0)
    with pytest.raises(ParameterError):
        check_power_identity("log_series", 0.5, K=100)
    with pytest.raises(ParameterError):
        check_power_identity("nope", 0.5)


def test_profile_closed_forms():
    rows = check_profile_closed_forms()
    assert len(rows) >= 25 * 2 and all(r.passed for r in rows)


@pytest.mark.parametrize("k", [0, 3, 40])
def test_fk_estimate_signs(k):
    assert all(r.passed for r in check_fk_estimates(k))


def test_alpha_exact_at_lambda_one():
    rows = check_fk_estimates(9, lam=1.0)
    assert any(r.tag == "alpha_exact" and r.passed for r in rows)


def test_fitted_constants_stable():
    fits = fit_estimates(kmax=80)
    assert all(f.passed for f in fits.values())
    assert Y_ratio_check().passed


def test_S_direct_truncation():
    with pytest.raises(TruncationError):
        S_direct(0.5, 0.02, K=100)
    with pytest.raises(ParameterError):
        S_direct(0.5, 1.5)


@pytest.mark.parametrize("delta", [0.3, 0.5])
def test_S_remainder_and_excess(delta):
    rep = check_S(delta)
    assert rep.remainder_bounded and rep.excess_ok
    # leading term 4 t^2 S_closed tends to pi - delta
    assert abs(4 * 1e-4 ** 2 * S_closed(delta, 1e-4) - (np.pi - delta)) < 1e-2


def test_bound_intercept_is_pi():
    # delta - 2 delta t + 4 t^2 S(delta, t) tends to pi from below as t -> 0
    delta, ts = 0.5, np.array([0.02, 0.01, 0.005])
    b = np.array([delta - 2 * delta * t + 4 * t * t * S_direct(delta, t) for t in ts])
    assert np.all(b < np.pi)
    intercept = np.polyfit(ts, b, 1)[1]
    assert abs(intercept - np.pi) <= 0.02 * np.pi

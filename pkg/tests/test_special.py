"""Normal CDF / quantile contracts against independent high-precision oracles."""

import numpy as np
import pytest

from qcforecast.numerics import (
    normal_cdf_array,
    normal_quantile_array,
    std_normal_cdf,
    std_normal_quantile,
)


def test_cdf_at_zero():
    assert abs(std_normal_cdf(0.0) - 0.5) < 1e-7


def test_cdf_derived_point():
    # frozen from mpmath.ncdf(1.959964) = 0.97500000090356
    assert abs(std_normal_cdf(1.959964) - 0.975) < 1e-6


def test_cdf_reflection_symmetry():
    assert abs(std_normal_cdf(-0.7) + std_normal_cdf(0.7) - 1.0) < 1e-12


def test_cdf_matches_erf_oracle_everywhere():
    import mpmath as mp

    xs = np.linspace(-8.0, 8.0, 401)
    ours = normal_cdf_array(xs)
    oracle = np.array([float(mp.ncdf(float(x))) for x in xs])
    assert np.max(np.abs(ours - oracle)) < 1e-7


def test_cdf_strictly_increasing_at_1em6_spacing():
    # Beyond |x| ~ 6.5 adjacent CDF values at this spacing collapse to the
    # same double, so the strictness window is [-6, 6].
    for center in (-6.0, -4.0, -1.5, 0.0, 1.5, 4.0, 5.99):
        xs = center + np.arange(10_000) * 1e-6
        vals = normal_cdf_array(xs)
        assert np.all(np.diff(vals) > 0.0), f"not strictly increasing near {center}"


def test_cdf_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(ValueError):
            std_normal_cdf(bad)


def test_quantile_at_median():
    # Newton refinement targets the package's own CDF approximation, whose
    # value at 0 is 0.5 + 5e-10, so the median lands within ~1.3e-9 of 0.
    assert abs(std_normal_quantile(0.5)) < 1e-8


def test_quantile_derived_point():
    # frozen from mpmath: sqrt(2)*erfinv(2*0.975 - 1) = 1.959963984540054
    assert abs(std_normal_quantile(0.975) - 1.959964) < 1e-5


def test_quantile_symmetry():
    u = 0.1
    assert abs(std_normal_quantile(1.0 - u) + std_normal_quantile(u)) < 1e-10


def test_quantile_domain_errors():
    for bad in (0.0, 1.0, -0.2, 1.3, float("nan")):
        with pytest.raises(ValueError):
            std_normal_quantile(bad)


def test_round_trip_log_spaced():
    lo = np.logspace(-6, np.log10(0.5), 500)
    us = np.concatenate([lo, 1.0 - lo])
    back = normal_cdf_array(normal_quantile_array(us))
    assert np.max(np.abs(back - us)) < 1e-7

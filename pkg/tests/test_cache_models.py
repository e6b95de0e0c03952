"""Model exactness against independently computed least-squares oracles."""

import math
import random

import numpy as np
import pytest

from constellation.cache import (
    Consistent,
    Cyclic,
    InsufficientData,
    LinearRegression,
    NonMonotonicTime,
    PolynomialRegression,
    make_model,
)


def test_consistent_returns_previous_result():
    model = Consistent()
    model.add_point(10, 42.0)
    assert model.predict_value(25) == 42.0
    model.add_point(20, 7.5)
    assert model.predict_value(99) == 7.5


def test_consistent_supports_arbitrary_values():
    model = Consistent()
    model.add_point(1, (3.0, 4.0))
    assert model.predict_value(2) == (3.0, 4.0)


def test_linear_exact_on_linear_data():
    model = LinearRegression()
    for t, v in [(0, 20.0), (60_000, 20.1), (120_000, 20.2)]:
        model.add_point(t, v)
    assert model.predict_value(180_000) == pytest.approx(20.3, abs=1e-9)


def test_linear_matches_polyfit_oracle_on_noisy_data():
    rng = random.Random(7)
    times = [i * 15_000 for i in range(12)]
    values = [3.0 + 0.002 * t + rng.gauss(0, 1.0) for t in times]
    model = LinearRegression()
    for t, v in zip(times, values):
        model.add_point(t, v)
    oracle = np.polyfit(times, values, 1)
    want = float(np.polyval(oracle, 200_000))
    assert model.predict_value(200_000) == pytest.approx(want, rel=1e-9)


def test_polynomial_exact_on_quadratic_data():
    model = PolynomialRegression(degree=2)
    times = [i * 60_000 for i in range(1, 8)]
    for t in times:
        model.add_point(t, float(t) ** 2)
    t_star = 9 * 60_000
    want = float(t_star) ** 2
    assert model.predict_value(t_star) == pytest.approx(want, rel=1e-6)


def test_polynomial_matches_polyfit_oracle():
    rng = random.Random(3)
    times = [i * 10_000 for i in range(10)]
    values = [1.0 - 0.003 * t + 2e-9 * t * t + rng.gauss(0, 0.5) for t in times]
    model = PolynomialRegression(degree=2)
    for t, v in zip(times, values):
        model.add_point(t, v)
    oracle = np.polyfit(times, values, 2)
    want = float(np.polyval(oracle, 120_000))
    assert model.predict_value(120_000) == pytest.approx(want, rel=1e-6)


def test_cyclic_seasonal_matches_direct_lookup():
    # Pure 24-sample repeating sequence; oracle is the seasonal value itself.
    rng = random.Random(11)
    season = [rng.uniform(5.0, 25.0) for _ in range(24)]
    step = 3_600_000
    model = Cyclic(seasonal_period=24)
    n = 72
    for i in range(n):
        model.add_point(i * step, season[i % 24])
    for ahead in range(1, 25):
        t_star = (n - 1 + ahead) * step
        want = season[(n - 1 + ahead) % 24]
        got = model.predict_value(t_star)
        assert got == pytest.approx(want, rel=0.05), f"step {ahead}"


def test_cyclic_nonseasonal_tracks_sinusoid():
    # A sinusoid obeys an exact order-2 recurrence, so the differenced AR fit
    # reproduces it without error on noiseless input.
    step = 3_600_000
    period = 24
    model = Cyclic()
    for i in range(40):
        model.add_point(i * step, 10.0 * math.sin(2 * math.pi * i / period))
    for ahead in (1, 2, 4):
        t_star = (39 + ahead) * step
        want = 10.0 * math.sin(2 * math.pi * (39 + ahead) / period)
        assert model.predict_value(t_star) == pytest.approx(want, abs=1e-6)


def test_window_truncation_keeps_most_recent():
    model = LinearRegression(window=5)
    for i in range(10):
        model.add_point(i * 1000, float(i))
    assert len(model.times) == 5
    assert model.times[0] == 5000


def test_predict_before_min_points_raises():
    model = LinearRegression()
    model.add_point(0, 1.0)
    with pytest.raises(InsufficientData):
        model.predict_value(10)
    poly = PolynomialRegression(degree=2)
    poly.add_point(0, 1.0)
    poly.add_point(1, 2.0)
    with pytest.raises(InsufficientData):
        poly.predict_value(10)


def test_non_monotonic_time_rejected():
    model = Consistent()
    model.add_point(100, 1.0)
    with pytest.raises(NonMonotonicTime):
        model.add_point(100, 2.0)
    with pytest.raises(NonMonotonicTime):
        model.add_point(50, 2.0)


def test_expiration_time_is_last_query_plus_delta():
    model = Consistent()
    model.add_point(0, 1.0)
    assert model.expiration_time(3_600_000) == 3_600_000
    model.add_point(500, 1.0)
    assert model.expiration_time(1000) == 1500


def test_make_model_from_manifest_names():
    assert make_model("Consistent").name == "Consistent"
    assert make_model("PolynomialRegression", {"degree": 3}).degree == 3
    assert make_model("Cyclic", {"seasonalPeriod": 24}).lag == 24
    assert make_model("LinearRegression", {"window": 50}).window == 50
    with pytest.raises(KeyError):
        make_model("Fancy")
    with pytest.raises(KeyError):
        make_model("Consistent", {"mystery": 1})

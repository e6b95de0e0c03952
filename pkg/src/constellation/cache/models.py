"""Built-in cache prediction models.

Every model keeps a bounded window of (time ms, value) observations and
answers three calls: add_point, predict_value, expiration_time. Times are
strictly increasing. Numeric models refit on every add.
"""

from __future__ import annotations

import statistics

import numpy as np

from .errors import InsufficientData, NonMonotonicTime

DEFAULT_WINDOW = 20


class CacheModel:
    """Base class; subclasses fit on the window and extrapolate."""

    name = "Base"
    min_points = 1

    def __init__(self, window: int = DEFAULT_WINDOW):
        self.window = window
        self.times: list[int] = []
        self.values: list = []

    def add_point(self, time_ms: int, value) -> None:
        if self.times and time_ms <= self.times[-1]:
            raise NonMonotonicTime(
                f"point at {time_ms} not after latest {self.times[-1]}"
            )
        self.times.append(time_ms)
        self.values.append(value)
        if len(self.times) > self.window:
            del self.times[0]
            del self.values[0]
        self._refit()

    def has_min_points(self) -> bool:
        return len(self.times) >= self.min_points

    def predict_value(self, time_ms: int):
        if not self.has_min_points():
            raise InsufficientData(
                f"{self.name} needs {self.min_points} points, has {len(self.times)}"
            )
        return self._predict(time_ms)

    def expiration_time(self, delta_ms: int) -> int:
        """Latest-query time plus delta: the instant the cache must be bypassed."""
        if not self.times:
            raise InsufficientData("no device query recorded yet")
        return self.times[-1] + delta_ms

    def _refit(self) -> None:
        pass

    def _predict(self, time_ms: int):
        raise NotImplementedError


class Consistent(CacheModel):
    """Predicts the previous query result; works for any datatype."""

    name = "Consistent"
    min_points = 1

    def _predict(self, time_ms: int):
        return self.values[-1]


class LinearRegression(CacheModel):
    """Least-squares line through the window, evaluated at the request time."""

    name = "LinearRegression"
    min_points = 2

    def __init__(self, window: int = DEFAULT_WINDOW):
        super().__init__(window)
        self._coef: tuple[float, float, float] | None = None  # (t_mean, intercept, slope)

    def _refit(self) -> None:
        if len(self.times) < self.min_points:
            self._coef = None
            return
        t_mean = statistics.fmean(self.times)
        y = [float(v) for v in self.values]
        y_mean = statistics.fmean(y)
        sxx = sum((t - t_mean) ** 2 for t in self.times)
        if sxx == 0.0:
            self._coef = (t_mean, y_mean, 0.0)
            return
        sxy = sum((t - t_mean) * (v - y_mean) for t, v in zip(self.times, y))
        slope = sxy / sxx
        self._coef = (t_mean, y_mean, slope)

    def _predict(self, time_ms: int) -> float:
        t_mean, intercept, slope = self._coef
        return intercept + slope * (time_ms - t_mean)


class PolynomialRegression(CacheModel):
    """Degree-d least-squares polynomial, fit on centered and scaled time."""

    name = "PolynomialRegression"

    def __init__(self, degree: int = 2, window: int = DEFAULT_WINDOW):
        super().__init__(window)
        self.degree = degree
        self.min_points = degree + 1
        self._fit: tuple[float, float, np.ndarray] | None = None  # (center, scale, coeffs)

    def _refit(self) -> None:
        n = len(self.times)
        if n < self.min_points:
            self._fit = None
            return
        t = np.asarray(self.times, dtype=float)
        y = np.asarray([float(v) for v in self.values])
        center = t.mean()
        scale = max((t - center).std(), 1.0)
        u = (t - center) / scale
        # Normal equations on the scaled Vandermonde basis.
        v = np.vander(u, self.degree + 1, increasing=True)
        gram = v.T @ v
        rhs = v.T @ y
        try:
            coeffs = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            coeffs = np.linalg.lstsq(v, y, rcond=None)[0]
        self._fit = (center, scale, coeffs)

    def _predict(self, time_ms: int) -> float:
        center, scale, coeffs = self._fit
        u = (time_ms - center) / scale
        return float(sum(c * u**k for k, c in enumerate(coeffs)))


class Cyclic(CacheModel):
    """Differenced autoregressive forecaster for repeating patterns.

    The window values are differenced at lag L (L = seasonal period in
    samples when configured, else 1), an order-2 autoregression is fit to
    the differenced series by least squares, and forecasts are integrated
    back. A request time is mapped to forecast steps using the median
    observed sampling interval.
    """

    name = "Cyclic"
    order = 2

    def __init__(self, seasonal_period: int | None = None, window: int | None = None):
        self.lag = seasonal_period if seasonal_period else 1
        self.min_points = self.lag + self.order + 3
        if window is None:
            window = max(DEFAULT_WINDOW, 2 * self.lag + 2 * self.order + 4)
        super().__init__(window)
        self._ar: np.ndarray | None = None  # (const, phi1, phi2)

    def _refit(self) -> None:
        n = len(self.values)
        if n < self.min_points:
            self._ar = None
            return
        y = np.asarray([float(v) for v in self.values])
        d = y[self.lag:] - y[:-self.lag]
        rows = len(d) - self.order
        if rows < 1:
            self._ar = None
            return
        design = np.column_stack(
            [np.ones(rows)] + [d[self.order - k - 1:len(d) - k - 1] for k in range(self.order)]
        )
        target = d[self.order:]
        self._ar = np.linalg.lstsq(design, target, rcond=None)[0]

    def _step_ms(self) -> float:
        gaps = [b - a for a, b in zip(self.times, self.times[1:])]
        return statistics.median(gaps) if gaps else 1.0

    def _predict(self, time_ms: int) -> float:
        if self._ar is None:
            raise InsufficientData(f"{self.name} window too short to fit")
        history = [float(v) for v in self.values]
        d = [history[i] - history[i - self.lag] for i in range(self.lag, len(history))]
        steps = max(1, int(round((time_ms - self.times[-1]) / self._step_ms())))
        const, *phi = self._ar
        for _ in range(steps):
            d_next = const
            for k, p in enumerate(phi):
                d_next += p * (d[-1 - k] if len(d) > k else 0.0)
            history.append(history[-self.lag] + d_next)
            d.append(d_next)
        return history[-1]


_MODEL_FACTORIES = {
    "Consistent": Consistent,
    "LinearRegression": LinearRegression,
    "PolynomialRegression": PolynomialRegression,
    "Cyclic": Cyclic,
}


def register_model(name: str, factory) -> None:
    _MODEL_FACTORIES[name] = factory


def make_model(name: str, params: dict | None = None) -> CacheModel:
    """Instantiate a model by manifest name with manifest parameters."""
    try:
        factory = _MODEL_FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown cache model {name!r}") from None
    params = dict(params or {})
    kwargs = {}
    if "window" in params:
        kwargs["window"] = int(params.pop("window"))
    if name == "PolynomialRegression" and "degree" in params:
        kwargs["degree"] = int(params.pop("degree"))
    if name == "Cyclic" and "seasonalPeriod" in params:
        kwargs["seasonal_period"] = int(params.pop("seasonalPeriod"))
    if params:
        raise KeyError(f"unknown parameters for model {name}: {sorted(params)}")
    return factory(**kwargs)

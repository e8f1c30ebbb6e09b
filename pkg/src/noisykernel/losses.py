"""Catalogue of analytic convex losses.

Each loss carries its value, its derivative, the coefficient stream of
the derivative, and the absolute-coefficient companion series that
controls estimator variance.  Classification losses are functions of
y * <w, f(x)>; regression losses are functions of <w, f(x)> - y.

The smoothed absolute and hinge losses are antiderivatives of scaled
error functions; their derivative series are generated through exact
coefficient recurrences rather than symbolic composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from . import series
from .errors import InvalidParameterError
from .series import CoefficientStream

_SQRT_PI = math.sqrt(math.pi)

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class AnalyticLoss:
    """A convex loss with an analytic derivative.

    ``deriv_series`` holds the Taylor coefficients of the derivative;
    ``deriv_plus`` sums their absolute values, the quantity that enters
    every variance bound.  ``safe_argument_limit``, when set, is the
    argument size beyond which series evaluation suffers catastrophic
    cancellation (the series itself has infinite radius).
    """

    name: str
    family: str
    value: Callable[[float], float]
    deriv: Callable[[float], float]
    deriv_series: CoefficientStream
    s: Optional[float] = None
    safe_argument_limit: Optional[float] = None

    def deriv_plus(self, a: float) -> float:
        """Companion series sum |gamma_n| a**n, for a >= 0."""
        return self.deriv_series.evaluate(a, absolute=True)

    def argument(self, prediction: float, y: float) -> float:
        if self.family == CLASSIFICATION:
            return y * prediction
        return prediction - y

    def grad_prefactor(self, y: float) -> float:
        return y if self.family == CLASSIFICATION else 1.0

    def round_loss(self, prediction: float, y: float) -> float:
        return self.value(self.argument(prediction, y))

    @property
    def config(self) -> dict:
        cfg = {"name": self.name}
        if self.s is not None:
            cfg["s"] = self.s
        return cfg


def squared_loss() -> AnalyticLoss:
    return AnalyticLoss(
        name="squared", family=REGRESSION,
        value=lambda a: a * a,
        deriv=lambda a: 2.0 * a,
        deriv_series=series.monomial(1, 2.0))


def exponential_loss() -> AnalyticLoss:
    return AnalyticLoss(
        name="exponential", family=CLASSIFICATION,
        value=math.exp,
        deriv=math.exp,
        deriv_series=series.exp_series(1.0))


def smoothed_absolute(s: float) -> AnalyticLoss:
    """Regression loss whose derivative is erf(s*a).

    The value is the antiderivative normalized to vanish at 0:
    a*erf(s*a) + exp(-(s*a)**2)/(s*sqrt(pi)) - 1/(s*sqrt(pi)).  It
    approaches |a| - 1/(s*sqrt(pi)) for large |a|.
    """
    _check_s(s)

    def value(a: float) -> float:
        return (a * math.erf(s * a)
                + math.exp(-(s * a) ** 2) / (s * _SQRT_PI)
                - 1.0 / (s * _SQRT_PI))

    stream = series.integrate(
        series.scale(series.gaussian_bump(s), 2.0 * s / _SQRT_PI), 0.0)
    return AnalyticLoss(name="smoothed_absolute", family=REGRESSION,
                        value=value, deriv=lambda a: math.erf(s * a),
                        deriv_series=stream, s=s,
                        safe_argument_limit=5.0 / s)


def smoothed_hinge(s: float) -> AnalyticLoss:
    """Classification loss whose derivative is (erf(s*(a-1)) - 1)/2.

    The value is the antiderivative normalized to vanish as a -> +inf:
    ((a-1)*(erf(s*(a-1)) - 1) + exp(-s**2 (a-1)**2)/(s*sqrt(pi))) / 2.
    The derivative coefficients come from the exact recurrence for
    exp(-s**2 (a-1)**2), scaled and integrated.
    """
    _check_s(s)

    def value(a: float) -> float:
        b = a - 1.0
        return 0.5 * (b * (math.erf(s * b) - 1.0)
                      + math.exp(-(s * b) ** 2) / (s * _SQRT_PI))

    stream = series.integrate(
        series.scale(series.shifted_gaussian_bump(s), s / _SQRT_PI),
        0.5 * (math.erf(-s) - 1.0))
    return AnalyticLoss(name="smoothed_hinge", family=CLASSIFICATION,
                        value=value,
                        deriv=lambda a: 0.5 * (math.erf(s * (a - 1.0)) - 1.0),
                        deriv_series=stream, s=s,
                        safe_argument_limit=5.0 / s)


def _check_s(s: float):
    if not (isinstance(s, (int, float)) and math.isfinite(s) and s > 0.0):
        raise InvalidParameterError(f"smoothing parameter must be > 0, got {s!r}")


def loss_catalogue(s: float = 1.0) -> list[AnalyticLoss]:
    """The four supported losses, smoothed ones at parameter ``s``."""
    return [squared_loss(), exponential_loss(),
            smoothed_absolute(s), smoothed_hinge(s)]


def loss_from_config(config: dict) -> AnalyticLoss:
    cfg = dict(config)
    name = cfg.pop("name", None)
    if name == "squared":
        return squared_loss()
    if name == "exponential":
        return exponential_loss()
    if name == "smoothed_absolute":
        return smoothed_absolute(float(cfg.pop("s", 1.0)))
    if name == "smoothed_hinge":
        return smoothed_hinge(float(cfg.pop("s", 1.0)))
    raise InvalidParameterError(f"unknown loss name {name!r}")


def deriv_plus_bound(loss: AnalyticLoss, p: float, u: float) -> float:
    """Closed-form upper bound on deriv_plus(sqrt((p-1)*u)).

    Exact for the squared and exponential losses.  For the smoothed
    losses the bounds follow from termwise domination of the companion
    series:

    * absolute: the odd series sum_k (s x)^(2k+1) / (k! (2k+1)) is
      termwise at most sum_k (s x)^(2k+1) / (k+1)!, giving
      1/2 + 2 (exp(s^2 x^2) - 1) / (s x sqrt(pi)) at x = sqrt((p-1) u)
      (the 1/2 is slack; the derivative has no constant coefficient);
    * hinge: bounding the shifted-bump coefficients by the coefficients
      of exp(-s^2 + 2 s^2 a + s^2 a^2) and integrating gives
      (1 + erf(s))/2 + exp(s^2 (x^2 + 2x - 1)) / (s (x+1) sqrt(pi)).
    """
    if not (math.isfinite(p) and p > 1.0):
        raise InvalidParameterError(f"need p > 1, got {p!r}")
    if not (math.isfinite(u) and u > 0.0):
        raise InvalidParameterError(f"need u > 0, got {u!r}")
    x = math.sqrt((p - 1.0) * u)
    if loss.name == "squared":
        return 2.0 * x
    if loss.name == "exponential":
        return math.exp(x)
    if loss.name == "smoothed_absolute":
        s = loss.s
        return 0.5 + 2.0 * (math.exp((s * x) ** 2) - 1.0) / (s * x * _SQRT_PI)
    if loss.name == "smoothed_hinge":
        s = loss.s
        return (0.5 * (1.0 + math.erf(s))
                + math.exp(s * s * (x * x + 2.0 * x - 1.0))
                / (s * (x + 1.0) * _SQRT_PI))
    raise InvalidParameterError(f"no catalogued bound for loss {loss.name!r}")

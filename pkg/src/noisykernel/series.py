"""Power-series primitives and the randomized scalar estimator.

Provides lazily memoized Taylor-coefficient streams with exact term
recurrences, arithmetic on them (Cauchy products, affine argument
changes, antiderivatives, scalar multiples), the geometric law used to
draw a random truncation index, and the estimator that combines both:
draw an index N, draw N independent copies of a scalar random variable
X, and return the reweighted product so that the expectation equals
f(E[X]) for the analytic function f described by the stream.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IndexCapExceededError, InvalidParameterError, NumericFaultError

# Hard safety cap on the random truncation index.  For any p > 1.001 the
# probability of reaching it is below p**-1e6, so hitting the cap signals a
# broken law or RNG rather than a legitimate draw.  Aborting loudly keeps
# the estimator unbiased; silent truncation would not.
INDEX_CAP = 10**6

# Series summation stops once the term magnitude stays below
# _REL_EPS * |running sum| for _STOP_RUN consecutive terms.
_REL_EPS = 1e-16
_STOP_RUN = 3
_MAX_TERMS = 100_000

_SPLITTER = 134217729.0  # 2**27 + 1


class CoefficientStream:
    """Lazily evaluated, memoized Taylor coefficients of one function.

    ``fn(n, prev)`` must return coefficient ``n`` given the list ``prev``
    of all coefficients below ``n``, so recurrence definitions are well
    founded.  Coefficients are deterministic and cached forever; cached
    entries may be read concurrently, and a lock serializes cache fills.

    If ``known_finite_degree`` is set, every coefficient above it is zero
    and is never computed.
    """

    def __init__(self, fn: Callable[[int, list], float],
                 known_finite_degree: Optional[int] = None,
                 name: str = "stream"):
        self._fn = fn
        self._cache: list[float] = []
        self._lock = threading.Lock()
        self.known_finite_degree = known_finite_degree
        self.name = name

    def __repr__(self) -> str:
        return f"CoefficientStream({self.name})"

    def coeff(self, n: int) -> float:
        """Coefficient of the degree-``n`` term."""
        if n < 0:
            raise InvalidParameterError("coefficient index must be nonnegative")
        d = self.known_finite_degree
        if d is not None and n > d:
            return 0.0
        if n >= len(self._cache):
            with self._lock:
                while len(self._cache) <= n:
                    k = len(self._cache)
                    value = float(self._fn(k, self._cache))
                    if not math.isfinite(value):
                        raise NumericFaultError(
                            f"coefficient {k} of {self.name} is not finite")
                    self._cache.append(value)
        return self._cache[n]

    def evaluate(self, x: float, absolute: bool = False) -> float:
        """Sum the series at ``x`` to machine-precision convergence.

        With ``absolute=True`` sums the companion series of absolute
        coefficients instead (callers pass x >= 0 for that use).
        Convergence is the caller's responsibility; a series that does
        not settle within the term budget raises ``NumericFaultError``.
        """
        total = 0.0
        below = 0
        d = self.known_finite_degree
        last = d if d is not None else _MAX_TERMS
        for n in range(last + 1):
            c = self.coeff(n)
            if absolute:
                c = abs(c)
            term = c * x**n
            total += term
            if not math.isfinite(total):
                raise NumericFaultError(
                    f"series {self.name} overflowed at degree {n}")
            if abs(term) <= _REL_EPS * abs(total):
                below += 1
                if below >= _STOP_RUN and d is None:
                    return total
            else:
                below = 0
        if d is not None:
            return total
        raise NumericFaultError(
            f"series {self.name} did not converge at x={x!r}")


# ---------------------------------------------------------------------------
# Named streams
# ---------------------------------------------------------------------------


def from_function(fn: Callable[[int], float],
                  known_finite_degree: Optional[int] = None,
                  name: str = "stream") -> CoefficientStream:
    """Stream whose coefficient n is ``fn(n)`` (no recurrence)."""
    return CoefficientStream(lambda n, _prev: fn(n), known_finite_degree, name)


def constant(c: float) -> CoefficientStream:
    return from_function(lambda n: c if n == 0 else 0.0, 0, f"const({c})")


def monomial(degree: int, c: float = 1.0) -> CoefficientStream:
    if degree < 0:
        raise InvalidParameterError("monomial degree must be nonnegative")
    return from_function(lambda n: c if n == degree else 0.0,
                         degree, f"{c}*a^{degree}")


def identity() -> CoefficientStream:
    return monomial(1, 1.0)


def exp_series(rate: float = 1.0) -> CoefficientStream:
    """Coefficients of exp(rate * a): rate**n / n!."""
    def step(n, prev):
        if n == 0:
            return 1.0
        return prev[n - 1] * rate / n
    return CoefficientStream(step, name=f"exp({rate}*a)")


def gaussian_bump(s: float = 1.0) -> CoefficientStream:
    """Coefficients of exp(-(s*a)**2): (-s**2)**k / k! at even degrees."""
    s2 = s * s

    def step(n, prev):
        if n == 0:
            return 1.0
        if n % 2 == 1:
            return 0.0
        return prev[n - 2] * (-s2) / (n // 2)
    return CoefficientStream(step, name=f"exp(-({s}a)^2)")


def shifted_gaussian_bump(s: float) -> CoefficientStream:
    """Coefficients of h(a) = exp(-s**2 * (a-1)**2).

    Built from the differential relation h' = -2 s**2 (a-1) h, which in
    coefficients reads (n+1) h_{n+1} = 2 s**2 (h_n - h_{n-1}).  This
    recurrence is exact and avoids composing the exponential series with
    a non-affine inner function.
    """
    s2 = s * s

    def step(n, prev):
        if n == 0:
            return math.exp(-s2)
        older = prev[n - 2] if n >= 2 else 0.0
        return 2.0 * s2 * (prev[n - 1] - older) / n
    return CoefficientStream(step, name=f"exp(-{s}^2(a-1)^2)")


# ---------------------------------------------------------------------------
# Stream arithmetic
# ---------------------------------------------------------------------------


def multiply(a: CoefficientStream, b: CoefficientStream) -> CoefficientStream:
    """Cauchy product: coefficient n is sum_k a_k * b_{n-k} (exact)."""
    da, db = a.known_finite_degree, b.known_finite_degree
    degree = da + db if (da is not None and db is not None) else None

    def fn(n, _prev):
        lo = 0 if db is None else max(0, n - db)
        hi = n if da is None else min(n, da)
        return math.fsum(a.coeff(k) * b.coeff(n - k) for k in range(lo, hi + 1))
    return CoefficientStream(fn, degree, f"({a.name})*({b.name})")


def scale(a: CoefficientStream, c: float) -> CoefficientStream:
    """Multiply every coefficient by the constant ``c``."""
    return CoefficientStream(lambda n, _prev: c * a.coeff(n),
                             a.known_finite_degree, f"{c}*({a.name})")


def integrate(a: CoefficientStream, constant_term: float = 0.0) -> CoefficientStream:
    """Antiderivative: coefficient 0 is given, coefficient n is a_{n-1}/n."""
    degree = None if a.known_finite_degree is None else a.known_finite_degree + 1

    def fn(n, _prev):
        if n == 0:
            return constant_term
        return a.coeff(n - 1) / n
    return CoefficientStream(fn, degree, f"int({a.name})")


def compose_affine(a: CoefficientStream, scale_factor: float,
                   shift: float = 0.0) -> CoefficientStream:
    """Coefficients of f(scale_factor * (x + shift)) for f given by ``a``.

    With shift == 0 this is an exact per-coefficient rescaling and works
    for any stream.  A nonzero shift requires each output coefficient to
    sum over all input degrees, which is only exact for streams with a
    known finite degree; infinite streams are rejected.
    """
    if shift == 0.0:
        return CoefficientStream(
            lambda n, _prev: a.coeff(n) * scale_factor**n,
            a.known_finite_degree, f"({a.name})@{scale_factor}a")
    d = a.known_finite_degree
    if d is None:
        raise InvalidParameterError(
            "compose_affine with a shift needs a finite-degree stream")

    def fn(k, _prev):
        return math.fsum(
            a.coeff(n) * scale_factor**n * math.comb(n, k) * shift**(n - k)
            for n in range(k, d + 1))
    return CoefficientStream(fn, d, f"({a.name})@{scale_factor}(a+{shift})")


# ---------------------------------------------------------------------------
# Geometric truncation-index law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricLaw:
    """Law of the truncation index N: Pr(N = n) = (p-1) / p**(n+1).

    Equivalently, N counts failures before the first success of a
    Bernoulli trial with success probability (p-1)/p, so E[N] = 1/(p-1)
    and Pr(N >= z) = p**-z.  The reweighting factor that makes the
    truncated series unbiased is 1/Pr(N = n).
    """

    p: float

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and math.isfinite(self.p)
                and self.p > 1.0):
            raise InvalidParameterError(
                f"geometric law needs p > 1, got {self.p!r}")

    def pmf(self, n: int) -> float:
        return (self.p - 1.0) / self.p ** (n + 1)

    def tail(self, z: float) -> float:
        """Pr(N >= z) = p**-z."""
        return self.p ** (-z)

    @property
    def mean(self) -> float:
        return 1.0 / (self.p - 1.0)

    def weight(self, n: int) -> float:
        """Unbiasing factor p**(n+1) / (p-1), the reciprocal of pmf(n)."""
        return self.p ** (n + 1) / (self.p - 1.0)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return sample_geometric(self, rng, size)


@dataclass(frozen=True)
class FixedIndexLaw:
    """Degenerate index law: always draws ``index``, with unit weight.

    Turns the randomized estimator into a plain plug-in of one series
    term.  That is exact precisely when the series is supported on the
    single degree ``index`` (linear kernels, squared-loss derivatives),
    which is what the noiseless-reduction checks rely on.  The ``p``
    field is a sentinel kept for compatibility tagging only.
    """

    index: int
    p: float = 0.0

    def __post_init__(self):
        if self.index < 0:
            raise InvalidParameterError("fixed index must be nonnegative")

    def weight(self, n: int) -> float:
        return 1.0

    @property
    def mean(self) -> float:
        return float(self.index)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        if size is None:
            return self.index
        return np.full(size, self.index, dtype=np.int64)


def sample_geometric(law: GeometricLaw, rng: np.random.Generator,
                     size: Optional[int] = None):
    """Draw the truncation index by inverse CDF on one uniform variate.

    N = floor(log(U) / -log(p)) with U uniform on (0, 1], a deterministic
    function of the RNG stream (one draw per sample).  Indices above
    INDEX_CAP abort with a diagnostic instead of being truncated.
    """
    log_p = math.log(law.p)
    if size is None:
        u = 1.0 - rng.random()
        n = int(math.log(u) / -log_p)
        if n > INDEX_CAP:
            raise IndexCapExceededError(
                f"drew truncation index {n} > {INDEX_CAP} (p={law.p})")
        return n
    u = 1.0 - rng.random(size)
    n = np.floor(np.log(u) / -log_p).astype(np.int64)
    if n.size and int(n.max()) > INDEX_CAP:
        raise IndexCapExceededError(
            f"drew truncation index {int(n.max())} > {INDEX_CAP} (p={law.p})")
    return n


# ---------------------------------------------------------------------------
# Compensated products
# ---------------------------------------------------------------------------


def _two_prod(a: float, b: float) -> tuple[float, float]:
    """Exact product a*b = x + err via Veltkamp splitting."""
    x = a * b
    c = _SPLITTER * a
    a_hi = c - (c - a)
    a_lo = a - a_hi
    c = _SPLITTER * b
    b_hi = c - (c - b)
    b_lo = b - b_hi
    err = ((a_hi * b_hi - x) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return x, err


def compensated_product(values) -> float:
    """Product of ``values`` in the given order with a running error term.

    The factors are multiplied strictly in sequence order (the estimator
    is defined as an ordered product, and reproducibility depends on a
    fixed order); the low-order word carries the rounding error forward.
    """
    hi, lo = 1.0, 0.0
    for v in values:
        prod, err = _two_prod(hi, v)
        err += lo * v
        hi = prod + err
        lo = err - (hi - prod)
    return hi + lo


# ---------------------------------------------------------------------------
# The scalar estimator
# ---------------------------------------------------------------------------


def estimate_scalar(f: CoefficientStream, src: Callable[[np.random.Generator], float],
                    law, rng: np.random.Generator,
                    shortcut_zero: bool = False) -> tuple[float, int]:
    """Unbiased estimate of f(E[X]) from independent draws of X.

    Draws an index N from ``law``, takes N fresh samples x_1..x_N from
    ``src``, and returns ``(theta, samples_used)`` with
    theta = coeff(N) * weight(N) * x_1 * ... * x_N (the empty product is
    1, so N = 0 yields coeff(0) * weight(0)).  Unbiasedness requires the
    series of ``f`` to converge absolutely on the range X can reach;
    that is the caller's responsibility and is not checked.

    With ``shortcut_zero`` the sampling is skipped whenever coeff(N) is
    exactly zero (the result is zero either way); that changes how many
    samples are consumed, so it is off by default.
    """
    n = law.sample(rng)
    gamma = f.coeff(n)
    if shortcut_zero and gamma == 0.0:
        return 0.0, 0
    draws = [float(src(rng)) for _ in range(n)]
    prod = compensated_product(draws)
    if not math.isfinite(prod):
        raise NumericFaultError(
            f"sample product became non-finite after {n} draws")
    theta = gamma * law.weight(n) * prod
    if not math.isfinite(theta):
        raise NumericFaultError(f"estimate overflowed at index {n}")
    return theta, n


def second_moment_bound(f_plus_at: Callable[[float], float], law: GeometricLaw,
                        second_moment_x: float) -> float:
    """Upper bound on E[theta**2] for the scalar estimator.

    Evaluates (p/(p-1)) * f_plus(sqrt(p * E[X**2]))**2 where ``f_plus_at``
    is the absolute-coefficient companion series of f.
    """
    if not (math.isfinite(second_moment_x) and second_moment_x >= 0.0):
        raise InvalidParameterError(
            f"second moment must be nonnegative, got {second_moment_x!r}")
    p = law.p
    root = math.sqrt(p * second_moment_x)
    return p / (p - 1.0) * f_plus_at(root) ** 2

"""Kernel descriptors with exact evaluation.

Dot-product kernels are described by the coefficient stream of the
scalar function Q with k(x, x') = Q(<x, x'>); all catalogued Q have
nonnegative coefficients, which is what makes them valid kernels and
what the feature estimators rely on.  The Gaussian kernel is described
by its width and by the product decomposition

    exp(-||x-x'||^2 / s2) =
        exp(-||x||^2/s2) * exp(-||x'||^2/s2) * sum_n (2/s2)^n/n! <x,x'>^n

whose polynomial part is again a nonnegative-coefficient stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import series
from .errors import DimensionMismatchError, InvalidParameterError
from .series import CoefficientStream


def _check_dims(x, xp) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != xp.shape or x.ndim != 1:
        raise DimensionMismatchError(
            f"kernel arguments must be equal-length vectors, got {x.shape} and {xp.shape}")
    return x, xp


@dataclass(frozen=True)
class DotProductKernel:
    """Kernel k(x, x') = Q(<x, x'>) with Q given by its coefficients."""

    name: str
    q_series: CoefficientStream
    params: tuple = ()
    closed_form: Optional[Callable[[float], float]] = None
    input_norm_bound: Optional[float] = None

    def beta(self, n: int) -> float:
        b = self.q_series.coeff(n)
        if b < 0.0:
            raise InvalidParameterError(
                f"kernel {self.name} has negative coefficient at degree {n}")
        return b

    def q_at(self, z: float) -> float:
        """Q(z), by closed form when available, else series summation."""
        if self.closed_form is not None:
            return float(self.closed_form(z))
        return self.q_series.evaluate(z)

    def eval(self, x, xp) -> float:
        x, xp = _check_dims(x, xp)
        return self.q_at(float(np.dot(x, xp)))

    @property
    def tag(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.name}({inner})"

    @property
    def config(self) -> dict:
        return {"name": self.name, **dict(self.params)}


@dataclass(frozen=True)
class GaussianKernel:
    """Kernel k(x, x') = exp(-||x - x'||^2 / sigma_sq)."""

    sigma_sq: float
    poly_series: CoefficientStream = field(init=False, repr=False)
    exp_arg_series: CoefficientStream = field(init=False, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.sigma_sq) and self.sigma_sq > 0.0):
            raise InvalidParameterError(
                f"gaussian kernel needs sigma_sq > 0, got {self.sigma_sq!r}")
        object.__setattr__(self, "poly_series",
                           series.exp_series(2.0 / self.sigma_sq))
        # Series of a |-> exp(-a / sigma_sq), used to estimate the
        # norm-dependent factor from paired noisy copies.
        object.__setattr__(self, "exp_arg_series",
                           series.exp_series(-1.0 / self.sigma_sq))

    def beta(self, n: int) -> float:
        return self.poly_series.coeff(n)

    def norm_factor(self, x) -> float:
        """The factor exp(-||x||^2 / sigma_sq) of the decomposition."""
        x = np.asarray(x, dtype=float)
        return math.exp(-float(np.dot(x, x)) / self.sigma_sq)

    def eval(self, x, xp) -> float:
        x, xp = _check_dims(x, xp)
        diff = x - xp
        return math.exp(-float(np.dot(diff, diff)) / self.sigma_sq)

    @property
    def name(self) -> str:
        return "gaussian"

    @property
    def tag(self) -> str:
        return f"gaussian(sigma_sq={self.sigma_sq})"

    @property
    def config(self) -> dict:
        return {"name": "gaussian", "sigma_sq": self.sigma_sq}


Kernel = DotProductKernel | GaussianKernel


def eval_kernel(kernel: Kernel, x, xp) -> float:
    """Exact kernel value k(x, x')."""
    return kernel.eval(x, xp)


# ---------------------------------------------------------------------------
# Catalogue
# ---------------------------------------------------------------------------


def linear_kernel() -> DotProductKernel:
    return DotProductKernel("linear", series.identity(), (),
                            closed_form=lambda z: z)


def homogeneous_polynomial(degree: int) -> DotProductKernel:
    if degree < 1:
        raise InvalidParameterError("polynomial degree must be >= 1")
    return DotProductKernel(
        "homogeneous_polynomial", series.monomial(degree, 1.0),
        (("degree", degree),), closed_form=lambda z: z**degree)


def inhomogeneous_polynomial(degree: int) -> DotProductKernel:
    """(1 + <x, x'>)**degree, with binomial coefficients."""
    if degree < 1:
        raise InvalidParameterError("polynomial degree must be >= 1")
    stream = series.from_function(
        lambda n: float(math.comb(degree, n)) if n <= degree else 0.0,
        degree, f"(1+z)^{degree}")
    return DotProductKernel("inhomogeneous_polynomial", stream,
                            (("degree", degree),),
                            closed_form=lambda z: (1.0 + z)**degree)


def exponential_kernel() -> DotProductKernel:
    return DotProductKernel("exponential", series.exp_series(1.0), (),
                            closed_form=np.exp)


def binomial_kernel(alpha: float, input_norm_bound: float) -> DotProductKernel:
    """(1 - <x, x'>)**-alpha, valid only while |<x, x'>| < 1.

    The expansion coefficients are the rising factorials
    alpha (alpha+1) ... (alpha+n-1) / n!, all nonnegative; with a plus
    sign inside the base the coefficients would alternate in sign, which
    no valid dot-product kernel allows.  Callers must declare a bound B
    on the input norms with B*B < 1 so the series provably converges.
    """
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise InvalidParameterError(f"binomial kernel needs alpha > 0, got {alpha!r}")
    if not (0.0 < input_norm_bound and input_norm_bound**2 < 1.0):
        raise InvalidParameterError(
            "binomial kernel needs a declared input-norm bound B with B*B < 1")

    def step(n, prev):
        if n == 0:
            return 1.0
        return prev[n - 1] * (alpha + n - 1) / n
    stream = series.CoefficientStream(step, name=f"(1-z)^-{alpha}")
    return DotProductKernel("binomial", stream,
                            (("alpha", alpha), ("input_norm_bound", input_norm_bound)),
                            closed_form=lambda z: (1.0 - z)**-alpha,
                            input_norm_bound=input_norm_bound)


def gaussian_kernel(sigma_sq: float) -> GaussianKernel:
    return GaussianKernel(sigma_sq)


def kernel_catalogue(degree: int = 2, sigma_sq: float = 1.0,
                     alpha: float = 1.0,
                     input_norm_bound: float = 0.7) -> list[Kernel]:
    """One instance of every supported kernel family."""
    return [
        linear_kernel(),
        homogeneous_polynomial(degree),
        inhomogeneous_polynomial(degree),
        exponential_kernel(),
        binomial_kernel(alpha, input_norm_bound),
        gaussian_kernel(sigma_sq),
    ]


def kernel_from_config(config: dict) -> Kernel:
    """Build a kernel from its {name, parameters} description."""
    cfg = dict(config)
    name = cfg.pop("name", None)
    try:
        if name == "linear":
            return linear_kernel()
        if name == "homogeneous_polynomial":
            return homogeneous_polynomial(int(cfg.pop("degree")))
        if name == "inhomogeneous_polynomial":
            return inhomogeneous_polynomial(int(cfg.pop("degree")))
        if name == "exponential":
            return exponential_kernel()
        if name == "binomial":
            return binomial_kernel(float(cfg.pop("alpha")),
                                   float(cfg.pop("input_norm_bound")))
        if name == "gaussian":
            return gaussian_kernel(float(cfg.pop("sigma_sq")))
    except KeyError as exc:
        raise InvalidParameterError(
            f"kernel {name!r} is missing parameter {exc}") from exc
    raise InvalidParameterError(f"unknown kernel name {name!r}")

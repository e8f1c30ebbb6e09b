"""Unbiased feature-map estimates and their inner products.

A feature estimate is the data structure behind the randomized element
whose expectation is the exact feature image of a hidden instance: a
drawn degree n, the n noisy copies queried from the oracle, a
premultiplied scale, and (Gaussian kernels only) an independently
estimated scalar for the norm-dependent factor.  As an element of the
kernel space it reads

    scale * exp_factor * sum over (k_1..k_n) of
        copy_1[k_1] * ... * copy_n[k_n] * e(n, k_1, .., k_n)

with orthonormal directions e(...) indexed by the degree and coordinate
tuple.  Inner products between two estimates, or between an estimate
and the exact image of a known point, reduce to short products of
ordinary dot products and are computed here exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (DimensionMismatchError, EstimateMismatchError,
                     InvalidParameterError)
from .kernels import GaussianKernel, Kernel, kernel_from_config
from .series import estimate_scalar


class NoisyInstanceOracle:
    """Per-round source of i.i.d. noisy copies of a hidden instance.

    Each query returns ``true_instance + Z`` with Z drawn fresh from the
    supplied noise model (an object with ``draw(rng, dim) -> vector``);
    with ``noise=None`` queries return the instance exactly.  The oracle
    owns its RNG stream, so one oracle must be driven by one worker.
    ``calls_made`` increments by exactly one per query.
    """

    def __init__(self, true_instance, noise=None,
                 rng: Optional[np.random.Generator] = None):
        self.__true = np.array(true_instance, dtype=float).reshape(-1)
        self._noise = noise
        self._rng = rng if rng is not None else np.random.default_rng()
        self.calls_made = 0

    @property
    def dimension(self) -> int:
        return self.__true.size

    def query(self) -> np.ndarray:
        self.calls_made += 1
        if self._noise is None:
            return self.__true.copy()
        z = self._noise.draw(self._rng, self.__true.size)
        return self.__true + z

    def reveal_true_instance(self) -> np.ndarray:
        """Ground truth for evaluation code only; learners must not call this."""
        return self.__true.copy()


@dataclass(frozen=True, eq=False)
class FeatureEstimate:
    """Randomized, finitely supported element of the kernel space.

    ``scale`` is sqrt(beta_n) times the index law's unbiasing weight
    (zero when beta_n is zero), premultiplied at construction because
    pairwise products are the hot path.  ``index_weight`` stores that
    law weight for products against exact points.  ``exp_factor`` is 1.0
    exactly for dot-product kernels.
    """

    kernel: Kernel
    p: float
    degree_n: int
    copies: tuple
    scale: float
    exp_factor: float
    index_weight: float
    dim: int

    def squared_norm(self) -> float:
        """Exact squared norm: scale^2 * exp_factor^2 * prod ||copy_j||^2."""
        acc = self.scale * self.scale * self.exp_factor * self.exp_factor
        for c in self.copies:
            acc *= float(np.dot(c, c))
        return acc


def _zero_estimate(kernel: Kernel, law, dim: int) -> FeatureEstimate:
    # Canonical representation of the zero element: no copies, zero scale.
    return FeatureEstimate(kernel=kernel, p=getattr(law, "p", 0.0),
                           degree_n=0, copies=(), scale=0.0,
                           exp_factor=1.0, index_weight=law.weight(0), dim=dim)


def map_estimate_dot(oracle: NoisyInstanceOracle, kernel, law,
                     rng: np.random.Generator,
                     shortcut_zero_beta: bool = False) -> FeatureEstimate:
    """Unbiased estimate of the feature image under a dot-product kernel.

    Draws an index N from ``law`` and queries the oracle exactly N times.
    When ``shortcut_zero_beta`` is set and the kernel coefficient at the
    drawn degree is zero, the queries are skipped and the zero element is
    returned; by default the copies are still drawn so query statistics
    match the unoptimized estimator.
    """
    n = law.sample(rng)
    beta = kernel.beta(n)
    if shortcut_zero_beta and beta == 0.0:
        return _zero_estimate(kernel, law, oracle.dimension)
    copies = tuple(oracle.query() for _ in range(n))
    scale = math.sqrt(beta) * law.weight(n) if beta > 0.0 else 0.0
    return FeatureEstimate(kernel=kernel, p=getattr(law, "p", 0.0),
                           degree_n=n, copies=copies, scale=scale,
                           exp_factor=1.0, index_weight=law.weight(n),
                           dim=oracle.dimension)


def map_estimate_gaussian(oracle: NoisyInstanceOracle, kernel: GaussianKernel,
                          law, rng: np.random.Generator,
                          shortcut_zero_beta: bool = False) -> FeatureEstimate:
    """Unbiased estimate of the Gaussian-kernel feature image.

    Uses the product decomposition of the kernel: the polynomial part is
    estimated exactly as for dot-product kernels (N queries), and the
    norm-dependent factor exp(-||x||^2 / sigma_sq) is estimated by an
    independent run of the scalar estimator, where each scalar sample is
    the dot product of two fresh noisy copies (so its mean is ||x||^2).
    The two randomizations are independent and each factor is unbiased,
    so the product is unbiased; expected queries per call are 3/(p-1).

    The factor construction is reconstructed from the stated query-count
    and unbiasedness contracts; equivalent internals would do as well.
    """
    n = law.sample(rng)
    copies = tuple(oracle.query() for _ in range(n))
    scale = math.sqrt(kernel.beta(n)) * law.weight(n)

    def paired_dot(_rng):
        return float(np.dot(oracle.query(), oracle.query()))

    exp_factor, _ = estimate_scalar(kernel.exp_arg_series, paired_dot, law, rng,
                                    shortcut_zero=shortcut_zero_beta)
    return FeatureEstimate(kernel=kernel, p=getattr(law, "p", 0.0),
                           degree_n=n, copies=copies, scale=scale,
                           exp_factor=exp_factor, index_weight=law.weight(n),
                           dim=oracle.dimension)


def map_estimate(oracle: NoisyInstanceOracle, kernel, law,
                 rng: np.random.Generator,
                 shortcut_zero_beta: bool = False) -> FeatureEstimate:
    """Dispatch to the dot-product or Gaussian estimator by kernel type."""
    if isinstance(kernel, GaussianKernel):
        return map_estimate_gaussian(oracle, kernel, law, rng,
                                     shortcut_zero_beta=shortcut_zero_beta)
    return map_estimate_dot(oracle, kernel, law, rng,
                            shortcut_zero_beta=shortcut_zero_beta)


def _check_compatible(a: FeatureEstimate, b: FeatureEstimate):
    if a.kernel.tag != b.kernel.tag or a.p != b.p:
        raise EstimateMismatchError(
            f"cannot combine estimates built under ({a.kernel.tag}, p={a.p}) "
            f"and ({b.kernel.tag}, p={b.p})")


def prod_pair(a: FeatureEstimate, b: FeatureEstimate) -> float:
    """Exact inner product of two feature estimates.

    Zero whenever the degrees differ (the estimates then live on
    orthogonal direction blocks); otherwise the product of the scales,
    the exponential factors, and the per-position dot products of the
    copies, accumulated in index order.
    """
    _check_compatible(a, b)
    if a.degree_n != b.degree_n:
        return 0.0
    acc = a.scale * b.scale * a.exp_factor * b.exp_factor
    if acc == 0.0:
        return 0.0
    for ca, cb in zip(a.copies, b.copies):
        acc *= float(np.dot(ca, cb))
    return acc


def prod_exact(a: FeatureEstimate, x_prime) -> float:
    """Exact inner product of an estimate with the image of a known point."""
    x_prime = np.asarray(x_prime, dtype=float).reshape(-1)
    if x_prime.size != a.dim:
        raise DimensionMismatchError(
            f"estimate has dimension {a.dim}, point has {x_prime.size}")
    # scale^2 / weight equals beta_n * weight: one sqrt(beta_n) from the
    # estimate and one from the exact image.
    acc = a.scale * a.scale / a.index_weight
    if acc == 0.0:
        return 0.0
    for ca in a.copies:
        acc *= float(np.dot(ca, x_prime))
    acc *= a.exp_factor
    if isinstance(a.kernel, GaussianKernel):
        acc *= a.kernel.norm_factor(x_prime)
    return acc


# ---------------------------------------------------------------------------
# Serialization (replay / debug)
# ---------------------------------------------------------------------------


def feature_to_json(estimate: FeatureEstimate) -> str:
    """Serialize with shortest round-trip decimals; bit-exact on reload."""
    payload = {
        "kernel": estimate.kernel.config,
        "p": estimate.p,
        "n": estimate.degree_n,
        "scale": estimate.scale,
        "exp_factor": estimate.exp_factor,
        "copies": [[float(v) for v in c] for c in estimate.copies],
        "dim": estimate.dim,
    }
    return json.dumps(payload, sort_keys=True)


def feature_from_json(text: str) -> FeatureEstimate:
    payload = json.loads(text)
    kernel = kernel_from_config(payload["kernel"])
    p = float(payload["p"])
    n = int(payload["n"])
    if p > 1.0:
        weight = p ** (n + 1) / (p - 1.0)
    elif p == 0.0:
        weight = 1.0
    else:
        raise InvalidParameterError(f"cannot reconstruct weight for p={p!r}")
    copies = tuple(np.asarray(c, dtype=float) for c in payload["copies"])
    return FeatureEstimate(kernel=kernel, p=p, degree_n=n, copies=copies,
                           scale=float(payload["scale"]),
                           exp_factor=float(payload["exp_factor"]),
                           index_weight=weight, dim=int(payload["dim"]))

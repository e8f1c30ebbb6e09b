"""Noisy-input online learning in kernel space.

The online learner keeps its hypothesis as a weighted sum of stored
feature estimates, built round by round: estimate the feature image of
the hidden instance from noisy copies, estimate the scalar derivative
length with fresh copies, take a gradient step on the coefficient of
the new term, and rescale all coefficients whenever the squared norm
exceeds the ball radius.  Also provided: prediction on explicit points,
a noiseless projected-gradient baseline, the two-copy shortcut for the
linear/squared special case, and a batch solver that computes the
in-hindsight comparator for regret measurement.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (DimensionMismatchError, InvalidParameterError,
                     NumericFaultError)
from .features import (FeatureEstimate, NoisyInstanceOracle, feature_from_json,
                       feature_to_json, map_estimate, prod_exact, prod_pair)
from .kernels import GaussianKernel, Kernel
from .losses import CLASSIFICATION, AnalyticLoss
from .series import FixedIndexLaw, GeometricLaw, compensated_product

NORM_CACHE_TOL = 1e-9


@dataclass
class RoundLog:
    """Per-round record emitted by the online runs."""

    t: int
    loss_true: float
    oracle_calls: int
    alpha_t: float
    norm_sq: float


class Hypothesis:
    """Weighted sum of feature estimates with a cached squared norm.

    Terms whose coefficient or scale is exactly zero are dropped on
    entry: they are the zero element of the kernel space and contribute
    nothing to any inner product, so dropping them changes no value
    while keeping the pairwise-product work proportional to the number
    of active terms.  The cache is maintained incrementally; a full
    recomputation is available for verification.
    """

    def __init__(self):
        self.terms: list[tuple[float, FeatureEstimate, int]] = []
        self._by_degree: dict[int, list[int]] = {}
        self._norm_sq = 0.0

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def squared_norm(self) -> float:
        return self._norm_sq

    def inner_with_feature(self, feature: FeatureEstimate) -> float:
        """<w, feature> via pairwise products, skipping mismatched degrees."""
        idxs = self._by_degree.get(feature.degree_n)
        if not idxs:
            return 0.0
        terms = self.terms
        return math.fsum(terms[i][0] * prod_pair(terms[i][1], feature)
                         for i in idxs)

    def inner_with_point(self, x) -> float:
        """<w, image of x> for an explicitly known point x."""
        return math.fsum(alpha * prod_exact(term, x)
                         for alpha, term, _ in self.terms)

    def add_term(self, alpha: float, feature: FeatureEstimate,
                 round_index: int = 0):
        if alpha == 0.0 or feature.scale == 0.0:
            return
        cross = self.inner_with_feature(feature)
        self._norm_sq += 2.0 * alpha * cross + alpha * alpha * prod_pair(feature, feature)
        self._by_degree.setdefault(feature.degree_n, []).append(len(self.terms))
        self.terms.append((alpha, feature, round_index))

    def rescale(self, factor: float):
        self.terms = [(alpha * factor, term, r) for alpha, term, r in self.terms]
        self._norm_sq *= factor * factor

    def recompute_norm_sq(self) -> float:
        """Exact double-sum squared norm, for verification runs."""
        total = 0.0
        for i, (ai, fi, _) in enumerate(self.terms):
            total += ai * ai * prod_pair(fi, fi)
            for j in range(i):
                aj, fj, _ = self.terms[j]
                total += 2.0 * ai * aj * prod_pair(fi, fj)
        return total


def predict(hyp: Hypothesis, x) -> float:
    """Apply the hypothesis to an explicit instance."""
    return hyp.inner_with_point(x)


def hypothesis_to_json(hyp: Hypothesis) -> str:
    """Trajectory checkpoint: list of {round, alpha, feature} entries."""
    entries = [{"round": r, "alpha": alpha,
                "feature": json.loads(feature_to_json(term))}
               for alpha, term, r in hyp.terms]
    return json.dumps(entries, sort_keys=True)


def hypothesis_from_json(text: str) -> Hypothesis:
    hyp = Hypothesis()
    for entry in json.loads(text):
        feature = feature_from_json(json.dumps(entry["feature"]))
        hyp.add_term(float(entry["alpha"]), feature, int(entry["round"]))
    return hyp


# ---------------------------------------------------------------------------
# Gradient-length estimation
# ---------------------------------------------------------------------------


def grad_length_estimate(oracle: NoisyInstanceOracle, y: float,
                         hyp: Hypothesis, loss: AnalyticLoss, kernel: Kernel,
                         law, rng: np.random.Generator,
                         shortcut_zero_beta: bool = False) -> tuple[float, int]:
    """Unbiased estimate of the scalar derivative at the current margin.

    Draws an index n, obtains n fresh feature estimates from the oracle,
    and multiplies the n hypothesis products, reweighted by the index
    law.  For classification losses each factor is y * <w, estimate_j>
    (labels in {-1, +1} fold into the argument, keeping the expectation
    equal to y * deriv(y * <w, image of x>)); for regression losses each
    factor is <w, estimate_j> - y and the leading y is dropped.  Returns
    the estimate and the number of oracle calls consumed.
    """
    before = oracle.calls_made
    n = law.sample(rng)
    gamma = loss.deriv_series.coeff(n)
    if shortcut_zero_beta and gamma == 0.0:
        return 0.0, 0
    classification = loss.family == CLASSIFICATION
    factors = []
    for _ in range(n):
        feat = map_estimate(oracle, kernel, law, rng,
                            shortcut_zero_beta=shortcut_zero_beta)
        inner = hyp.inner_with_feature(feat)
        factors.append(y * inner if classification else inner - y)
    prod = compensated_product(factors)
    if not math.isfinite(prod):
        raise NumericFaultError(f"gradient factors overflowed at index {n}")
    theta = gamma * law.weight(n) * prod
    g_tilde = loss.grad_prefactor(y) * theta
    if not math.isfinite(g_tilde):
        raise NumericFaultError(f"gradient estimate overflowed at index {n}")
    return g_tilde, oracle.calls_made - before


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class LearnerConfig:
    """Settings of one online run.

    In theorem mode the learning rate is eta = b_w / (sqrt(u) *
    deriv_plus(sqrt((p-1) u))) with u = b_w (p/(p-1))^2 Q(p b_x_tilde)
    for dot-product kernels and u = b_w (p/(p-1))^3 exp((sqrt(p)
    b_x_tilde + 2 p sqrt(b_x_tilde)) / sigma_sq) for the Gaussian
    kernel; b_x_tilde is the declared bound on E[||noisy copy||^2].
    """

    loss: AnalyticLoss
    kernel: Kernel
    rounds: int
    p: float = 2.0
    b_w: float = 1.0
    b_x_tilde: float = 1.0
    eta: Optional[float] = None
    eta_mode: str = "theorem"
    shortcut_zero_beta: bool = False
    # Replaces the geometric index law with a degenerate one; exact only
    # for single-degree series (noiseless-reduction checks).
    fixed_index_law: Optional[int] = None

    def validate(self):
        if self.rounds < 1:
            raise InvalidParameterError("rounds must be >= 1")
        if not (math.isfinite(self.p) and self.p > 1.0):
            raise InvalidParameterError(f"need p > 1, got {self.p!r}")
        if not (math.isfinite(self.b_w) and self.b_w > 0.0):
            raise InvalidParameterError(f"need b_w > 0, got {self.b_w!r}")
        if self.eta_mode not in ("manual", "theorem"):
            raise InvalidParameterError(f"unknown eta_mode {self.eta_mode!r}")
        if self.eta_mode == "manual":
            if self.eta is None or not (math.isfinite(self.eta) and self.eta > 0):
                raise InvalidParameterError("manual mode needs eta > 0")
        else:
            if not (math.isfinite(self.b_x_tilde) and self.b_x_tilde > 0.0):
                raise InvalidParameterError("theorem mode needs b_x_tilde > 0")
        limit = self.loss.safe_argument_limit
        if limit is not None:
            # Cancellation guard: the derivative series is exact but loses
            # precision once the argument exceeds roughly 5/s.
            arg = math.sqrt(self.p * self.b_w * self.feature_norm_bound())
            if arg > limit:
                warnings.warn(
                    f"series arguments up to {arg:.3g} exceed the safe "
                    f"range {limit:.3g} for loss {self.loss.name}; expect "
                    "cancellation noise", RuntimeWarning, stacklevel=2)

    def feature_norm_bound(self) -> float:
        """Bound on E[||feature estimate||^2] implied by b_x_tilde."""
        p = self.p
        if isinstance(self.kernel, GaussianKernel):
            return (p / (p - 1.0)) * math.exp(
                2.0 * p * self.b_x_tilde / self.kernel.sigma_sq)
        return (p / (p - 1.0)) * self.kernel.q_at(p * self.b_x_tilde)

    def theorem_u(self) -> float:
        p = self.p
        if isinstance(self.kernel, GaussianKernel):
            b = self.b_x_tilde
            return (self.b_w * (p / (p - 1.0)) ** 3
                    * math.exp((math.sqrt(p) * b + 2.0 * p * math.sqrt(b))
                               / self.kernel.sigma_sq))
        return self.b_w * (p / (p - 1.0)) ** 2 * self.kernel.q_at(p * self.b_x_tilde)

    def resolved_eta(self) -> float:
        if self.eta_mode == "manual":
            return float(self.eta)
        u = self.theorem_u()
        return self.b_w / (math.sqrt(u)
                           * self.loss.deriv_plus(math.sqrt((self.p - 1.0) * u)))


# ---------------------------------------------------------------------------
# The online run
# ---------------------------------------------------------------------------


def run_online(stream: Sequence[tuple[NoisyInstanceOracle, float]],
               config: LearnerConfig, rng: np.random.Generator,
               eval_hook: Optional[Callable[[Hypothesis, NoisyInstanceOracle, float], float]] = None,
               law=None) -> tuple[Hypothesis, list[RoundLog]]:
    """Run the noisy-input learner over a stream of (oracle, label) rounds.

    Per round: evaluate the current hypothesis through ``eval_hook`` if
    given (the hook is the only place with ground-truth access), store a
    fresh feature estimate, estimate the derivative length with further
    fresh estimates, append the term with coefficient
    -estimate * eta / sqrt(rounds), and rescale all coefficients by
    sqrt(b_w / norm_sq) whenever the squared norm exceeds b_w (mapping
    it to exactly b_w).
    """
    config.validate()
    if law is None:
        if config.fixed_index_law is not None:
            law = FixedIndexLaw(config.fixed_index_law)
        else:
            law = GeometricLaw(config.p)
    eta = config.resolved_eta()
    step = eta / math.sqrt(config.rounds)
    shortcut = config.shortcut_zero_beta
    hyp = Hypothesis()
    logs: list[RoundLog] = []
    for t, (oracle, y) in enumerate(stream, start=1):
        if t > config.rounds:
            raise InvalidParameterError(
                f"stream longer than configured {config.rounds} rounds")
        try:
            loss_true = (eval_hook(hyp, oracle, y)
                         if eval_hook is not None else math.nan)
            before = oracle.calls_made
            psi = map_estimate(oracle, config.kernel, law, rng,
                               shortcut_zero_beta=shortcut)
            g_tilde, _ = grad_length_estimate(
                oracle, y, hyp, config.loss, config.kernel, law, rng,
                shortcut_zero_beta=shortcut)
            calls = oracle.calls_made - before
            alpha = -g_tilde * step
            hyp.add_term(alpha, psi, round_index=t)
            norm_sq = hyp.squared_norm
            if norm_sq > config.b_w:
                hyp.rescale(math.sqrt(config.b_w / norm_sq))
                norm_sq = hyp.squared_norm
        except NumericFaultError as exc:
            raise NumericFaultError(f"round {t}: {exc}") from exc
        logs.append(RoundLog(t=t, loss_true=loss_true, oracle_calls=calls,
                             alpha_t=alpha, norm_sq=norm_sq))
    return hyp, logs


# ---------------------------------------------------------------------------
# Noiseless baseline
# ---------------------------------------------------------------------------


def baseline_ogd(examples: Sequence[tuple[np.ndarray, float]], eta,
                 b_w: float, loss: AnalyticLoss, kernel: Kernel
                 ) -> tuple[np.ndarray, list[RoundLog]]:
    """Projected online gradient descent on exact instances.

    The hypothesis is kept in expansion form over the seen instances
    with exact kernel evaluations.  ``eta`` is either a constant (the
    per-round step is then eta / sqrt(T), matching the noisy run) or a
    callable t -> step for custom schedules.  Returns the final
    coefficient vector and per-round logs (oracle_calls is 0 by
    definition; loss_true is the loss actually suffered).
    """
    t_total = len(examples)
    xs = np.asarray([np.asarray(x, dtype=float) for x, _ in examples])
    ys = np.asarray([float(y) for _, y in examples])
    if callable(eta):
        step_at = eta
    else:
        fixed = float(eta) / math.sqrt(t_total)
        step_at = lambda t: fixed
    alphas = np.zeros(t_total)
    norm_sq = 0.0
    logs: list[RoundLog] = []
    for t in range(t_total):
        x_t, y_t = xs[t], ys[t]
        gram_col = _gram_column(kernel, xs[:t + 1], x_t)
        # fsum gives the exactly rounded sum, making the noiseless
        # reduction from the estimator path reproducible bit for bit.
        margin = math.fsum(alphas[i] * gram_col[i] for i in range(t))
        loss_true = loss.round_loss(margin, y_t)
        coef = loss.deriv(loss.argument(margin, y_t)) * loss.grad_prefactor(y_t)
        alpha_t = -step_at(t + 1) * coef
        alphas[t] = alpha_t
        norm_sq += 2.0 * alpha_t * margin + alpha_t * alpha_t * float(gram_col[t])
        if norm_sq > b_w:
            factor = math.sqrt(b_w / norm_sq)
            alphas[:t + 1] *= factor
            norm_sq *= factor * factor
        logs.append(RoundLog(t=t + 1, loss_true=loss_true, oracle_calls=0,
                             alpha_t=alpha_t, norm_sq=norm_sq))
    return alphas, logs


def _gram_column(kernel: Kernel, xs: np.ndarray, x: np.ndarray) -> np.ndarray:
    if isinstance(kernel, GaussianKernel):
        diff = xs - x
        return np.exp(-np.einsum("ij,ij->i", diff, diff) / kernel.sigma_sq)
    z = xs @ x
    if kernel.closed_form is not None:
        # Catalogued closed forms are numpy-broadcastable expressions.
        return np.asarray(kernel.closed_form(z), dtype=float).reshape(z.shape)
    return np.asarray([kernel.q_series.evaluate(v) for v in z], dtype=float)


def _gram_matrix(kernel: Kernel, xs: np.ndarray) -> np.ndarray:
    if isinstance(kernel, GaussianKernel):
        sq = np.einsum("ij,ij->i", xs, xs)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (xs @ xs.T)
        return np.exp(-np.maximum(d2, 0.0) / kernel.sigma_sq)
    z = xs @ xs.T
    if kernel.closed_form is not None:
        return np.asarray(kernel.closed_form(z), dtype=float).reshape(z.shape)
    flat = np.asarray([kernel.q_series.evaluate(v) for v in z.ravel()])
    return flat.reshape(z.shape)


# ---------------------------------------------------------------------------
# Two-copy special case (linear kernel, squared loss)
# ---------------------------------------------------------------------------


def two_copy_linear_squared(oracle: NoisyInstanceOracle, y: float,
                            w: np.ndarray, eta: float,
                            b_w: Optional[float] = None) -> np.ndarray:
    """One update of the two-query estimator for squared loss, linear kernel.

    Queries exactly two noisy copies and forms 2 (<w, copy1> - y) copy2,
    whose expectation is the exact gradient by independence of the two
    copies; then takes a projected step.
    """
    w = np.asarray(w, dtype=float)
    x1 = oracle.query()
    x2 = oracle.query()
    if x1.size != w.size:
        raise DimensionMismatchError(
            f"hypothesis has dimension {w.size}, oracle returns {x1.size}")
    g = 2.0 * (float(np.dot(w, x1)) - y) * x2
    w_next = w - eta * g
    if b_w is not None:
        norm_sq = float(np.dot(w_next, w_next))
        if norm_sq > b_w:
            w_next = w_next * math.sqrt(b_w / norm_sq)
    return w_next


# ---------------------------------------------------------------------------
# Batch comparator
# ---------------------------------------------------------------------------


@dataclass
class ComparatorResult:
    """Best hypothesis found for the in-hindsight objective.

    ``min_cumulative_loss`` is the cumulative loss of a feasible point
    and therefore an upper bound on the true minimum; ``gap`` bounds the
    distance to optimality via the final projected-gradient step (scaled
    by the cumulative objective), and ``converged`` records whether it
    fell below the requested tolerance.
    """

    w: Optional[np.ndarray]
    alphas: Optional[np.ndarray]
    w_star_value: Optional[float]
    min_cumulative_loss: float
    gap: float
    converged: bool
    iterations: int


def batch_comparator(examples: Sequence[tuple[np.ndarray, float]],
                     loss: AnalyticLoss, kernel: Kernel, b_w: float,
                     max_iters: int = 4000, tol: float = 1e-10) -> ComparatorResult:
    """Minimize the cumulative loss over the ball of squared norm b_w.

    Uses projected gradient descent with Armijo backtracking on the
    average loss (all catalogued losses are smooth), tracking the best
    feasible iterate.  Linear kernels are solved directly in coordinate
    space; other kernels through an expansion over the exact instances,
    which keeps the desk-scale limit of about 2000 examples.
    """
    if not (math.isfinite(b_w) and b_w >= 0.0):
        raise InvalidParameterError(f"need b_w >= 0, got {b_w!r}")
    t_total = len(examples)
    if t_total == 0:
        raise InvalidParameterError("comparator needs at least one example")
    xs = np.asarray([np.asarray(x, dtype=float) for x, _ in examples])
    ys = np.asarray([float(y) for _, y in examples])
    classification = loss.family == CLASSIFICATION

    linear = (not isinstance(kernel, GaussianKernel)) and kernel.name == "linear"
    if linear:
        gram = None
        if t_total > 10**5:
            raise InvalidParameterError("linear comparator limited to 1e5 examples")
    else:
        if t_total > 2000:
            raise InvalidParameterError(
                "kernelized comparator limited to 2000 examples")
        gram = _gram_matrix(kernel, xs)

    deriv = np.vectorize(loss.deriv)
    values = np.vectorize(loss.value)

    def objective_and_coef(margins):
        args = ys * margins if classification else margins - ys
        f = float(np.sum(values(args)))
        coef = deriv(args)
        if classification:
            coef = coef * ys
        return f, coef / t_total  # gradient of the average objective

    if b_w == 0.0:
        margins = np.zeros(t_total)
        f0, _ = objective_and_coef(margins)
        w0 = np.zeros(xs.shape[1]) if linear else None
        return ComparatorResult(w=w0, alphas=None if linear else np.zeros(t_total),
                                w_star_value=0.0 if linear else None,
                                min_cumulative_loss=f0, gap=0.0,
                                converged=True, iterations=0)

    def project_w(w):
        n = float(np.dot(w, w))
        return w * math.sqrt(b_w / n) if n > b_w else w

    def project_alpha(a):
        n = float(a @ gram @ a)
        return a * math.sqrt(b_w / n) if n > b_w else a

    if linear:
        point = np.zeros(xs.shape[1])
        margins_of = lambda w: xs @ w
        grad_of = lambda coef: xs.T @ coef
        project = project_w
    else:
        point = np.zeros(t_total)
        margins_of = lambda a: gram @ a
        grad_of = lambda coef: coef  # functional gradient in expansion coords
        project = project_alpha

    step = 1.0
    f_best = math.inf
    point_best = point.copy()
    gap = math.inf
    iterations = 0
    f_cur, coef = objective_and_coef(margins_of(point))
    f_avg = f_cur / t_total
    for iterations in range(1, max_iters + 1):
        grad = grad_of(coef)
        # Armijo backtracking on the average objective.
        while True:
            cand = project(point - step * grad)
            f_cand_total, coef_cand = objective_and_coef(margins_of(cand))
            f_cand_avg = f_cand_total / t_total
            move = cand - point
            decrease = f_avg - f_cand_avg
            if decrease >= -1e-4 * float(np.dot(grad, move)) or step < 1e-18:
                break
            step *= 0.5
        gap = float(np.linalg.norm(point - cand)) / max(step, 1e-18)
        point, f_avg, coef = cand, f_cand_avg, coef_cand
        f_cur = f_cand_total
        if f_cur < f_best:
            f_best = f_cur
            point_best = point.copy()
        if gap <= tol:
            break
        step = min(step * 2.0, 1e6)

    converged = gap <= tol
    if linear:
        return ComparatorResult(w=point_best, alphas=None,
                                w_star_value=float(point_best[0]),
                                min_cumulative_loss=f_best, gap=gap,
                                converged=converged, iterations=iterations)
    return ComparatorResult(w=None, alphas=point_best, w_star_value=None,
                            min_cumulative_loss=f_best, gap=gap,
                            converged=converged, iterations=iterations)

"""Noise models, instance streams, and the matched-distribution pair.

Environments are immutable blueprints that mint one noisy-copy oracle
per round.  Each oracle owns the RNG substream it was given, and the
instance draw (when the instance law is random) consumes from that same
substream before any query does.  That discipline is what makes the
single-query coupling below exact: the noisy-constant environment and
the noiseless two-point environment consume the identical first variate
of each round's substream through the same threshold mapping, so their
single-query observations agree bitwise while their ground truths
differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (HorizonExceededError, InvalidParameterError,
                     QueryBudgetExceededError)
from .features import NoisyInstanceOracle
from .learner import batch_comparator
from .losses import AnalyticLoss, squared_loss
from .kernels import linear_kernel


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------


class NoNoise:
    """Queries return the instance exactly; consumes no randomness."""

    kind = "none"

    def draw(self, rng, dim: int) -> np.ndarray:
        return np.zeros(dim)

    def second_moment_bound(self, dim: int) -> float:
        return 0.0

    @property
    def config(self) -> dict:
        return {"kind": "none"}


@dataclass(frozen=True)
class GaussianNoise:
    """Independent zero-mean normal coordinates of the given variance."""

    variance: float
    kind = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance >= 0.0):
            raise InvalidParameterError(f"variance must be >= 0, got {self.variance!r}")

    def draw(self, rng, dim: int) -> np.ndarray:
        return rng.normal(0.0, math.sqrt(self.variance), size=dim)

    def second_moment_bound(self, dim: int) -> float:
        return dim * self.variance

    @property
    def config(self) -> dict:
        return {"kind": "gaussian", "variance": self.variance}


@dataclass(frozen=True)
class UniformNoise:
    """Independent coordinates uniform on [-radius, radius]."""

    radius: float
    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius >= 0.0):
            raise InvalidParameterError(f"radius must be >= 0, got {self.radius!r}")

    def draw(self, rng, dim: int) -> np.ndarray:
        return rng.uniform(-self.radius, self.radius, size=dim)

    def second_moment_bound(self, dim: int) -> float:
        return dim * self.radius**2 / 3.0

    @property
    def config(self) -> dict:
        return {"kind": "uniform", "radius": self.radius}


@dataclass(frozen=True)
class DiscreteNoise:
    """Zero-mean noise supported on finitely many vectors.

    One uniform variate is consumed per draw and mapped through the
    cumulative probabilities in support order (the property the
    environment coupling depends on).
    """

    support: tuple
    probs: tuple
    kind = "discrete"

    def __post_init__(self):
        vecs = tuple(np.asarray(v, dtype=float) for v in self.support)
        object.__setattr__(self, "support", vecs)
        probs = tuple(float(q) for q in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(vecs) != len(probs) or not vecs:
            raise InvalidParameterError("support and probs must align and be nonempty")
        if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise InvalidParameterError("probs must be nonnegative and sum to 1")
        mean = sum(q * v for q, v in zip(probs, vecs))
        if float(np.max(np.abs(mean))) > 1e-12:
            raise InvalidParameterError(f"noise mean must be zero, got {mean}")

    def draw(self, rng, dim: int) -> np.ndarray:
        return self.support[_pick_bucket(rng, self.probs)].copy()

    def second_moment_bound(self, dim: int) -> float:
        return float(sum(q * np.dot(v, v) for q, v in zip(self.probs, self.support)))

    @property
    def config(self) -> dict:
        return {"kind": "discrete",
                "support": [list(map(float, v)) for v in self.support],
                "probs": list(self.probs)}


@dataclass(frozen=True)
class ScheduleNoise:
    """Round-dependent noise: model for round t is models[t % len]."""

    models: tuple
    kind = "schedule"

    def __post_init__(self):
        if not self.models:
            raise InvalidParameterError("schedule needs at least one model")
        object.__setattr__(self, "models", tuple(self.models))

    def for_round(self, t: int):
        return self.models[t % len(self.models)]

    def second_moment_bound(self, dim: int) -> float:
        return max(m.second_moment_bound(dim) for m in self.models)

    @property
    def config(self) -> dict:
        return {"kind": "schedule", "models": [m.config for m in self.models]}


def _pick_bucket(rng, probs) -> int:
    u = rng.random()
    acc = 0.0
    for i, q in enumerate(probs):
        acc += q
        if u < acc:
            return i
    return len(probs) - 1


def noise_from_config(config: dict):
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind == "none":
        return NoNoise()
    if kind == "gaussian":
        return GaussianNoise(float(cfg.pop("variance")))
    if kind == "uniform":
        return UniformNoise(float(cfg.pop("radius")))
    if kind == "discrete":
        return DiscreteNoise(tuple(cfg.pop("support")), tuple(cfg.pop("probs")))
    if kind == "schedule":
        return ScheduleNoise(tuple(noise_from_config(m) for m in cfg.pop("models")))
    raise InvalidParameterError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# Instance and label rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantInstances:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))

    def draw(self, t: int, rng) -> np.ndarray:
        return self.x.copy()

    def norm_sq_bound(self) -> float:
        return float(np.dot(self.x, self.x))

    @property
    def config(self) -> dict:
        return {"kind": "constant", "x": list(map(float, self.x))}


@dataclass(frozen=True)
class SequenceInstances:
    xs: tuple

    def __post_init__(self):
        object.__setattr__(self, "xs",
                           tuple(np.asarray(x, dtype=float) for x in self.xs))

    def draw(self, t: int, rng) -> np.ndarray:
        if t >= len(self.xs):
            raise HorizonExceededError(
                f"round {t} beyond fixed sequence of length {len(self.xs)}")
        return self.xs[t].copy()

    def norm_sq_bound(self) -> float:
        return max(float(np.dot(x, x)) for x in self.xs)

    @property
    def config(self) -> dict:
        return {"kind": "sequence", "xs": [list(map(float, x)) for x in self.xs]}


@dataclass(frozen=True)
class DiscreteInstances:
    """I.i.d. instances from a finite support; one variate per round."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        vecs = tuple(np.asarray(v, dtype=float) for v in self.support)
        object.__setattr__(self, "support", vecs)
        probs = tuple(float(q) for q in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(vecs) != len(probs) or not vecs:
            raise InvalidParameterError("support and probs must align and be nonempty")
        if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise InvalidParameterError("probs must be nonnegative and sum to 1")

    def draw(self, t: int, rng) -> np.ndarray:
        return self.support[_pick_bucket(rng, self.probs)].copy()

    def norm_sq_bound(self) -> float:
        return max(float(np.dot(v, v)) for v in self.support)

    @property
    def config(self) -> dict:
        return {"kind": "iid_discrete",
                "support": [list(map(float, v)) for v in self.support],
                "probs": list(self.probs)}


def instances_from_config(config: dict):
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind == "constant":
        return ConstantInstances(np.asarray(cfg.pop("x"), dtype=float))
    if kind == "sequence":
        return SequenceInstances(tuple(cfg.pop("xs")))
    if kind == "iid_discrete":
        return DiscreteInstances(tuple(cfg.pop("support")), tuple(cfg.pop("probs")))
    raise InvalidParameterError(f"unknown instance kind {kind!r}")


@dataclass(frozen=True)
class ConstantLabels:
    value: float

    def label(self, x: np.ndarray, t: int) -> float:
        return self.value

    @property
    def config(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class LinearLabels:
    """Labels y = <weights, x> from a hidden target vector."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def label(self, x: np.ndarray, t: int) -> float:
        return float(np.dot(self.weights, x))

    @property
    def config(self) -> dict:
        return {"kind": "linear", "weights": list(map(float, self.weights))}


def labels_from_config(config: dict):
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind == "constant":
        return ConstantLabels(float(cfg.pop("value")))
    if kind == "linear":
        return LinearLabels(np.asarray(cfg.pop("weights"), dtype=float))
    raise InvalidParameterError(f"unknown label kind {kind!r}")


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """Blueprint for a stream of rounds: instances, labels, and noise."""

    dimension: int
    instances: object
    labels: object
    noise: object
    horizon: Optional[int] = None

    def noise_for_round(self, t: int):
        if isinstance(self.noise, ScheduleNoise):
            return self.noise.for_round(t)
        return self.noise

    def round(self, t: int, rng: np.random.Generator
              ) -> tuple[NoisyInstanceOracle, float]:
        """Mint the oracle and label of round ``t`` (0-based).

        The instance draw consumes from ``rng`` first; every subsequent
        query draws its noise from the same stream.
        """
        if self.horizon is not None and t >= self.horizon:
            raise HorizonExceededError(f"round {t} beyond horizon {self.horizon}")
        x_t = self.instances.draw(t, rng)
        if x_t.size != self.dimension:
            raise InvalidParameterError(
                f"instance law produced dimension {x_t.size}, expected {self.dimension}")
        noise = self.noise_for_round(t)
        oracle = NoisyInstanceOracle(
            x_t, noise=None if isinstance(noise, NoNoise) else noise, rng=rng)
        return oracle, self.labels.label(x_t, t)

    def noise_second_moment_bound(self) -> float:
        return self.noise.second_moment_bound(self.dimension)

    def noisy_norm_sq_bound(self) -> float:
        """Declared bound on E[||noisy copy||^2]."""
        return self.instances.norm_sq_bound() + self.noise_second_moment_bound()

    @property
    def config(self) -> dict:
        cfg = {"dimension": self.dimension,
               "instances": self.instances.config,
               "labels": self.labels.config,
               "noise": self.noise.config}
        if self.horizon is not None:
            cfg["horizon"] = self.horizon
        return cfg


def environment_from_config(config: dict) -> Environment:
    cfg = dict(config)
    return Environment(
        dimension=int(cfg["dimension"]),
        instances=instances_from_config(cfg["instances"]),
        labels=labels_from_config(cfg["labels"]),
        noise=noise_from_config(cfg.get("noise", {"kind": "none"})),
        horizon=cfg.get("horizon"))


def make_oracle(env: Environment, t: int,
                rng: np.random.Generator) -> NoisyInstanceOracle:
    """Oracle of round ``t``; see Environment.round for the label too."""
    oracle, _ = env.round(t, rng)
    return oracle


def true_loss_hook(loss: AnalyticLoss):
    """Evaluation hook computing the loss on the hidden true example.

    This is the sealed path to ground truth: it reads the oracle's
    hidden instance, which learner code never does.
    """
    from .learner import predict  # local import avoids a cycle at load time

    def hook(hyp, oracle, y):
        x_true = oracle.reveal_true_instance()
        return loss.round_loss(predict(hyp, x_true), y)
    return hook


# ---------------------------------------------------------------------------
# Budget-limited oracles
# ---------------------------------------------------------------------------


class BudgetedOracle:
    """Wrapper that hard-fails when a query budget is exceeded."""

    def __init__(self, oracle: NoisyInstanceOracle, max_calls: int):
        self._oracle = oracle
        self._max = max_calls

    @property
    def dimension(self) -> int:
        return self._oracle.dimension

    @property
    def calls_made(self) -> int:
        return self._oracle.calls_made

    def query(self) -> np.ndarray:
        if self._oracle.calls_made >= self._max:
            raise QueryBudgetExceededError(
                f"oracle budget of {self._max} call(s) per round exhausted")
        return self._oracle.query()

    def reveal_true_instance(self) -> np.ndarray:
        return self._oracle.reveal_true_instance()


# ---------------------------------------------------------------------------
# The matched-distribution pair
# ---------------------------------------------------------------------------


def impossibility_pair(dimension: int = 1) -> tuple[Environment, Environment]:
    """Two environments indistinguishable through one query per round.

    Environment A: the instance is always e1, labels are 1, and the
    noise is +2*e1 or -2*e1 with equal probability, so a single query
    shows 3*e1 or -e1.  Environment B: the instance itself is 3*e1 or
    -e1 with equal probability, labels are 1, and there is no noise.
    Under one query per round both produce the same observation law; run
    with shared per-round substreams the observations coincide bitwise.
    """
    if dimension < 1:
        raise InvalidParameterError("dimension must be >= 1")
    e1 = np.zeros(dimension)
    e1[0] = 1.0
    env_a = Environment(
        dimension=dimension,
        instances=ConstantInstances(e1),
        labels=ConstantLabels(1.0),
        noise=DiscreteNoise((2.0 * e1, -2.0 * e1), (0.5, 0.5)))
    env_b = Environment(
        dimension=dimension,
        instances=DiscreteInstances((3.0 * e1, -1.0 * e1), (0.5, 0.5)),
        labels=ConstantLabels(1.0),
        noise=NoNoise())
    return env_a, env_b


@dataclass
class ImpossibilityOutcome:
    avg_regret_a: float
    avg_regret_b: float
    observations_a: np.ndarray
    observations_b: np.ndarray
    comparator_a: float
    comparator_b: float


def _round_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, t)))


def impossibility_experiment(learner_step, t_rounds: int, seed: int = 0,
                             b_w: float = 25.0, queries_allowed: int = 1,
                             loss: Optional[AnalyticLoss] = None,
                             dimension: int = 1) -> ImpossibilityOutcome:
    """Run one learner through both coupled environments and score it.

    The same per-round RNG substreams drive both environments, so under
    the single-query budget the observation sequences are bitwise equal.
    Average regret in each environment is measured against that
    environment's in-hindsight comparator on the true examples.
    """
    if loss is None:
        loss = squared_loss()
    env_a, env_b = impossibility_pair(dimension)
    kernel = linear_kernel()
    results = {}
    for tag, env in (("a", env_a), ("b", env_b)):
        w = np.zeros(dimension)
        observations = np.empty((t_rounds, queries_allowed))
        truth_examples = []
        cumulative = 0.0
        for t in range(t_rounds):
            oracle, y = env.round(t, _round_rng(seed, t))
            x_true = oracle.reveal_true_instance()
            truth_examples.append((x_true, y))
            cumulative += loss.round_loss(float(np.dot(w, x_true)), y)
            wrapped = _RecordingBudgetedOracle(oracle, queries_allowed)
            w = np.asarray(learner_step(w, wrapped, y, t), dtype=float)
            seen = wrapped.seen
            observations[t, :len(seen)] = [v[0] for v in seen]
            observations[t, len(seen):] = math.nan
        comparator = batch_comparator(truth_examples, loss, kernel, b_w)
        results[tag] = (observations,
                        (cumulative - comparator.min_cumulative_loss) / t_rounds,
                        comparator.min_cumulative_loss)
    return ImpossibilityOutcome(
        avg_regret_a=results["a"][1], avg_regret_b=results["b"][1],
        observations_a=results["a"][0], observations_b=results["b"][0],
        comparator_a=results["a"][2], comparator_b=results["b"][2])


class _RecordingBudgetedOracle(BudgetedOracle):
    """Budgeted oracle that also records what the learner saw."""

    def __init__(self, oracle, max_calls):
        super().__init__(oracle, max_calls)
        self.seen: list[np.ndarray] = []

    def query(self) -> np.ndarray:
        out = super().query()
        self.seen.append(out.copy())
        return out


# Reference learners for the demonstration.


def naive_single_query_ogd(eta_schedule: Callable[[int], float], b_w: float):
    """Treats its one noisy copy as the truth and runs plain descent."""

    def step(w, oracle, y, t):
        x_obs = oracle.query()
        g = 2.0 * (float(np.dot(w, x_obs)) - y) * x_obs
        w_next = w - eta_schedule(t) * g
        n = float(np.dot(w_next, w_next))
        if n > b_w:
            w_next *= math.sqrt(b_w / n)
        return w_next
    return step


def two_copy_ogd(eta_schedule: Callable[[int], float], b_w: float):
    """Uses two fresh copies for an unbiased squared-loss gradient."""
    from .learner import two_copy_linear_squared

    def step(w, oracle, y, t):
        return two_copy_linear_squared(oracle, y, w, eta_schedule(t), b_w)
    return step

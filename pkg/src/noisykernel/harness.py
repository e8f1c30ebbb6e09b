"""Seeded experiment execution with CSV/JSON emission.

An experiment specification fully determines every random stream: the
environment substream of repetition r, round t is seeded by
(seed, r, 1, t) and the learner substream by (seed, r, 2), so re-running
the same specification reproduces every output byte.  Each repetition
runs the online learner against a fresh environment stream, scores the
realized rounds against the in-hindsight comparator, and writes one CSV
of per-round logs; a JSON summary aggregates across repetitions.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environments import Environment, environment_from_config, true_loss_hook
from .errors import ConfigError, InvalidParameterError
from .kernels import kernel_from_config
from .learner import LearnerConfig, RoundLog, batch_comparator, run_online
from .losses import loss_from_config
from .stats import mean_stderr

_TAG_ENV = 1
_TAG_LEARNER = 2

DIAGNOSTICS = ("regret", "queries", "norms", "estimator_moments")


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment."""

    environment: dict
    learner: dict
    repetitions: int = 1
    seed: int = 0
    outputs: Optional[str] = None
    diagnostics: tuple = DIAGNOSTICS

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentSpec":
        try:
            spec = cls(environment=dict(payload["environment"]),
                       learner=dict(payload["learner"]),
                       repetitions=int(payload.get("repetitions", 1)),
                       seed=int(payload.get("seed", 0)),
                       outputs=payload.get("outputs"),
                       diagnostics=tuple(payload.get("diagnostics", DIAGNOSTICS)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed experiment spec: {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec {path}: {exc}") from exc
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return {"environment": self.environment, "learner": self.learner,
                "repetitions": self.repetitions, "seed": self.seed,
                "outputs": self.outputs, "diagnostics": list(self.diagnostics)}

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        unknown = set(self.diagnostics) - set(DIAGNOSTICS)
        if unknown:
            raise ConfigError(f"unknown diagnostics {sorted(unknown)}")
        try:
            self.build_environment()
            self.build_learner_config()
        except (InvalidParameterError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid spec: {exc}") from exc

    def build_environment(self) -> Environment:
        return environment_from_config(self.environment)

    def build_learner_config(self) -> LearnerConfig:
        cfg = dict(self.learner)
        loss = loss_from_config(cfg.pop("loss"))
        kernel = kernel_from_config(cfg.pop("kernel"))
        rounds = int(cfg.pop("T"))
        b_x_tilde = cfg.pop("b_x_tilde", None)
        if b_x_tilde is None:
            b_x_tilde = self.build_environment().noisy_norm_sq_bound()
        fixed = cfg.pop("fixed_index_law", None)
        config = LearnerConfig(
            loss=loss, kernel=kernel, rounds=rounds,
            p=float(cfg.pop("p", 2.0)),
            b_w=float(cfg.pop("b_w", 1.0)),
            b_x_tilde=float(b_x_tilde),
            eta=cfg.pop("eta", None),
            eta_mode=cfg.pop("eta_mode", "theorem"),
            shortcut_zero_beta=bool(cfg.pop("shortcut_zero_beta", False)),
            fixed_index_law=None if fixed is None else int(fixed))
        if cfg:
            raise ConfigError(f"unknown learner fields {sorted(cfg)}")
        config.validate()
        return config


@dataclass
class RunResult:
    """Outcome of one repetition."""

    repetition: int
    logs: list
    cumulative_regret: float
    comparator_loss: float
    comparator_gap: float
    query_mean: float
    total_oracle_calls: int
    env_oracle_calls: int
    final_norm_sq: float
    mean_feature_norm_sq: float


def _env_round_rng(seed: int, rep: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, rep, _TAG_ENV, t)))


def _learner_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, rep, _TAG_LEARNER)))


def run_repetition(spec: ExperimentSpec, rep: int) -> RunResult:
    env = spec.build_environment()
    config = spec.build_learner_config()
    oracles = []
    stream = []
    truths = []
    for t in range(config.rounds):
        oracle, y = env.round(t, _env_round_rng(spec.seed, rep, t))
        oracles.append(oracle)
        stream.append((oracle, y))
        truths.append((oracle.reveal_true_instance(), y))
    hook = true_loss_hook(config.loss)
    hyp, logs = run_online(stream, config, _learner_rng(spec.seed, rep),
                           eval_hook=hook)
    comparator = batch_comparator(truths, config.loss, config.kernel, config.b_w)
    cumulative_true = math.fsum(log.loss_true for log in logs)
    total_calls = sum(log.oracle_calls for log in logs)
    mean_feat = _mean_feature_norm(hyp)
    return RunResult(
        repetition=rep, logs=logs,
        cumulative_regret=cumulative_true - comparator.min_cumulative_loss,
        comparator_loss=comparator.min_cumulative_loss,
        comparator_gap=comparator.gap,
        query_mean=total_calls / config.rounds,
        total_oracle_calls=total_calls,
        env_oracle_calls=sum(o.calls_made for o in oracles),
        final_norm_sq=hyp.squared_norm,
        mean_feature_norm_sq=mean_feat)


def _mean_feature_norm(hyp) -> float:
    if not hyp.terms:
        return 0.0
    return math.fsum(term.squared_norm() for _, term, _ in hyp.terms) / len(hyp.terms)


def format_float(x: float) -> str:
    """Shortest decimal representation that round-trips."""
    return repr(float(x))


def write_round_csv(path: str, logs: list):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,loss_true,oracle_calls,alpha_t,norm_sq\n")
        for log in logs:
            fh.write(f"{log.t},{format_float(log.loss_true)},{log.oracle_calls},"
                     f"{format_float(log.alpha_t)},{format_float(log.norm_sq)}\n")


def read_round_csv(path: str) -> list:
    logs = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,loss_true,oracle_calls,alpha_t,norm_sq":
            raise ConfigError(f"unexpected CSV header in {path}: {header!r}")
        for line in fh:
            t, loss_true, calls, alpha, norm = line.strip().split(",")
            logs.append(RoundLog(t=int(t), loss_true=float(loss_true),
                                 oracle_calls=int(calls), alpha_t=float(alpha),
                                 norm_sq=float(norm)))
    return logs


def summarize(spec: ExperimentSpec, results: list) -> dict:
    def agg(values):
        values = list(values)
        if len(values) == 1:
            return {"mean": values[0], "stderr": 0.0}
        mean, err = mean_stderr(values)
        return {"mean": mean, "stderr": err}

    # The output directory is a destination, not an experiment parameter;
    # leaving it out keeps payloads identical wherever they are written.
    spec_echo = {k: v for k, v in spec.to_dict().items() if k != "outputs"}
    summary = {"spec": spec_echo, "repetitions": len(results)}
    if "regret" in spec.diagnostics:
        summary["cumulative_regret"] = agg(r.cumulative_regret for r in results)
        summary["comparator_loss"] = agg(r.comparator_loss for r in results)
        summary["comparator_gap_max"] = max(r.comparator_gap for r in results)
    if "queries" in spec.diagnostics:
        summary["query_mean"] = agg(r.query_mean for r in results)
        summary["oracle_calls_total"] = sum(r.total_oracle_calls for r in results)
    if "norms" in spec.diagnostics:
        summary["final_norm_sq"] = agg(r.final_norm_sq for r in results)
    if "estimator_moments" in spec.diagnostics:
        summary["stored_feature_norm_sq"] = agg(
            r.mean_feature_norm_sq for r in results)
    return summary


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> dict:
    """Execute all repetitions, write outputs, and return the summary.

    Outputs (when ``spec.outputs`` is set): one ``run_NNN.csv`` per
    repetition plus ``summary.json``.  Aggregation is ordered by
    repetition index regardless of completion order.  On error the
    partially written files of this invocation are removed.
    """
    spec.validate()
    written: list[str] = []
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda r: run_repetition(spec, r),
                                        range(spec.repetitions)))
        else:
            results = [run_repetition(spec, r) for r in range(spec.repetitions)]
        summary = summarize(spec, results)
        if spec.outputs:
            os.makedirs(spec.outputs, exist_ok=True)
            for res in results:
                path = os.path.join(spec.outputs, f"run_{res.repetition:03d}.csv")
                write_round_csv(path, res.logs)
                written.append(path)
            spath = os.path.join(spec.outputs, "summary.json")
            with open(spath, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(summary, fh, sort_keys=True, indent=2)
                fh.write("\n")
            written.append(spath)
        return summary
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise

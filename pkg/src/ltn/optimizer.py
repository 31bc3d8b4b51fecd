"""Full-batch RMSProp over the learnable part of a grounding."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

from . import tensor as T
from .grounding import GroundingEnv
from .satisfiability import DEFAULT_LAMBDA, GroundedTheory, forward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    learning_rate: float = 0.01
    decay: float = 0.9
    epsilon: float = 1e-8
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    log_every: int = 100
    restarts: int = 1

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.log_every < 1 or self.restarts < 1:
            raise ValueError("log_every and restarts must be >= 1")


@dataclass
class TrainTrace:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    mean_truths: list[float] = field(default_factory=list)
    restart: int = 0
    best_loss: float = float("inf")
    best_step: int = 0

    def log(self, step: int, loss: float, mean_truth: float) -> None:
        self.steps.append(step)
        self.losses.append(loss)
        self.mean_truths.append(mean_truth)


Params = Mapping[Hashable, np.ndarray]


def rmsprop_step(params: Params, grads: Params, state: Params, config: TrainConfig):
    """One RMSProp update; returns ``(new_params, new_state)`` without mutating inputs.

    ``state`` holds the running average of squared gradients; missing
    entries start at zero.
    """
    new_params, new_state = {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {key!r} {p.shape}")
        cache = state.get(key)
        if cache is None:
            cache = np.zeros_like(p)
        cache = config.decay * cache + (1.0 - config.decay) * g * g
        new_state[key] = cache
        new_params[key] = p - config.learning_rate * g / np.sqrt(cache + config.epsilon)
    return new_params, new_state


def _evaluate(theory: GroundedTheory, lam: float):
    tape = T.Tape()
    try:
        fw = forward(theory, lam, tape)
    except T.NonFiniteError:
        raise TrainingError(_diagnose(theory)) from None
    loss = fw.total.item()
    if not np.isfinite(loss):
        raise TrainingError(_diagnose(theory))
    mean_truth = float(np.mean(fw.degrees.data)) if fw.degrees.data.size else 1.0
    return tape, fw, loss, mean_truth


def _diagnose(theory: GroundedTheory) -> str:
    for e in theory.entries:
        sub = GroundedTheory([e], theory.env, theory.depth)
        try:
            value = forward(sub, 0.0).total.item()
        except T.NonFiniteError:
            return f"non-finite loss in clause {e.label!r}"
        if not np.isfinite(value):
            return f"non-finite loss in clause {e.label!r}"
    return "non-finite loss in the regularizer"


def _train_once(theory: GroundedTheory, config: TrainConfig, restart: int) -> tuple[GroundingEnv, TrainTrace]:
    trace = TrainTrace(restart=restart)
    env = theory.env
    params = env.parameters()
    state: dict = {}
    best_env, best_loss, best_step = env, float("inf"), 0
    for step in range(config.steps + 1):
        current = theory.with_env(env)
        tape, fw, loss, mean_truth = _evaluate(current, config.lam)
        if loss < best_loss:
            best_env, best_loss, best_step = env, loss, step
        if step % config.log_every == 0 or step == config.steps:
            trace.log(step, loss, mean_truth)
            log.debug("restart %d step %d loss %.6f mean truth %.4f", restart, step, loss, mean_truth)
        if step == config.steps:
            break
        grads = T.gradients(tape, fw.total)
        params, state = rmsprop_step(params, grads, state, config)
        env = env.with_parameters(params)
    trace.best_loss, trace.best_step = best_loss, best_step
    return best_env, trace


def restart_seed(seed: int, restart: int) -> int:
    """Seed for restart ``restart`` (restart 0 keeps the theory's own initialization)."""
    return int(np.random.SeedSequence([seed, restart]).generate_state(1)[0])


def train(theory: GroundedTheory, config: TrainConfig = TrainConfig(),
          threads: int | None = None) -> tuple[GroundingEnv, TrainTrace]:
    """Minimize the total loss; returns the best snapshot and its run's trace.

    With ``restarts > 1`` the extra runs start from fresh initializations and
    the lowest best-loss wins (ties go to the earlier restart).  ``threads``
    defaults to the ``LTN_THREADS`` environment variable, else 1.
    """
    theory.plan  # compile once; restarts share it
    starts = [theory] + [theory.reinitialized(restart_seed(config.seed, r)) for r in range(1, config.restarts)]
    if threads is None:
        threads = int(os.environ.get("LTN_THREADS", "1") or 1)
    threads = max(1, min(threads, len(starts)))
    if threads == 1:
        results = [_train_once(t, config, r) for r, t in enumerate(starts)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda rt: _train_once(rt[1], config, rt[0]), enumerate(starts)))
    best = min(range(len(results)), key=lambda r: (results[r][1].best_loss, r))
    return results[best]

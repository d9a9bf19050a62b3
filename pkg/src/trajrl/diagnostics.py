"""Computable pieces of the trajectory-consistency risk bound.

The monitored quantity decomposes into a trajectory-mismatch term and a
pseudo-label term:

    rtc = alpha * mean_divergence + label_diameter * (1 - mean_confidence + hoeffding)

with ``hoeffding = sqrt(ln(2 n / delta) / (2 G))``.  All four ingredients are
observable during a run, so the bound can be tracked without ever touching
hidden answers; ``empirical_risk`` (greedy 0-1 error) is the evaluation-side
counterpart used to sanity-check it in experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Question, RolloutGroup
from .grpo import PolicyParams, step_probs
from .rewards import majority_vote
from .trajectory import tcs

__all__ = [
    "BoundConfig",
    "BoundReport",
    "trajectory_divergence",
    "mean_voting_confidence",
    "hoeffding_term",
    "tc_risk",
    "empirical_risk",
    "make_bound_report",
]


@dataclass(frozen=True)
class BoundConfig:
    """Free constants of the bound: mismatch weight, label-space diameter, confidence level."""

    alpha: float = 1.0
    label_diameter: float = 1.0
    delta: float = 0.05

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.label_diameter < 0.0:
            raise ValueError("alpha and label_diameter must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class BoundReport:
    """One epoch's bound ingredients and the assembled risk value."""

    epoch: int
    empirical_risk_labeled: float | None
    mean_divergence: float
    mean_confidence: float
    hoeffding_term: float
    rtc: float
    n: int
    G: int


def trajectory_divergence(trajectory: np.ndarray, reference: np.ndarray) -> float:
    """``1 - tcs``: zero for perfectly matched trajectories, one for orthogonal ones."""
    return 1.0 - tcs(trajectory, reference)


def mean_voting_confidence(groups: Iterable[RolloutGroup]) -> float:
    """Average majority-vote confidence across rollout groups."""
    confs = [majority_vote(g.answers)[1] for g in groups]
    if not confs:
        raise ValueError("mean confidence needs at least one group")
    return float(np.mean(confs))


def hoeffding_term(n: int, group_size: int, delta: float) -> float:
    """Finite-sample pseudo-label slack ``sqrt(ln(2 n / delta) / (2 G))``."""
    if n < 1 or group_size < 1:
        raise ValueError("n and group_size must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(math.log(2.0 * n / delta) / (2.0 * group_size))


def tc_risk(
    config: BoundConfig,
    mean_divergence: float,
    mean_confidence: float,
    n: int,
    group_size: int,
) -> float:
    """Assemble the monitored risk value from its observable ingredients."""
    if not 0.0 <= mean_divergence <= 1.0:
        raise ValueError("mean divergence must lie in [0, 1]")
    if not 0.0 <= mean_confidence <= 1.0:
        raise ValueError("mean confidence must lie in [0, 1]")
    slack = hoeffding_term(n, group_size, config.delta)
    return config.alpha * mean_divergence + config.label_diameter * (1.0 - mean_confidence + slack)


def empirical_risk(
    params: PolicyParams,
    questions: Sequence[Question],
    answers: Mapping[int, int],
    response_length: int,
) -> float:
    """Mean 0-1 error of the greedy answer over ``questions``.

    ``answers`` supplies the truth (gold for labeled questions, the hidden
    evaluation map otherwise), which keeps this function firmly on the
    evaluation side of the fence.
    """
    if not questions:
        raise ValueError("empirical risk needs at least one question")
    wrong = 0
    for q in questions:
        probs = step_probs(params, q.features, response_length)
        if int(np.argmax(probs[-1])) != answers[q.question_id]:
            wrong += 1
    return wrong / len(questions)


def make_bound_report(
    config: BoundConfig,
    epoch: int,
    divergences: Sequence[float],
    groups: Iterable[RolloutGroup],
    n: int,
    group_size: int,
    empirical_risk_labeled: float | None = None,
) -> BoundReport:
    """Bundle one epoch's ingredients into a consistent report."""
    mean_div = float(np.mean(np.asarray(divergences))) if len(divergences) else 0.0
    mean_conf = mean_voting_confidence(groups)
    slack = hoeffding_term(n, group_size, config.delta)
    return BoundReport(
        epoch=epoch,
        empirical_risk_labeled=empirical_risk_labeled,
        mean_divergence=mean_div,
        mean_confidence=mean_conf,
        hoeffding_term=slack,
        rtc=tc_risk(config, mean_div, mean_conf, n, group_size),
        n=n,
        G=group_size,
    )

"""Pass-rate trajectories, the reliable database, and cosine-matched selection.

Each question accumulates one pass rate per epoch: labeled questions score
against their gold answer, unlabeled ones against that epoch's majority
pseudo-label.  A database of "reliable" members (all labeled questions plus
whatever unlabeled questions have been admitted) defines a reference
trajectory; unlabeled questions are admitted when the cosine between their
trajectory and the reference clears a threshold, or when they rank in the
top fraction by that score.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import RolloutGroup

__all__ = [
    "pass_rate",
    "append",
    "TrajectoryStore",
    "ReliableDatabase",
    "SelectionMask",
    "tcs",
    "tcs_max",
    "reliable_average",
    "select",
    "update_db",
    "write_trajectories_csv",
]

# Absolute slack when turning top_p * n into a count, so that binary float
# artifacts like 0.07 * 100 = 7.000000000000001 do not admit an extra id.
_CEIL_SLACK = 1e-12


def pass_rate(group: RolloutGroup, target: int) -> float:
    """Fraction of the group's answers that equal ``target``."""
    if target < 0 or target >= group.num_tokens:
        raise ValueError("target token out of range")
    return float(np.mean(group.answers == target))


def append(trajectory: Sequence[float], rate: float) -> tuple[float, ...]:
    """Extend a trajectory with one more per-epoch pass rate."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"pass rate must lie in [0, 1], got {rate}")
    return tuple(trajectory) + (rate,)


class TrajectoryStore:
    """Mutable map from question id to its pass-rate history."""

    def __init__(self, question_ids: Iterable[int]) -> None:
        self._data: dict[int, tuple[float, ...]] = {int(q): () for q in question_ids}
        if not self._data:
            raise ValueError("a trajectory store needs at least one question")

    @property
    def question_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self._data))

    def length(self, question_id: int) -> int:
        return len(self._data[question_id])

    def record(self, question_id: int, rate: float) -> None:
        self._data[question_id] = append(self._data[question_id], rate)

    def get(self, question_id: int) -> np.ndarray:
        return np.asarray(self._data[question_id])

    def as_matrix(self, question_ids: Sequence[int], length: int) -> np.ndarray:
        """Stack the first ``length`` entries of each trajectory.

        Longer histories are truncated (useful when replaying logs), shorter
        ones are an error.
        """
        rows = []
        for qid in question_ids:
            traj = self._data[qid]
            if len(traj) < length:
                raise ValueError(
                    f"question {qid} has a trajectory of length {len(traj)}, expected {length}"
                )
            rows.append(traj[:length])
        return np.asarray(rows)


@dataclass
class ReliableDatabase:
    """Membership (by question id) in the reliable set, with admission epochs.

    Labeled questions are permanent members from epoch 0.  Unlabeled members
    come and go according to the update policy: ``additive`` keeps every id
    ever selected, ``recompute`` rebuilds membership from the latest mask.
    """

    labeled_ids: frozenset[int]
    member_ids: set[int] = field(default_factory=set)
    admission_epoch: dict[int, int] = field(default_factory=dict)

    @classmethod
    def initial(cls, labeled_ids: Iterable[int]) -> "ReliableDatabase":
        ids = frozenset(int(q) for q in labeled_ids)
        if not ids:
            raise ValueError("the reliable database needs at least one labeled question")
        return cls(ids, set(ids), {q: 0 for q in ids})

    @property
    def sorted_members(self) -> tuple[int, ...]:
        return tuple(sorted(self.member_ids))

    def __contains__(self, question_id: int) -> bool:
        return question_id in self.member_ids


@dataclass(frozen=True)
class SelectionMask:
    """Selected unlabeled ids for one epoch, plus the scores behind the choice."""

    epoch: int
    selected: frozenset[int]
    tcs_scores: Mapping[int, float]

    def __post_init__(self) -> None:
        unknown = self.selected - set(self.tcs_scores)
        if unknown:
            raise ValueError(f"selected ids without scores: {sorted(unknown)}")


def tcs(trajectory: np.ndarray, reference: np.ndarray) -> float:
    """Cosine similarity between two pass-rate trajectories.

    Both inputs must have the same length; an all-zero vector on either side
    scores 0.  For nonnegative trajectories the result lies in [0, 1], and
    a trajectory always scores exactly 1 against itself.
    """
    a = np.asarray(trajectory, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("trajectories must be 1-D and of equal length")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    if np.array_equal(a, b):
        return 1.0
    return float(min(np.dot(a, b) / (na * nb), 1.0))


def reliable_average(
    db: ReliableDatabase, store: TrajectoryStore, length: int
) -> np.ndarray:
    """Elementwise mean trajectory over current database members."""
    members = db.sorted_members
    if not members:
        raise ValueError("the reliable database is empty")
    return store.as_matrix(members, length).mean(axis=0)


def tcs_max(
    trajectory: np.ndarray, db: ReliableDatabase, store: TrajectoryStore, length: int
) -> float:
    """Best cosine match against any single database member's trajectory."""
    members = db.sorted_members
    if not members:
        raise ValueError("the reliable database is empty")
    t = np.asarray(trajectory, dtype=float)
    return max(tcs(t, store.get(m)[:length]) for m in members)


def _top_count(top_p: float, n: int) -> int:
    if top_p <= 0.0 or n == 0:
        return 0
    count = math.ceil(top_p * n - _CEIL_SLACK)
    return min(max(count, 1), n)


def select(
    tcs_scores: Mapping[int, float], top_p: float, gamma: float, epoch: int = 0
) -> SelectionMask:
    """Union of the top-``ceil(top_p * n)`` scorers and everything at or above ``gamma``.

    Rank ties are broken toward the smaller question id, so the mask is a
    pure function of the score map.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if top_p > 1.0:
        raise ValueError("top_p must not exceed 1")
    ids = sorted(tcs_scores)
    count = _top_count(top_p, len(ids))
    ranked = sorted(ids, key=lambda q: (-tcs_scores[q], q))
    chosen = set(ranked[:count])
    chosen.update(q for q in ids if tcs_scores[q] >= gamma)
    return SelectionMask(epoch, frozenset(chosen), dict(tcs_scores))


def update_db(db: ReliableDatabase, mask: SelectionMask, policy: str) -> ReliableDatabase:
    """Fold a selection mask into the database under the given policy.

    ``additive`` is monotone (ids are only ever added); ``recompute`` keeps
    exactly the labeled ids plus the currently selected ones.
    """
    if policy == "additive":
        members = set(db.member_ids) | set(mask.selected)
    elif policy == "recompute":
        members = set(db.labeled_ids) | set(mask.selected)
    else:
        raise ValueError(f"unknown database policy {policy!r}")
    admission = {q: e for q, e in db.admission_epoch.items() if q in members}
    for q in sorted(members - set(admission)):
        admission[q] = mask.epoch
    return ReliableDatabase(db.labeled_ids, members, admission)


def write_trajectories_csv(
    store: TrajectoryStore, split_of: Mapping[int, str], path: str
) -> None:
    """Dump every (question, epoch) pass rate as csv rows ``qid,split,epoch,pass_rate``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["qid", "split", "epoch", "pass_rate"])
        for qid in store.question_ids:
            split = split_of[qid]
            for epoch, rate in enumerate(store.get(qid), start=1):
                writer.writerow([qid, split, epoch, f"{rate:.6f}"])

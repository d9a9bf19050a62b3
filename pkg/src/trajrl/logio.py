"""Line-oriented log formats: per-question pass rates and per-epoch metrics.

Both formats are JSON Lines with a fixed key order and floats rendered via
``%.9g``, so identical runs produce byte-identical files.  ``None`` maps to
JSON ``null``.  Readers raise :class:`LogParseError` with the offending line
number.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .trajectory import TrajectoryStore

__all__ = [
    "LogParseError",
    "PassRateRecord",
    "PASSRATE_FIELDS",
    "dumps_record",
    "write_passrates",
    "read_passrates",
    "write_metrics",
    "read_metrics",
    "store_from_passrates",
]

PASSRATE_FIELDS = (
    "epoch",
    "qid",
    "split",
    "pass_rate",
    "pseudo_label",
    "confidence",
    "tie",
    "selected",
    "tcs",
)

_SPLITS = ("labeled", "unlabeled")


class LogParseError(ValueError):
    """A log file line is malformed or semantically inconsistent."""


@dataclass(frozen=True)
class PassRateRecord:
    """One question's pass rate at one epoch, plus pseudo-label bookkeeping."""

    epoch: int
    qid: int
    split: str
    pass_rate: float
    pseudo_label: int | None = None
    confidence: float | None = None
    tie: bool = False
    selected: bool = False
    tcs: float | None = None


def _fmt_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"non-finite value {value!r} cannot be logged")
        return format(value, ".9g")
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"unsupported log value type {type(value).__name__}")


def dumps_record(fields: Mapping[str, object]) -> str:
    """Serialize one record with stable key order and float formatting."""
    parts = (f"{json.dumps(key)}: {_fmt_value(value)}" for key, value in fields.items())
    return "{" + ", ".join(parts) + "}"


def write_passrates(path, records: Iterable[PassRateRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fields = {name: getattr(rec, name) for name in PASSRATE_FIELDS}
            fh.write(dumps_record(fields) + "\n")


def _parse_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise LogParseError(f"line {lineno}: expected an object, got {type(obj).__name__}")
    return obj


def read_passrates(path) -> list[PassRateRecord]:
    records: list[PassRateRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = _parse_line(line, lineno)
            missing = [k for k in PASSRATE_FIELDS if k not in obj]
            if missing:
                raise LogParseError(f"line {lineno}: missing fields {missing}")
            extra = [k for k in obj if k not in PASSRATE_FIELDS]
            if extra:
                raise LogParseError(f"line {lineno}: unknown fields {extra}")
            for flag in ("tie", "selected"):
                if not isinstance(obj[flag], bool):
                    raise LogParseError(f"line {lineno}: {flag} must be true or false")
            try:
                rec = PassRateRecord(
                    epoch=int(obj["epoch"]),
                    qid=int(obj["qid"]),
                    split=str(obj["split"]),
                    pass_rate=float(obj["pass_rate"]),
                    pseudo_label=None if obj["pseudo_label"] is None else int(obj["pseudo_label"]),
                    confidence=None if obj["confidence"] is None else float(obj["confidence"]),
                    tie=obj["tie"],
                    selected=obj["selected"],
                    tcs=None if obj["tcs"] is None else float(obj["tcs"]),
                )
            except (TypeError, ValueError) as exc:
                raise LogParseError(f"line {lineno}: {exc}") from exc
            if rec.split not in _SPLITS:
                raise LogParseError(f"line {lineno}: split must be one of {_SPLITS}")
            if not 0.0 <= rec.pass_rate <= 1.0:
                raise LogParseError(f"line {lineno}: pass_rate {rec.pass_rate} outside [0, 1]")
            if rec.epoch < 1:
                raise LogParseError(f"line {lineno}: epoch must be >= 1")
            records.append(rec)
    return records


def write_metrics(path, metrics: Iterable) -> None:
    """Write dataclass metrics rows; keys follow field declaration order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in metrics:
            fields = dataclasses.asdict(row) if dataclasses.is_dataclass(row) else dict(row)
            fh.write(dumps_record(fields) + "\n")


def read_metrics(path) -> list[dict]:
    rows: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rows.append(_parse_line(line, lineno))
    return rows


def store_from_passrates(
    records: Iterable[PassRateRecord],
) -> tuple[TrajectoryStore, dict[int, str], int]:
    """Rebuild per-question trajectories from pass-rate records.

    Returns the store, a qid -> split map, and the common trajectory length.
    Every question must cover epochs ``1..T`` exactly once for the same
    ``T``; anything else raises :class:`LogParseError`.
    """
    by_qid: dict[int, dict[int, float]] = {}
    split_of: dict[int, str] = {}
    for rec in records:
        seen = split_of.get(rec.qid)
        if seen is not None and seen != rec.split:
            raise LogParseError(f"qid {rec.qid} appears with conflicting splits")
        split_of[rec.qid] = rec.split
        epochs = by_qid.setdefault(rec.qid, {})
        if rec.epoch in epochs:
            raise LogParseError(f"qid {rec.qid} has duplicate records for epoch {rec.epoch}")
        epochs[rec.epoch] = rec.pass_rate
    if not by_qid:
        raise LogParseError("no pass-rate records found")
    lengths = {max(epochs) for epochs in by_qid.values()}
    if len(lengths) != 1:
        raise LogParseError(f"questions cover different epoch ranges: {sorted(lengths)}")
    n_epochs = lengths.pop()
    store = TrajectoryStore(sorted(by_qid))
    for qid in sorted(by_qid):
        epochs = by_qid[qid]
        for epoch in range(1, n_epochs + 1):
            if epoch not in epochs:
                raise LogParseError(f"qid {qid} is missing epoch {epoch}")
            store.record(qid, epochs[epoch])
    return store, split_of, n_epochs

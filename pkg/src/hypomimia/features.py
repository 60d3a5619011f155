"""Grouped statistics over the 16-value intensity record.

The record is video-major, class-minor: value ``4*(j-1) + c`` (1-based) is
video ``j`` scored against class ``c``. Group ``j`` holds the four scores of
video ``j``; its highlight value is the score against its own class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InputError

GROUPS = 4
GROUP_SIZE = 4
STD_FLOOR = 1e-12
STAT_FIELDS = ("hv", "mean", "std", "zscore", "pd", "range", "dmin", "dmax")


class Diagnosis(IntEnum):
    HC = 0
    PD = 1

    @classmethod
    def parse(cls, value) -> "Diagnosis | None":
        if value is None or isinstance(value, Diagnosis):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise InputError(f"unknown diagnosis {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class IntensityRecord:
    values: np.ndarray
    subject_id: str = ""
    diagnosis: Diagnosis | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != GROUPS * GROUP_SIZE:
            raise InputError(f"an intensity record has 16 values, got {values.size}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InputError(f"intensity values must be finite and positive ({self.subject_id!r})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "diagnosis", Diagnosis.parse(self.diagnosis))

    def scaled(self, alpha: float) -> "IntensityRecord":
        return IntensityRecord(self.values * alpha, self.subject_id, self.diagnosis)


@dataclass(frozen=True)
class GroupStats:
    group_index: int
    hv: float
    mean: float
    std: float
    zscore: float
    pd: float
    range: float
    dmin: float
    dmax: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in STAT_FIELDS])


def group(record: IntensityRecord) -> np.ndarray:
    """(4, 4) array; row j-1 is group j."""
    return record.values.reshape(GROUPS, GROUP_SIZE).copy()


def group_stats(values: Sequence[float], j: int) -> GroupStats:
    """Highlight-centred statistics of one group (``j`` is 1-based).

    ``std`` is the population deviation. ``zscore`` is 0 when the group is
    constant (std below 1e-12).
    """
    if j not in (1, 2, 3, 4):
        raise InputError(f"group index must be 1..4, got {j}")
    g = np.asarray(values, dtype=np.float64)
    if g.shape != (GROUP_SIZE,):
        raise InputError(f"a group has 4 values, got shape {g.shape}")
    hv = float(g[j - 1])
    mean = float(g.sum()) / GROUP_SIZE
    std = math.sqrt(float(((g - mean) ** 2).sum()) / GROUP_SIZE)
    lo, hi = float(g.min()), float(g.max())
    return GroupStats(
        group_index=j,
        hv=hv,
        mean=mean,
        std=std,
        zscore=(hv - mean) / std if std >= STD_FLOOR else 0.0,
        pd=(hv - mean) / mean,
        range=hi - lo,
        dmin=hv - lo,
        dmax=hv - hi,
    )


def process_record(record: IntensityRecord) -> list[GroupStats]:
    return [group_stats(row, j) for j, row in enumerate(group(record), start=1)]


class SequenceMode:
    RAW = "raw"
    PROCESSED = "processed"

    dims = {RAW: GROUP_SIZE, PROCESSED: GROUP_SIZE + len(STAT_FIELDS)}

    @classmethod
    def dim(cls, mode: str) -> int:
        try:
            return cls.dims[mode]
        except KeyError:
            raise InputError(f"mode must be 'raw' or 'processed', got {mode!r}") from None


@dataclass(frozen=True)
class ClassifierSequence:
    timesteps: np.ndarray  # (4, 4) raw or (4, 12) processed
    mode: str


def assemble_sequence(record: IntensityRecord, mode: str) -> ClassifierSequence:
    """Timestep j holds group j's raw values, plus its eight statistics in processed mode."""
    SequenceMode.dim(mode)
    raw = group(record)
    if mode == SequenceMode.RAW:
        return ClassifierSequence(raw, mode)
    stats = np.stack([s.as_array() for s in process_record(record)])
    return ClassifierSequence(np.concatenate([raw, stats], axis=1), mode)


def sequences_array(records: Sequence[IntensityRecord], mode: str) -> np.ndarray:
    return np.stack([assemble_sequence(r, mode).timesteps for r in records])


def labels_array(records: Sequence[IntensityRecord]) -> np.ndarray:
    out = []
    for r in records:
        if r.diagnosis is None:
            raise InputError(f"record {r.subject_id!r} has no diagnosis")
        out.append(int(r.diagnosis))
    return np.array(out, dtype=np.int64)


# -- JSON-lines I/O ---------------------------------------------------------------

def record_to_json(record: IntensityRecord, with_stats: bool = False) -> dict:
    line = {
        "subject_id": record.subject_id,
        "diagnosis": record.diagnosis.name if record.diagnosis is not None else None,
        "values": [float(v) for v in record.values],
    }
    if with_stats:
        line["stats"] = [[float(x) for x in s.as_array()] for s in process_record(record)]
    return line


def record_from_json(obj: dict) -> IntensityRecord:
    try:
        return IntensityRecord(obj["values"], str(obj.get("subject_id", "")), obj.get("diagnosis"))
    except KeyError as exc:
        raise FormatError(f"record is missing field {exc}") from None


def write_records(path, records: Iterable[IntensityRecord], with_stats: bool = False) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r, with_stats)) + "\n")
            n += 1
    return n


def read_records(path) -> list[IntensityRecord]:
    records = []
    offset = 0
    with open(Path(path), "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.decode("utf-8").strip()
            if text:
                try:
                    records.append(record_from_json(json.loads(text)))
                except (json.JSONDecodeError, InputError) as exc:
                    raise FormatError(f"{path}: line {lineno}: {exc}", offset) from None
            offset += len(raw)
    return records

"""Detector calibration from reset-then-measure and flip-then-measure runs.

Every histogram is Laplace smoothed (one pseudo-count per cell) so that no
likelihood is ever exactly zero.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractError, DegenerateCalibrationError
from .noise_model import (
    ANALOG,
    BINARY,
    MultiQubitNoiseModel,
    ResponseFunction,
    SingleQubitConfusion,
)

CALIBRATION_SHOTS = 100_000
SMOOTHING = 1


@dataclass(frozen=True, eq=False)
class CalibrationRecord:
    """Shots of one qubit prepared in a known basis state.

    ``samples`` holds assigned bits in binary mode and raw Q values in analog
    mode.
    """

    qubit_id: int
    prepared_state: int
    samples: np.ndarray

    def __post_init__(self):
        if self.prepared_state not in (0, 1):
            raise ContractError(f"prepared_state must be 0 or 1, got {self.prepared_state!r}")
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ContractError(f"qubit {self.qubit_id}: calibration samples must be a nonempty 1-D list")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_shots(self) -> int:
        return int(self.samples.size)


def _check_pair(rec0: CalibrationRecord, rec1: CalibrationRecord) -> None:
    if rec0.prepared_state != 0 or rec1.prepared_state != 1:
        raise ContractError("expected records prepared in |0> and |1>, in that order")
    if rec0.qubit_id != rec1.qubit_id:
        raise ContractError(f"records belong to different qubits ({rec0.qubit_id}, {rec1.qubit_id})")


def calibrate_binary(rec0: CalibrationRecord, rec1: CalibrationRecord) -> SingleQubitConfusion:
    """Smoothed 2x2 assignment matrix of one qubit.

    ``entries[i, j] = (count of i given j + 1) / (N_j + 2)``.
    """
    _check_pair(rec0, rec1)
    cols = []
    for rec in (rec0, rec1):
        bits = rec.samples.astype(int)
        if np.any((bits != 0) & (bits != 1)):
            raise ContractError(f"qubit {rec.qubit_id}: binary calibration samples must be 0/1")
        ones = int(bits.sum())
        zeros = rec.n_shots - ones
        denom = rec.n_shots + 2 * SMOOTHING
        cols.append([(zeros + SMOOTHING) / denom, (ones + SMOOTHING) / denom])
    return SingleQubitConfusion(np.array(cols).T)


def calibrate_analog(rec0: CalibrationRecord, rec1: CalibrationRecord, n_bin: int) -> ResponseFunction:
    """Histogram response functions over equal-width bins.

    The bins span the pooled range of both records. Each row is smoothed as
    ``(count + 1) / (N_j + n_bin)``.
    """
    _check_pair(rec0, rec1)
    if n_bin < 2:
        raise ContractError(f"n_bin must be >= 2, got {n_bin}")
    s0 = rec0.samples.astype(float)
    s1 = rec1.samples.astype(float)
    lo = min(s0.min(), s1.min())
    hi = max(s0.max(), s1.max())
    if not hi > lo:
        raise DegenerateCalibrationError(f"qubit {rec0.qubit_id}: all calibration samples equal {lo}")
    edges = np.linspace(lo, hi, n_bin + 1)
    rows = []
    for s in (s0, s1):
        idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, n_bin - 1)
        counts = np.bincount(idx, minlength=n_bin)
        rows.append((counts + SMOOTHING) / (s.size + n_bin * SMOOTHING))
    return ResponseFunction(edges, np.array(rows))


def calibrate(records: Iterable[CalibrationRecord], mode: str, n_bin: int = 2) -> MultiQubitNoiseModel:
    """Build a noise model from records covering every qubit in both states."""
    by_qubit = defaultdict(dict)
    for rec in records:
        if rec.prepared_state in by_qubit[rec.qubit_id]:
            raise ContractError(f"duplicate record for qubit {rec.qubit_id}, state {rec.prepared_state}")
        by_qubit[rec.qubit_id][rec.prepared_state] = rec
    if not by_qubit:
        raise ContractError("no calibration records")
    dets = []
    qids = sorted(by_qubit)
    for qid in qids:
        pair = by_qubit[qid]
        if set(pair) != {0, 1}:
            raise ContractError(f"qubit {qid} lacks a record for state {({0, 1} - set(pair)).pop()}")
        if mode == BINARY:
            dets.append(calibrate_binary(pair[0], pair[1]))
        elif mode == ANALOG:
            dets.append(calibrate_analog(pair[0], pair[1], n_bin))
        else:
            raise ContractError(f"unknown mode {mode!r}")
    return MultiQubitNoiseModel(tuple(dets), tuple(qids))


def read_records(path) -> list:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                records.append(CalibrationRecord(int(doc["qubit_id"]), int(doc["prepared_state"]), doc["samples"]))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ContractError(f"{path}:{lineno}: malformed calibration record ({exc})") from exc
    return records


def write_records(records: Iterable[CalibrationRecord], path) -> None:
    with open(Path(path), "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "qubit_id": rec.qubit_id,
                "prepared_state": rec.prepared_state,
                "samples": rec.samples.tolist(),
            }) + "\n")

"""Shot grouping and subspace reduction.

Shots are grouped by outcome key: the bit vector in binary mode, the vector
of per-qubit bin indices in analog mode. The likelihood of a shot only
depends on its key, so grouping turns a loop over shots into a loop over
distinct keys.

The active subspace is always a set of bitstrings. In analog mode it is the
set of strings obtained by thresholding each observed key at the median bin
edge of every qubit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ModeMismatchError
from .noise_model import ANALOG, BINARY, MultiQubitNoiseModel


def strings_to_bits(strings: Sequence[str]) -> np.ndarray:
    """``["01", "11"]`` -> ``uint8`` array of shape (2, 2)."""
    strings = list(strings)
    if not strings:
        return np.zeros((0, 0), dtype=np.uint8)
    width = len(strings[0])
    if any(len(s) != width for s in strings):
        raise ContractError("bitstrings have inconsistent lengths")
    raw = np.frombuffer("".join(strings).encode("ascii"), dtype=np.uint8).reshape(len(strings), width)
    bits = raw - ord("0")
    if np.any(bits > 1):
        raise ContractError("bitstrings may only contain '0' and '1'")
    return bits


def bits_to_strings(bits: np.ndarray) -> list:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return ["" for _ in range(bits.shape[0])]
    chars = (bits + ord("0")).astype(np.uint8)
    return [row.tobytes().decode("ascii") for row in chars]


@dataclass(frozen=True, eq=False)
class OutcomeTally:
    """Grouped shot records.

    Attributes
    ----------
    mode : str
        ``"binary"`` or ``"analog"``.
    keys : ndarray, shape (G, n_qubits)
        Distinct outcome keys in lexicographic order.
    counts : ndarray, shape (G,)
        Shots per key.
    active_bits : ndarray, shape (M, n_qubits)
        Observed bitstrings (thresholded keys in analog mode), lexicographic.
    active_counts : ndarray, shape (M,)
        Shots whose key maps to each active string.
    """

    mode: str
    keys: np.ndarray
    counts: np.ndarray
    active_bits: np.ndarray
    active_counts: np.ndarray

    @property
    def n_shots(self) -> int:
        return int(self.counts.sum())

    @property
    def n_groups(self) -> int:
        return int(self.keys.shape[0])

    @property
    def m(self) -> int:
        return int(self.active_bits.shape[0])

    @property
    def n_qubits(self) -> int:
        return int(self.keys.shape[1])

    @property
    def active(self) -> list:
        return bits_to_strings(self.active_bits)

    def as_dict(self) -> dict:
        """Key -> count; keys are bitstrings in binary mode, tuples otherwise."""
        if self.mode == BINARY:
            names = bits_to_strings(self.keys)
        else:
            names = [tuple(int(v) for v in row) for row in self.keys]
        return dict(zip(names, (int(c) for c in self.counts)))

    def expand(self) -> np.ndarray:
        """One key row per shot, in key order."""
        return np.repeat(self.keys, self.counts, axis=0)


def _group(keys: np.ndarray, weights: np.ndarray):
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    counts = np.bincount(inverse, weights=weights, minlength=uniq.shape[0])
    return uniq, np.rint(counts).astype(np.int64)


def _from_keys(keys: np.ndarray, weights: np.ndarray, model: MultiQubitNoiseModel) -> OutcomeTally:
    keep = weights > 0
    keys, weights = keys[keep], weights[keep]
    if keys.shape[0] == 0:
        raise ContractError("no shots to tally")
    uniq, counts = _group(keys, weights)
    active, active_counts = _group(model.threshold_keys(uniq), counts)
    return OutcomeTally(model.mode, uniq, counts, active.astype(np.uint8), active_counts)


def _shots_to_array(shots, model: MultiQubitNoiseModel) -> np.ndarray:
    if isinstance(shots, np.ndarray):
        arr = shots
    else:
        shots = list(shots)
        if not shots:
            raise ContractError("no shots to tally")
        if isinstance(shots[0], str):
            if model.mode != BINARY:
                raise ModeMismatchError("bitstring shots given to an analog noise model")
            arr = strings_to_bits(shots)
        else:
            arr = np.asarray(shots)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ContractError("shots must form a nonempty (n_shots, n_qubits) array")
    if arr.shape[1] != model.n_qubits:
        raise ContractError(f"shots have {arr.shape[1]} qubits, noise model has {model.n_qubits}")
    if model.mode == BINARY:
        if arr.dtype.kind == "f":
            raise ModeMismatchError("analog (real-valued) shots given to a binary noise model")
        if np.any((arr != 0) & (arr != 1)):
            raise ContractError("binary shots must be 0/1")
        return arr.astype(np.uint8)
    if arr.dtype.kind not in "fiu":
        raise ContractError("analog shots must be real Q values")
    keys = np.empty(arr.shape, dtype=np.int64)
    for q, rf in enumerate(model.per_qubit):
        keys[:, q] = rf.bin_indices(arr[:, q])
    return keys


def tally_shots(shots, model: MultiQubitNoiseModel, counts: Optional[Sequence[int]] = None) -> OutcomeTally:
    """Group shots by outcome key and derive the active bitstring set.

    Parameters
    ----------
    shots
        Bitstrings, an integer bit array (binary mode) or a real array of Q
        values with one column per qubit (analog mode).
    model
        Supplies the mode and, in analog mode, the bins.
    counts
        Optional multiplicity of each shot row.
    """
    keys = _shots_to_array(shots, model)
    if counts is None:
        weights = np.ones(keys.shape[0])
    else:
        weights = np.asarray(counts, dtype=float)
        if weights.shape != (keys.shape[0],) or np.any(weights < 0):
            raise ContractError("counts must be one nonnegative value per shot row")
    return _from_keys(keys, weights, model)


def tally_counts(counts: dict, model: MultiQubitNoiseModel) -> OutcomeTally:
    """Binary tally from a ``{bitstring: count}`` mapping."""
    if model.mode != BINARY:
        raise ModeMismatchError("count dictionaries carry bitstrings; the noise model is analog")
    names = list(counts)
    return tally_shots(names, model, [counts[k] for k in names])


def merge_tallies(a: OutcomeTally, b: OutcomeTally, model: MultiQubitNoiseModel) -> OutcomeTally:
    if a.mode != b.mode:
        raise ModeMismatchError("cannot merge binary and analog tallies")
    keys = np.concatenate([a.keys, b.keys])
    weights = np.concatenate([a.counts, b.counts]).astype(float)
    return _from_keys(keys, weights, model)


def empirical_frequencies(t: OutcomeTally) -> np.ndarray:
    """Noisy populations of the active strings, aligned with ``t.active``.

    The last entry absorbs rounding so the vector sums to one.
    """
    r = t.active_counts / t.n_shots
    if r.size > 1:
        r[-1] = 1.0 - r[:-1].sum()
    return r


# -- shot files -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShotFile:
    mode: str
    rows: np.ndarray
    counts: np.ndarray


def read_shots(path) -> ShotFile:
    """Parse a JSONL shot file.

    Each line is ``{"bits": "0101"}`` (optionally with ``"count"``) or
    ``{"q": [..]}``. An ``"i"`` field, if present, is ignored.
    """
    bits, qs, counts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ContractError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if "bits" in doc:
                bits.append(doc["bits"])
            elif "q" in doc:
                qs.append([float(v) for v in doc["q"]])
            else:
                raise ContractError(f"{path}:{lineno}: shot needs a 'bits' or 'q' field")
            counts.append(int(doc.get("count", 1)))
    if bits and qs:
        raise ContractError(f"{path}: mixes binary and analog shots")
    if not bits and not qs:
        raise ContractError(f"{path}: no shots")
    if bits:
        return ShotFile(BINARY, strings_to_bits(bits), np.array(counts))
    widths = {len(r) for r in qs}
    if len(widths) != 1:
        raise ContractError(f"{path}: analog shots have inconsistent lengths {sorted(widths)}")
    return ShotFile(ANALOG, np.array(qs), np.array(counts))


def write_shots(shots: np.ndarray, path) -> None:
    shots = np.asarray(shots)
    with open(path, "w") as fh:
        if shots.dtype.kind == "f":
            for row in shots:
                fh.write(json.dumps({"q": row.tolist()}) + "\n")
        else:
            for s in bits_to_strings(shots):
                fh.write(json.dumps({"bits": s}) + "\n")


def tally_file(shot_file: ShotFile, model: MultiQubitNoiseModel) -> OutcomeTally:
    if shot_file.mode != model.mode:
        raise ModeMismatchError(f"shots are {shot_file.mode} but the detector model is {model.mode}")
    return tally_shots(shot_file.rows, model, shot_file.counts)


def threshold_tally(t: OutcomeTally, model: MultiQubitNoiseModel) -> OutcomeTally:
    """Binary tally obtained by thresholding an analog tally at the median edges.

    Pairs with ``model.binary_view()``; binary tallies pass through unchanged.
    """
    if t.mode == BINARY:
        return t
    if model.mode != ANALOG:
        raise ModeMismatchError("thresholding an analog tally needs the analog noise model")
    binary = model.binary_view()
    return _from_keys(model.threshold_keys(t.keys), t.counts.astype(float), binary)

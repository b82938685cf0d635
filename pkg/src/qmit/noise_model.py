"""Per-qubit detector models and lazily evaluated multi-qubit likelihoods.

The multi-qubit noise matrix is the tensor product of the single-qubit ones,
so any entry is a product of ``n_qubits`` per-qubit factors. Nothing here ever
builds the full ``2**n x 2**n`` matrix.

Bit ordering: character ``k`` (leftmost is 0) of a bitstring belongs to
``per_qubit[k]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ContractError, ModeMismatchError

SCHEMA_VERSION = 1
BINARY = "binary"
ANALOG = "analog"

_STOCHASTIC_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SingleQubitConfusion:
    """Column-stochastic 2x2 matrix, ``entries[i, j] = Pr(assign i | true j)``."""

    entries: np.ndarray

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.shape != (2, 2):
            raise ContractError(f"confusion matrix must be 2x2, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0.0) or np.any(m > 1.0):
            raise ContractError("confusion matrix entries must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=0) - 1.0) > _STOCHASTIC_TOL):
            raise ContractError(f"confusion matrix columns must sum to 1, got {m.sum(axis=0)}")
        object.__setattr__(self, "entries", m)

    @property
    def n_outcomes(self) -> int:
        return 2

    @property
    def fidelity(self) -> float:
        """Mean probability of a correct assignment."""
        return 0.5 * float(self.entries[0, 0] + self.entries[1, 1])

    def emission(self) -> np.ndarray:
        """Outcome probabilities indexed ``[true_state, outcome]``."""
        return self.entries.T

    def __repr__(self):
        return f"SingleQubitConfusion({self.entries.tolist()})"


@dataclass(frozen=True, eq=False)
class ResponseFunction:
    """Binned analog response of one qubit along the Q axis.

    Attributes
    ----------
    bin_edges : ndarray, shape (n_bin + 1,)
        Strictly ascending edges. Bins are half-open ``[edge_b, edge_b+1)``;
        values outside the calibrated range are clamped to the end bins.
    lam : ndarray, shape (2, n_bin)
        ``lam[j, b]`` is the probability that a qubit in state ``j`` lands in
        bin ``b``. Rows sum to one.
    """

    bin_edges: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        edges = _frozen(self.bin_edges)
        lam = _frozen(self.lam)
        if edges.ndim != 1 or edges.size < 3:
            raise ContractError("a response function needs at least two bins")
        if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0.0):
            raise ContractError("bin edges must be finite and strictly ascending")
        if lam.shape != (2, edges.size - 1):
            raise ContractError(f"lambda must have shape (2, {edges.size - 1}), got {lam.shape}")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
            raise ContractError("lambda entries must be nonnegative")
        if np.any(np.abs(lam.sum(axis=1) - 1.0) > _STOCHASTIC_TOL):
            raise ContractError(f"lambda rows must sum to 1, got {lam.sum(axis=1)}")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "lam", lam)

    @property
    def n_bin(self) -> int:
        return self.lam.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.n_bin

    @property
    def median_edge_index(self) -> int:
        """Index of the edge used to turn bin indices into bits."""
        return self.n_bin // 2

    def emission(self) -> np.ndarray:
        return self.lam

    def bin_indices(self, q_values) -> np.ndarray:
        """Vectorised :func:`bin_index`."""
        idx = np.searchsorted(self.bin_edges, np.asarray(q_values, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_bin - 1)

    def __repr__(self):
        return f"ResponseFunction(n_bin={self.n_bin}, range=[{self.bin_edges[0]:.4g}, {self.bin_edges[-1]:.4g}])"


DetectorModel = Union[SingleQubitConfusion, ResponseFunction]


@dataclass(frozen=True, eq=False)
class MultiQubitNoiseModel:
    """Ordered per-qubit detector models sharing one mode."""

    per_qubit: tuple
    qubit_ids: tuple = field(default=())

    def __post_init__(self):
        per_qubit = tuple(self.per_qubit)
        if not per_qubit:
            raise ContractError("a noise model needs at least one qubit")
        kinds = {type(m) for m in per_qubit}
        if kinds - {SingleQubitConfusion, ResponseFunction}:
            raise ContractError(f"unsupported detector models: {kinds}")
        if len(kinds) != 1:
            raise ModeMismatchError("all qubits of a noise model must share the same mode")
        ids = tuple(self.qubit_ids) if self.qubit_ids else tuple(range(len(per_qubit)))
        if len(ids) != len(per_qubit):
            raise ContractError("qubit_ids and per_qubit differ in length")
        object.__setattr__(self, "per_qubit", per_qubit)
        object.__setattr__(self, "qubit_ids", ids)

    @property
    def mode(self) -> str:
        return BINARY if isinstance(self.per_qubit[0], SingleQubitConfusion) else ANALOG

    @property
    def n_qubits(self) -> int:
        return len(self.per_qubit)

    def __len__(self):
        return self.n_qubits

    def outcome_sizes(self) -> np.ndarray:
        return np.array([m.n_outcomes for m in self.per_qubit])

    def likelihood_table(self, keys: np.ndarray, bits: np.ndarray) -> np.ndarray:
        """Likelihoods ``L[g, k]`` of outcome ``keys[g]`` given true string ``bits[k]``.

        Factors are multiplied qubit by qubit in register order, the same
        order as :func:`likelihood_entry`, so both agree bit for bit.
        """
        keys = np.asarray(keys)
        bits = np.asarray(bits)
        if keys.ndim != 2 or bits.ndim != 2:
            raise ContractError("keys and bits must be 2-D arrays")
        if keys.shape[1] != self.n_qubits or bits.shape[1] != self.n_qubits:
            raise ContractError("keys and bits must have one column per qubit")
        table = np.ones((keys.shape[0], bits.shape[0]))
        for q, det in enumerate(self.per_qubit):
            em = det.emission()
            table *= em[bits[:, q]][:, keys[:, q]].T
        return table

    def threshold_keys(self, keys: np.ndarray) -> np.ndarray:
        """Map outcome keys onto bits (identity in binary mode)."""
        keys = np.asarray(keys)
        if self.mode == BINARY:
            return keys.astype(np.uint8)
        cut = np.array([rf.median_edge_index for rf in self.per_qubit])
        return (keys >= cut).astype(np.uint8)

    def binary_view(self) -> "MultiQubitNoiseModel":
        """Binary model induced by thresholding each response at its median edge."""
        if self.mode == BINARY:
            return self
        return MultiQubitNoiseModel(
            tuple(confusion_from_response(rf, rf.bin_edges[rf.median_edge_index]) for rf in self.per_qubit),
            self.qubit_ids,
        )

    def subset(self, qubits: Sequence[int]) -> "MultiQubitNoiseModel":
        return MultiQubitNoiseModel(
            tuple(self.per_qubit[q] for q in qubits), tuple(self.qubit_ids[q] for q in qubits)
        )


def _as_int_vector(x, name: str) -> list:
    if isinstance(x, str):
        if not set(x) <= {"0", "1"}:
            raise ContractError(f"{name} {x!r} is not a bitstring")
        return [int(c) for c in x]
    return [int(v) for v in x]


def likelihood_entry(model: MultiQubitNoiseModel, outcome_key, true_string) -> float:
    """Probability of observing ``outcome_key`` when ``true_string`` was prepared.

    >>> lam = SingleQubitConfusion([[0.9, 0.2], [0.1, 0.8]])
    >>> likelihood_entry(MultiQubitNoiseModel((lam, lam)), "01", "00")
    0.09000000000000001
    """
    key = _as_int_vector(outcome_key, "outcome key")
    true = _as_int_vector(true_string, "true string")
    n = model.n_qubits
    if len(key) != n or len(true) != n:
        raise ContractError(f"expected length {n}, got key {len(key)} and true string {len(true)}")
    p = 1.0
    for q, det in enumerate(model.per_qubit):
        b, j = key[q], true[q]
        if not 0 <= j < 2:
            raise ContractError(f"true bit {j} at qubit {q} is not 0/1")
        if not 0 <= b < det.n_outcomes:
            raise ContractError(f"outcome index {b} at qubit {q} out of range [0, {det.n_outcomes})")
        p *= float(det.emission()[j, b])
    return p


def bin_index(rf: ResponseFunction, q_value: float) -> int:
    """Bin holding ``q_value``; out-of-range values clamp to the end bins."""
    return int(rf.bin_indices(q_value))


def confusion_from_response(rf: ResponseFunction, threshold: float) -> SingleQubitConfusion:
    """Binary confusion matrix obtained by assigning "0" iff ``Q < threshold``.

    The threshold is snapped to the nearest bin edge, then the response mass
    on either side of it is aggregated.
    """
    edges = rf.bin_edges
    if not edges[0] <= threshold <= edges[-1]:
        raise ContractError(f"threshold {threshold} outside calibrated range [{edges[0]}, {edges[-1]}]")
    cut = int(np.argmin(np.abs(edges - threshold)))
    lam = rf.lam
    assign0 = [float(np.sum(lam[j, :cut])) for j in (0, 1)]
    assign1 = [float(np.sum(lam[j, cut:])) for j in (0, 1)]
    return SingleQubitConfusion([assign0, assign1])


# -- calibration file -------------------------------------------------------

def model_to_dict(model: MultiQubitNoiseModel) -> dict:
    blocks = []
    for qid, det in zip(model.qubit_ids, model.per_qubit):
        if isinstance(det, SingleQubitConfusion):
            blocks.append({"qubit_id": qid, "matrix": det.entries.tolist()})
        else:
            blocks.append({"qubit_id": qid, "bin_edges": det.bin_edges.tolist(), "lambda": det.lam.tolist()})
    return {"schema_version": SCHEMA_VERSION, "mode": model.mode, "qubits": blocks}


def model_from_dict(doc: dict) -> MultiQubitNoiseModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ContractError(f"unsupported detector schema version {doc.get('schema_version')!r}")
    mode = doc.get("mode")
    dets, ids = [], []
    for block in doc["qubits"]:
        ids.append(int(block["qubit_id"]))
        if mode == BINARY:
            dets.append(SingleQubitConfusion(block["matrix"]))
        elif mode == ANALOG:
            dets.append(ResponseFunction(block["bin_edges"], block["lambda"]))
        else:
            raise ContractError(f"unknown detector mode {mode!r}")
    return MultiQubitNoiseModel(tuple(dets), tuple(ids))


def save_model(model: MultiQubitNoiseModel, path) -> None:
    # float repr is the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> MultiQubitNoiseModel:
    return model_from_dict(json.loads(Path(path).read_text()))

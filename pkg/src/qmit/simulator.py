"""Synthetic readout: Gaussian clouds on the Q axis with known ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.special import ndtr, ndtri

from .calibration import CALIBRATION_SHOTS, CalibrationRecord
from .errors import ContractError
from .noise_model import ANALOG, BINARY, SingleQubitConfusion
from .tally import bits_to_strings, strings_to_bits


@dataclass(frozen=True)
class QubitCloud:
    """Readout clouds of one qubit; the "0" cloud must sit below the "1" cloud."""

    mu0: float
    mu1: float
    sigma: float
    threshold: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError(f"sigma must be positive, got {self.sigma}")
        if not self.mu0 < self.mu1:
            raise ContractError(f"expected mu0 < mu1, got {self.mu0}, {self.mu1}")
        if self.threshold is None:
            object.__setattr__(self, "threshold", 0.5 * (self.mu0 + self.mu1))


@dataclass(frozen=True)
class DetectorSpec:
    qubits: tuple

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if not self.qubits:
            raise ContractError("detector spec needs at least one qubit")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    @classmethod
    def with_fidelities(cls, fidelities, mu0: float = -1.0, mu1: float = 1.0) -> "DetectorSpec":
        """Clouds whose midpoint threshold yields the given assignment fidelities."""
        clouds = []
        for f in fidelities:
            if not 0.5 < f < 1.0:
                raise ContractError(f"fidelity must lie in (0.5, 1), got {f}")
            clouds.append(QubitCloud(mu0, mu1, 0.5 * (mu1 - mu0) / float(ndtri(f))))
        return cls(tuple(clouds))

    @classmethod
    def with_product_fidelity(cls, n_qubits: int, product: float, spread: float = 0.0, seed: int = 0) -> "DetectorSpec":
        """Device-like detector whose per-qubit fidelities multiply to ``product``.

        ``spread`` jitters the log-fidelities while keeping their sum fixed.
        """
        base = np.full(n_qubits, np.log(product) / n_qubits)
        if spread > 0 and n_qubits > 1:
            jitter = np.random.default_rng(seed).normal(0.0, spread, n_qubits)
            base = base * (1.0 + jitter - jitter.mean())
        return cls.with_fidelities(np.exp(base))

    def mu(self, state: int) -> np.ndarray:
        return np.array([c.mu1 if state else c.mu0 for c in self.qubits])

    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.qubits])

    def thresholds(self) -> np.ndarray:
        return np.array([c.threshold for c in self.qubits])

    def to_dict(self) -> dict:
        return {"qubits": [vars(c).copy() for c in self.qubits]}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DetectorSpec":
        return cls(tuple(QubitCloud(**q) for q in doc["qubits"]))


@dataclass(frozen=True)
class ExperimentSpec:
    """What to prepare and how many shots to take.

    ``truth`` is a single bitstring or a ``{bitstring: probability}`` map.
    """

    truth: Union[str, Mapping]
    n_shots: int
    seed: int
    mode: str = BINARY
    distribution: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_shots < 1:
            raise ContractError(f"n_shots must be >= 1, got {self.n_shots}")
        if self.mode not in (BINARY, ANALOG):
            raise ContractError(f"unknown mode {self.mode!r}")
        dist = {self.truth: 1.0} if isinstance(self.truth, str) else {str(k): float(v) for k, v in self.truth.items()}
        probs = np.array(list(dist.values()))
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ContractError("true distribution must be nonnegative and sum to 1")
        if len({len(k) for k in dist}) != 1:
            raise ContractError("true bitstrings have inconsistent lengths")
        object.__setattr__(self, "distribution", dist)

    @property
    def n_qubits(self) -> int:
        return len(next(iter(self.distribution)))

    def to_dict(self) -> dict:
        truth = self.truth if isinstance(self.truth, str) else dict(self.truth)
        return {"truth": truth, "n_shots": self.n_shots, "seed": self.seed, "mode": self.mode}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentSpec":
        if "seed" not in doc:
            raise ContractError("experiment spec must carry an explicit seed")
        return cls(doc["truth"], int(doc["n_shots"]), int(doc["seed"]), doc.get("mode", BINARY))


def true_confusion(spec: DetectorSpec, qubit: int) -> SingleQubitConfusion:
    """Exact assignment matrix of one qubit under midpoint thresholding."""
    c = spec.qubits[qubit]
    p00 = float(ndtr((c.threshold - c.mu0) / c.sigma))
    p11 = 1.0 - float(ndtr((c.threshold - c.mu1) / c.sigma))
    return SingleQubitConfusion([[p00, 1.0 - p11], [1.0 - p00, p11]])


def _readout(bits: np.ndarray, det: DetectorSpec, rng: np.random.Generator, mode: str) -> np.ndarray:
    mu = np.where(bits.astype(bool), det.mu(1), det.mu(0))
    q = mu + det.sigmas() * rng.standard_normal(bits.shape)
    if mode == ANALOG:
        return q
    return (q >= det.thresholds()).astype(np.uint8)


def sample_shots(exp: ExperimentSpec, det: DetectorSpec) -> np.ndarray:
    """Simulated shot records, one row per shot.

    Binary mode returns thresholded bits (``uint8``); analog mode returns raw
    Q values. Bit-reproducible for a given seed.
    """
    if exp.n_qubits != det.n_qubits:
        raise ContractError(f"experiment has {exp.n_qubits} qubits, detector {det.n_qubits}")
    rng = np.random.default_rng(exp.seed)
    names = list(exp.distribution)
    probs = np.array([exp.distribution[k] for k in names])
    if len(names) == 1:
        truth = np.repeat(strings_to_bits(names), exp.n_shots, axis=0)
    else:
        picks = rng.choice(len(names), size=exp.n_shots, p=probs / probs.sum())
        truth = strings_to_bits(names)[picks]
    return _readout(truth, det, rng, exp.mode)


def simulate_calibration(det: DetectorSpec, seed: int, n_shots: int = CALIBRATION_SHOTS, mode: str = ANALOG) -> list:
    """Reset-then-measure and flip-then-measure records for every qubit."""
    rng = np.random.default_rng(seed)
    records = []
    for state in (0, 1):
        bits = np.full((n_shots, det.n_qubits), state, dtype=np.uint8)
        out = _readout(bits, det, rng, mode)
        for q in range(det.n_qubits):
            records.append(CalibrationRecord(q, state, out[:, q]))
    return records


def random_bitstrings(n_qubits: int, count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return bits_to_strings(rng.integers(0, 2, size=(count, n_qubits), dtype=np.uint8))


def success_probability(populations, target: str) -> float:
    """Population assigned to ``target`` (0 when it is not present)."""
    return float(populations.get(target, 0.0))


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)

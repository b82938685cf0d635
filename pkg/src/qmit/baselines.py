"""Reference mitigators restricted to the observed subspace.

* iterative Bayesian unfolding (expectation-maximisation on the confusion
  matrix),
* matrix inversion followed by Euclidean projection onto the simplex.

Both use the same active set as the Bayesian mitigator, and neither builds a
full ``2**n`` matrix: entries of the tensor-product matrix and of its inverse
are evaluated as products of per-qubit factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DegenerateLikelihoodError, ModeMismatchError, SingularityError
from .noise_model import BINARY, MultiQubitNoiseModel
from .tally import OutcomeTally

UNIFORM = "uniform"
EMPIRICAL = "empirical"

_SINGULAR_DET = 1e-9


@dataclass(frozen=True)
class IbuConfig:
    iterations: int = 100
    initial: str = UNIFORM

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractError(f"iterations must be >= 1, got {self.iterations}")
        if self.initial not in (UNIFORM, EMPIRICAL):
            raise ContractError(f"initial guess must be 'uniform' or 'empirical', got {self.initial!r}")


def _require_binary(tally: OutcomeTally, model: MultiQubitNoiseModel) -> None:
    if tally.mode != BINARY or model.mode != BINARY:
        raise ModeMismatchError("baselines operate on binary tallies and confusion matrices")
    if tally.n_qubits != model.n_qubits:
        raise ContractError(f"tally has {tally.n_qubits} qubits, noise model has {model.n_qubits}")


def _product_table(mats, row_bits: np.ndarray, col_bits: np.ndarray) -> np.ndarray:
    table = np.ones((row_bits.shape[0], col_bits.shape[0]))
    for q, mat in enumerate(mats):
        table *= mat[row_bits[:, q]][:, col_bits[:, q]]
    return table


def ibu(
    tally: OutcomeTally,
    model: MultiQubitNoiseModel,
    cfg: Optional[IbuConfig] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> np.ndarray:
    """Iterative Bayesian unfolding over the active strings.

    ``rho_j <- sum_i noisy_i * L[i, j] rho_j / sum_m L[i, m] rho_m`` with ``i``
    over observed outcomes and ``j, m`` over active strings. Returns the
    final vector aligned with ``tally.active``. ``callback(n, rho)`` sees
    every iterate.
    """
    cfg = cfg or IbuConfig()
    _require_binary(tally, model)
    L = model.likelihood_table(tally.keys, tally.active_bits)
    noisy = tally.counts / tally.n_shots
    m = tally.m
    if cfg.initial == UNIFORM:
        rho = np.full(m, 1.0 / m)
    else:
        rho = tally.active_counts / tally.n_shots
    for n in range(1, cfg.iterations + 1):
        denom = L @ rho
        if np.any(denom <= 0.0):
            bad = int(np.flatnonzero(denom <= 0.0)[0])
            raise DegenerateLikelihoodError(f"observed outcome #{bad} has zero likelihood under the current estimate")
        rho = rho * (L.T @ (noisy / denom))
        if callback is not None:
            callback(n, rho)
    return rho


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = 1}`` by sort and threshold."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
        raise ContractError("project_simplex needs a nonempty finite vector")
    if np.all(v >= 0.0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = int(np.flatnonzero(u - (css - 1.0) / k > 0.0)[-1])
    theta = (css[rho] - 1.0) / (rho + 1)
    x = np.maximum(v - theta, 0.0)
    top = int(np.argmax(x))
    x[top] += 1.0 - x.sum()
    return x


def inverse_factors(model: MultiQubitNoiseModel) -> list:
    """Per-qubit inverses of the confusion matrices."""
    out = []
    for qid, det_model in zip(model.qubit_ids, model.per_qubit):
        (a, b), (c, d) = det_model.entries
        det = a * d - b * c
        if abs(det) <= _SINGULAR_DET:
            raise SingularityError(qid, det)
        out.append(np.array([[d, -b], [-c, a]]) / det)
    return out


def mim(tally: OutcomeTally, model: MultiQubitNoiseModel) -> np.ndarray:
    """Inverse-matrix mitigation projected onto the probability simplex.

    The inverse is restricted to active strings (rows) and observed outcomes
    (columns); its entries are products of per-qubit 2x2 inverse entries.
    Result aligned with ``tally.active``.
    """
    _require_binary(tally, model)
    inv = _product_table(inverse_factors(model), tally.active_bits, tally.keys)
    v = inv @ (tally.counts / tally.n_shots)
    return project_simplex(v)

"""Exception hierarchy shared across the package."""


class QmitError(Exception):
    """Base class for all errors raised by qmit."""


class ContractError(QmitError, ValueError):
    """An input violates the documented preconditions of an operation."""


class ModeMismatchError(ContractError):
    """Binary and analog objects were combined."""


class DegenerateCalibrationError(ContractError):
    """Calibration samples carry no usable spread."""


class DegenerateLikelihoodError(ContractError):
    """Some observed outcome has zero probability under every candidate state."""


class SingularityError(ContractError):
    """A per-qubit confusion matrix cannot be inverted."""

    def __init__(self, qubit, det):
        super().__init__(f"confusion matrix of qubit {qubit} is singular (det={det:.3e})")
        self.qubit = qubit
        self.det = det


class ConsistencyError(QmitError, RuntimeError):
    """Internal caches disagree with each other."""


class ResourceError(QmitError, MemoryError):
    """A computation would exceed its configured memory budget."""

"""Fixed matrices, named states and the probe-operator type."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

# Cyclic shift on the (|-1>, |0>, |+1>) basis; maps the three-level
# rotating-frame Hamiltonian onto itself after a third of a period.
ROTATION_3 = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)

# Weighted-Rabi probe for the three-level system, eigenvalues (2, -1, -1).
THREE_LEVEL_PROBE = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=complex)

THREE_LEVEL_BASIS = {
    "e1": np.array([1, 1, 1], dtype=complex) / np.sqrt(3),
    "e2": np.array([-2, 1, 1], dtype=complex) / np.sqrt(6),
    "e3": np.array([0, 1, -1], dtype=complex) / np.sqrt(2),
}

_s2 = 1 / np.sqrt(2)
NAMED_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([_s2, _s2], dtype=complex),
    "-": np.array([_s2, -_s2], dtype=complex),
    "+i": np.array([_s2, 1j * _s2], dtype=complex),
    "-i": np.array([_s2, -1j * _s2], dtype=complex),
    **THREE_LEVEL_BASIS,
    "e_sum": sum(THREE_LEVEL_BASIS.values()) / np.sqrt(3),
}

NAMED_PROBES = {
    "sigma_x": SIGMA_X,
    "sigma_y": SIGMA_Y,
    "sigma_z": SIGMA_Z,
    "three_level_V": THREE_LEVEL_PROBE,
}


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * scale)


@dataclass(frozen=True)
class ProbeOperator:
    """Hermitian observable with its spectral decomposition.

    ``norm`` is the sum of absolute eigenvalues; the weighted Rabi signal is
    ``<V>/norm``.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)
    norm: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.matrix, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("probe must be a square matrix")
        if not is_hermitian(v):
            raise ValueError("probe operator must be Hermitian")
        v = 0.5 * (v + v.conj().T)
        w, u = np.linalg.eigh(v)
        object.__setattr__(self, "matrix", v)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", u)
        object.__setattr__(self, "norm", float(np.sum(np.abs(w))))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def named(cls, name: str) -> "ProbeOperator":
        try:
            return cls(NAMED_PROBES[name])
        except KeyError:
            raise KeyError(f"unknown probe {name!r}") from None


def named_state(name: str) -> np.ndarray:
    try:
        return NAMED_STATES[name].copy()
    except KeyError:
        raise KeyError(f"unknown state {name!r}") from None

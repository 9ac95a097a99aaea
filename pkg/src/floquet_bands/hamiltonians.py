"""Driven-system Hamiltonians as harmonic components H(t) = sum_n H_n exp(-i n w t)."""
from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .operators import PAULI, SIGMA_X, SIGMA_Y, SIGMA_Z, is_hermitian

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class FourierHamiltonian:
    """Time-periodic Hamiltonian stored as harmonic components.

    ``components[n]`` multiplies ``exp(-i n w t)``.  Hermiticity of H(t)
    requires ``components[-n] == components[n].conj().T``.
    """

    dim: int
    base_frequency: float
    components: Mapping[int, np.ndarray]

    def __post_init__(self):
        if self.base_frequency <= 0:
            raise ValueError("base frequency must be positive")
        comps = {}
        for n, h in self.components.items():
            h = np.array(h, dtype=complex)
            if h.shape != (self.dim, self.dim):
                raise ValueError(f"component {n} has shape {h.shape}, expected {(self.dim, self.dim)}")
            comps[int(n)] = h
        comps.setdefault(0, np.zeros((self.dim, self.dim), dtype=complex))
        for n in list(comps):
            comps.setdefault(-n, comps[n].conj().T.copy())
        scale = max(1.0, max(float(np.max(np.abs(h))) for h in comps.values()))
        for n, h in comps.items():
            if np.max(np.abs(comps[-n] - h.conj().T)) > 1e-12 * scale:
                raise ValueError(f"components {n} and {-n} are not conjugate transposes")
        object.__setattr__(self, "components", dict(sorted(comps.items())))

    @property
    def max_harmonic(self) -> int:
        nz = [abs(n) for n, h in self.components.items() if np.any(h != 0)]
        return max(nz, default=0)

    @property
    def period(self) -> float:
        return TWO_PI / self.base_frequency

    def drive_norm(self) -> float:
        """Largest |eigenvalue| of H_0 plus the spectral norms of all other harmonics."""
        h0 = np.max(np.abs(np.linalg.eigvalsh(self.components[0])))
        rest = sum(np.linalg.norm(h, 2) for n, h in self.components.items() if n != 0)
        return float(h0 + rest)

    def __call__(self, t):
        return sample_hamiltonian(self, t)


def sample_hamiltonian(h: FourierHamiltonian, t) -> np.ndarray:
    """H(t) for scalar t (dim x dim) or an array of times (len(t) x dim x dim)."""
    t_arr = np.asarray(t, dtype=float)
    ns = np.array(list(h.components))
    stack = np.stack(list(h.components.values()))
    phases = np.exp(-1j * np.multiply.outer(t_arr, ns) * h.base_frequency)
    return np.tensordot(phases, stack, axes=(-1, 0))


# --- drive specifications -------------------------------------------------


@dataclass(frozen=True)
class BreakingTerm:
    """Adds ``amplitude * sin(harmonic * w t) * sigma_axis``.

    With ``relative=True`` the amplitude is a multiple of the modulation
    strength eps_m, so it follows eps_m through a sweep.
    """

    harmonic: int
    amplitude: float
    axis: str = "z"
    relative: bool = False

    def __post_init__(self):
        if self.axis not in PAULI:
            raise ValueError(f"axis must be one of x, y, z, got {self.axis!r}")
        if self.harmonic < 1:
            raise ValueError("breaking harmonic must be a positive integer")


@dataclass(frozen=True)
class PhaseModTLS:
    omega_rabi: float
    epsilon_m: float
    omega_m: float
    phi: float = 0.0
    delta: float = 0.0
    breaking_terms: tuple[BreakingTerm, ...] = ()

    def __post_init__(self):
        _positive(omega_rabi=self.omega_rabi, omega_m=self.omega_m)
        _non_negative(epsilon_m=self.epsilon_m)
        object.__setattr__(self, "breaking_terms", tuple(self.breaking_terms))


@dataclass(frozen=True)
class AmpModTLS:
    omega_rabi: float
    epsilon_m: float
    omega_m: float
    phi: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        _positive(omega_rabi=self.omega_rabi, omega_m=self.omega_m)
        _non_negative(epsilon_m=self.epsilon_m)


@dataclass(frozen=True)
class ThreeLevelRotating:
    coupling: float
    omega_m: float

    def __post_init__(self):
        _positive(omega_m=self.omega_m)
        _non_negative(coupling=self.coupling)


@dataclass(frozen=True)
class ThreeLevelFirstFrame:
    """First rotating frame of the three-level system.

    ``delta`` is the common detuning Delta; the Rabi frequencies default to
    the required driving condition omega_1/2 = omega_2/2 = Delta.
    """

    delta: float
    coupling: float
    omega_m: float
    omega_1: float | None = None
    omega_2: float | None = None

    def __post_init__(self):
        _positive(delta=self.delta, omega_m=self.omega_m)
        _non_negative(coupling=self.coupling)
        o1 = 2 * self.delta if self.omega_1 is None else self.omega_1
        o2 = 2 * self.delta if self.omega_2 is None else self.omega_2
        object.__setattr__(self, "omega_1", o1)
        object.__setattr__(self, "omega_2", o2)
        tol = 1e-9 * self.delta
        if abs(o1 / 2 - self.delta) > tol or abs(o2 / 2 - self.delta) > tol:
            raise ValueError("driving condition omega_1/2 = omega_2/2 = delta is not met")
        ratio = self.delta / self.omega_m
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"delta must be an integer multiple of omega_m (ratio {ratio:.6g})")

    @property
    def multiple(self) -> int:
        return int(round(self.delta / self.omega_m))


DriveSpec = Union[PhaseModTLS, AmpModTLS, ThreeLevelRotating, ThreeLevelFirstFrame]


@dataclass(frozen=True)
class EnsembleSpec:
    base: DriveSpec
    detuning_sigma: float
    sample_count: int = 51
    span: float = 2.0

    def __post_init__(self):
        if not isinstance(self.base, (PhaseModTLS, AmpModTLS)):
            raise ValueError("detuning ensembles need a two-level drive with a detuning term")
        if self.sample_count < 1 or self.sample_count % 2 == 0:
            raise ValueError("sample_count must be a positive odd integer")
        if self.detuning_sigma < 0 or self.span <= 0:
            raise ValueError("detuning_sigma must be >= 0 and span > 0")


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be strictly positive, got {v}")


def _non_negative(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{k} must be non-negative, got {v}")


# --- sinusoid algebra on harmonic dicts ------------------------------------
# A dict {n: a_n} stands for sum_n a_n exp(-i n w t).


def _sin(k: int, phase: float = 0.0) -> dict[int, complex]:
    if k == 0:
        return {0: complex(np.sin(phase))}
    return {-k: np.exp(1j * phase) / 2j, k: -np.exp(-1j * phase) / 2j}


def _cos(k: int, phase: float = 0.0) -> dict[int, complex]:
    if k == 0:
        return {0: complex(np.cos(phase))}
    return {-k: np.exp(1j * phase) / 2, k: np.exp(-1j * phase) / 2}


def _mul(a: dict, b: dict) -> dict:
    out: dict[int, complex] = {}
    for i, x in a.items():
        for j, y in b.items():
            out[i + j] = out.get(i + j, 0) + x * y
    return out


def _add(*terms: tuple[float, dict]) -> dict:
    out: dict[int, complex] = {}
    for scale, d in terms:
        for k, v in d.items():
            out[k] = out.get(k, 0) + scale * v
    return out


def _from_scalar_series(series: dict, op: np.ndarray) -> dict[int, np.ndarray]:
    return {n: a * op for n, a in series.items()}


def _merge(*parts: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    for p in parts:
        for n, h in p.items():
            out[n] = out[n] + h if n in out else np.array(h, dtype=complex)
    return out


# --- builders ----------------------------------------------------------------


def build_interaction_tls(spec: PhaseModTLS) -> FourierHamiltonian:
    """(d/2)sz + (W/2)sx + eps sin(w t + phi) sz + sum of breaking terms."""
    static = {0: spec.delta / 2 * SIGMA_Z + spec.omega_rabi / 2 * SIGMA_X}
    drive = _from_scalar_series(_sin(1, spec.phi), spec.epsilon_m * SIGMA_Z)
    parts = [static, drive]
    for term in spec.breaking_terms:
        amp = term.amplitude * (spec.epsilon_m if term.relative else 1.0)
        parts.append(_from_scalar_series(_sin(term.harmonic), amp * PAULI[term.axis]))
    return FourierHamiltonian(2, spec.omega_m, _merge(*parts))


def build_amp_mod_tls(spec: AmpModTLS) -> FourierHamiltonian:
    """-(d/2)sz + (W/2)sx + eps cos(w t + phi) sy."""
    static = {0: -spec.delta / 2 * SIGMA_Z + spec.omega_rabi / 2 * SIGMA_X}
    drive = _from_scalar_series(_cos(1, spec.phi), spec.epsilon_m * SIGMA_Y)
    return FourierHamiltonian(2, spec.omega_m, _merge(static, drive))


def build_three_level_rotating(spec: ThreeLevelRotating) -> FourierHamiltonian:
    """Cyclic three-level coupling on the (|-1>, |0>, |+1>) basis."""
    j = spec.coupling
    links = [((0, 2), 0.0), ((2, 1), 2 * np.pi / 3), ((0, 1), 4 * np.pi / 3)]
    comps: dict[int, np.ndarray] = {n: np.zeros((3, 3), dtype=complex) for n in (-1, 0, 1)}
    for (r, c), phase in links:
        for n, a in _cos(1, phase).items():
            comps[n][r, c] += j * a
            comps[n][c, r] += j * a
    return FourierHamiltonian(3, spec.omega_m, comps)


def first_frame_modulations(spec: ThreeLevelFirstFrame) -> tuple[dict, dict]:
    """Harmonic series of the two modulation envelopes eps_1(t), eps_2(t)."""
    m = spec.multiple
    j = spec.coupling
    eps1 = _add(
        (2 * np.sqrt(3) * j, _mul(_sin(2 * m), _cos(1, 2 * np.pi / 3))),
        (-2 * np.sqrt(2) * j, _mul(_sin(3 * m), _cos(1))),
    )
    eps2 = _add((2 * np.sqrt(6) * j, _mul(_sin(m), _cos(1, 4 * np.pi / 3))))
    return eps1, eps2


def build_three_level_first_frame(spec: ThreeLevelFirstFrame) -> FourierHamiltonian:
    d = spec.delta
    static = np.array(
        [[0, spec.omega_1 / 2, 0], [spec.omega_1 / 2, d, spec.omega_2 / 2], [0, spec.omega_2 / 2, 0]],
        dtype=complex,
    )
    eps1, eps2 = first_frame_modulations(spec)
    g1 = np.zeros((3, 3), dtype=complex)
    g1[0, 1], g1[1, 0] = -1j, 1j
    g2 = np.zeros((3, 3), dtype=complex)
    g2[1, 2], g2[2, 1] = -1j, 1j
    comps = _merge({0: static}, _from_scalar_series(eps1, g1), _from_scalar_series(eps2, g2))
    comps = {n: h for n, h in comps.items() if n == 0 or np.any(np.abs(h) > 0)}
    return FourierHamiltonian(3, spec.omega_m, comps)


def second_frame_basis(delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Static eigenbasis of the first-frame drive and its eigenvalues.

    Columns are ordered so that the second-frame Hamiltonian lands on the
    (|-1>, |0>, |+1>) layout of the rotating-frame model.
    """
    w = np.column_stack(
        [
            np.array([1, -1, 1]) / np.sqrt(3),
            -np.array([1, 0, -1]) / np.sqrt(2),
            np.array([1, 2, 1]) / np.sqrt(6),
        ]
    ).astype(complex)
    return w, np.array([-delta, 0.0, 2 * delta])


def second_frame_unitary(spec: ThreeLevelFirstFrame, t) -> np.ndarray:
    """M(t) with psi_second = M(t) psi_first; T-periodic because delta = k w."""
    w, d = second_frame_basis(spec.delta)
    t_arr = np.asarray(t, dtype=float)
    phases = np.exp(1j * np.multiply.outer(t_arr, d))
    return phases[..., :, None] * w.conj().T


def build_three_level_second_frame(spec: ThreeLevelFirstFrame) -> FourierHamiltonian:
    """Exact second-frame Hamiltonian (no rotating-wave approximation)."""
    w, d = second_frame_basis(spec.delta)
    first = build_three_level_first_frame(spec)
    shifts = np.rint(np.subtract.outer(d, d) / spec.omega_m).astype(int)
    comps: dict[int, np.ndarray] = {}
    for n, h in first.components.items():
        a = w.conj().T @ h @ w
        for r in range(3):
            for c in range(3):
                # exp(i (d_r - d_c) t) multiplies the e^{-i n w t} term -> harmonic n - shift
                k = n - shifts[r, c]
                comps.setdefault(k, np.zeros((3, 3), dtype=complex))[r, c] += a[r, c]
    comps[0] = comps.get(0, np.zeros((3, 3), dtype=complex)) - np.diag(d)
    comps = {n: h for n, h in comps.items() if n == 0 or np.any(np.abs(h) > 1e-14 * spec.delta)}
    return FourierHamiltonian(3, spec.omega_m, comps)


def build(spec: DriveSpec) -> FourierHamiltonian:
    if isinstance(spec, PhaseModTLS):
        return build_interaction_tls(spec)
    if isinstance(spec, AmpModTLS):
        return build_amp_mod_tls(spec)
    if isinstance(spec, ThreeLevelRotating):
        return build_three_level_rotating(spec)
    if isinstance(spec, ThreeLevelFirstFrame):
        return build_three_level_first_frame(spec)
    raise TypeError(f"unsupported drive spec {type(spec).__name__}")


def system_dim(spec: DriveSpec) -> int:
    return 2 if isinstance(spec, (PhaseModTLS, AmpModTLS)) else 3


def expand_ensemble(e: EnsembleSpec) -> list[tuple[FourierHamiltonian, float]]:
    """Detuning-shifted copies of the base drive with normalised Gaussian weights."""
    return [(build(spec), w) for spec, w in ensemble_members(e)]


def ensemble_members(e: EnsembleSpec) -> list[tuple[DriveSpec, float]]:
    sigma = e.detuning_sigma
    offsets = np.linspace(-e.span * sigma, e.span * sigma, e.sample_count)
    if sigma == 0:
        weights = np.full(e.sample_count, 1.0 / e.sample_count)
    else:
        weights = np.exp(-0.5 * (offsets / sigma) ** 2)
        # symmetrise explicitly so w(d) == w(-d) bit for bit
        weights = 0.5 * (weights + weights[::-1])
        weights /= weights.sum()
    return [
        (dataclasses.replace(e.base, delta=e.base.delta + d), float(w))
        for d, w in zip(offsets, weights)
    ]


# --- sweep parameters -------------------------------------------------------

RATIO_PARAMETERS = {
    "modulation_index": ("epsilon_m", 0.5),  # 2 eps_m / w_m
    "coupling_index": ("coupling", 0.5),  # 2 J / w_m
}


def set_parameter(spec: DriveSpec, path: str, value: float) -> DriveSpec:
    """Return a copy of ``spec`` with one parameter changed.

    ``path`` is a field name (value in rad/s or rad) or one of the
    dimensionless ratios ``modulation_index`` (2 eps_m/w_m) and
    ``coupling_index`` (2 J/w_m).
    """
    if path in RATIO_PARAMETERS:
        name, scale = RATIO_PARAMETERS[path]
        if not hasattr(spec, name):
            raise ValueError(f"{path} does not apply to {type(spec).__name__}")
        return dataclasses.replace(spec, **{name: scale * value * spec.omega_m})
    fields = {f.name for f in dataclasses.fields(spec)} - {"breaking_terms"}
    if path not in fields:
        raise ValueError(f"unknown sweep parameter {path!r} for {type(spec).__name__}")
    return dataclasses.replace(spec, **{path: value})

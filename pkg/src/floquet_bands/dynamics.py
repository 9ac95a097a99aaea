"""State evolution by Floquet reconstruction and by a midpoint Trotter propagator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .floquet import FloquetModes, ModeCoefficients, _fix_gauge, modes_from_propagator
from .floquet import initial_coefficients, solve_modes
from .hamiltonians import (
    DriveSpec,
    FourierHamiltonian,
    ThreeLevelFirstFrame,
    build,
    sample_hamiltonian,
    second_frame_basis,
    second_frame_unitary,
)
from .operators import ProbeOperator

STEP_LIMIT = 0.1
_CHUNK = 4096


class StepTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionTrace:
    times: np.ndarray
    states: np.ndarray  # (len(times), dim)
    method: str
    dt: float | None = None


@dataclass(frozen=True)
class RabiTrace:
    times: np.ndarray
    values: np.ndarray


def sample_times(t_end: float, n_samples: int) -> np.ndarray:
    if n_samples < 2 or t_end <= 0:
        raise ValueError("need t_end > 0 and at least two samples")
    return np.linspace(0.0, t_end, n_samples)


def _steps_per_interval(interval: float, dt: float) -> int:
    steps = int(round(interval / dt))
    if steps < 1 or abs(steps * dt - interval) > 1e-6 * interval:
        raise ValueError(f"dt={dt:.3e} s does not divide the sampling interval {interval:.3e} s")
    return steps


def _step_unitaries(h: FourierHamiltonian, t_mid: np.ndarray, dt: float) -> np.ndarray:
    hs = sample_hamiltonian(h, t_mid)
    hs = 0.5 * (hs + np.conj(np.swapaxes(hs, -1, -2)))
    w, v = np.linalg.eigh(hs)
    return (v * np.exp(-1j * w * dt)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def _trotter_run(h: FourierHamiltonian, start: np.ndarray, dt: float, times: np.ndarray) -> np.ndarray:
    """Propagate ``start`` (vector or matrix) and return it at every sample time."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    bound = dt * h.drive_norm()
    if bound > STEP_LIMIT:
        raise StepTooLarge(f"dt * |H| = {bound:.3g} exceeds {STEP_LIMIT}; reduce dt")
    spi = _steps_per_interval(times[1] - times[0], dt)
    if not np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9, atol=0):
        raise ValueError("sample times must be uniform")
    # exact step size so the grid lands on the sample times
    dt = (times[1] - times[0]) / spi
    total = spi * (len(times) - 1)
    out = np.empty((len(times),) + start.shape, dtype=complex)
    out[0] = start
    state = start.astype(complex)
    step = 0
    while step < total:
        n = min(_CHUNK, total - step)
        us = _step_unitaries(h, times[0] + (step + np.arange(n) + 0.5) * dt, dt)
        for j in range(n):
            state = us[j] @ state
            step += 1
            if step % spi == 0:
                out[step // spi] = state
    return out


def trotter_evolve(h: FourierHamiltonian, psi0, dt: float, t_end: float, n_samples: int) -> EvolutionTrace:
    """Midpoint piecewise-constant propagation recorded on a uniform grid."""
    times = sample_times(t_end, n_samples)
    psi = np.asarray(psi0, dtype=complex)
    states = _trotter_run(h, psi, dt, times)
    return EvolutionTrace(times, states, "trotter", dt)


def trotter_propagators(h: FourierHamiltonian, dt: float, times: np.ndarray) -> np.ndarray:
    """U(t, 0) at uniformly spaced ``times`` starting at 0."""
    return _trotter_run(h, np.eye(h.dim, dtype=complex), dt, np.asarray(times, dtype=float))


def floquet_evolve(m: FloquetModes, c: ModeCoefficients, times) -> EvolutionTrace:
    """|psi(t)> = sum_mu c_mu exp(-i lam_mu t) |Phi^mu(t)>."""
    times = np.asarray(times, dtype=float)
    phi = m.at_time(times)  # (T, N, dim)
    amp = c.values[None, :] * np.exp(-1j * np.outer(times, m.quasi_energies))
    states = np.einsum("tm,tmk->tk", amp, phi)
    return EvolutionTrace(times, states, "floquet")


def transform_trace(e: EvolutionTrace, frame) -> EvolutionTrace:
    """Apply a time-dependent frame change: ``frame(times)`` gives (T, dim, dim)."""
    u = frame(e.times)
    return EvolutionTrace(e.times, np.einsum("tij,tj->ti", u, e.states), e.method, e.dt)


def projection_trace(e: EvolutionTrace, k) -> RabiTrace:
    """|<k|psi(t)>|^2 along the trace."""
    k = np.asarray(k, dtype=complex)
    return RabiTrace(e.times, np.abs(e.states @ k.conj()) ** 2)


def weighted_rabi(e: EvolutionTrace, v: ProbeOperator) -> RabiTrace:
    """P(t) = sum_k (V_k / norm) P_k(t) = <V>/norm."""
    if v.norm == 0:
        return RabiTrace(e.times, np.zeros(len(e.times)))
    probs = np.abs(e.states @ v.eigenvectors.conj()) ** 2
    return RabiTrace(e.times, probs @ (v.eigenvalues / v.norm))


def state_fidelity(a: EvolutionTrace, b: EvolutionTrace) -> np.ndarray:
    return np.abs(np.sum(a.states.conj() * b.states, axis=1)) ** 2


def modes_from_trotter(h: FourierHamiltonian, dt: float, samples_per_period: int) -> FloquetModes:
    """Floquet modes from the Trotter one-period propagator (no harmonic truncation).

    Useful when the drive has so many harmonics that the truncated Floquet
    matrix becomes too large; accuracy is set by ``dt`` instead of K.
    """
    return modes_from_propagator(
        lambda ts: trotter_propagators(h, dt, ts), h.dim, h.base_frequency, samples_per_period
    )


def second_frame_modes(m: FloquetModes, spec: ThreeLevelFirstFrame) -> FloquetModes:
    """Map first-frame modes to the second rotating frame.

    M(t) = diag(exp(i d t)) W^dagger only shifts harmonic indices (d is a
    multiple of w), so the transform is exact and quasi-energies are unchanged.
    """
    w, d = second_frame_basis(spec.delta)
    shifts = np.rint(d / m.base_frequency).astype(int)
    k = m.truncation
    k_out = k + int(np.max(np.abs(shifts)))
    rotated = np.einsum("jk,mnk->mnj", w.conj().T, m.components)
    comps = np.zeros((m.dim, 2 * k_out + 1, m.dim), dtype=complex)
    for j, s in enumerate(shifts):
        # new harmonic n takes old harmonic n + s
        start = k_out - k - s
        comps[:, start : start + 2 * k + 1, j] = rotated[:, :, j]
    return FloquetModes(m.dim, m.base_frequency, k_out, m.quasi_energies.copy(), _fix_gauge(comps, k_out))


def evolve_spec(
    spec: DriveSpec,
    psi0,
    times: np.ndarray,
    method: str = "floquet",
    truncation: int = 100,
    dt: float | None = None,
    tail_tol: float | None = 1e-10,
) -> EvolutionTrace:
    """Evolve a drive spec and return the trace in its measurement frame.

    First-frame three-level drives are propagated in that frame and then
    mapped to the second rotating frame, where the weighted Rabi probe is
    defined.  ``psi0`` is always given in the measurement frame.
    """
    h = build(spec)
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi0, dtype=complex)
    first_frame = isinstance(spec, ThreeLevelFirstFrame)
    if first_frame:
        psi = second_frame_unitary(spec, 0.0).conj().T @ psi
    if method == "floquet":
        m = solve_modes(h, truncation, tail_tol=tail_tol)
        trace = floquet_evolve(m, initial_coefficients(m, psi), times)
    elif method == "trotter":
        if dt is None:
            raise ValueError("trotter evolution needs dt")
        trace = EvolutionTrace(times, _trotter_run(h, psi, dt, times), "trotter", dt)
    else:
        raise ValueError(f"unknown evolution method {method!r}")
    if first_frame:
        trace = transform_trace(trace, lambda t: second_frame_unitary(spec, t))
    return trace

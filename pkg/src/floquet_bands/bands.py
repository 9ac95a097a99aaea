"""Dipole elements, Mollow band amplitudes, spectra and the pump-probe susceptibility."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import RabiTrace, evolve_spec, weighted_rabi
from .floquet import FloquetModes, ModeCoefficients
from .hamiltonians import DriveSpec, EnsembleSpec, ensemble_members, set_parameter
from .operators import ProbeOperator

MHZ = 2 * np.pi * 1e6
VISIBLE = 1e-3
VANISHING = 1e-6


class NonuniformGrid(ValueError):
    pass


class SweepPointError(RuntimeError):
    """A sweep point failed; ``value`` names it and ``cause`` is the original error."""

    def __init__(self, value: float, cause: Exception):
        super().__init__(f"sweep value {value:.9g}: {type(cause).__name__}: {cause}")
        self.value = value
        self.cause = cause


# --- dipole elements -------------------------------------------------------


def dipole_tensor(m: FloquetModes, v: ProbeOperator, n_max: int) -> np.ndarray:
    """All V^{(n)}_{mu,nu} for |n| <= n_max, indexed [mu, nu, n + n_max].

    V^{(n)}_{mu,nu} = sum_p <Phi^mu_p| V |Phi^nu_{p-n}>.
    """
    k = m.truncation
    n_max = int(n_max)
    if n_max > 2 * k:
        raise ValueError(f"|n| must be <= 2K = {2 * k}")
    phi = m.components  # (N, B, d)
    vphi = np.einsum("ij,mbj->mbi", v.matrix, phi)
    nb = phi.shape[1]
    out = np.zeros((m.dim, m.dim, 2 * n_max + 1), dtype=complex)
    for idx, n in enumerate(range(-n_max, n_max + 1)):
        if n >= 0:
            a, b = phi[:, n:], vphi[:, : nb - n]
        else:
            a, b = phi[:, : nb + n], vphi[:, -n:]
        out[:, :, idx] = np.einsum("mbi,vbi->mv", a.conj(), b)
    return out


def dipole_element(m: FloquetModes, v: ProbeOperator, mu: int, nu: int, n: int) -> complex:
    k = m.truncation
    if abs(n) > 2 * k - 1:
        raise ValueError(f"|n| must be <= 2K-1 = {2 * k - 1}")
    return complex(dipole_tensor(m, v, abs(n))[mu, nu, n + abs(n)])


# --- band amplitudes ---------------------------------------------------------


@dataclass(frozen=True)
class BandAmplitude:
    """One spectral line a cos(f t + arg a) of the weighted Rabi signal.

    ``members`` lists every (mu, nu, n) term pooled at this frequency.  Pooled
    centerbands carry ``mu = nu = None``.  At f = 0 the amplitude is twice the
    DC level, matching the centerband formula.
    """

    mu: int | None
    nu: int | None
    n: int
    frequency: float
    amplitude: complex
    members: tuple[tuple[int, int, int], ...] = field(default=())

    @property
    def kind(self) -> str:
        diag = [mu == nu for mu, nu, _ in self.members]
        if all(diag):
            return "centerband"
        if not any(diag):
            return "sideband"
        return "mixed"

    @property
    def magnitude(self) -> float:
        return abs(self.amplitude)


def band_terms(
    m: FloquetModes, c: ModeCoefficients, v: ProbeOperator, n_max: int
) -> list[tuple[int, int, int, float, complex]]:
    """Unpooled (mu, nu, n, frequency, 2 c*_mu c_nu V^{(n)}/norm) with frequency >= 0."""
    if v.norm == 0:
        return []
    d = dipole_tensor(m, v, n_max)
    w = m.base_frequency
    lam = m.quasi_energies
    cv = c.values
    tol = 1e-9 * w
    out = []
    for idx, n in enumerate(range(-n_max, n_max + 1)):
        for mu in range(m.dim):
            for nu in range(m.dim):
                f = n * w + lam[mu] - lam[nu]
                if f < -tol:
                    continue
                a = 2 * np.conj(cv[mu]) * cv[nu] * d[mu, nu, idx] / v.norm
                out.append((mu, nu, n, max(f, 0.0) if abs(f) <= tol else f, a))
    return out


def band_amplitudes(
    m: FloquetModes,
    c: ModeCoefficients,
    v: ProbeOperator,
    n_max: int = 10,
    pool_tol: float = 1e-6,
) -> list[BandAmplitude]:
    """Predicted bands up to order ``n_max``, degenerate frequencies summed coherently."""
    terms = sorted(band_terms(m, c, v, n_max), key=lambda t: t[3])
    w = m.base_frequency
    bands: list[BandAmplitude] = []
    group: list = []

    def flush():
        if not group:
            return
        members = tuple(sorted(((mu, nu, n) for mu, nu, n, _, _ in group), key=lambda x: (x[0] != x[1], x)))
        total = sum(a for *_, a in group)
        # f ~ 0 terms come with their conjugate partners; the pair sums to 2 Re
        if abs(group[0][3]) <= pool_tol * w:
            total = complex(total.real, 0.0)
        mu, nu, n = members[0]
        centre = all(a == b for a, b, _ in members)
        freq = next(f for a, b, k, f, _ in group if (a, b, k) == members[0])
        bands.append(
            BandAmplitude(None if centre else mu, None if centre else nu, n, freq, complex(total), members)
        )

    for term in terms:
        if group and term[3] - group[-1][3] > pool_tol * w:
            flush()
            group = []
        group.append(term)
    flush()
    return bands


# --- spectra -----------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    frequencies_mhz: np.ndarray  # positive bins only
    magnitudes: np.ndarray
    dc: float


def _check_uniform(times: np.ndarray) -> float:
    steps = np.diff(times)
    if steps.size == 0 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
        raise NonuniformGrid("trace times must be a uniform increasing grid")
    return float(steps.mean())


def fft_spectrum(r: RabiTrace, window: str = "rect") -> Spectrum:
    """One-sided amplitude spectrum; a cosine of amplitude A peaks at A.

    The transform uses the first N-1 samples of an N-point closed grid, so
    the record length is t_end and the resolution 1/t_end.
    """
    step = _check_uniform(np.asarray(r.times))
    x = np.asarray(r.values, dtype=float)[:-1]
    m = x.size
    if window == "rect":
        win = np.ones(m)
    elif window == "hann":
        win = np.hanning(m + 1)[:-1]  # periodic Hann
    else:
        raise ValueError(f"unknown window {window!r}")
    spec = np.fft.rfft(x * win)
    gain = win.sum()
    mags = 2 * np.abs(spec) / gain
    if m % 2 == 0:
        mags[-1] /= 2  # Nyquist bin has no mirror image
    freqs = np.fft.rfftfreq(m, step) / 1e6
    return Spectrum(freqs[1:], mags[1:], float(spec[0].real / gain))


def harmonic_fit(r: RabiTrace, frequencies: Sequence[float]) -> tuple[np.ndarray, float]:
    """Least-squares amplitudes of cos/sin at known angular frequencies.

    Returns complex amplitudes a (signal term |a| cos(f t + arg a)) and the DC
    level.  Exact for a finite sum of sinusoids at those frequencies, so it
    has no leakage between well-separated lines.
    """
    t = np.asarray(r.times, dtype=float)
    y = np.asarray(r.values, dtype=float)
    f = np.asarray(frequencies, dtype=float)
    cols = [np.ones_like(t)]
    for fj in f:
        cols.append(np.cos(fj * t))
        cols.append(np.sin(fj * t))
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    amps = coef[1::2] - 1j * coef[2::2]
    return amps, float(coef[0])


@dataclass(frozen=True)
class SpectrumMap:
    parameter: str
    values: np.ndarray
    frequencies_mhz: np.ndarray
    magnitudes: np.ndarray  # (len(values), len(frequencies))
    dc: np.ndarray

    def to_csv(self, path) -> None:
        lines = ["sweep_value,frequency_mhz,magnitude"]
        for i, val in enumerate(self.values):
            for f, mag in zip(self.frequencies_mhz, self.magnitudes[i]):
                lines.append(f"{val:.9g},{f:.9g},{mag:.9g}")
        Path(path).write_text("\n".join(lines) + "\n")


def point_trace(
    spec: DriveSpec,
    psi0,
    probes: Mapping[str, ProbeOperator],
    times: np.ndarray,
    method: str = "floquet",
    truncation: int = 100,
    dt: float | None = None,
    ensemble: tuple[float, int, float] | None = None,
    tail_tol: float | None = 1e-10,
) -> dict[str, RabiTrace]:
    """Weighted Rabi traces for one drive, optionally averaged over a detuning ensemble."""
    if ensemble is None:
        members = [(spec, 1.0)]
    else:
        sigma, count, span = ensemble
        members = ensemble_members(EnsembleSpec(spec, sigma, count, span))
    acc = {name: np.zeros(len(times)) for name in probes}
    for member, weight in members:
        trace = evolve_spec(member, psi0, times, method, truncation, dt, tail_tol)
        for name, v in probes.items():
            acc[name] += weight * weighted_rabi(trace, v).values
    return {name: RabiTrace(times, vals) for name, vals in acc.items()}


def sweep_spectrum(
    template: DriveSpec,
    parameter: str,
    values: Sequence[float],
    psi0,
    probes: ProbeOperator | Mapping[str, ProbeOperator],
    times: np.ndarray,
    method: str = "floquet",
    truncation: int = 100,
    dt: float | None = None,
    ensemble: tuple[float, int, float] | None = None,
    tail_tol: float | None = 1e-10,
    window: str = "rect",
    threads: int | None = 1,
):
    """Intensity map(s) over a parameter sweep.

    Returns one SpectrumMap for a single probe, or a dict keyed like
    ``probes`` when a mapping is given.  Rows follow ``values`` regardless of
    the order in which threads finish.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("sweep needs at least one value")
    single = isinstance(probes, ProbeOperator)
    probe_map = {"probe": probes} if single else dict(probes)

    def run(val):
        try:
            spec = set_parameter(template, parameter, float(val))
            traces = point_trace(spec, psi0, probe_map, times, method, truncation, dt, ensemble, tail_tol)
            return {name: fft_spectrum(tr, window) for name, tr in traces.items()}
        except Exception as exc:  # re-raised with the sweep value attached
            raise SweepPointError(float(val), exc) from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, values))
    else:
        rows = [run(v) for v in values]

    maps = {}
    for name in probe_map:
        specs = [row[name] for row in rows]
        maps[name] = SpectrumMap(
            parameter,
            values,
            specs[0].frequencies_mhz,
            np.stack([s.magnitudes for s in specs]),
            np.array([s.dc for s in specs]),
        )
    return maps["probe"] if single else maps


# --- susceptibility ----------------------------------------------------------


@dataclass(frozen=True)
class SusceptibilityParams:
    populations: np.ndarray
    dephasing: float | np.ndarray
    coupling: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.populations, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
            raise ValueError("populations must be non-negative and sum to 1")
        if np.any(np.asarray(self.dephasing) <= 0):
            raise ValueError("dephasing rates must be positive")
        object.__setattr__(self, "populations", p)


def susceptibility(
    m: FloquetModes, v: ProbeOperator, params: SusceptibilityParams, n: int, omega_probe: float
) -> complex:
    """chi_n at probe frequency omega_probe (rad/s).

    chi_n = i g^2 sum_{mu,nu,m} V^{(-n-m)}_{nu,mu} V^{(m)}_{mu,nu} (p_nu - p_mu)
            / (lam_mu - lam_nu + m w - omega_probe - i gamma)

    with the sum over m truncated so both orders stay within |.| <= 2K-1.
    ``params.dephasing`` is a scalar or an array indexed [nu, mu, m + M].
    """
    k = m.truncation
    top = 2 * k - 1
    d = dipole_tensor(m, v, top)
    lam = m.quasi_energies
    p = params.populations
    total = 0j
    gam = np.asarray(params.dephasing, dtype=float)
    for order in range(-top, top + 1):
        other = -n - order
        if abs(other) > top:
            continue
        g = gam if gam.ndim == 0 else gam[:, :, order + top]
        num = d[:, :, other + top].T * d[:, :, order + top] * (p[None, :] - p[:, None])
        den = lam[:, None] - lam[None, :] + order * m.base_frequency - omega_probe - 1j * (g if np.ndim(g) == 0 else g.T)
        total += np.sum(num / den)
    return 1j * params.coupling**2 * total

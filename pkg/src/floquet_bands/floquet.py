"""Truncated Floquet matrix, quasi-energies in the first zone and mode coefficients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonians import FourierHamiltonian


class FloquetError(RuntimeError):
    """Base class for numerical failures of the Floquet solver."""


class TruncationTooSmall(FloquetError):
    pass


class DegenerateSelection(FloquetError):
    pass


class SingularBasis(FloquetError):
    pass


@dataclass(frozen=True)
class FloquetModes:
    """Representative Floquet modes.

    ``components[mu, n + K, :]`` is the Fourier vector Phi_n of mode ``mu``;
    quasi-energies lie in (-w/2, w/2] and are sorted ascending.
    """

    dim: int
    base_frequency: float
    truncation: int
    quasi_energies: np.ndarray
    components: np.ndarray

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)

    @property
    def period(self) -> float:
        return 2 * np.pi / self.base_frequency

    def tail_weight(self, width: int = 5) -> np.ndarray:
        """Weight of each mode on the outermost ``width`` blocks at either edge."""
        k = self.truncation
        mask = np.abs(self.harmonics) > k - width
        return np.sum(np.abs(self.components[:, mask, :]) ** 2, axis=(1, 2))

    def min_gap(self) -> float:
        """Smallest quasi-energy separation, counted modulo w."""
        lam = np.sort(self.quasi_energies)
        if lam.size < 2:
            return float(self.base_frequency)
        gaps = np.diff(np.concatenate([lam, [lam[0] + self.base_frequency]]))
        return float(gaps.min())

    def at_time(self, t) -> np.ndarray:
        """Mode vectors Phi^mu(t): shape (N, dim) for scalar t, (len(t), N, dim) otherwise."""
        t_arr = np.asarray(t, dtype=float)
        ph = np.exp(-1j * self.base_frequency * np.multiply.outer(t_arr, self.harmonics))
        return np.einsum("...n,mnk->...mk", ph, self.components)


@dataclass(frozen=True)
class ModeCoefficients:
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def assemble_floquet_matrix(h: FourierHamiltonian, truncation: int) -> np.ndarray:
    """Block (p, q) = H_{p-q} - p w delta_pq with p running from -K (top) to +K."""
    k = int(truncation)
    if k < h.max_harmonic:
        raise ValueError(f"truncation {k} is below the maximum harmonic {h.max_harmonic}")
    n = h.dim
    nb = 2 * k + 1
    mat = np.zeros((nb * n, nb * n), dtype=complex)
    blocks = mat.reshape(nb, n, nb, n)
    for d, hd in h.components.items():
        if abs(d) > 2 * k or not np.any(hd):
            continue
        p = np.arange(max(0, d), min(nb, nb + d))
        blocks[p, :, p - d, :] += hd
    diag = np.repeat(-np.arange(-k, k + 1) * h.base_frequency, n)
    mat[np.diag_indices_from(mat)] += diag
    return mat


def solve_modes(
    h: FourierHamiltonian,
    truncation: int = 100,
    tail_tol: float | None = 1e-10,
    zone_tol: float = 1e-9,
    copy_tol: float = 1e-3,
) -> FloquetModes:
    """Diagonalise the truncated Floquet matrix and pick N representatives.

    Every eigenpair (lam, Phi_p) has copies (lam + m w, Phi_{p+m}).  For each
    physical mode the copy most concentrated on the central blocks (smallest
    second moment of the block index) is taken
    (it carries the least truncation error) and then block-shifted so its
    quasi-energy lands in (-w/2, w/2]; the stored harmonic range widens by the
    shift.  Quasi-energies within ``zone_tol * w`` of -w/2 go to +w/2.
    ``tail_tol=None`` disables the truncation check.
    """
    k = int(truncation)
    n = h.dim
    w = h.base_frequency
    evals, evecs = np.linalg.eigh(assemble_floquet_matrix(h, k))
    vecs = evecs.T.reshape(-1, 2 * k + 1, n)

    blocks = np.arange(-k, k + 1)
    central = np.abs(blocks) <= k // 2
    block_weight = np.sum(np.abs(vecs) ** 2, axis=2)
    weight = block_weight[:, central].sum(axis=1)
    spread = block_weight @ blocks.astype(float) ** 2
    order = np.lexsort((np.abs(evals), spread))

    chosen: list[tuple[float, int, np.ndarray]] = []  # (zone value, shift, raw vector)
    for i in order:
        if weight[i] < 0.5:
            continue
        lam = evals[i]
        shift = int(np.ceil((-w / 2 + zone_tol * w - lam) / w))  # smallest m with lam + m w > -w/2
        lam_zone = lam + shift * w
        vec = vecs[i]
        duplicate = False
        for lz2, s2, v2 in chosen:
            if abs(lam_zone - lz2) >= copy_tol * w:
                continue
            o = _shifted_overlap(v2, s2, vec, shift)
            if abs(o) > 0.5:
                duplicate = True
                break
            # degenerate modulo w: eigh may mix this mode with a copy of v2
            vec = vec - o * _shifted_copy(v2, shift - s2)
        if duplicate:
            continue
        chosen.append((float(lam_zone), shift, vec / np.linalg.norm(vec)))
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise DegenerateSelection(f"found {len(chosen)} well-concentrated modes, expected {n}")

    if tail_tol is not None:
        edge = np.abs(np.arange(-k, k + 1)) > k - 5
        tail = max(float(np.sum(np.abs(v[edge]) ** 2)) for _, _, v in chosen)
        if tail > tail_tol:
            raise TruncationTooSmall(
                f"tail weight {tail:.3e} exceeds {tail_tol:.1e} at truncation K={k}"
            )

    chosen.sort(key=lambda item: item[0])
    k_out = k + max(abs(s) for _, s, _ in chosen)
    comps = np.zeros((n, 2 * k_out + 1, n), dtype=complex)
    for mu, (_, s, v) in enumerate(chosen):
        # Phi'_p = Phi_{p+s}: raw block q lands at p = q - s
        start = k_out - k - s
        comps[mu, start : start + 2 * k + 1] = v / np.linalg.norm(v)
    lam = np.array([lz for lz, _, _ in chosen])
    return FloquetModes(n, w, k_out, lam, _fix_gauge(comps, k_out))


def _shifted_overlap(a: np.ndarray, sa: int, b: np.ndarray, sb: int) -> complex:
    """<a'|b'> for block-shifted copies a'_p = a_{p+sa}, b'_p = b_{p+sb}."""
    d = sb - sa  # a'_p = a_{p+sa}, b'_p = b_{p+sa+d}: compare a_q with b_{q+d}
    nb = a.shape[0]
    if abs(d) >= nb:
        return 0.0
    if d >= 0:
        return np.vdot(a[: nb - d], b[d:])
    return np.vdot(a[-d:], b[: nb + d])


def _shifted_copy(a: np.ndarray, d: int) -> np.ndarray:
    """c_r = a_{r-d}, zero outside the stored range (the partner of _shifted_overlap)."""
    c = np.zeros_like(a)
    nb = a.shape[0]
    if abs(d) >= nb:
        return c
    if d >= 0:
        c[d:] = a[: nb - d]
    else:
        c[: nb + d] = a[-d:]
    return c


def _fix_gauge(comps: np.ndarray, k: int) -> np.ndarray:
    """Make the largest component of each Phi_0 real positive.

    Near-ties (within 1e-6 relative) go to the lowest index so the gauge does
    not flip with round-off.  A mode whose Phi_0 is negligible (a copy sitting
    on the zone edge) is fixed on its heaviest harmonic block instead.
    """
    out = comps.copy()
    for mu in range(out.shape[0]):
        block = k
        if np.linalg.norm(out[mu, k]) < 1e-6:
            block = int(np.argmax(np.linalg.norm(out[mu], axis=1)))
        ref = out[mu, block]
        mag = np.abs(ref)
        j = int(np.flatnonzero(mag >= (1 - 1e-6) * mag.max())[0])
        if mag[j] > 0:
            out[mu] *= np.exp(-1j * np.angle(ref[j]))
    return out


def mode_at_time(m: FloquetModes, mu: int, t) -> np.ndarray:
    """Phi^mu(t) = sum_n Phi_n exp(-i n w t)."""
    return m.at_time(t)[..., mu, :]


def initial_coefficients(m: FloquetModes, psi0, cond_limit: float = 1e10) -> ModeCoefficients:
    """Solve sum_mu c_mu Phi^mu(0) = psi0."""
    basis = m.at_time(0.0).T  # columns are Phi^mu(0)
    psi = np.asarray(psi0, dtype=complex)
    if np.linalg.cond(basis) > cond_limit:
        raise SingularBasis("mode vectors at t=0 are (nearly) linearly dependent")
    c = np.linalg.solve(basis, psi)
    return ModeCoefficients(c)


def modes_from_propagator(
    propagate,
    dim: int,
    base_frequency: float,
    samples_per_period: int,
) -> FloquetModes:
    """Floquet modes from the one-period propagator instead of the Floquet matrix.

    ``propagate(ts)`` must return the propagators U(t, 0) at the uniformly
    spaced times ``ts`` covering one period, including t = T as the last
    entry.  Modes are eigenvectors of U(T); their periodic parts are Fourier
    transformed over the period.  Harmonics up to samples_per_period/2 are
    resolved, so the sample count must exceed twice the drive bandwidth.
    """
    w = base_frequency
    period = 2 * np.pi / w
    ts = np.linspace(0.0, period, samples_per_period + 1)
    us = propagate(ts)
    evals, evecs = np.linalg.eig(us[-1])
    lam = -np.angle(evals) / period
    lam = np.where(lam <= -w / 2, lam + w, lam)
    # mode-by-mode orthonormalisation; U(T) is unitary so eigenvectors of distinct
    # eigenvalues are orthogonal, QR fixes round-off and degenerate subspaces
    q, _ = np.linalg.qr(evecs)
    phases = np.exp(1j * np.outer(ts[:-1], lam))  # (T, N)
    periodic = np.einsum("tij,jm->tmi", us[:-1], q) * phases[:, :, None]
    k = (samples_per_period - 1) // 2
    coeffs = np.fft.fft(periodic, axis=0) / samples_per_period
    # exp(-i n w t) convention: Phi_n sits at FFT index -n
    harm = np.arange(-k, k + 1)
    comps = np.transpose(coeffs[(-harm) % samples_per_period], (1, 0, 2))
    srt = np.argsort(lam)
    comps = comps[srt]
    comps /= np.sqrt(np.sum(np.abs(comps) ** 2, axis=(1, 2)))[:, None, None]
    return FloquetModes(dim, w, k, lam[srt], _fix_gauge(comps, k))

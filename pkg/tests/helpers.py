"""Shared numerics for the test-suite: folded harmonic fits of simulated traces."""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from floquet_bands.bands import harmonic_fit
from floquet_bands.dynamics import RabiTrace

DARK = ("spDS", "spDB", "siT-destructive")


def fold(freq_hz: np.ndarray, fs: float) -> np.ndarray:
    """Alias frequencies into [0, fs/2]."""
    f = np.mod(np.abs(freq_hz), fs)
    return np.where(f > fs / 2, fs - f, f)


def fitted_band_magnitudes(trace: RabiTrace, band_freqs_rad, min_separation: float):
    """Least-squares magnitude of every band in a sampled trace.

    Bands above Nyquist are folded; bands sharing a folded frequency (within
    1e-6 fs) are fitted together.  Returns None when two distinct fit
    frequencies are closer than ``min_separation`` Hz (ill-conditioned fit).
    """
    t = trace.times
    fs = 1.0 / (t[1] - t[0])
    ff = fold(np.asarray(band_freqs_rad) / (2 * np.pi), fs)
    positive = np.sort(ff[ff > 0])
    clusters: list[list[float]] = []
    for f in positive:
        if clusters and f - clusters[-1][-1] < 1e-6 * fs:
            clusters[-1].append(f)
        else:
            clusters.append([f])
    centers = np.array([np.mean(c) for c in clusters])
    if len(centers) > 1 and np.min(np.diff(centers)) < min_separation:
        return None
    amps, dc = harmonic_fit(trace, 2 * np.pi * centers)
    out = np.empty(len(ff))
    for i, f in enumerate(ff):
        if f == 0:
            out[i] = abs(2 * dc)
        else:
            out[i] = abs(amps[int(np.argmin(np.abs(centers - f)))])
    return out


def manifold_maxima(bands, magnitudes, n_limit: int) -> dict[int, float]:
    mx: dict[int, float] = defaultdict(float)
    for b, mag in zip(bands, magnitudes):
        if b.n <= n_limit:
            mx[b.n] = max(mx[b.n], mag)
    return mx

"""End-to-end acceptance checks; each test records one summary line."""
import time

import numpy as np
import pytest
from scipy.special import jn_zeros

from conftest import ACCEPTANCE_LINES
from helpers import DARK, fitted_band_magnitudes, manifold_maxima
from test_properties import PROPERTY_TESTS

from floquet_bands.bands import MHZ, VANISHING, VISIBLE, band_amplitudes, fft_spectrum
from floquet_bands.config import load_config, resolve
from floquet_bands.dynamics import (
    evolve_spec,
    floquet_evolve,
    modes_from_trotter,
    second_frame_modes,
    state_fidelity,
    weighted_rabi,
)
from floquet_bands.floquet import initial_coefficients, solve_modes
from floquet_bands.hamiltonians import PhaseModTLS, ThreeLevelFirstFrame, ThreeLevelRotating, build, set_parameter
from floquet_bands.operators import ProbeOperator, named_state
from floquet_bands.symmetry import (
    AmbiguousAtDegeneracy,
    alpha_v,
    locate_degeneracy,
    locate_equal_populations,
    mode_symmetry_phases,
    named_symmetry,
    predict_selection_rules,
    verify_symmetry,
)

CDT_W = 15 * MHZ
N_FIT = 30
GAP_FLOOR = 1e-4  # in units of w_m
# a 1e-6 relative check needs 1e-6 * max well above the ~1e-15 round-off of a fitted trace
NOISE_FLOOR = 1e-8


def record(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def measured_bands(m, c, v, symmetries, times, n_fit=N_FIT):
    """Prediction plus fitted magnitudes of a simulated trace, or None if unresolvable."""
    if m.min_gap() < GAP_FLOOR * m.base_frequency:
        return None
    try:
        phases = [(s, mode_symmetry_phases(m, s)) for s in symmetries]
    except AmbiguousAtDegeneracy:
        return None
    report = predict_selection_rules(m, phases, v, c, n_fit)
    trace = weighted_rabi(floquet_evolve(m, c, times), v)
    mags = fitted_band_magnitudes(trace, [b.frequency for b in report.bands], 0.05 / times[-1])
    if mags is None:
        return None
    return report, mags


def sweep_point(run, value):
    m = solve_modes(build(set_parameter(run.spec, run.sweep_parameter, value)), run.truncation)
    return m, initial_coefficients(m, run.psi0)


# --- 1 and 8: degeneracy location ------------------------------------------------


def test_criterion_1_degeneracy_point():
    t0 = time.perf_counter()
    x = locate_degeneracy(PhaseModTLS(1.5 * MHZ, 0.0, CDT_W), "modulation_index", (2.0, 2.8))
    elapsed = time.perf_counter() - t0
    ok = abs(x - 2.4048) <= 0.01 and elapsed < 30
    assert record(1, ok, f"degeneracy at 2eps/w = {x:.5f} (target 2.4048 +- 0.01), {elapsed:.1f} s")


def test_criterion_8_bessel_limit():
    root = jn_zeros(0, 1)[0]
    x = locate_degeneracy(PhaseModTLS(0.15 * MHZ, 0.0, CDT_W), "modulation_index", (2.0, 2.8))
    ok = abs(x - root) <= 1e-3
    assert record(8, ok, f"Omega = w/100 degeneracy {x:.6f} vs Bessel root {root:.6f} (|diff| {abs(x - root):.1e})")


# --- 2: interference at the degeneracy ---------------------------------------------


def _odd_sideband_fft(spec, psi, x, times):
    point = set_parameter(spec, "modulation_index", x)
    trace = weighted_rabi(evolve_spec(point, psi, times), ProbeOperator.named("sigma_x"))
    s = fft_spectrum(trace)
    return float(s.magnitudes[int(np.argmin(np.abs(s.frequencies_mhz - CDT_W / MHZ)))])


def test_criterion_2_interference():
    t0 = time.perf_counter()
    x = locate_degeneracy(PhaseModTLS(1.5 * MHZ, 0.0, CDT_W), "modulation_index", (2.0, 2.8))
    times = np.linspace(0.0, 2e-6, 401)
    residual = _odd_sideband_fft(PhaseModTLS(1.5 * MHZ, 0.0, CDT_W, 0.0), named_state("0"), x, times)
    boosted = _odd_sideband_fft(PhaseModTLS(1.5 * MHZ, 0.0, CDT_W, np.pi / 2), named_state("+i"), x, times)
    elapsed = time.perf_counter() - t0
    destructive = residual < 1e-4
    constructive = boosted > 10 * residual
    ok = destructive and constructive and elapsed < 60
    assert record(
        2,
        ok,
        f"|0>, sigma_x odd sideband {residual:.3e} (need < 1e-4: {'ok' if destructive else 'no'}); "
        f"|+i>, phi=pi/2 {boosted:.3e} vs 10x residual {10 * residual:.3e} ({'ok' if constructive else 'no'}); "
        f"{elapsed:.1f} s",
    )


# --- 3: parity and particle-hole rules -------------------------------------------------


@pytest.fixture(scope="module")
def fig1_results():
    results = {}
    syms = [named_symmetry("parity_x"), named_symmetry("particle_hole_z")]
    for name in ("fig1a", "fig1b", "fig1c", "fig1d"):
        run = resolve(load_config(name))
        (v,) = run.probes.values()
        phi = run.spec.phi
        worst_dark, weakest_visible, centre, skipped = 0.0, np.inf, 0.0, 0
        for value in run.sweep_values:
            m, c = sweep_point(run, value)
            res = measured_bands(m, c, v, syms, run.times)
            if res is None:
                skipped += 1
                continue
            report, mags = res
            mx = manifold_maxima(report.bands, mags, N_FIT)
            for b, mag in zip(report.bands, mags):
                if b.kind == "centerband" and b.n == 0:
                    continue  # DC level
                if b.verdict in DARK and b.verdict != "siT-destructive" and mx[b.n] > NOISE_FLOOR:
                    worst_dark = max(worst_dark, mag / mx[b.n])
                if b.verdict == "visible" and b.predicted > 1e-2:
                    weakest_visible = min(weakest_visible, mag)
                if phi == 0 and b.kind == "centerband" and mx[b.n] > NOISE_FLOOR:
                    centre = max(centre, mag / mx[b.n])
        results[name] = (worst_dark, weakest_visible, centre if phi == 0 else None, skipped, len(run.sweep_values))
    return results


def test_criterion_3_parity_and_particle_hole(fig1_results):
    parts, ok = [], True
    for name, (dark, visible, centre, skipped, total) in fig1_results.items():
        good = dark < VANISHING and visible > VISIBLE and (centre is None or centre < VANISHING)
        ok &= good
        cb = "" if centre is None else f", centerbands {centre:.1e}"
        parts.append(f"{name}: dark {dark:.1e}, weakest visible {visible:.3f}{cb}, skipped {skipped}/{total}")
    assert record(3, ok, "; ".join(parts) + " (relative to manifold max)")


# --- 4: symmetry breaking ------------------------------------------------------------


def _formerly_forbidden_sigma_x(b):
    return (b.kind == "sideband" and b.n % 2 == 0) or (b.kind == "centerband" and b.n % 2 == 1)


def test_criterion_4_symmetry_breaking():
    run = resolve(load_config("fig2"))
    v = run.probes["sigma_x"]
    probe_spec = set_parameter(run.spec, "modulation_index", 3.0)
    h = build(probe_spec)
    parity = verify_symmetry(h, named_symmetry("parity_x")) / probe_spec.epsilon_m
    ph = verify_symmetry(h, named_symmetry("particle_hole_z")) / probe_spec.epsilon_m
    checked, hits, weakest = 0, 0, np.inf
    for label, value in zip(run.sweep_labels, run.sweep_values):
        if label <= 2:
            continue
        m, c = sweep_point(run, value)
        res = measured_bands(m, c, v, [], run.times)
        if res is None:
            continue
        report, mags = res
        best = max((mag for b, mag in zip(report.bands, mags) if _formerly_forbidden_sigma_x(b)), default=0.0)
        checked += 1
        hits += best > VISIBLE
        weakest = min(weakest, best)
    ok = checked > 0 and hits == checked and parity > 0.1 and ph > 0.1
    assert record(
        4,
        ok,
        f"formerly forbidden band > {VISIBLE:g} at {hits}/{checked} resolvable points above 2 "
        f"(weakest strongest {weakest:.3e}); residuals parity {parity:.2f} eps, particle-hole {ph:.2f} eps",
    )


# --- 5: accidental dark centerband ------------------------------------------------------


def test_criterion_5_accidental_dark():
    run = resolve(load_config("fig1c"))
    v = run.probes["sigma_z"]
    excess = []
    for value in run.sweep_values:
        _, c = sweep_point(run, value)
        excess.append(c.populations[-1] - 0.5)
    excess = np.array(excess)
    flips = np.flatnonzero(np.sign(excess[:-1]) != np.sign(excess[1:]))
    # a jump across 1/2 is the sorted mode labels swapping where quasi-energies meet, not a crossing
    flips = [i for i in flips if max(abs(excess[i]), abs(excess[i + 1])) < 0.25]
    in_bracket = [i for i in flips if 3.5 < run.sweep_labels[i] and run.sweep_labels[i + 1] < 4.1]
    lo, hi = (run.sweep_labels[flips[0]], run.sweep_labels[flips[0] + 1]) if flips else (3.5, 4.1)
    x = locate_equal_populations(run.spec, "modulation_index", (lo, hi), run.psi0)

    def centre_band(xv):
        m = solve_modes(build(set_parameter(run.spec, "modulation_index", xv)), run.truncation)
        c = initial_coefficients(m, run.psi0)
        mags = [b.magnitude for b in band_amplitudes(m, c, v, 1) if b.kind == "centerband" and b.n == 1]
        return mags[0] if mags else 0.0

    at_crossing = centre_band(x)
    local_max = max(centre_band(xv) for xv in np.linspace(x - 1.0, x + 1.0, 41))
    ratio = at_crossing / local_max
    ok = bool(in_bracket) and 3.5 < x < 4.1 and ratio < 1e-4
    assert record(
        5,
        ok,
        f"|c+|^2 = 1/2 at 2eps/w = {x:.4f} (required in (3.5, 4.1)); "
        f"n=1 centerband there {ratio:.1e} of its local max (need < 1e-4)",
    )


# --- 6: Floquet vs Trotter -------------------------------------------------------------

TLS_PRESETS = ["fig1a", "fig1b", "fig1c", "fig1d", "fig2", "fig3", "figS7", "figS9"]


def _oracle(run, spec_for_value, tol):
    t0 = time.perf_counter()
    worst = 0.0
    for value in run.oracle_values:
        spec = spec_for_value(value)
        a = evolve_spec(spec, run.psi0, run.times, "floquet", run.truncation, tail_tol=run.tail_tol)
        b = evolve_spec(spec, run.psi0, run.times, "trotter", dt=run.dt)
        worst = max(worst, float(np.max(1 - state_fidelity(a, b))))
    return worst, worst < tol, time.perf_counter() - t0


def test_criterion_6_oracle_equivalence():
    parts, ok = [], True
    for name in TLS_PRESETS:
        run = resolve(load_config(name))
        worst, good, secs = _oracle(run, lambda val: set_parameter(run.spec, run.sweep_parameter, val), 1e-6)
        if run.ensemble is not None:
            sigma, _, span = run.ensemble
            edge = lambda val: set_parameter(set_parameter(run.spec, run.sweep_parameter, val), "delta", span * sigma)
            w2, g2, s2 = _oracle(run, edge, 1e-6)
            worst, good, secs = max(worst, w2), good and g2, secs + s2
        good &= secs < 120
        ok &= good
        parts.append(f"{name} {worst:.1e}")
    run = resolve(load_config("figS11"))
    worst, good, secs = _oracle(run, lambda val: set_parameter(run.spec, run.sweep_parameter, val), 1e-4)
    good &= secs < 120
    ok &= good
    parts.append(f"figS11 {worst:.1e} ({secs:.0f} s, tol 1e-4)")
    assert record(6, ok, "max infidelity " + ", ".join(parts))


# --- 7: three-fold rotation rule ----------------------------------------------------------


def test_criterion_7_rotation_rule():
    run = resolve(load_config("fig4"))
    v = run.probes["three_level_V"]
    rot = named_symmetry("rotation_3")
    worst, checked, skipped = 0.0, 0, 0
    for value in run.sweep_values:
        m, c = sweep_point(run, value)
        res = measured_bands(m, c, v, [rot], run.times)
        if res is None:
            skipped += 1
            continue
        report, mags = res
        mx = manifold_maxima(report.bands, mags, 2)
        if mx[2] <= NOISE_FLOOR:
            skipped += 1
            continue
        checked += 1
        for b, mag in zip(report.bands, mags):
            if b.n == 2 and b.verdict in ("spDS", "spDB"):
                worst = max(worst, mag / mx[2])
    rule_ok = checked > 0 and worst < VANISHING

    violation, relative = _rwa_breakdown(6.0)
    breakdown_ok = violation > VISIBLE
    assert record(
        7,
        rule_ok and breakdown_ok,
        f"rotating frame: worst forbidden n=2 band {worst:.1e} of manifold max over {checked} points "
        f"({skipped} skipped); first frame at 2J/w = 6, Delta = 50 w: strongest forbidden n=2 band "
        f"{violation:.3e} ({relative:.2f} of manifold max)",
    )


def _rwa_breakdown(index: float):
    """Forbidden n=2 bands in the exact first-frame dynamics at large coupling."""
    w = 0.3 * MHZ
    period = 2 * np.pi / w
    v = ProbeOperator.named("three_level_V")
    rot = named_symmetry("rotation_3")
    ideal = solve_modes(build(ThreeLevelRotating(0.5 * index * w, w)), 60)
    labels = mode_symmetry_phases(ideal, rot).labels
    av = alpha_v(rot, v)
    spec = ThreeLevelFirstFrame(50 * w, 0.5 * index * w, w)
    per_period = 1024
    modes = second_frame_modes(modes_from_trotter(build(spec), period / per_period / 26, per_period), spec)
    ts = np.linspace(0, period, 64, endpoint=False)
    overlap = np.abs(np.einsum("tmi,tni->mn", ideal.at_time(ts).conj(), modes.at_time(ts)) / len(ts))
    match = overlap.argmax(axis=0)
    times = np.linspace(0.0, 40e-6, 401)
    trace = weighted_rabi(evolve_spec(spec, named_state("e_sum"), times, "trotter", dt=0.125e-9), v)
    lam = modes.quasi_energies
    keys = [(a, b, n) for n in range(5) for a in range(3) for b in range(3) if n * w + lam[a] - lam[b] > 1e-3 * w]
    freqs = [n * w + lam[a] - lam[b] for a, b, n in keys]
    mags = fitted_band_magnitudes(trace, freqs, 0.05 / times[-1])
    second = [(k, mg) for k, mg in zip(keys, mags) if k[2] == 2]
    peak = max(mg for _, mg in second)
    forbidden = [
        mg
        for (a, b, n), mg in second
        if abs(np.exp(2j * np.pi * (labels[match[a]] - labels[match[b]] - n) / 3) * av - 1) > 1e-6
    ]
    strongest = max(forbidden, default=0.0)
    return strongest, strongest / peak


# --- 9: property suites -----------------------------------------------------------------


def test_criterion_9_property_suites():
    t0 = time.perf_counter()
    failures = []
    for prop in PROPERTY_TESTS:
        try:
            prop()
        except Exception as exc:  # noqa: BLE001 - report every failing property
            failures.append(f"{prop.__name__}: {type(exc).__name__}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 300
    detail = f"{len(PROPERTY_TESTS) - len(failures)}/{len(PROPERTY_TESTS)} properties green on 200 examples each"
    if failures:
        detail += " (failing: " + ", ".join(failures) + ")"
    assert record(9, ok, detail + f", {elapsed:.0f} s")

"""Command-line front end: ``floquet-bands <modes|spectrum|predict|oracle-check>``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bands import MHZ, VISIBLE, SpectrumMap, SweepPointError, fft_spectrum, point_trace, sweep_spectrum
from .config import ConfigError, Run, dump_resolved, load_config, resolve
from .dynamics import StepTooLarge, evolve_spec, second_frame_modes, state_fidelity, weighted_rabi
from .floquet import FloquetError, initial_coefficients, solve_modes
from .hamiltonians import (
    PhaseModTLS,
    ThreeLevelFirstFrame,
    ThreeLevelRotating,
    build,
    build_three_level_second_frame,
    set_parameter,
)
from .symmetry import (
    AmbiguousAtDegeneracy,
    NoMatchingMode,
    SelectionRuleReport,
    mode_symmetry_phases,
    predict_selection_rules,
    symmetry_holds,
)

log = logging.getLogger("floquet_bands")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DARK = ("spDS", "spDB", "siT-destructive")


class PointFailure(Exception):
    """A sweep point failed; carries the value as written in the config."""

    def __init__(self, label: float, cause: BaseException):
        super().__init__(f"{type(cause).__name__} at sweep value {_fmt(label)}: {cause}")
        self.label = label
        self.cause = cause


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else f"{x:.9g}"


def _point_spec(run: Run, value: float):
    if run.sweep_parameter is None:
        return run.spec
    return set_parameter(run.spec, run.sweep_parameter, float(value))


def _map_points(fn, labels, values, threads: int):
    """Apply fn(label, value) to every point; results keep the input order."""

    def guarded(pair):
        label, value = pair
        try:
            return fn(label, value)
        except Exception as exc:
            raise PointFailure(label, exc) from exc

    pairs = list(zip(labels, values))
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, pairs))
    return [guarded(p) for p in pairs]


def _write(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


# --- modes ------------------------------------------------------------------------


def _bloch(phi0: np.ndarray) -> tuple[float, float, float]:
    a, b = phi0 / np.linalg.norm(phi0)
    ab = np.conj(a) * b
    return 2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2


def cmd_modes(run: Run, out: Path, threads: int) -> int:
    def point(label, value):
        m = solve_modes(build(_point_spec(run, value)), run.truncation, tail_tol=run.tail_tol)
        return m.quasi_energies / MHZ, m.at_time(0.0)

    rows = _map_points(point, run.sweep_labels, run.sweep_values, threads)
    n = run.dim
    lines = ["sweep_value," + ",".join(f"lambda_{i + 1}" for i in range(n))]
    for label, (lam, _) in zip(run.sweep_labels, rows):
        lines.append(",".join([_fmt(label)] + [f"{x:.9g}" for x in lam]))
    _write(out / "modes.csv", lines)
    if n == 2:
        lines = ["sweep_value,mode,x,y,z"]
        for label, (_, phi0) in zip(run.sweep_labels, rows):
            for mu in range(n):
                lines.append(",".join([_fmt(label), str(mu + 1)] + [f"{x:.9g}" for x in _bloch(phi0[mu])]))
        _write(out / "bloch.csv", lines)
    return EXIT_OK


# --- spectrum ---------------------------------------------------------------------


def spectrum_filenames(run: Run) -> dict[str, str]:
    names = list(run.probes)
    if len(names) == 1:
        return {names[0]: "spectrum.csv"}
    return {name: f"spectrum_{name}.csv" for name in names}


def compute_spectra(run: Run, threads: int) -> dict[str, SpectrumMap]:
    method = run.config.method
    if run.sweep_parameter is None:
        try:
            traces = point_trace(
                run.spec, run.psi0, run.probes, run.times, method, run.truncation, run.dt, run.ensemble, run.tail_tol
            )
        except Exception as exc:
            raise PointFailure(np.nan, exc) from exc
        maps = {}
        for name, tr in traces.items():
            s = fft_spectrum(tr)
            maps[name] = SpectrumMap("", run.sweep_labels, s.frequencies_mhz, s.magnitudes[None, :], np.array([s.dc]))
        return maps
    try:
        maps = sweep_spectrum(
            run.spec,
            run.sweep_parameter,
            run.sweep_values,
            run.psi0,
            run.probes,
            run.times,
            method=method,
            truncation=run.truncation,
            dt=run.dt,
            ensemble=run.ensemble,
            tail_tol=run.tail_tol,
            threads=threads,
        )
    except SweepPointError as exc:
        idx = int(np.argmin(np.abs(run.sweep_values - exc.value)))
        raise PointFailure(run.sweep_labels[idx], exc.cause) from exc
    param = run.config.sweep.parameter
    return {name: dataclasses.replace(mp, parameter=param, values=run.sweep_labels) for name, mp in maps.items()}


def cmd_spectrum(run: Run, out: Path, threads: int) -> int:
    maps = compute_spectra(run, threads)
    for name, fname in spectrum_filenames(run).items():
        maps[name].to_csv(out / fname)
    return EXIT_OK


# --- predict ----------------------------------------------------------------------


def _unbroken(spec):
    """The drive with its deliberate symmetry-breaking parts removed, or None."""
    if isinstance(spec, PhaseModTLS) and spec.breaking_terms:
        return dataclasses.replace(spec, breaking_terms=())
    if isinstance(spec, ThreeLevelFirstFrame):
        return ThreeLevelRotating(spec.coupling, spec.omega_m)
    return None


def _analysis_modes(spec, truncation: int, tail_tol):
    """Hamiltonian and modes in the measurement frame.

    First-frame drives are solved in their own frame (far fewer harmonics)
    and the modes are mapped to the second frame afterwards.
    """
    if isinstance(spec, ThreeLevelFirstFrame):
        m = solve_modes(build(spec), truncation, tail_tol=tail_tol)
        return build_three_level_second_frame(spec), second_frame_modes(m, spec)
    h = build(spec)
    return h, solve_modes(h, truncation, tail_tol=tail_tol)


def _predict_point(run: Run, spec, truncation: int, n_max: int):
    h, m = _analysis_modes(spec, truncation, run.tail_tol)
    c = initial_coefficients(m, run.psi0)
    notes = []
    phases = []
    for s in run.symmetries:
        if not s.approximate and not symmetry_holds(h, s):
            notes.append(f"{s.name}: does not hold, no rule")
            continue
        try:
            phases.append((s, mode_symmetry_phases(m, s)))
        except (AmbiguousAtDegeneracy, NoMatchingMode) as exc:
            notes.append(f"{s.name}: {type(exc).__name__}")
    return {
        name: predict_selection_rules(m, phases, v, c, n_max) for name, v in run.probes.items()
    }, notes


def _load_spectra(run: Run, out: Path) -> dict[str, dict] | None:
    """Observed spectra written earlier for the same resolved config, keyed by probe."""
    resolved = out / "config.resolved"
    if not resolved.is_file() or resolved.read_text() != dump_resolved(run.config):
        return None
    result = {}
    for name, fname in spectrum_filenames(run).items():
        path = out / fname
        if not path.is_file():
            return None
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for key in dict.fromkeys(_fmt(x) for x in data[:, 0]):
            sel = np.array([_fmt(x) == key for x in data[:, 0]])
            rows[key] = (data[sel, 1], data[sel, 2])
        result[name] = rows
    return result


def _observation(band: dict, row, predicted_bands: list[dict]) -> tuple[float | None, bool | None]:
    freqs, mags = row
    f = abs(band["frequency_mhz"])
    if len(freqs) < 2 or f < 0.5 * (freqs[1] - freqs[0]) or f > freqs[-1]:
        return None, None
    bin_width = freqs[1] - freqs[0]
    idx = int(np.argmin(np.abs(freqs - f)))
    observed = float(mags[idx])
    scale = float(mags.max())
    threshold = VISIBLE * scale
    if band["verdict"] in DARK:
        # rectangular-window leakage of the other bands into this bin; when it
        # is comparable to the threshold the bin cannot confirm darkness
        leak = 0.0
        for other in predicted_bands:
            if other is band:
                continue
            for fo in (other["frequency_mhz"], -other["frequency_mhz"]):
                leak += other["predicted_magnitude"] * abs(np.sinc((freqs[idx] - fo) / bin_width))
        if leak > 0.5 * threshold:
            return observed, None
        return observed, observed < threshold
    if band["predicted_magnitude"] > 10 * threshold:
        return observed, observed > threshold
    return observed, None


def cmd_predict(run: Run, out: Path, threads: int) -> int:
    n_max = run.config.predict.n_max

    def point(label, value):
        spec = _point_spec(run, value)
        reports, notes = _predict_point(run, spec, run.truncation, n_max)
        reference = _unbroken(spec)
        ref_reports = None
        if reference is not None:
            k_ref = run.truncation if isinstance(reference, PhaseModTLS) else min(run.truncation, 60)
            ref_reports, _ = _predict_point(run, reference, k_ref, n_max)
        return reports, ref_reports, notes

    results = _map_points(point, run.sweep_labels, run.sweep_values, threads)
    observed = _load_spectra(run, out)
    lines = []
    for label, (reports, ref_reports, notes) in zip(run.sweep_labels, results):
        for s_note in notes:
            log.info("sweep value %s: %s", _fmt(label), s_note)
        for name, report in reports.items():
            report = _mark_breaking(report, ref_reports[name] if ref_reports else None)
            dicts = []
            for b in report.bands:
                d = {"sweep_value": None if np.isnan(label) else float(_fmt(label)), "probe": name}
                d.update(b.as_dict())
                dicts.append(d)
            if observed is not None:
                row = observed[name].get(_fmt(label))
                for d in dicts:
                    obs, ok = _observation(d, row, dicts) if row is not None else (None, None)
                    d["observed_magnitude"] = None if obs is None else float(f"{obs:.9g}")
                    d["consistent"] = ok
            lines.extend(json.dumps(d) for d in dicts)
    _write(out / "rules.ndjson", lines)
    return EXIT_OK


def _mark_breaking(report: SelectionRuleReport, reference: SelectionRuleReport | None) -> SelectionRuleReport:
    """Bands dark for the unbroken drive but allowed here become visible-by-breaking."""
    if reference is None:
        return report
    dark_ref = {(b.kind, b.mu, b.nu, b.n): b for b in reference.bands if b.verdict in DARK}
    bands = []
    for b in report.bands:
        ref = dark_ref.get((b.kind, b.mu, b.nu, b.n))
        if ref is not None and b.verdict in ("visible", "constructive"):
            b = dataclasses.replace(b, verdict="visible-by-breaking", mechanism=f"{ref.mechanism} (broken)")
        bands.append(b)
    return SelectionRuleReport(bands, report.notes)


# --- oracle -----------------------------------------------------------------------


def cmd_oracle_check(run: Run, out: Path, threads: int) -> int:
    if run.dt is None:
        raise ConfigError("oracle-check needs a trotter section with dt_us")
    tol = run.config.oracle.tolerance

    def point(label, value):
        spec = _point_spec(run, value)
        a = evolve_spec(spec, run.psi0, run.times, "floquet", run.truncation, tail_tol=run.tail_tol)
        b = evolve_spec(spec, run.psi0, run.times, "trotter", dt=run.dt)
        infidelity = float(np.max(1.0 - state_fidelity(a, b)))
        deviation = max(
            float(np.max(np.abs(weighted_rabi(a, v).values - weighted_rabi(b, v).values)))
            for v in run.probes.values()
        )
        return infidelity, deviation

    results = _map_points(point, run.oracle_labels, run.oracle_values, threads)
    lines = []
    ok = True
    for label, (inf, dev) in zip(run.oracle_labels, results):
        passed = inf < tol
        ok &= passed
        lines.append(
            json.dumps(
                {
                    "sweep_value": None if np.isnan(label) else float(_fmt(label)),
                    "max_infidelity": float(f"{inf:.9g}"),
                    "max_trace_deviation": float(f"{dev:.9g}"),
                    "tolerance": tol,
                    "pass": passed,
                }
            )
        )
    _write(out / "oracle.ndjson", lines)
    if not ok:
        print("oracle-check: infidelity above tolerance", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


COMMANDS = {
    "modes": cmd_modes,
    "spectrum": cmd_spectrum,
    "predict": cmd_predict,
    "oracle-check": cmd_oracle_check,
}


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, PointFailure) else exc
    if isinstance(cause, (FloquetError, StepTooLarge, np.linalg.LinAlgError, FloatingPointError, RuntimeError)):
        return EXIT_NUMERIC
    if isinstance(cause, (ValueError, TypeError, KeyError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floquet-bands", description="Floquet band spectra and selection rules")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file or preset name")
    p.add_argument("--out", help="output directory (default: output.directory from the config)")
    p.add_argument("--threads", type=int, default=None, help="sweep worker threads (default: CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        run = resolve(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](run, out, threads)
    except Exception as exc:
        code = _exit_code(exc)
        kind = "config error" if code == EXIT_CONFIG else "numeric error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return code
    # written last so predict can tell whether an earlier spectrum matches this config
    (out / "config.resolved").write_text(dump_resolved(cfg))
    return code


if __name__ == "__main__":
    sys.exit(main())

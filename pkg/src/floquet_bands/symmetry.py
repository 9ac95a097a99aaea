"""Dynamical symmetries, mode phases, selection rules and degeneracy searches."""
from __future__ import annotations

import json
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .bands import MHZ, VANISHING, BandAmplitude, band_amplitudes, dipole_tensor
from .floquet import FloquetModes, ModeCoefficients, initial_coefficients, solve_modes
from .hamiltonians import DriveSpec, FourierHamiltonian, build, set_parameter
from .operators import IDENTITY_2, ROTATION_3, SIGMA_X, SIGMA_Y, SIGMA_Z, ProbeOperator

HOLDS = 1e-10
DEGENERACY = 1e-4
PHASE_TOL = 1e-6


class NoMatchingMode(RuntimeError):
    pass


class AmbiguousAtDegeneracy(RuntimeError):
    pass


class NoMinimumInBracket(RuntimeError):
    pass


class NotDegenerate(RuntimeError):
    pass


@dataclass(frozen=True)
class SymmetryDescriptor:
    """S [H(beta t + t_shift T) - i d/dt] S^-1 = alpha [H(t) - i d/dt].

    Conjugating descriptors act as S K with K complex conjugation.
    """

    operator: np.ndarray
    alpha: int = 1
    beta: int = 1
    t_shift: float = 0.0
    conjugating: bool = False
    name: str = "custom"
    approximate: bool = False
    conj_sign: int | None = field(default=None, init=False)

    def __post_init__(self):
        s = np.array(self.operator, dtype=complex)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("symmetry operator must be square")
        if np.max(np.abs(s @ s.conj().T - np.eye(len(s)))) > 1e-12:
            raise ValueError("symmetry operator must be unitary")
        if self.alpha not in (1, -1) or self.beta not in (1, -1):
            raise ValueError("alpha and beta must be +1 or -1")
        if not 0 <= self.t_shift < 1:
            raise ValueError("t_shift is a fraction of the period in [0, 1)")
        object.__setattr__(self, "operator", s)
        if self.conjugating:
            sq = s @ s.conj()
            sign = None
            for cand in (1, -1):
                if np.max(np.abs(sq - cand * np.eye(len(s)))) < 1e-12:
                    sign = cand
            object.__setattr__(self, "conj_sign", sign)

    @property
    def dim(self) -> int:
        return self.operator.shape[0]

    def order(self) -> int | None:
        """Finite order q of a non-conjugating shift symmetry (1/t_shift when integral)."""
        if self.conjugating:
            return 2
        if self.t_shift == 0:
            return 1
        q = 1 / self.t_shift
        return int(round(q)) if abs(q - round(q)) < 1e-9 else None


NAMED_SYMMETRIES = {
    "parity_x": dict(operator=SIGMA_X, alpha=1, t_shift=0.5),
    "particle_hole_z": dict(operator=SIGMA_Z, alpha=-1, t_shift=0.5, conjugating=True),
    "particle_hole_identity": dict(
        operator=IDENTITY_2, alpha=-1, t_shift=0.5, conjugating=True, approximate=True
    ),
    "particle_hole_y": dict(operator=SIGMA_Y, alpha=-1, t_shift=0.5, conjugating=True),
    "rotation_3": dict(operator=ROTATION_3, alpha=1, t_shift=1 / 3),
}


def named_symmetry(name: str) -> SymmetryDescriptor:
    try:
        return SymmetryDescriptor(name=name, **NAMED_SYMMETRIES[name])
    except KeyError:
        raise KeyError(f"unknown symmetry {name!r}") from None


def verify_symmetry(h: FourierHamiltonian, s: SymmetryDescriptor, n_points: int = 64) -> float:
    """max_t || S H~(beta t + t_S T) S^dag - alpha H(t) || over a uniform grid."""
    if s.dim != h.dim:
        raise ValueError("symmetry and Hamiltonian dimensions differ")
    ts = np.arange(n_points) * h.period / n_points
    shifted = h(s.beta * ts + s.t_shift * h.period)
    if s.conjugating:
        shifted = shifted.conj()
    lhs = s.operator @ shifted @ s.operator.conj().T
    diff = lhs - s.alpha * h(ts)
    return float(max(np.linalg.norm(d, 2) for d in diff))


def symmetry_holds(h: FourierHamiltonian, s: SymmetryDescriptor, rel_tol: float = HOLDS) -> bool:
    """Residual below ``rel_tol`` times the largest |H(t)| on the grid."""
    ts = np.arange(64) * h.period / 64
    scale = max(1.0, max(np.linalg.norm(x, 2) for x in h(ts)))
    return verify_symmetry(h, s) <= rel_tol * scale


@dataclass(frozen=True)
class SymmetryPhases:
    """Phi^{targets[mu]}(t) = phases[mu] * S Phi^mu(t + t_S T) (conjugated for antiunitary S)."""

    phases: np.ndarray
    targets: np.ndarray
    order: int | None
    labels: np.ndarray | None
    overlap_defect: float
    dispersion: float


def mode_symmetry_phases(
    m: FloquetModes,
    s: SymmetryDescriptor,
    q: int | None = None,
    n_points: int = 32,
    match_tol: float = 1e-6,
    dispersion_tol: float = PHASE_TOL,
) -> SymmetryPhases:
    """Match each symmetry-transformed mode to a mode and extract its phase."""
    if s.beta != 1:
        raise ValueError("mode phases are only supported for beta = +1")
    if m.min_gap() < DEGENERACY * m.base_frequency:
        raise AmbiguousAtDegeneracy(
            f"quasi-energy gap {m.min_gap() / m.base_frequency:.2e} w is below {DEGENERACY} w"
        )
    ts = np.arange(n_points) * m.period / n_points
    phi = m.at_time(ts)  # (T, N, d)
    moved = m.at_time(ts + s.t_shift * m.period)
    if s.conjugating:
        moved = moved.conj()
    moved = np.einsum("ij,tmj->tmi", s.operator, moved)
    # ov[t, a, b] = <Phi^a(t) | X^b(t)>
    ov = np.einsum("tai,tbi->tab", phi.conj(), moved)
    mean_abs = np.abs(ov).mean(axis=0)
    targets = np.argmax(mean_abs, axis=0)
    best = mean_abs[targets, np.arange(m.dim)]
    defect = float(1 - best.min())
    if defect > 1e-3 or (defect > match_tol and not s.approximate):
        raise NoMatchingMode(f"{s.name}: best mode overlap {best.min():.6f}")
    if len(set(targets.tolist())) != m.dim:
        raise NoMatchingMode(f"{s.name}: transformed modes do not map one-to-one")
    per_t = np.conj(ov[:, targets, np.arange(m.dim)])  # pi(t) = <X|Phi^target>
    per_t = per_t / np.abs(per_t)
    phases = per_t.mean(axis=0)
    phases = phases / np.abs(phases)
    dispersion = float(np.max(np.abs(per_t - phases)))
    if dispersion > dispersion_tol and not s.approximate:
        raise NoMatchingMode(f"{s.name}: phase dispersion {dispersion:.2e} over the period")

    order = q if q is not None else (s.order() if not s.conjugating else None)
    labels = None
    if order is not None and np.all(targets == np.arange(m.dim)):
        raw = np.angle(phases) * order / (2 * np.pi)
        lab = np.rint(raw)
        if np.max(np.abs(raw - lab)) < 1e-4:
            labels = (lab.astype(int) % order)
    return SymmetryPhases(phases, targets, order, labels, defect, dispersion)


def alpha_v(s: SymmetryDescriptor, v: ProbeOperator, tol: float = 1e-10) -> complex | None:
    """Scalar a with S^dag V S = a V (or a V* for conjugating S), else None."""
    vm = v.matrix
    if not np.any(vm):
        return None
    moved = s.operator.conj().T @ vm @ s.operator
    target = vm.conj() if s.conjugating else vm
    a = np.vdot(target, moved) / np.vdot(target, target)
    scale = np.max(np.abs(vm))
    if np.max(np.abs(moved - a * target)) > tol * scale:
        return None
    if abs(a.imag) < tol:
        a = complex(a.real, 0.0)
    return complex(a)


def compose(
    first: tuple[SymmetryDescriptor, SymmetryPhases],
    second: tuple[SymmetryDescriptor, SymmetryPhases],
) -> tuple[SymmetryDescriptor, SymmetryPhases]:
    """Product of two conjugating symmetries: a unitary symmetry S1 S2*.

    Modes map mu -> t1(t2(mu)) with phase pi1_{t2(mu)} conj(pi2_mu).
    """
    (s1, p1), (s2, p2) = first, second
    if not (s1.conjugating and s2.conjugating):
        raise ValueError("composition is defined for two conjugating symmetries")
    desc = SymmetryDescriptor(
        operator=s1.operator @ s2.operator.conj(),
        alpha=s1.alpha * s2.alpha,
        t_shift=(s1.t_shift + s2.t_shift) % 1.0,
        conjugating=False,
        name=f"{s1.name}*{s2.name}",
        approximate=s1.approximate or s2.approximate,
    )
    targets = p1.targets[p2.targets]
    phases = p1.phases[p2.targets] * np.conj(p2.phases)
    phases_obj = SymmetryPhases(
        phases, targets, None, None, max(p1.overlap_defect, p2.overlap_defect), max(p1.dispersion, p2.dispersion)
    )
    return desc, phases_obj


# --- selection rules -----------------------------------------------------------


@dataclass(frozen=True)
class BandVerdict:
    kind: str
    mu: int | None
    nu: int | None
    n: int
    frequency: float
    verdict: str
    mechanism: str
    factor: complex
    predicted: float

    def as_dict(self) -> dict:
        return {
            "class": self.kind,
            "mu": self.mu,
            "nu": self.nu,
            "n": self.n,
            "frequency_mhz": float(f"{self.frequency / MHZ:.9g}"),
            "verdict": self.verdict,
            "mechanism": self.mechanism,
            "factor_re": float(f"{self.factor.real:.9g}"),
            "factor_im": float(f"{self.factor.imag:.9g}"),
            "predicted_magnitude": float(f"{self.predicted:.9g}"),
        }


@dataclass
class SelectionRuleReport:
    bands: list[BandVerdict]
    notes: list[str] = field(default_factory=list)

    def to_ndjson(self, extra: dict | None = None) -> str:
        lines = []
        for b in self.bands:
            d = b.as_dict()
            if extra:
                d = {**extra, **d}
            lines.append(json.dumps(d, sort_keys=False))
        return "\n".join(lines) + ("\n" if lines else "")

    def dark(self) -> list[BandVerdict]:
        return [b for b in self.bands if b.verdict in ("spDS", "spDB", "siT-destructive")]


@dataclass(frozen=True)
class _Rule:
    name: str
    desc: SymmetryDescriptor
    phases: SymmetryPhases
    alpha_v: complex

    def relation(self, mu: int, nu: int, n: int) -> tuple[tuple[int, int], tuple[int, int], complex]:
        """(source, image, F) with V^{(n)}_image = F V^{(n)}_source."""
        p = self.phases.phases
        f = np.conj(p[mu]) * p[nu] * self.alpha_v * np.exp(2j * np.pi * n * self.desc.t_shift)
        image = (int(self.phases.targets[mu]), int(self.phases.targets[nu]))
        source = (nu, mu) if self.desc.conjugating else (mu, nu)
        return source, image, complex(f)

    def factor(self, f: complex) -> complex:
        """q-fold sum of x^j with x = conj(F); zero exactly when the element must vanish."""
        q = self.desc.order() or 2
        x = np.conj(f)
        return complex(sum(x**j for j in range(q)))

    @property
    def label(self) -> str:
        return self.name + (" (approximate, valid for weak static field)" if self.desc.approximate else "")


def predict_selection_rules(
    m: FloquetModes,
    phases: Sequence[tuple[SymmetryDescriptor, SymmetryPhases]],
    v: ProbeOperator,
    c: ModeCoefficients,
    n_max: int,
    pool_tol: float = 1e-6,
) -> SelectionRuleReport:
    """Verdict for every band up to order ``n_max`` (f >= 0).

    A symmetry relating an element to itself with F != 1 forces it to zero
    (spDS; spDB when that holds for every element of the order and class).
    Relations between elements pooled at one frequency decide interference.
    """
    notes: list[str] = []
    rules: list[_Rule] = []
    conj_pairs = []
    for desc, ph in phases:
        a = alpha_v(desc, v)
        if a is None:
            notes.append(f"{desc.name}: probe is not mapped onto itself, no rule")
            continue
        rules.append(_Rule(desc.name, desc, ph, a))
        if desc.conjugating:
            conj_pairs.append((desc, ph))
    for i in range(len(conj_pairs)):
        for j in range(i + 1, len(conj_pairs)):
            desc, ph = compose(conj_pairs[i], conj_pairs[j])
            a = alpha_v(desc, v)
            if a is not None:
                rules.append(_Rule(desc.name, desc, ph, a))

    dim = m.dim
    bands = band_amplitudes(m, c, v, n_max=n_max, pool_tol=pool_tol)

    def forced_zero(mu, nu, n):
        for r in rules:
            for a, b in {(mu, nu), (nu, mu)}:
                src, img, f = r.relation(a, b, n)
                if src == img == (mu, nu) and abs(f - 1) > PHASE_TOL:
                    return r, f
        return None

    def class_dark(diagonal: bool, n: int) -> bool:
        pairs = [(a, b) for a in range(dim) for b in range(dim) if (a == b) == diagonal]
        return bool(pairs) and all(forced_zero(a, b, n) for a, b in pairs)

    manifold_max: dict[int, float] = {}
    for b in bands:
        manifold_max[b.n] = max(manifold_max.get(b.n, 0.0), b.magnitude)

    out: list[BandVerdict] = []
    for b in bands:
        kind = b.kind if b.kind != "mixed" else "sideband"
        zero = {mem: forced_zero(*mem) for mem in b.members}
        live = [mem for mem in b.members if zero[mem] is None]
        if not live:
            r, f = next(iter(zero.values()))
            diagonal = all(mu == nu for mu, nu, _ in b.members)
            verdict = "spDB" if class_dark(diagonal, b.n) else "spDS"
            out.append(BandVerdict(kind, b.mu, b.nu, b.n, b.frequency, verdict, r.label, r.factor(f), b.magnitude))
            continue
        verdict, mech, factor = _interference(live, rules, c)
        if verdict is None:
            if manifold_max.get(b.n, 0.0) > 0 and b.magnitude < VANISHING * manifold_max[b.n]:
                verdict, mech, factor = "accidental-dark", "none", 0j
            else:
                verdict, mech, factor = "visible", "none", 1 + 0j
        out.append(BandVerdict(kind, b.mu, b.nu, b.n, b.frequency, verdict, mech, factor, b.magnitude))
    return SelectionRuleReport(out, notes)


def _interference(live, rules, c):
    """Check whether symmetry relations among pooled elements cancel or add them."""
    if len(live) < 2 or not rules:
        return None, "none", 1 + 0j
    members = {(mu, nu): n for mu, nu, n in live}
    n = live[0][2]
    cv = c.values
    # edges: V_image = F V_source between members of the pool
    edges: dict[tuple[int, int], list] = {key: [] for key in members}
    used = set()
    for r in rules:
        for key in members:
            src, img, f = r.relation(key[0], key[1], n)
            if src in members and img in members and src != img:
                edges[src].append((img, f, r))
                edges[img].append((src, 1 / f, r))
                used.add(r.label)
    seen: set = set()
    sums = []
    for start in members:
        if start in seen:
            continue
        rel = {start: 1 + 0j}
        queue = deque([start])
        seen.add(start)
        while queue:
            cur = queue.popleft()
            for nxt, f, _ in edges[cur]:
                if nxt not in rel:
                    rel[nxt] = rel[cur] * f
                    seen.add(nxt)
                    queue.append(nxt)
        terms = [np.conj(cv[mu]) * cv[nu] * rel[(mu, nu)] for mu, nu in rel]
        sums.append((sum(terms), sum(abs(t) for t in terms), len(terms)))
    if len(sums) != 1 or sums[0][2] < 2:
        return None, "none", 1 + 0j
    total, scale, _ = sums[0]
    mech = " + ".join(sorted(used)) + " interference"
    if scale == 0:
        return None, "none", 1 + 0j
    ratio = total / scale
    if abs(total) < 1e-6 * scale:
        return "siT-destructive", mech, complex(ratio)
    if abs(total) > (1 - 1e-6) * scale:
        return "constructive", mech, complex(ratio)
    return None, "none", 1 + 0j


def interference_at_degeneracy(
    m: FloquetModes, c: ModeCoefficients, v: ProbeOperator, n: int
) -> tuple[str, complex, tuple[complex, complex]]:
    """Coherent sum of the two degenerate sideband terms at order n.

    Returns (verdict, sum, (term_1, term_2)) with terms c+ c-* V_{-,+} and
    c+* c- V_{+,-} for the closest pair of quasi-energies.
    """
    w = m.base_frequency
    lam = m.quasi_energies
    best = None
    for a in range(m.dim):
        for b in range(a + 1, m.dim):
            d = abs(lam[b] - lam[a])
            d = min(d, w - d)
            if best is None or d < best[0]:
                best = (d, a, b)
    if best is None or best[0] >= DEGENERACY * w:
        raise NotDegenerate(f"closest quasi-energies differ by {best[0] / w if best else np.inf:.2e} w")
    _, lo, hi = best
    d = dipole_tensor(m, v, abs(n))
    idx = n + abs(n)
    cv = c.values
    t1 = cv[hi] * np.conj(cv[lo]) * d[lo, hi, idx]
    t2 = np.conj(cv[hi]) * cv[lo] * d[hi, lo, idx]
    total = t1 + t2
    biggest = max(abs(t1), abs(t2))
    if biggest == 0:
        verdict = "neither"
    elif abs(total) < 1e-6 * biggest:
        verdict = "destructive"
    elif abs(total) > 1.9 * biggest:
        verdict = "constructive"
    else:
        verdict = "neither"
    return verdict, complex(total), (complex(t1), complex(t2))


# --- parameter searches -----------------------------------------------------------


def _gap(spec: DriveSpec, truncation: int) -> float:
    m = solve_modes(build(spec), truncation)
    lam = m.quasi_energies
    return float(lam[-1] - lam[0]) if m.dim == 2 else m.min_gap()


def golden_section(f, a: float, b: float, rel_tol: float = 1e-5) -> float:
    g = (np.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > rel_tol * max(abs(a), abs(b), 1e-300):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def locate_degeneracy(
    template: DriveSpec,
    parameter: str,
    bracket: tuple[float, float],
    truncation: int = 100,
    rel_tol: float = 1e-5,
) -> float:
    """Sweep value in ``bracket`` minimising the quasi-energy gap."""
    a, b = map(float, bracket)

    def gap(x):
        return _gap(set_parameter(template, parameter, x), truncation)

    x = golden_section(gap, a, b, rel_tol)
    ga, gb, gx = gap(a), gap(b), gap(x)
    span = b - a
    if min(x - a, b - x) < 1e-3 * span or gx >= (1 - 1e-9) * min(ga, gb):
        raise NoMinimumInBracket(f"gap has no interior minimum in [{a}, {b}]")
    return x


def locate_equal_populations(
    template: DriveSpec,
    parameter: str,
    bracket: tuple[float, float],
    psi0,
    truncation: int = 100,
    mode: int = -1,
) -> float:
    """Sweep value where |c^mu|^2 = 1/2 for the given initial state (root in bracket)."""

    def excess(x):
        m = solve_modes(build(set_parameter(template, parameter, x)), truncation)
        return float(initial_coefficients(m, psi0).populations[mode] - 0.5)

    return float(brentq(excess, *bracket, xtol=1e-10))

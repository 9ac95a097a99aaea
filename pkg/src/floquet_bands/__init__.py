"""Floquet modes, band spectra and symmetry selection rules for periodically driven few-level systems."""
from .bands import (
    BandAmplitude,
    Spectrum,
    SpectrumMap,
    band_amplitudes,
    dipole_element,
    dipole_tensor,
    fft_spectrum,
    harmonic_fit,
    susceptibility,
    sweep_spectrum,
)
from .config import ConfigError, RunConfig, load_config, resolve
from .dynamics import (
    EvolutionTrace,
    RabiTrace,
    StepTooLarge,
    evolve_spec,
    floquet_evolve,
    modes_from_trotter,
    second_frame_modes,
    state_fidelity,
    trotter_evolve,
    weighted_rabi,
)
from .floquet import (
    FloquetError,
    FloquetModes,
    ModeCoefficients,
    TruncationTooSmall,
    assemble_floquet_matrix,
    initial_coefficients,
    solve_modes,
)
from .hamiltonians import (
    AmpModTLS,
    BreakingTerm,
    EnsembleSpec,
    FourierHamiltonian,
    PhaseModTLS,
    ThreeLevelFirstFrame,
    ThreeLevelRotating,
    build,
    set_parameter,
)
from .operators import ProbeOperator, named_state
from .symmetry import (
    SymmetryDescriptor,
    interference_at_degeneracy,
    locate_degeneracy,
    locate_equal_populations,
    mode_symmetry_phases,
    named_symmetry,
    predict_selection_rules,
    verify_symmetry,
)

__version__ = "0.1.0"

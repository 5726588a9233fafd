"""Fast super-robust geometric gate pulses: synthesis, verification, optimization and noise sweeps."""

from .noise import (
    ControlError,
    DecoherenceSpec,
    FidelityGrid,
    GridSpec,
    erroneous_hamiltonian,
    robustness_order_fit,
    sweep_lindblad_fidelity,
    sweep_unitary_fidelity,
)
from .quantum import (
    CollapseChannel,
    TimeGrid,
    average_state_fidelity,
    gate_fidelity,
    propagate_lindblad,
    propagate_unitary,
)
from .robustness import (
    OptimizationError,
    OptimizerConfig,
    PhaseReport,
    d12_integral,
    dynamical_phase_residual,
    geometric_phase,
    optimize_preset,
    phase_report,
)
from .rydberg import RydbergParams, ct_target, decay_channels, effective_hamiltonian, sweep_ct_fidelity
from .schedule import (
    PRESETS,
    GatePreset,
    SegmentedLinearFunction,
    get_preset,
    hamiltonian_at,
    pulse_area,
    synthesize_controls,
    target_unitary,
)

__version__ = "0.1.0"

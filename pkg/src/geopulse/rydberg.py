"""Effective two-atom controlled-phase model with Rydberg decay and dephasing.

Basis: control ``c in {0, 1}`` times target ``t in {0, 1, r, 2}``, flattened as
``4 c + t``. The single-qubit pulse acts on ``{|11>, |1r>}`` only; level
``|2>`` collects the ground states the Rydberg level may decay into besides
the two logical ones.

Time inside the model is in units of ``1 / omega_prime``; rates are divided by
``omega_prime`` once when building channels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .noise import ERROR_BOUND, FidelityGrid, GridSpec, error_pairs, _shape
from .quantum import (
    PROBE_STATES,
    CollapseChannel,
    average_state_fidelity,
    gate_fidelity,
    propagate_lindblad_family,
    propagate_unitary_family,
)
from .schedule import GatePreset, controls, get_preset

DIM = 8
LEVELS = ("0", "1", "r", "2")
COMPUTATIONAL = (0, 1, 4, 5)  # |00>, |01>, |10>, |11>
IDX_11 = 5
IDX_1R = 6
CT_PHASE = math.pi / 4


def index(control: int, target: str) -> int:
    return 4 * control + LEVELS.index(target)


@dataclass(frozen=True)
class RydbergParams:
    """Physical parameters, SI units (rad/s, s, 1/s).

    ``omega_prime`` sets the time unit. ``delta`` is an optional static
    detuning on the pulse block. ``dephasing_rate`` applies to each atom.
    """

    omega_prime: float = 2.0 * math.pi * 0.75e6
    delta: float = 0.0
    tau_r: float = 50e-6
    dephasing_rate: float = 1150.0

    def __post_init__(self):
        if not self.omega_prime > 0:
            raise ValueError("omega_prime must be positive")
        if not self.tau_r > 0:
            raise ValueError("tau_r must be positive")
        if self.dephasing_rate < 0:
            raise ValueError("dephasing_rate must be nonnegative")

    @property
    def gamma(self) -> float:
        return 1.0 / self.tau_r

    @property
    def gamma_natural(self) -> float:
        return self.gamma / self.omega_prime

    @property
    def dephasing_natural(self) -> float:
        return self.dephasing_rate / self.omega_prime

    @property
    def delta_natural(self) -> float:
        return self.delta / self.omega_prime

    def replace(self, **changes) -> "RydbergParams":
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, data) -> "RydbergParams":
        """Keys ``omega_prime_hz``, ``delta_hz``, ``tau_r_s``, ``dephasing_hz``; missing keys keep defaults."""
        kw = {}
        if "omega_prime_hz" in data:
            kw["omega_prime"] = 2.0 * math.pi * float(data["omega_prime_hz"])
        if "delta_hz" in data:
            kw["delta"] = 2.0 * math.pi * float(data["delta_hz"])
        if "tau_r_s" in data:
            kw["tau_r"] = float(data["tau_r_s"])
        if "dephasing_hz" in data:
            kw["dephasing_rate"] = float(data["dephasing_hz"])
        return cls(**kw)


def _require_phase_gate(preset: GatePreset) -> None:
    if abs(math.sin(preset.theta0)) > 1e-12 or abs(preset.b1) > 1e-12:
        raise ValueError("not a phase-gate preset")


class BlockHamiltonian:
    """Sampler for one piece of the 8-level Hamiltonian.

    ``part`` is ``"diagonal"`` (synthesized plus static detuning),
    ``"offdiagonal"`` (the drive) or ``"shift"`` (unit energy on ``|1r>``,
    weighted by ``eta`` in sweeps).
    """

    def __init__(self, preset: GatePreset, params: RydbergParams, part: str):
        _require_phase_gate(preset)
        if part not in ("diagonal", "offdiagonal", "shift"):
            raise ValueError(f"unknown part {part!r}")
        self.preset = preset
        self.params = params
        self.part = part

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        H = np.zeros((times.size, DIM, DIM), dtype=np.complex128)
        if self.part == "shift":
            H[:, IDX_1R, IDX_1R] = 1.0
            return H
        delta, omega, psi = controls(self.preset, times)
        if self.part == "diagonal":
            d = 0.5 * (delta + self.params.delta_natural)
            H[:, IDX_11, IDX_11] = d
            H[:, IDX_1R, IDX_1R] = -d
        else:
            off = 0.5 * omega * np.exp(-1j * psi)
            H[:, IDX_11, IDX_1R] = off
            H[:, IDX_1R, IDX_11] = np.conj(off)
        return H

    def __call__(self, t: float) -> np.ndarray:
        return self.sample(np.array([t]))[0]


def effective_hamiltonian(
    t: float,
    preset: GatePreset,
    params: RydbergParams = RydbergParams(),
    eta: float = 0.0,
    epsilon: float = 0.0,
) -> np.ndarray:
    """8x8 Hamiltonian at ``t`` (units of ``1/omega_prime``), energies in units of ``omega_prime``."""
    if not (0.0 <= t <= preset.tau):
        raise ValueError("time out of range")
    parts = [BlockHamiltonian(preset, params, p)(t) for p in ("diagonal", "offdiagonal", "shift")]
    return parts[0] + (1.0 + epsilon) * parts[1] + eta * parts[2]


def ct_target() -> np.ndarray:
    U = np.eye(DIM, dtype=np.complex128)
    U[IDX_11, IDX_11] = complex(math.cos(CT_PHASE), math.sin(CT_PHASE))
    return U


def ct_pulse_preset() -> GatePreset:
    """The phase-gate pulse whose loop phase lands on ``|11>``."""
    return get_preset("S")


def decay_channels(params: RydbergParams = RydbergParams()) -> list[CollapseChannel]:
    """Target Rydberg decay to ``|0>``, ``|1>``, ``|2>`` (shares 1/8, 1/8, 3/4) and per-atom dephasing."""
    g = params.gamma_natural
    out = []
    for level, share in (("0", 0.125), ("1", 0.125), ("2", 0.75)):
        op = np.zeros((DIM, DIM), dtype=np.complex128)
        for c in (0, 1):
            op[index(c, level), index(c, "r")] = 1.0
        out.append(CollapseChannel(op, share * g))
    sz = np.diag([-1.0, 1.0]).astype(np.complex128)
    logical = np.diag([-1.0, 1.0, 0.0, 0.0]).astype(np.complex128)
    out.append(CollapseChannel(np.kron(sz, np.eye(4)), params.dephasing_natural))
    out.append(CollapseChannel(np.kron(np.eye(2), logical), params.dephasing_natural))
    return out


def embed_state(control: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Product state from a control qubit and a target qubit (logical levels only)."""
    t4 = np.zeros(4, dtype=np.complex128)
    t4[:2] = target
    return np.kron(np.asarray(control, dtype=np.complex128), t4)


def product_probe_states() -> list[np.ndarray]:
    return [embed_state(c, t) for c, t in itertools.product(PROBE_STATES, PROBE_STATES)]


def _samplers(preset: GatePreset, params: RydbergParams):
    return [BlockHamiltonian(preset, params, p) for p in ("diagonal", "offdiagonal", "shift")]


def _weights(eta, epsilon) -> np.ndarray:
    eta = np.atleast_1d(np.asarray(eta, dtype=np.float64))
    epsilon = np.atleast_1d(np.asarray(epsilon, dtype=np.float64))
    if np.any(np.abs(eta) > ERROR_BOUND) or np.any(np.abs(epsilon) > ERROR_BOUND):
        raise ValueError(f"control errors must lie within +-{ERROR_BOUND}")
    return np.column_stack([np.ones_like(eta), 1.0 + epsilon, eta])


def ct_propagator(
    params: RydbergParams = RydbergParams(),
    eta: float = 0.0,
    epsilon: float = 0.0,
    preset: GatePreset | None = None,
    steps_per_unit: int | None = None,
) -> np.ndarray:
    preset = preset or ct_pulse_preset()
    return propagate_unitary_family(_samplers(preset, params), _weights(eta, epsilon), preset.grid(steps_per_unit))[0]


def computational_block(U: np.ndarray) -> np.ndarray:
    idx = np.array(COMPUTATIONAL)
    return U[np.ix_(idx, idx)]


def ct_gate_fidelity(U: np.ndarray) -> float:
    """Gate fidelity on the four computational states; other levels are projected out."""
    return gate_fidelity(computational_block(U), computational_block(ct_target()))


def sweep_ct_fidelity(
    grid: GridSpec = GridSpec(21),
    params: RydbergParams = RydbergParams(),
    noise: bool = True,
    preset: GatePreset | None = None,
    steps_per_unit: int | None = None,
    constraint: str = "full",
) -> FidelityGrid:
    """Average fidelity of the 16 product probe states after the controlled-phase pulse."""
    preset = preset or ct_pulse_preset()
    eta, eps = error_pairs(grid, constraint)
    states = product_probe_states()
    rho0 = np.stack([np.outer(s, s.conj()) for s in states])
    channels = decay_channels(params) if noise else []
    rhos = propagate_lindblad_family(_samplers(preset, params), _weights(eta, eps), channels, rho0, preset.grid(steps_per_unit))
    target = ct_target()
    expected = [target @ s for s in states]
    vals = np.array([average_state_fidelity(list(r), expected) for r in rhos])
    meta = {
        "gate": "CT",
        "kind": "rydberg",
        "noise": bool(noise),
        "points": grid.points,
        "range": [grid.lo, grid.hi],
        "omega_prime": params.omega_prime,
        "tau_r": params.tau_r,
        "dephasing_rate": params.dephasing_rate,
    }
    return FidelityGrid(grid.axis, grid.axis, _shape(vals, grid, constraint), constraint, meta)

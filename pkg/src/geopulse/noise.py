"""Static control errors, error sweeps, dephasing sweeps and the robustness-order fit."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .configio import atomic_write_text
from .quantum import (
    PROBE_STATES,
    CollapseChannel,
    average_state_fidelity,
    gate_fidelity,
    propagate_lindblad_family,
    propagate_unitary_family,
)
from .schedule import ControlSample, GatePreset, PulseHamiltonian, hamiltonian_at, target_unitary

ERROR_BOUND = 0.5
# Dephasing-only rate in units of the peak Rabi frequency.
DEFAULT_GAMMA2 = 1.0 / 7400.0
INFIDELITY_FLOOR = 1e-12
CONSTRAINTS = ("full", "diagonal")


@dataclass(frozen=True)
class ControlError:
    """Fractional miscalibration: ``eta`` scales the detuning, ``epsilon`` the Rabi amplitude."""

    eta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if abs(self.eta) > ERROR_BOUND or abs(self.epsilon) > ERROR_BOUND:
            raise ValueError(f"control errors must lie within +-{ERROR_BOUND}")


@dataclass(frozen=True)
class DecoherenceSpec:
    """Amplitude decay ``gamma1`` (|1> -> |0>) and dephasing ``gamma2``, natural units."""

    gamma1: float = 0.0
    gamma2: float = DEFAULT_GAMMA2

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("decoherence rates must be nonnegative")

    def channels(self) -> list[CollapseChannel]:
        lower = np.array([[0, 1], [0, 0]], dtype=np.complex128)
        dephase = np.array([[-1, 0], [0, 1]], dtype=np.complex128)
        return [CollapseChannel(lower, self.gamma1), CollapseChannel(dephase, self.gamma2)]


@dataclass(frozen=True)
class GridSpec:
    """``points`` evenly spaced values on ``[lo, hi]`` for each error axis."""

    points: int = 41
    lo: float = -0.2
    hi: float = 0.2

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("grid needs at least one point")
        if self.hi < self.lo:
            raise ValueError("grid range is reversed")
        if max(abs(self.lo), abs(self.hi)) > ERROR_BOUND:
            raise ValueError(f"grid range must lie within +-{ERROR_BOUND}")

    @classmethod
    def symmetric(cls, points: int, half_width: float) -> "GridSpec":
        return cls(points, -half_width, half_width)

    @property
    def axis(self) -> np.ndarray:
        if self.points == 1:
            return np.array([0.5 * (self.lo + self.hi)])
        return np.linspace(self.lo, self.hi, self.points)


@dataclass(frozen=True)
class FidelityGrid:
    """Fidelities over control-error pairs.

    A full grid has ``values[i, j]`` at ``(eta_axis[i], epsilon_axis[j])``.
    A diagonal sweep (``eta = epsilon``) stores one value per axis point and
    both axes are the same array.
    """

    eta_axis: np.ndarray
    epsilon_axis: np.ndarray
    values: np.ndarray
    constraint: str = "full"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if self.constraint == "full":
            expected = (len(self.eta_axis), len(self.epsilon_axis))
        else:
            expected = (len(self.eta_axis),)
            if not np.array_equal(self.eta_axis, self.epsilon_axis):
                raise ValueError("diagonal grid needs identical axes")
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape} does not match axes {expected}")
        if v.size and (v.min() < -1e-9 or v.max() > 1.0 + 1e-9):
            raise ValueError("fidelities must lie in [0, 1]")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def diagonal(self) -> np.ndarray:
        """Values along ``eta = epsilon`` (needs matching axes on a full grid)."""
        if self.constraint == "diagonal":
            return self.values
        if not np.array_equal(self.eta_axis, self.epsilon_axis):
            raise ValueError("axes differ; no diagonal")
        return np.diag(self.values)

    @property
    def peak(self) -> float:
        return float(self.values.max())

    def value_near(self, eta: float, epsilon: float) -> float:
        i = int(np.argmin(np.abs(self.eta_axis - eta)))
        if self.constraint == "diagonal":
            return float(self.values[i])
        j = int(np.argmin(np.abs(self.epsilon_axis - epsilon)))
        return float(self.values[i, j])

    def to_csv(self) -> str:
        """Full grid: header ``eta\\epsilon`` then epsilon values; one row per eta.
        Diagonal: ``eta,epsilon,fidelity`` rows. Nine decimals throughout."""
        lines = []
        if self.constraint == "full":
            lines.append(",".join(["eta\\epsilon", *(f"{e:.9f}" for e in self.epsilon_axis)]))
            for eta, row in zip(self.eta_axis, self.values):
                lines.append(",".join([f"{eta:.9f}", *(f"{v:.9f}" for v in row)]))
        else:
            lines.append("eta,epsilon,fidelity")
            for eta, v in zip(self.eta_axis, self.values):
                lines.append(f"{eta:.9f},{eta:.9f},{v:.9f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def r9(a):
            return np.round(np.asarray(a, dtype=np.float64), 9).tolist()

        doc = {
            "constraint": self.constraint,
            "metadata": self.metadata,
            "eta_axis": r9(self.eta_axis),
            "epsilon_axis": r9(self.epsilon_axis),
            "values": r9(self.values),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path, fmt: str = "csv") -> None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        atomic_write_text(path, self.to_csv() if fmt == "csv" else self.to_json())


def erroneous_hamiltonian(sample: ControlSample, err: ControlError) -> np.ndarray:
    """Detuning scaled by ``1 + eta`` and Rabi amplitude by ``1 + epsilon``."""
    scaled = ControlSample((1.0 + err.eta) * sample.delta, (1.0 + err.epsilon) * sample.omega, sample.psi)
    return hamiltonian_at(scaled)


def error_pairs(grid: GridSpec, constraint: str) -> tuple[np.ndarray, np.ndarray]:
    """Flattened ``(eta, epsilon)`` pairs in row-major grid order."""
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    axis = grid.axis
    if constraint == "diagonal":
        return axis.copy(), axis.copy()
    eta, eps = np.meshgrid(axis, axis, indexing="ij")
    return eta.ravel(), eps.ravel()


def _shape(values: np.ndarray, grid: GridSpec, constraint: str) -> np.ndarray:
    return values if constraint == "diagonal" else values.reshape(grid.points, grid.points)


def unitary_family(preset: GatePreset, eta, epsilon, steps_per_unit: int | None = None) -> np.ndarray:
    """Propagators of the erroneous Hamiltonian for each ``(eta[k], epsilon[k])``."""
    eta = np.atleast_1d(np.asarray(eta, dtype=np.float64))
    epsilon = np.atleast_1d(np.asarray(epsilon, dtype=np.float64))
    samplers = [PulseHamiltonian(preset, "diagonal"), PulseHamiltonian(preset, "offdiagonal")]
    W = np.column_stack([1.0 + eta, 1.0 + epsilon])
    return propagate_unitary_family(samplers, W, preset.grid(steps_per_unit))


def sweep_unitary_fidelity(
    preset: GatePreset,
    grid: GridSpec = GridSpec(),
    constraint: str = "full",
    steps_per_unit: int | None = None,
) -> FidelityGrid:
    """Closed-system gate fidelity against the preset's target at every grid point."""
    eta, eps = error_pairs(grid, constraint)
    U = unitary_family(preset, eta, eps, steps_per_unit)
    target = target_unitary(*preset.target)
    vals = np.array([gate_fidelity(u, target) for u in U])
    meta = {"gate": preset.name, "kind": "unitary", "points": grid.points, "range": [grid.lo, grid.hi]}
    return FidelityGrid(grid.axis, grid.axis, _shape(vals, grid, constraint), constraint, meta)


def probe_densities(states=PROBE_STATES) -> np.ndarray:
    return np.stack([np.outer(s, s.conj()) for s in states])


def sweep_lindblad_fidelity(
    preset: GatePreset,
    grid: GridSpec = GridSpec(),
    spec: DecoherenceSpec = DecoherenceSpec(),
    constraint: str = "full",
    steps_per_unit: int | None = None,
) -> FidelityGrid:
    """Average fidelity of the four probe states after open-system evolution.

    The expected final state of each probe is the ideal target gate applied
    to it.
    """
    eta, eps = error_pairs(grid, constraint)
    samplers = [PulseHamiltonian(preset, "diagonal"), PulseHamiltonian(preset, "offdiagonal")]
    W = np.column_stack([1.0 + eta, 1.0 + eps])
    rhos = propagate_lindblad_family(samplers, W, spec.channels(), probe_densities(), preset.grid(steps_per_unit))
    target = target_unitary(*preset.target)
    expected = [target @ s for s in PROBE_STATES]
    vals = np.array([average_state_fidelity(list(r), expected) for r in rhos])
    meta = {
        "gate": preset.name,
        "kind": "lindblad",
        "points": grid.points,
        "range": [grid.lo, grid.hi],
        "gamma1": spec.gamma1,
        "gamma2": spec.gamma2,
    }
    return FidelityGrid(grid.axis, grid.axis, _shape(vals, grid, constraint), constraint, meta)


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    epsilons: np.ndarray
    excess_infidelity: np.ndarray


def fit_power_law(epsilons, infidelities) -> OrderFit:
    """Least-squares line through ``(log eps, log infidelity)``."""
    eps = np.asarray(epsilons, dtype=np.float64)
    inf = np.asarray(infidelities, dtype=np.float64)
    if eps.size < 2 or np.any(eps <= 0):
        raise ValueError("need at least two positive error values")
    if np.any(inf <= INFIDELITY_FLOOR):
        raise ValueError("range too small: infidelity at the numerical floor")
    slope, intercept = np.polyfit(np.log(eps), np.log(inf), 1)
    return OrderFit(float(slope), float(intercept), eps, inf)


def order_fit_from_function(
    fidelity: Callable[[np.ndarray], np.ndarray],
    eps_range: tuple[float, float] = (0.01, 0.1),
    n_points: int = 8,
) -> OrderFit:
    """Fit the excess infidelity ``F(0) - F(eps)`` of any fidelity function on log-spaced points."""
    lo, hi = eps_range
    if not (0 < lo < hi):
        raise ValueError("eps_range must satisfy 0 < lo < hi")
    if n_points < 2:
        raise ValueError("need at least two points")
    eps = np.geomspace(lo, hi, n_points)
    vals = np.asarray(fidelity(np.concatenate([[0.0], eps])), dtype=np.float64)
    return fit_power_law(eps, vals[0] - vals[1:])


def robustness_order_fit(
    preset: GatePreset,
    eps_range: tuple[float, float] = (0.01, 0.1),
    n_points: int = 8,
    steps_per_unit: int | None = None,
) -> OrderFit:
    """Scaling exponent of the gate infidelity along ``eta = epsilon``.

    The zero-error infidelity is subtracted first so a small residual from
    rounded parameters does not flatten the fit.
    """
    target = target_unitary(*preset.target)

    def fidelity(e):
        U = unitary_family(preset, e, e, steps_per_unit)
        return np.array([gate_fidelity(u, target) for u in U])

    return order_fit_from_function(fidelity, eps_range, n_points)


def infidelity_ratio(preset: GatePreset, small: float = 0.05, large: float = 0.1) -> float:
    """``(1 - F(large)) / (1 - F(small))`` along ``eta = epsilon``, zero-error floor removed."""
    target = target_unitary(*preset.target)
    U = unitary_family(preset, [0.0, small, large], [0.0, small, large])
    f0, fs, fl = (gate_fidelity(u, target) for u in U)
    return (f0 - fl) / max(f0 - fs, math.ulp(1.0))

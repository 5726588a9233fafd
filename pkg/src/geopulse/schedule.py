"""Three-segment linear path schedules and the controls they imply.

The auxiliary state is steered along a path ``(theta, phi, beta)(t)`` made of
three linear pieces: tilt away from the start axis, loop around z, tilt back.
Inverse engineering turns the path into detuning ``delta``, Rabi amplitude
``omega`` and drive phase ``psi`` for

    H = 1/2 [[delta, omega e^{-i psi}], [omega e^{i psi}, -delta]]

Natural units throughout: hbar = 1, Omega_max = 1.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.integrate import simpson

from .quantum import PAULI_X, PAULI_Y, PAULI_Z, TimeGrid

OMEGA_MAX = 1.0
PRESET_KEYS = ("a1", "b1", "a2", "c1", "c2", "d1", "d2", "d3", "t1", "t2", "tau", "gamma", "theta0", "phi0", "name")


@dataclass(frozen=True)
class SegmentedLinearFunction:
    """Continuous piecewise-linear function on ``[0, tau]``.

    Only the starting value and the three slopes are stored; the intercepts
    of the later pieces follow from continuity.
    """

    start: float
    slopes: tuple[float, float, float]
    t1: float
    t2: float
    tau: float

    def __post_init__(self):
        if not (0.0 < self.t1 < self.t2 < self.tau):
            raise ValueError("segment times must satisfy 0 < t1 < t2 < tau")

    @property
    def knots(self) -> tuple[float, float, float]:
        """Values at t1, t2 and tau."""
        s1, s2, s3 = self.slopes
        v1 = self.start + s1 * self.t1
        v2 = v1 + s2 * (self.t2 - self.t1)
        return v1, v2, v2 + s3 * (self.tau - self.t2)

    def eval(self, t: float) -> tuple[float, float]:
        """Value and right derivative at ``t`` (the last piece at ``t = tau``)."""
        if not (0.0 <= t <= self.tau):
            raise ValueError("time out of range")
        v, d = self.values(np.array([t]))
        return float(v[0]), float(d[0])

    def values(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized value and slope; pieces are closed on the left."""
        t = np.asarray(t, dtype=np.float64)
        s1, s2, s3 = self.slopes
        v1, v2, _ = self.knots
        seg1 = t < self.t1
        seg3 = t >= self.t2
        val = np.where(seg1, self.start + s1 * t, np.where(seg3, v2 + s3 * (t - self.t2), v1 + s2 * (t - self.t1)))
        slope = np.where(seg1, s1, np.where(seg3, s3, s2))
        return val, slope


@dataclass(frozen=True)
class GatePreset:
    """One row of gate parameters plus the gate it should realize.

    ``theta(t)`` has slopes (a1, 0, a2) from b1; ``phi(t)`` has slopes
    (0, c2, 0) from c1; ``beta(t)`` has slopes (d1, d2, d3) from 0.
    The target is ``exp(i gamma n.sigma)`` with ``n`` at polar angle
    ``theta0`` and azimuth ``phi0``.
    """

    name: str
    a1: float
    b1: float
    a2: float
    c1: float
    c2: float
    d1: float
    d2: float
    d3: float
    t1: float
    t2: float
    tau: float
    gamma: float
    theta0: float
    phi0: float

    def __post_init__(self):
        if not (0.0 < self.t1 < self.t2 < self.tau):
            raise ValueError("infeasible timing: need 0 < t1 < t2 < tau")

    @property
    def theta(self) -> SegmentedLinearFunction:
        return SegmentedLinearFunction(self.b1, (self.a1, 0.0, self.a2), self.t1, self.t2, self.tau)

    @property
    def phi(self) -> SegmentedLinearFunction:
        return SegmentedLinearFunction(self.c1, (0.0, self.c2, 0.0), self.t1, self.t2, self.tau)

    @property
    def beta(self) -> SegmentedLinearFunction:
        return SegmentedLinearFunction(0.0, (self.d1, self.d2, self.d3), self.t1, self.t2, self.tau)

    @property
    def target(self) -> tuple[float, float, float]:
        return self.gamma, self.theta0, self.phi0

    @property
    def closure_error(self) -> float:
        """``theta(tau) - theta(0)``; zero for a path that returns to its start."""
        return self.a2 * (self.tau - self.t2) + self.a1 * self.t1

    @property
    def breakpoints(self) -> tuple[float, float]:
        return self.t1, self.t2

    def grid(self, steps_per_unit: int | None = None) -> TimeGrid:
        kw = {} if steps_per_unit is None else {"steps_per_unit": steps_per_unit}
        return TimeGrid(0.0, self.tau, self.breakpoints, **kw)

    def replace(self, **changes) -> "GatePreset":
        return dataclasses.replace(self, **changes)

    def segments(self) -> np.ndarray:
        """Per-piece linear data, rows ``(t_a, t_b, theta_a, theta', phi_a, phi', beta_a, beta')``."""
        edges = (0.0, self.t1, self.t2, self.tau)
        th = (self.b1, *self.theta.knots)
        ph = (self.c1, *self.phi.knots)
        be = (0.0, *self.beta.knots)
        th_d = (self.a1, 0.0, self.a2)
        ph_d = (0.0, self.c2, 0.0)
        be_d = (self.d1, self.d2, self.d3)
        return np.array(
            [[edges[k], edges[k + 1], th[k], th_d[k], ph[k], ph_d[k], be[k], be_d[k]] for k in range(3)],
            dtype=np.float64,
        )

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for key in PRESET_KEYS:
            val = getattr(self, key)
            out[key] = val if isinstance(val, str) else repr(float(val))
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, str]) -> "GatePreset":
        missing = [k for k in PRESET_KEYS if k not in data and k != "name"]
        if missing:
            raise ValueError(f"preset is missing keys: {', '.join(missing)}")
        kw = {k: float(data[k]) for k in PRESET_KEYS if k != "name"}
        return cls(name=str(data.get("name", "custom")), **kw)


PI = math.pi

# Built-in rows, rounded to four decimals.
PRESETS: dict[str, GatePreset] = {
    "H": GatePreset("H", 0.2159, 0.7854, -0.2159, 0.0, 1.2348, 0.5637, 0.0400, 0.5637, 1.2123, 6.3005, 2.4 * PI, PI / 2, PI / 4, 0.0),
    "S": GatePreset("S", 0.9857, 0.0, -0.9857, 0.0, 1.8678, 0.1273, 0.1779, 0.1273, 0.7332, 4.0971, 1.53 * PI, PI / 4, 0.0, 0.0),
    "T": GatePreset("T", 0.9987, 0.0, -0.9987, 0.0, 2.3161, 0.0521, 0.1252, 0.0521, 0.5060, 3.2187, 1.18 * PI, PI / 8, 0.0, 0.0),
}


def get_preset(name: str) -> GatePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


@dataclass(frozen=True)
class ControlSample:
    delta: float
    omega: float
    psi: float


def controls_from_path(theta, theta_dot, phi, phi_dot, beta_dot):
    """Detuning, Rabi amplitude and phase for the given path data (vectorized).

    The phase keeps the amplitude nonnegative: ``psi = atan2(theta', x) - phi``
    with ``x = sin(theta) (phi' - 2 beta')``.
    """
    sin_th = np.sin(theta)
    x = sin_th * (phi_dot - 2.0 * beta_dot)
    delta = -2.0 * (np.cos(theta) * beta_dot + np.sin(0.5 * theta) ** 2 * phi_dot)
    omega = np.hypot(x, theta_dot)
    psi = np.arctan2(theta_dot, x) - phi
    return delta, omega, psi


def path_values(preset: GatePreset, times) -> tuple[np.ndarray, ...]:
    """``theta, theta', phi, phi', beta, beta'`` at ``times``."""
    th, thd = preset.theta.values(times)
    ph, phd = preset.phi.values(times)
    be, bed = preset.beta.values(times)
    return th, thd, ph, phd, be, bed


def controls(preset: GatePreset, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    th, thd, ph, phd, _, bed = path_values(preset, times)
    return controls_from_path(th, thd, ph, phd, bed)


def synthesize_controls(preset: GatePreset, t: float) -> ControlSample:
    if not (0.0 <= t <= preset.tau):
        raise ValueError("time out of range")
    delta, omega, psi = controls(preset, np.array([t], dtype=np.float64))
    return ControlSample(float(delta[0]), float(omega[0]), float(psi[0]))


def hamiltonian_at(sample: ControlSample) -> np.ndarray:
    off = 0.5 * sample.omega * np.exp(-1j * sample.psi)
    return np.array([[0.5 * sample.delta, off], [np.conj(off), -0.5 * sample.delta]], dtype=np.complex128)


def hamiltonian_matrices(delta, omega, psi, part: str = "full") -> np.ndarray:
    """Stack of 2x2 Hamiltonians from control arrays.

    ``part`` selects the detuning term (``"diagonal"``), the drive term
    (``"offdiagonal"``) or their sum (``"full"``).
    """
    delta = np.asarray(delta, dtype=np.float64)
    n = delta.shape[0]
    H = np.zeros((n, 2, 2), dtype=np.complex128)
    if part in ("full", "diagonal"):
        H[:, 0, 0] = 0.5 * delta
        H[:, 1, 1] = -0.5 * delta
    if part in ("full", "offdiagonal"):
        off = 0.5 * np.asarray(omega) * np.exp(-1j * np.asarray(psi))
        H[:, 0, 1] = off
        H[:, 1, 0] = np.conj(off)
    if part not in ("full", "diagonal", "offdiagonal"):
        raise ValueError(f"unknown hamiltonian part {part!r}")
    return H


class PulseHamiltonian:
    """Sampler for the synthesized single-qubit Hamiltonian of a preset."""

    def __init__(self, preset: GatePreset, part: str = "full"):
        self.preset = preset
        self.part = part

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        return hamiltonian_matrices(*controls(self.preset, times), part=self.part)

    def __call__(self, t: float) -> np.ndarray:
        return self.sample(np.array([t], dtype=np.float64))[0]


def axis_vector(theta0: float, phi0: float) -> np.ndarray:
    return np.array([math.sin(theta0) * math.cos(phi0), math.sin(theta0) * math.sin(phi0), math.cos(theta0)])


def target_unitary(gamma: float, theta0: float, phi0: float) -> np.ndarray:
    """``exp(i gamma n.sigma) = cos(gamma) I + i sin(gamma) n.sigma``."""
    nx, ny, nz = axis_vector(theta0, phi0)
    n_sigma = nx * PAULI_X + ny * PAULI_Y + nz * PAULI_Z
    return math.cos(gamma) * np.eye(2, dtype=np.complex128) + 1j * math.sin(gamma) * n_sigma


def integrate_segments(preset: GatePreset, integrand, n: int = 10000) -> complex:
    """Composite Simpson over each linear piece separately, then summed.

    ``integrand(theta, theta', phi, phi', beta, beta')`` is evaluated with the
    piece's own formulas, so slope jumps at t1 and t2 are never straddled.
    """
    if n % 2:
        n += 1
    total = 0.0
    for ta, tb, th_a, thd, ph_a, phd, be_a, bed in preset.segments():
        u = np.linspace(0.0, tb - ta, n + 1)
        y = integrand(th_a + thd * u, np.full_like(u, thd), ph_a + phd * u, np.full_like(u, phd), be_a + bed * u, np.full_like(u, bed))
        total = total + simpson(y, x=u)
    return total


def pulse_area(preset: GatePreset, n: int = 10000) -> float:
    """``integral of omega(t) dt`` over ``[0, tau]``."""

    def omega(th, thd, ph, phd, be, bed):
        return controls_from_path(th, thd, ph, phd, bed)[1]

    return float(integrate_segments(preset, omega, n))


def max_omega(preset: GatePreset, n: int = 2000) -> float:
    best = 0.0
    for ta, tb, th_a, thd, ph_a, phd, be_a, bed in preset.segments():
        u = np.linspace(0.0, tb - ta, n + 1)
        om = controls_from_path(th_a + thd * u, thd, ph_a + phd * u, phd, bed)[1]
        best = max(best, float(np.max(om)))
    return best


def aux_bloch_vector(preset: GatePreset, t: float) -> np.ndarray:
    """Bloch vector of ``cos(theta/2)|0> + sin(theta/2) e^{i phi}|1>``."""
    th, _ = preset.theta.eval(t)
    ph, _ = preset.phi.eval(t)
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def path_closure_angle(preset: GatePreset) -> float:
    """Great-circle angle between the auxiliary state's start and end points."""
    a = aux_bloch_vector(preset, 0.0)
    b = aux_bloch_vector(preset, preset.tau)
    return float(math.acos(max(-1.0, min(1.0, float(a @ b)))))

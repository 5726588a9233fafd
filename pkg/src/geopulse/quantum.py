"""Dense small-matrix propagation (Schrödinger and Lindblad) and fidelities.

Matrices are plain ``numpy`` complex arrays. Hamiltonians are supplied as
samplers: any callable ``t -> (d, d) array``; objects that also expose
``sample(times) -> (n, d, d)`` are sampled in one vectorized call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels

HERMITIAN_TOL = 1e-9
UNITARY_TOL = 1e-8
DEFAULT_STEPS_PER_UNIT = 1000

Sampler = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """Fixed RK4 grid over ``[t_start, t_end]`` with breakpoints on nodes.

    Each interval between consecutive breakpoints gets its own uniform step,
    at least ``steps_per_unit`` steps per unit time and at least 1000 steps
    over the whole span.
    """

    t_start: float
    t_end: float
    breakpoints: tuple[float, ...] = ()
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("grid misaligned: t_end must exceed t_start")
        if self.steps_per_unit < 1:
            raise ValueError("steps_per_unit must be positive")
        bps = tuple(float(b) for b in self.breakpoints)
        prev = self.t_start
        for b in bps:
            if not (self.t_start < b < self.t_end) or b <= prev:
                raise ValueError("grid misaligned: breakpoints must be ordered and interior")
            prev = b
        object.__setattr__(self, "breakpoints", bps)

    @property
    def edges(self) -> tuple[float, ...]:
        return (self.t_start, *self.breakpoints, self.t_end)

    def intervals(self) -> list[tuple[float, float, int]]:
        """``(a, b, n_steps)`` for each interval."""
        span = self.t_end - self.t_start
        out = []
        e = self.edges
        for a, b in zip(e[:-1], e[1:]):
            length = b - a
            n = max(1, math.ceil(self.steps_per_unit * length - 1e-9), math.ceil(1000.0 * length / span - 1e-9))
            out.append((a, b, n))
        return out

    def nodes(self) -> np.ndarray:
        """All step boundaries, breakpoints included exactly."""
        parts = [np.linspace(a, b, n + 1)[:-1] for a, b, n in self.intervals()]
        parts.append(np.array([self.t_end]))
        return np.concatenate(parts)

    @property
    def n_steps(self) -> int:
        return sum(n for _, _, n in self.intervals())

    def stage_times(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Start, midpoint and end time of each step, plus the step sizes.

        End times that coincide with a breakpoint are nudged one ulp to the
        left so piecewise samplers see the left-hand piece.
        """
        t0, tm, t1, hs = [], [], [], []
        for a, b, n in self.intervals():
            h = (b - a) / n
            starts = a + h * np.arange(n)
            ends = starts + h
            ends[-1] = np.nextafter(b, -np.inf)
            t0.append(starts)
            tm.append(starts + 0.5 * h)
            t1.append(ends)
            hs.append(np.full(n, h))
        return tuple(np.concatenate(x) for x in (t0, tm, t1, hs))


@dataclass(frozen=True)
class CollapseChannel:
    operator: np.ndarray
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("collapse rate must be nonnegative")
        op = np.asarray(self.operator, dtype=np.complex128)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError("collapse operator must be square")
        object.__setattr__(self, "operator", op)


def _sample_many(sampler, times: np.ndarray) -> np.ndarray:
    sample = getattr(sampler, "sample", None)
    if sample is not None:
        return np.asarray(sample(times), dtype=np.complex128)
    return np.stack([np.asarray(sampler(float(t)), dtype=np.complex128) for t in times])


def sample_components(samplers: Sequence, grid: TimeGrid):
    """Sample each component Hamiltonian at RK4 stage times.

    Returns ``(K0, Km, K1, h)`` with ``K*`` of shape ``(J, n, d, d)``.
    Raises ``ValueError('non-hermitian hamiltonian')`` on any non-Hermitian
    sample.
    """
    t0, tm, t1, h = grid.stage_times()
    K = []
    for times in (t0, tm, t1):
        comp = np.stack([_sample_many(s, times) for s in samplers])
        if comp.ndim != 4 or comp.shape[-1] != comp.shape[-2]:
            raise ValueError("sampler must return square matrices")
        if np.max(np.abs(comp - np.conj(np.swapaxes(comp, -1, -2))), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("non-hermitian hamiltonian")
        K.append(np.ascontiguousarray(comp))
    return K[0], K[1], K[2], h


def unitarity_error(U: np.ndarray) -> float:
    U = np.asarray(U)
    d = U.shape[-1]
    return float(np.max(np.abs(np.conj(np.swapaxes(U, -1, -2)) @ U - np.eye(d))))


def _check_unitary(U: np.ndarray) -> None:
    err = unitarity_error(U)
    if err > UNITARY_TOL:
        raise ArithmeticError(f"propagator lost unitarity ({err:.2e}); refine the grid")


def propagate_unitary_family(samplers: Sequence, weights, grid: TimeGrid) -> np.ndarray:
    """Propagate ``H_b(t) = sum_j weights[b, j] samplers[j](t)`` for every row b.

    Returns an array of shape (B, d, d).
    """
    W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if W.shape[1] != len(samplers):
        raise ValueError("weights must have one column per sampler")
    K0, Km, K1, h = sample_components(samplers, grid)
    U = _kernels.rk4_unitary(K0, Km, K1, h, W)
    _check_unitary(U)
    return U


def propagate_unitary(h_sampler: Sampler, grid: TimeGrid) -> np.ndarray:
    """Time-ordered propagator from ``t_start`` to ``t_end`` by classical RK4."""
    return propagate_unitary_family([h_sampler], [[1.0]], grid)[0]


def _channel_arrays(channels: Sequence[CollapseChannel], d: int):
    if not channels:
        return np.zeros((0, d, d), dtype=np.complex128), np.zeros(0)
    ops = np.stack([c.operator for c in channels])
    if ops.shape[1:] != (d, d):
        raise ValueError("collapse operator dimension mismatch")
    return ops, np.array([c.rate for c in channels], dtype=np.float64)


def check_density(rho: np.ndarray, *, trace_tol: float = 1e-6) -> None:
    """Raise ``ArithmeticError`` if ``rho`` breaks the density-matrix invariants."""
    rho = np.asarray(rho)
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if herm > HERMITIAN_TOL:
        raise ArithmeticError(f"density matrix not hermitian ({herm:.2e})")
    sym = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    if np.min(np.linalg.eigvalsh(sym)) < -1e-8:
        raise ArithmeticError("density matrix not positive semidefinite")
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    if np.max(tr) > 1.0 + trace_tol:
        raise ArithmeticError("density matrix trace exceeds one")


def propagate_lindblad_family(
    samplers: Sequence,
    weights,
    channels: Sequence[CollapseChannel],
    rho0s: np.ndarray,
    grid: TimeGrid,
) -> np.ndarray:
    """Lindblad evolution of each initial state under each family member.

    ``rho0s`` has shape (S, d, d); the result has shape (B, S, d, d).
    """
    rho0s = np.asarray(rho0s, dtype=np.complex128)
    if rho0s.ndim == 2:
        rho0s = rho0s[None]
    W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if W.shape[1] != len(samplers):
        raise ValueError("weights must have one column per sampler")
    K0, Km, K1, h = sample_components(samplers, grid)
    d = K0.shape[-1]
    if rho0s.shape[1:] != (d, d):
        raise ValueError("initial state dimension mismatch")
    ops, rates = _channel_arrays(channels, d)
    rho = _kernels.rk4_lindblad(K0, Km, K1, h, W, ops, rates, rho0s)
    check_density(rho)
    return rho


def propagate_lindblad(
    h_sampler: Sampler,
    channels: Sequence[CollapseChannel],
    rho0: np.ndarray,
    grid: TimeGrid,
) -> np.ndarray:
    """Integrate ``drho/dt = i[rho, H] + 1/2 sum_k rate_k L(s_k)`` by RK4.

    ``L(s) = 2 s rho s^dag - s^dag s rho - rho s^dag s``, so a unit-rate
    ``sigma_z`` channel damps coherences as ``exp(-2 t)``.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    check_density(rho0)
    return propagate_lindblad_family([h_sampler], [[1.0]], channels, rho0[None], grid)[0, 0]


def gate_fidelity(u_actual: np.ndarray, u_target: np.ndarray) -> float:
    """``|Tr(U V^dag)| / M``; insensitive to global phase."""
    u_actual = np.asarray(u_actual)
    u_target = np.asarray(u_target)
    if u_actual.shape != u_target.shape or u_actual.ndim != 2:
        raise ValueError("dimension mismatch")
    m = u_actual.shape[0]
    return float(min(1.0, abs(np.trace(u_actual @ u_target.conj().T)) / m))


def average_state_fidelity(evolved, targets: Sequence[np.ndarray], initial_states=None) -> float:
    """Mean of ``<psi_k|rho_k|psi_k>`` over the supplied states.

    ``evolved`` is either a sequence of final density matrices (one per
    target) or a unitary / channel callable applied to ``initial_states``.
    A unitary maps pure states to pure states; a callable receives each
    initial density matrix and must return the final one.
    """
    targets = [np.asarray(t, dtype=np.complex128) for t in targets]
    if not targets:
        raise ValueError("empty state list")
    for t in targets:
        if abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("target states must be normalized")
    if initial_states is not None:
        initial_states = [np.asarray(s, dtype=np.complex128) for s in initial_states]
        if len(initial_states) != len(targets):
            raise ValueError("state lists differ in length")
        for s in initial_states:
            if abs(np.linalg.norm(s) - 1.0) > 1e-9:
                raise ValueError("initial states must be normalized")
        if callable(evolved):
            rhos = [np.asarray(evolved(np.outer(s, s.conj()))) for s in initial_states]
        else:
            U = np.asarray(evolved)
            rhos = [np.outer(U @ s, (U @ s).conj()) for s in initial_states]
    else:
        rhos = [np.asarray(r) for r in evolved]
        if len(rhos) != len(targets):
            raise ValueError("state lists differ in length")
    vals = [np.real(t.conj() @ r @ t) for t, r in zip(targets, rhos)]
    return float(np.clip(np.mean(vals), 0.0, 1.0))


PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

# |0>, |1>, (|0>+|1>)/sqrt2, (|0>+i|1>)/sqrt2
PROBE_STATES = (
    np.array([1, 0], dtype=np.complex128),
    np.array([0, 1], dtype=np.complex128),
    np.array([1, 1], dtype=np.complex128) / math.sqrt(2),
    np.array([1, 1j], dtype=np.complex128) / math.sqrt(2),
)

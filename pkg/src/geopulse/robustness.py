"""Phase bookkeeping, the super-robust integral D12, and the path optimizer.

D12 is a line integral over the path in ``(theta, phi, beta)`` space, so it
does not depend on how fast each linear piece is traversed. The optimizer
exploits this: it drives ``|D12|^2`` to zero over six free variables and then
retimes every piece to the shortest duration allowed by ``omega <= 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .schedule import GatePreset, controls_from_path, integrate_segments, max_omega

log = logging.getLogger(__name__)

FREE_VARIABLES = ("a1", "t1", "t2", "tau", "d1", "d2")
POLAR_TOL = 1e-12


def connection_elements(preset: GatePreset, t: float) -> tuple[float, complex]:
    """``A11 = sin^2(theta/2) phi'`` and ``A12 = -1/2 e^{i phi} (theta' + i sin(theta) phi')``."""
    th, thd = preset.theta.eval(t)
    ph, phd = preset.phi.eval(t)
    a11 = math.sin(0.5 * th) ** 2 * phd
    a12 = -0.5 * complex(math.cos(ph), math.sin(ph)) * complex(thd, math.sin(th) * phd)
    return a11, a12


def geometric_phase(preset: GatePreset, n: int = 10000) -> float:
    """Integral of A11 over the gate; equals ``sin^2(theta_plateau/2) c2 (t2 - t1)`` for these shapes."""

    def a11(th, thd, ph, phd, be, bed):
        return np.sin(0.5 * th) ** 2 * phd

    return float(integrate_segments(preset, a11, n))


def beta_end(preset: GatePreset) -> float:
    return preset.d1 * preset.t1 + preset.d2 * (preset.t2 - preset.t1) + preset.d3 * (preset.tau - preset.t2)


def dynamical_phase_residual(preset: GatePreset, n: int = 10000) -> float:
    """``beta(tau) - integral of A11``; zero when the dynamical phase cancels."""
    return beta_end(preset) - geometric_phase(preset, n)


def d12_integral(preset: GatePreset, n: int = 10000) -> complex:
    """``integral of -1/2 e^{-2i beta} e^{i phi} (theta' + i sin(theta) phi') dt``, Simpson per piece."""
    if n % 2:
        n += 1
    return _kernels.d12_simpson(preset.segments(), n)


@dataclass(frozen=True)
class PhaseReport:
    geometric_phase: float
    beta_tau: float
    dynamical_residual: float
    d12: complex

    def to_mapping(self) -> dict[str, str]:
        return {
            "geometric_phase": repr(self.geometric_phase),
            "beta_tau": repr(self.beta_tau),
            "dynamical_residual": repr(self.dynamical_residual),
            "d12_re": repr(self.d12.real),
            "d12_im": repr(self.d12.imag),
            "d12_abs": repr(abs(self.d12)),
        }


def phase_report(preset: GatePreset, n: int = 10000) -> PhaseReport:
    gp = geometric_phase(preset, n)
    bt = beta_end(preset)
    return PhaseReport(gp, bt, bt - gp, d12_integral(preset, n))


# ---------------------------------------------------------------------------
# reparametrization
# ---------------------------------------------------------------------------


def free_variables(preset: GatePreset) -> np.ndarray:
    return np.array([getattr(preset, k) for k in FREE_VARIABLES], dtype=np.float64)


def _is_polar(theta0: float) -> bool:
    return abs(math.sin(theta0)) < POLAR_TOL


def plateau_angle(gamma: float) -> float:
    """Polar angle whose full azimuthal loop encloses geometric phase ``|gamma|``."""
    ratio = abs(gamma) / (2.0 * math.pi)
    if ratio > 1.0:
        raise ValueError("geometric phase too large for a single loop")
    return 2.0 * math.asin(math.sqrt(ratio))


def build_preset(x, target: tuple[float, float, float], name: str = "optimized") -> GatePreset:
    """Preset from the free variables with every closure relation exact.

    * theta returns to its start: ``a2 = -a1 t1 / (tau - t2)``;
    * the loop encloses ``gamma``: ``sin^2(theta_p/2) c2 (t2 - t1) = gamma``;
    * the dynamical phase cancels: ``beta(tau) = gamma`` (solved for d3);
    * ``b1 = theta0`` and ``c1 = phi0``.

    For an axis off the poles the auxiliary state only comes back if the loop
    is a full turn, so there ``c2 (t2 - t1) = 2 pi`` and the plateau angle
    (hence ``a1``) is fixed by ``gamma`` instead of ``c2``.
    """
    gamma, theta0, phi0 = target
    a1, t1, t2, tau, d1, d2 = (float(v) for v in x)
    if not (0.0 < t1 < t2 < tau):
        raise ValueError("infeasible timing: need 0 < t1 < t2 < tau")
    if _is_polar(theta0):
        s2 = math.sin(0.5 * (theta0 + a1 * t1)) ** 2
        if s2 < 1e-12:
            raise ValueError("infeasible path: loop at the pole encloses no phase")
        c2 = gamma / (s2 * (t2 - t1))
    else:
        a1 = (plateau_angle(gamma) - theta0) / t1
        c2 = math.copysign(2.0 * math.pi, gamma) / (t2 - t1) if gamma else 0.0
    a2 = -a1 * t1 / (tau - t2)
    d3 = (gamma - d1 * t1 - d2 * (t2 - t1)) / (tau - t2)
    return GatePreset(name, a1, theta0, a2, phi0, c2, d1, d2, d3, t1, t2, tau, gamma, theta0, phi0)


def _max_abs_sin(lo: float, hi: float) -> float:
    lo, hi = min(lo, hi), max(lo, hi)
    k = math.ceil((lo - 0.5 * math.pi) / math.pi)
    if 0.5 * math.pi + k * math.pi <= hi:
        return 1.0
    return max(abs(math.sin(lo)), abs(math.sin(hi)))


def retime(preset: GatePreset, omega_max: float = 1.0) -> GatePreset:
    """Same path, each piece stretched or squeezed so its peak amplitude is ``omega_max``.

    Leaves D12, the phases and the realized gate unchanged; minimizes tau
    for the path under the amplitude bound.
    """
    p = preset
    dth1 = p.a1 * p.t1
    dth3 = p.a2 * (p.tau - p.t2)
    dph = p.c2 * (p.t2 - p.t1)
    db1 = p.d1 * p.t1
    db2 = p.d2 * (p.t2 - p.t1)
    db3 = p.d3 * (p.tau - p.t2)
    th_p = p.b1 + dth1
    T1 = math.hypot(2.0 * db1 * _max_abs_sin(p.b1, th_p), dth1) / omega_max
    T2 = abs(math.sin(th_p) * (dph - 2.0 * db2)) / omega_max
    T3 = math.hypot(2.0 * db3 * _max_abs_sin(th_p, th_p + dth3), dth3) / omega_max
    if min(T1, T2, T3) < 1e-12:
        raise ValueError("cannot retime a piece with no motion")
    return p.replace(
        a1=dth1 / T1,
        a2=dth3 / T3,
        c2=dph / T2,
        d1=db1 / T1,
        d2=db2 / T2,
        d3=db3 / T3,
        t1=T1,
        t2=T1 + T2,
        tau=T1 + T2 + T3,
    )


def initial_guess(target: tuple[float, float, float], name: str = "guess", beta_split=(0.1, 0.8, 0.1)) -> GatePreset:
    """Heuristic seed: tilt, one full loop enclosing ``gamma``, tilt back; retimed."""
    gamma, theta0, phi0 = target
    th_p = plateau_angle(gamma)
    if abs(th_p - theta0) < 1e-9:
        th_p = theta0 + 0.1
    f1, f2, f3 = beta_split
    raw = GatePreset(
        name,
        th_p - theta0,
        theta0,
        theta0 - th_p,
        phi0,
        math.copysign(2.0 * math.pi, gamma),
        f1 * gamma,
        f2 * gamma,
        f3 * gamma,
        1.0,
        2.0,
        3.0,
        gamma,
        theta0,
        phi0,
    )
    return retime(raw)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-2
    fd_step: float = 1e-5
    max_iters: int = 50_000
    loss_tolerance: float = 1e-6
    omega_penalty_weight: float = 0.0
    backtrack: float = 0.5
    growth: float = 2.0
    quad_intervals: int = 10000
    check_gradient: bool = False
    retime: bool = True

    def __post_init__(self):
        for key in ("learning_rate", "fd_step", "loss_tolerance"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.omega_penalty_weight < 0:
            raise ValueError("omega_penalty_weight must be nonnegative")
        if not (0.0 < self.backtrack < 1.0) or self.growth < 1.0:
            raise ValueError("need 0 < backtrack < 1 <= growth")


@dataclass
class OptimizationResult:
    preset: GatePreset
    report: PhaseReport
    loss: float
    iterations: int
    history: list[float] = field(default_factory=list)
    max_gradient_rel_error: float = 0.0


class OptimizationError(RuntimeError):
    """Descent failed; carries the best preset seen and its loss."""

    def __init__(self, message: str, best: GatePreset, loss: float, iterations: int):
        super().__init__(f"{message} (loss={loss:.3e} after {iterations} iterations)")
        self.best = best
        self.loss = loss
        self.iterations = iterations


def preset_loss(preset: GatePreset, cfg: OptimizerConfig) -> float:
    loss = abs(d12_integral(preset, cfg.quad_intervals)) ** 2
    if cfg.omega_penalty_weight:
        loss += cfg.omega_penalty_weight * max(0.0, max_omega(preset) - 1.0) ** 2
    return loss


def satisfies_constraints(preset: GatePreset, closed: GatePreset | None = None, tol: float = 1e-9) -> bool:
    """True if the preset already obeys every closure relation the optimizer enforces."""
    if closed is None:
        try:
            closed = build_preset(free_variables(preset), preset.target, preset.name)
        except ValueError:
            return False
    keys = ("a1", "b1", "a2", "c1", "c2", "d3")
    return all(abs(getattr(preset, k) - getattr(closed, k)) <= tol * max(1.0, abs(getattr(closed, k))) for k in keys)


def reoptimize(preset: GatePreset, loss_tolerance: float = 1e-12, **overrides) -> OptimizationResult:
    """Local polish of a preset toward ``D12 = 0`` for its own target."""
    cfg = OptimizerConfig(loss_tolerance=loss_tolerance, **overrides)
    return optimize_preset(preset.target, preset, cfg)


class _Objective:
    def __init__(self, target, cfg: OptimizerConfig, name: str):
        self.target = target
        self.cfg = cfg
        self.name = name

    def __call__(self, x: np.ndarray) -> float:
        try:
            p = build_preset(x, self.target, self.name)
        except ValueError:
            return math.inf
        return preset_loss(p, self.cfg)

    def gradient(self, x: np.ndarray, step: float) -> np.ndarray:
        g = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            hi, lo = self(x + e), self(x - e)
            if math.isinf(hi) or math.isinf(lo):
                # one-sided at a feasibility edge
                f0 = self(x)
                g[i] = (hi - f0) / step if math.isfinite(hi) else (f0 - lo) / step
            else:
                g[i] = (hi - lo) / (2.0 * step)
        return g


def optimize_preset(
    target: tuple[float, float, float],
    seed: GatePreset,
    cfg: OptimizerConfig | None = None,
    name: str | None = None,
) -> OptimizationResult:
    """Drive ``|D12|^2`` (plus the optional amplitude penalty) below tolerance.

    Gradient descent with central finite differences and a backtracking line
    search whose step grows after each success. Raises
    :class:`OptimizationError` when ``max_iters`` runs out or the line search
    stalls.
    """
    cfg = cfg or OptimizerConfig()
    name = name or seed.name
    obj = _Objective(tuple(float(v) for v in target), cfg, name)
    x = free_variables(seed)
    try:
        closed = build_preset(x, obj.target, name)
    except ValueError as exc:
        raise ValueError(f"infeasible seed: {exc}") from None
    if satisfies_constraints(seed, closed):
        seed_loss = preset_loss(seed, cfg)
        if seed_loss <= cfg.loss_tolerance:
            return OptimizationResult(seed, phase_report(seed, cfg.quad_intervals), seed_loss, 0, [seed_loss])
    loss = obj(x)
    history = [loss]
    step = cfg.learning_rate
    worst_grad = 0.0
    it = 0
    while loss > cfg.loss_tolerance:
        if it >= cfg.max_iters:
            raise OptimizationError("no convergence", build_preset(x, obj.target, name), loss, it)
        it += 1
        g = obj.gradient(x, cfg.fd_step)
        if cfg.check_gradient:
            ref = obj.gradient(x, 0.1 * cfg.fd_step)
            denom = np.linalg.norm(ref)
            if denom > 0:
                worst_grad = max(worst_grad, float(np.linalg.norm(g - ref) / denom))
        while True:
            trial = x - step * g
            trial_loss = obj(trial)
            if trial_loss < loss:
                break
            step *= cfg.backtrack
            if step * np.linalg.norm(g) < 1e-15 * (1.0 + np.linalg.norm(x)):
                raise OptimizationError("line search stalled", build_preset(x, obj.target, name), loss, it)
        x, loss = trial, trial_loss
        history.append(loss)
        step *= cfg.growth
    best = build_preset(x, obj.target, name)
    if cfg.retime:
        best = retime(best)
    log.debug("optimizer converged in %d iterations, loss %.3e", it, loss)
    return OptimizationResult(best, phase_report(best, cfg.quad_intervals), loss, it, history, worst_grad)


def optimize_multistart(
    target: tuple[float, float, float],
    seed: GatePreset,
    cfg: OptimizerConfig | None = None,
    starts: int = 4,
    rng_seed: int = 0,
    jitter: float = 0.05,
) -> OptimizationResult:
    """Run from the seed and from ``starts - 1`` jittered copies; keep the shortest converged gate."""
    cfg = cfg or OptimizerConfig()
    rng = np.random.default_rng(rng_seed)
    base = free_variables(seed)
    results: list[OptimizationResult] = []
    failures: list[OptimizationError] = []
    for k in range(starts):
        if k == 0:
            start = seed
        else:
            x = base * (1.0 + jitter * rng.standard_normal(base.size))
            x[1:4] = np.sort(np.abs(x[1:4]))
            try:
                start = build_preset(x, target, seed.name)
            except ValueError:
                continue
        try:
            results.append(optimize_preset(target, start, cfg))
        except (OptimizationError, ValueError) as exc:
            log.info("start %d failed: %s", k, exc)
            if isinstance(exc, OptimizationError):
                failures.append(exc)
    if results:
        return min(results, key=lambda r: r.preset.tau)
    if failures:
        raise min(failures, key=lambda e: e.loss)
    raise ValueError("no feasible start")


def omega_profile(preset: GatePreset, n: int = 2000) -> np.ndarray:
    t = np.linspace(0.0, preset.tau, n)
    th, thd = preset.theta.values(t)
    ph, phd = preset.phi.values(t)
    _, bed = preset.beta.values(t)
    return controls_from_path(th, thd, ph, phd, bed)[1]


def unprotected_variant(preset: GatePreset) -> GatePreset:
    """Same loop and target gate, but all of beta's growth moved to the loop.

    Closure and phase relations still hold, so the gate is exact at zero
    error, while D12 becomes order one: a second-order baseline.
    """
    d2 = beta_end(preset) / (preset.t2 - preset.t1)
    return preset.replace(name=f"{preset.name}-unprotected", d1=0.0, d2=d2, d3=0.0)

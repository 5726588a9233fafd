"""Compare the numba and numpy kernel paths on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each workload runs once per path to warm up (JIT compilation for numba),
then the best of ``--repeat`` timed runs is reported along with the largest
elementwise difference between the two results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from geopulse import _kernels
from geopulse.noise import DecoherenceSpec, GridSpec, error_pairs, probe_densities
from geopulse.quantum import sample_components
from geopulse.rydberg import RydbergParams, _samplers, decay_channels, product_probe_states
from geopulse.schedule import PRESETS, PulseHamiltonian


def unitary_sweep():
    p = PRESETS["S"]
    K = sample_components([PulseHamiltonian(p, "diagonal"), PulseHamiltonian(p, "offdiagonal")], p.grid())
    eta, eps = error_pairs(GridSpec(21), "full")
    W = np.column_stack([1 + eta, 1 + eps])
    return lambda use: _kernels.rk4_unitary(*K, W, use_numba=use)


def lindblad_sweep():
    p = PRESETS["S"]
    K = sample_components([PulseHamiltonian(p, "diagonal"), PulseHamiltonian(p, "offdiagonal")], p.grid())
    eta, eps = error_pairs(GridSpec(41), "diagonal")
    W = np.column_stack([1 + eta, 1 + eps])
    chans = DecoherenceSpec().channels()
    ops, rates = np.stack([c.operator for c in chans]), np.array([c.rate for c in chans])
    rho0 = probe_densities()
    return lambda use: _kernels.rk4_lindblad(*K, W, ops, rates, rho0, use_numba=use)


def two_atom_cells():
    p = PRESETS["S"]
    params = RydbergParams()
    K = sample_components(_samplers(p, params), p.grid())
    eta, eps = error_pairs(GridSpec(3, -0.1, 0.1), "full")
    W = np.column_stack([np.ones_like(eta), 1 + eps, eta])
    chans = decay_channels(params)
    ops, rates = np.stack([c.operator for c in chans]), np.array([c.rate for c in chans])
    rho0 = np.stack([np.outer(s, s.conj()) for s in product_probe_states()])
    return lambda use: _kernels.rk4_lindblad(*K, W, ops, rates, rho0, use_numba=use)


def d12_quadrature():
    segs = PRESETS["H"].segments()
    return lambda use: np.array([_kernels.d12_simpson(segs, 10000, use_numba=use)])


WORKLOADS = {
    "unitary 21x21 grid, 2x2": unitary_sweep,
    "lindblad 41 diag x 4 states, 2x2": lindblad_sweep,
    "lindblad 3x3 grid x 16 states, 8x8": two_atom_cells,
    "D12 Simpson, 3x1e4 intervals": d12_quadrature,
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    _kernels.set_threads_from_env()
    print(f"{'workload':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for label, make in WORKLOADS.items():
        run = make()
        a, b = run(True), run(False)
        t_nb = best_time(lambda: run(True), args.repeat)
        t_np = best_time(lambda: run(False), args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{label:40s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()

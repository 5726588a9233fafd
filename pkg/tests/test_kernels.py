import os
import subprocess
import sys

import numpy as np
import pytest

from geopulse import _kernels
from geopulse.noise import DecoherenceSpec
from geopulse.quantum import sample_components
from geopulse.rydberg import RydbergParams, _samplers, decay_channels, product_probe_states
from geopulse.schedule import PRESETS, PulseHamiltonian

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def single_qubit_inputs():
    p = PRESETS["T"]
    K0, Km, K1, h = sample_components([PulseHamiltonian(p, "diagonal"), PulseHamiltonian(p, "offdiagonal")], p.grid())
    W = np.array([[1.0, 1.0], [1.1, 0.9], [0.8, 1.2]])
    return K0, Km, K1, h, W


@needs_numba
def test_unitary_backends_agree():
    args = single_qubit_inputs()
    a = _kernels.rk4_unitary(*args, use_numba=True)
    b = _kernels.rk4_unitary(*args, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-12


@needs_numba
def test_lindblad_backends_agree_single_qubit():
    K0, Km, K1, h, W = single_qubit_inputs()
    chans = DecoherenceSpec(0.01, 0.02).channels()
    ops = np.stack([c.operator for c in chans])
    rates = np.array([c.rate for c in chans])
    rho0 = np.stack([np.eye(2) / 2, np.array([[0.5, 0.5j], [-0.5j, 0.5]])]).astype(complex)
    a = _kernels.rk4_lindblad(K0, Km, K1, h, W, ops, rates, rho0, use_numba=True)
    b = _kernels.rk4_lindblad(K0, Km, K1, h, W, ops, rates, rho0, use_numba=False)
    assert a.shape == (3, 2, 2, 2)
    assert np.max(np.abs(a - b)) <= 1e-12


@needs_numba
def test_lindblad_backends_agree_two_atoms():
    p = PRESETS["S"]
    params = RydbergParams(tau_r=1e-6)
    K0, Km, K1, h = sample_components(_samplers(p, params), p.grid(200))
    W = np.array([[1.0, 1.05, 0.02]])
    chans = decay_channels(params)
    ops = np.stack([c.operator for c in chans])
    rates = np.array([c.rate for c in chans])
    states = product_probe_states()[:5]
    rho0 = np.stack([np.outer(s, s.conj()) for s in states])
    a = _kernels.rk4_lindblad(K0, Km, K1, h, W, ops, rates, rho0, use_numba=True)
    b = _kernels.rk4_lindblad(K0, Km, K1, h, W, ops, rates, rho0, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-12


@needs_numba
@pytest.mark.parametrize("name", ["H", "S", "T"])
def test_d12_backends_agree(name):
    segs = PRESETS[name].segments()
    assert abs(_kernels.d12_simpson(segs, 1000, use_numba=True) - _kernels.d12_simpson(segs, 1000, use_numba=False)) <= 1e-13


def test_zero_rate_channels_are_dropped():
    ptr, rows, cols, vals, rates = _kernels.jumps_to_coo(np.stack([np.eye(2), np.eye(2)]), np.array([0.0, 0.5]))
    assert list(rates) == [0.5]
    assert ptr[-1] == rows.size == 2


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy")])
def test_env_flag_selects_numpy_path(flag, expected):
    env = dict(os.environ, GEOPULSE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from geopulse import _kernels; print(_kernels.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected

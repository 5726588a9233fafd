"""Hot loops: fixed-step RK4 for Schrödinger/Lindblad families and the
segment-wise Simpson sum behind the robustness integral.

Every kernel exists twice. The numba path loops explicitly and exploits the
sparsity pattern of the generator; the numpy path vectorizes over the batch
axis and steps in Python. ``GEOPULSE_NUMBA=0`` forces the numpy path, and it
is used automatically when numba is not importable.

Batch convention: a family of Hamiltonians ``H_b(t) = sum_j W[b, j] K_j(t)``
is sampled once on the shared time grid; each RK4 step needs the components
at its start, midpoint and end (``K0``, ``Km``, ``K1``, shape ``(J, n, d, d)``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe, which warns on older TBB builds
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


USE_NUMBA = HAVE_NUMBA and _env_flag("GEOPULSE_NUMBA", True)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads_from_env() -> None:
    """Cap numba's worker pool at ``GEOPULSE_THREADS`` when set."""
    raw = os.environ.get("GEOPULSE_THREADS")
    if not (USE_NUMBA and raw):
        return
    try:
        n = int(raw)
    except ValueError:
        return
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


# ---------------------------------------------------------------------------
# sparsity helpers (shared by both paths)
# ---------------------------------------------------------------------------


def nonzero_pattern(*arrays: np.ndarray, atol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Union of nonzero (row, col) positions over the trailing two axes."""
    mask = None
    for a in arrays:
        m = np.abs(a) > atol
        m = m.reshape(-1, a.shape[-2], a.shape[-1]).any(axis=0)
        mask = m if mask is None else (mask | m)
    rows, cols = np.nonzero(mask)
    return rows.astype(np.int64), cols.astype(np.int64)


def jumps_to_coo(jumps: np.ndarray, rates: np.ndarray):
    """Flatten collapse operators to CSR-like (ptr, rows, cols, vals) lists."""
    ptr = [0]
    rr, cc, vv = [], [], []
    keep_rates = []
    for op, rate in zip(jumps, rates):
        if rate == 0.0:
            continue
        r, c = np.nonzero(op)
        rr.extend(r.tolist())
        cc.extend(c.tolist())
        vv.extend(op[r, c].tolist())
        ptr.append(len(rr))
        keep_rates.append(rate)
    return (
        np.asarray(ptr, dtype=np.int64),
        np.asarray(rr, dtype=np.int64),
        np.asarray(cc, dtype=np.int64),
        np.asarray(vv, dtype=np.complex128),
        np.asarray(keep_rates, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _mix(vals, W, b, s, out):
        # out[p] = sum_j W[b, j] * vals[j, s, p]
        J = vals.shape[0]
        nnz = vals.shape[2]
        for p in range(nnz):
            acc = 0j
            for j in range(J):
                acc += W[b, j] * vals[j, s, p]
            out[p] = acc

    @njit(cache=True)
    def _left(rows, cols, g, X, out):
        # out = G @ X for sparse G
        d = X.shape[0]
        out[:, :] = 0
        for p in range(rows.shape[0]):
            r = rows[p]
            c = cols[p]
            gv = g[p]
            for k in range(d):
                out[r, k] += gv * X[c, k]

    @njit(cache=True)
    def _lindblad_rhs(rows, cols, g, jptr, jr, jc, jv, jrate, rho, out):
        # out = G rho + rho G^dag + sum_l rate_l s_l rho s_l^dag
        d = rho.shape[0]
        out[:, :] = 0
        for p in range(rows.shape[0]):
            r = rows[p]
            c = cols[p]
            gv = g[p]
            gc = np.conj(gv)
            for k in range(d):
                out[r, k] += gv * rho[c, k]
                out[k, r] += rho[k, c] * gc
        for l in range(jrate.shape[0]):
            rate = jrate[l]
            for p in range(jptr[l], jptr[l + 1]):
                vp = rate * jv[p]
                rp = jr[p]
                cp = jc[p]
                for q in range(jptr[l], jptr[l + 1]):
                    out[rp, jr[q]] += vp * rho[cp, jc[q]] * np.conj(jv[q])

    @njit(cache=True, parallel=True)
    def _rk4_unitary_nb(rows, cols, v0, vm, v1, h, W, d):
        B = W.shape[0]
        n = v0.shape[1]
        nnz = v0.shape[2]
        out = np.zeros((B, d, d), dtype=np.complex128)
        for b in prange(B):
            g0 = np.empty(nnz, dtype=np.complex128)
            gm = np.empty(nnz, dtype=np.complex128)
            g1 = np.empty(nnz, dtype=np.complex128)
            U = np.zeros((d, d), dtype=np.complex128)
            tmp = np.empty((d, d), dtype=np.complex128)
            k1 = np.empty((d, d), dtype=np.complex128)
            k2 = np.empty((d, d), dtype=np.complex128)
            k3 = np.empty((d, d), dtype=np.complex128)
            k4 = np.empty((d, d), dtype=np.complex128)
            for i in range(d):
                U[i, i] = 1.0
            for s in range(n):
                _mix(v0, W, b, s, g0)
                _mix(vm, W, b, s, gm)
                _mix(v1, W, b, s, g1)
                for p in range(nnz):
                    g0[p] = -1j * g0[p]
                    gm[p] = -1j * gm[p]
                    g1[p] = -1j * g1[p]
                hs = h[s]
                _left(rows, cols, g0, U, k1)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = U[i, k] + 0.5 * hs * k1[i, k]
                _left(rows, cols, gm, tmp, k2)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = U[i, k] + 0.5 * hs * k2[i, k]
                _left(rows, cols, gm, tmp, k3)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = U[i, k] + hs * k3[i, k]
                _left(rows, cols, g1, tmp, k4)
                for i in range(d):
                    for k in range(d):
                        U[i, k] += hs / 6.0 * (k1[i, k] + 2.0 * k2[i, k] + 2.0 * k3[i, k] + k4[i, k])
            out[b] = U
        return out

    @njit(cache=True, parallel=True)
    def _rk4_lindblad_nb(rows, cols, v0, vm, v1, cvals, h, W, jptr, jr, jc, jv, jrate, rho0):
        B = W.shape[0]
        S = rho0.shape[0]
        d = rho0.shape[1]
        n = v0.shape[1]
        nnz = v0.shape[2]
        out = np.zeros((B, S, d, d), dtype=np.complex128)
        for task in prange(B * S):
            b = task // S
            st = task % S
            g0 = np.empty(nnz, dtype=np.complex128)
            gm = np.empty(nnz, dtype=np.complex128)
            g1 = np.empty(nnz, dtype=np.complex128)
            rho = rho0[st].copy()
            tmp = np.empty((d, d), dtype=np.complex128)
            k1 = np.empty((d, d), dtype=np.complex128)
            k2 = np.empty((d, d), dtype=np.complex128)
            k3 = np.empty((d, d), dtype=np.complex128)
            k4 = np.empty((d, d), dtype=np.complex128)
            for s in range(n):
                _mix(v0, W, b, s, g0)
                _mix(vm, W, b, s, gm)
                _mix(v1, W, b, s, g1)
                for p in range(nnz):
                    g0[p] = -1j * g0[p] - cvals[p]
                    gm[p] = -1j * gm[p] - cvals[p]
                    g1[p] = -1j * g1[p] - cvals[p]
                hs = h[s]
                _lindblad_rhs(rows, cols, g0, jptr, jr, jc, jv, jrate, rho, k1)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = rho[i, k] + 0.5 * hs * k1[i, k]
                _lindblad_rhs(rows, cols, gm, jptr, jr, jc, jv, jrate, tmp, k2)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = rho[i, k] + 0.5 * hs * k2[i, k]
                _lindblad_rhs(rows, cols, gm, jptr, jr, jc, jv, jrate, tmp, k3)
                for i in range(d):
                    for k in range(d):
                        tmp[i, k] = rho[i, k] + hs * k3[i, k]
                _lindblad_rhs(rows, cols, g1, jptr, jr, jc, jv, jrate, tmp, k4)
                for i in range(d):
                    for k in range(d):
                        rho[i, k] += hs / 6.0 * (k1[i, k] + 2.0 * k2[i, k] + 2.0 * k3[i, k] + k4[i, k])
            out[b, st] = rho
        return out

    @njit(cache=True)
    def _d12_simpson_nb(segs, n):
        # segs rows: (t_a, t_b, theta_a, theta_dot, phi_a, phi_dot, beta_a, beta_dot)
        total = 0j
        for k in range(segs.shape[0]):
            ta = segs[k, 0]
            tb = segs[k, 1]
            th_a = segs[k, 2]
            thd = segs[k, 3]
            ph_a = segs[k, 4]
            phd = segs[k, 5]
            be_a = segs[k, 6]
            bed = segs[k, 7]
            step = (tb - ta) / n
            acc = 0j
            for i in range(n + 1):
                u = i * step
                th = th_a + thd * u
                ph = ph_a + phd * u
                be = be_a + bed * u
                f = -0.5 * np.exp(1j * (ph - 2.0 * be)) * (thd + 1j * np.sin(th) * phd)
                if i == 0 or i == n:
                    w = 1.0
                elif i % 2 == 1:
                    w = 4.0
                else:
                    w = 2.0
                acc += w * f
            total += acc * step / 3.0
        return total


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _rk4_unitary_np(K0, Km, K1, h, W):
    d = K0.shape[-1]
    B = W.shape[0]
    U = np.broadcast_to(np.eye(d, dtype=np.complex128), (B, d, d)).copy()
    for s in range(h.shape[0]):
        G0 = -1j * np.einsum("bj,jxy->bxy", W, K0[:, s])
        Gm = -1j * np.einsum("bj,jxy->bxy", W, Km[:, s])
        G1 = -1j * np.einsum("bj,jxy->bxy", W, K1[:, s])
        hs = h[s]
        k1 = G0 @ U
        k2 = Gm @ (U + 0.5 * hs * k1)
        k3 = Gm @ (U + 0.5 * hs * k2)
        k4 = G1 @ (U + hs * k3)
        U = U + hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return U


def _rk4_lindblad_np(K0, Km, K1, C, h, W, jumps, rates, rho0):
    B = W.shape[0]
    rho = np.broadcast_to(rho0, (B,) + rho0.shape).astype(np.complex128)
    jd = np.conj(np.swapaxes(jumps, -1, -2))

    def rhs(G, r):
        Gb = G[:, None]
        out = Gb @ r + r @ np.conj(np.swapaxes(Gb, -1, -2))
        for l in range(rates.shape[0]):
            out = out + rates[l] * (jumps[l] @ r @ jd[l])
        return out

    for s in range(h.shape[0]):
        G0 = -1j * np.einsum("bj,jxy->bxy", W, K0[:, s]) - C
        Gm = -1j * np.einsum("bj,jxy->bxy", W, Km[:, s]) - C
        G1 = -1j * np.einsum("bj,jxy->bxy", W, K1[:, s]) - C
        hs = h[s]
        k1 = rhs(G0, rho)
        k2 = rhs(Gm, rho + 0.5 * hs * k1)
        k3 = rhs(Gm, rho + 0.5 * hs * k2)
        k4 = rhs(G1, rho + hs * k3)
        rho = rho + hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


def _d12_simpson_np(segs, n):
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    total = 0j
    for ta, tb, th_a, thd, ph_a, phd, be_a, bed in segs:
        u = np.linspace(0.0, tb - ta, n + 1)
        th = th_a + thd * u
        f = -0.5 * np.exp(1j * (ph_a + phd * u - 2.0 * (be_a + bed * u))) * (thd + 1j * np.sin(th) * phd)
        total += np.dot(w, f) * (tb - ta) / n / 3.0
    return complex(total)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _gather(K, rows, cols):
    return np.ascontiguousarray(K[..., rows, cols])


def rk4_unitary(K0, Km, K1, h, W, *, use_numba: bool | None = None) -> np.ndarray:
    """Propagators ``U_b`` for the family ``sum_j W[b, j] K_j(t)``; shape (B, d, d)."""
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    W = np.ascontiguousarray(W, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if not use:
        return _rk4_unitary_np(K0, Km, K1, h, W)
    rows, cols = nonzero_pattern(K0, Km, K1)
    d = K0.shape[-1]
    return _rk4_unitary_nb(
        rows, cols, _gather(K0, rows, cols), _gather(Km, rows, cols), _gather(K1, rows, cols), h, W, d
    )


def rk4_lindblad(K0, Km, K1, h, W, jumps, rates, rho0, *, use_numba: bool | None = None) -> np.ndarray:
    """Density matrices after evolving each ``rho0[s]`` under each family member.

    Uses ``drho/dt = -i[H, rho] + sum_l rate_l (s rho s^dag - {s^dag s, rho}/2)``.
    Returns shape (B, S, d, d).
    """
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    W = np.ascontiguousarray(W, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.float64)
    d = K0.shape[-1]
    jumps = np.asarray(jumps, dtype=np.complex128).reshape(-1, d, d)
    rates = np.asarray(rates, dtype=np.float64).reshape(-1)
    C = np.zeros((d, d), dtype=np.complex128)
    for op, rate in zip(jumps, rates):
        C += 0.5 * rate * (op.conj().T @ op)
    rho0 = np.ascontiguousarray(rho0, dtype=np.complex128)
    if not use:
        return _rk4_lindblad_np(K0, Km, K1, C, h, W, jumps, rates, rho0)
    rows, cols = nonzero_pattern(K0, Km, K1, C[None])
    cvals = np.ascontiguousarray(C[rows, cols])
    jptr, jr, jc, jv, jrate = jumps_to_coo(jumps, rates)
    return _rk4_lindblad_nb(
        rows,
        cols,
        _gather(K0, rows, cols),
        _gather(Km, rows, cols),
        _gather(K1, rows, cols),
        cvals,
        h,
        W,
        jptr,
        jr,
        jc,
        jv,
        jrate,
        rho0,
    )


def d12_simpson(segs: np.ndarray, n: int, *, use_numba: bool | None = None) -> complex:
    use = USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    segs = np.ascontiguousarray(segs, dtype=np.float64)
    if use:
        return complex(_d12_simpson_nb(segs, int(n)))
    return _d12_simpson_np(segs, int(n))

"""Hot numeric kernels: the AMP iteration loop and the posterior-mean
denoiser, in two interchangeable implementations.

The numba @njit path is used by default; set DPSRA_DISABLE_NUMBA=1 (or any
truthy value) before import to force the pure-numpy path, e.g. when numba is
unavailable or for benchmarking (see benchmarks/bench_amp.py).  Both paths
produce the same trajectories to floating-point roundoff.
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_NUMBA = os.environ.get("DPSRA_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false")

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled by DPSRA_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


DIVERGED = -1  # sentinel iteration count


def denoise_numpy(r: np.ndarray, tau: float, g: np.ndarray, lam: np.ndarray):
    """Posterior mean under the spike + complex-Gaussian prior.

    Prior per coordinate: X = 0 w.p. 1-lam, X ~ CN(0, g^2) w.p. lam,
    observed through r = X + CN(0, tau^2).  Returns (value, d) where d is
    the real Wirtinger partial dEta/dr used in the Onsager correction.
    """
    g2 = g * g
    t2 = tau * tau
    v2 = g2 + t2
    c = g2 / v2
    s = g2 / (t2 * v2)
    u = (r.real * r.real + r.imag * r.imag)
    with np.errstate(divide="ignore"):
        log_r0 = np.log((1.0 - lam) / lam) + np.log(v2 / t2)
    z = log_r0 - s * u
    # pi = sigmoid(-z), computed stably on both tails
    ez = np.exp(-np.abs(z))
    pi = np.where(z >= 0, ez / (1.0 + ez), 1.0 / (1.0 + ez))
    value = pi * c * r
    deriv = c * (pi + s * pi * (1.0 - pi) * u)
    return value, deriv


def _amp_loop_numpy(y, s_mat, sh_mat, g, lam, max_iters, tau_tol, onsager):
    l_dim, m_dim = s_mat.shape
    mu = l_dim / m_dim
    x = np.zeros(m_dim, dtype=np.complex128)
    r = np.zeros(m_dim, dtype=np.complex128)
    z = y.copy()
    trace = np.zeros(max_iters + 1, dtype=np.float64)
    tau_prev = -1.0
    n_iter = 0
    for t in range(max_iters):
        tau = float(np.linalg.norm(z)) / math.sqrt(l_dim)
        if not math.isfinite(tau):
            return x, r, trace, t, DIVERGED
        trace[t] = tau
        n_iter = t + 1
        r = x + sh_mat @ z
        x, deriv = denoise_numpy(r, tau, g, lam)
        z_new = y - s_mat @ x
        if onsager:
            z_new = z_new + (float(np.mean(deriv)) / mu) * z
        z = z_new
        if not np.all(np.isfinite(x)):
            return x, r, trace, n_iter, DIVERGED
        if tau_prev > 0 and abs(tau - tau_prev) < tau_tol * tau_prev:
            break
        tau_prev = tau
    # final pseudo-data and its noise level: the decision statistic
    tau = float(np.linalg.norm(z)) / math.sqrt(l_dim)
    if not math.isfinite(tau):
        return x, r, trace, n_iter, DIVERGED
    trace[n_iter] = tau
    r = x + sh_mat @ z
    return x, r, trace, n_iter + 1, 0


def _amp_loop_plain(y, s_mat, sh_mat, g, lam, max_iters, tau_tol, onsager):
    """Source shared by the numba path: explicit loops over coordinates."""
    l_dim, m_dim = s_mat.shape
    mu = l_dim / m_dim
    x = np.zeros(m_dim, dtype=np.complex128)
    r = np.zeros(m_dim, dtype=np.complex128)
    z = y.copy()
    trace = np.zeros(max_iters + 1, dtype=np.float64)
    tau_prev = -1.0
    n_iter = 0
    for t in range(max_iters):
        acc = 0.0
        for i in range(l_dim):
            acc += z[i].real * z[i].real + z[i].imag * z[i].imag
        tau = math.sqrt(acc / l_dim)
        if not math.isfinite(tau):
            return x, r, trace, t, DIVERGED
        trace[t] = tau
        n_iter = t + 1
        r = x + np.dot(sh_mat, z)
        t2 = tau * tau
        dsum = 0.0
        for m in range(m_dim):
            g2 = g[m] * g[m]
            v2 = g2 + t2
            c = g2 / v2
            s = g2 / (t2 * v2)
            u = r[m].real * r[m].real + r[m].imag * r[m].imag
            lam_m = lam[m]
            if lam_m <= 0.0:
                pi = 0.0
            elif lam_m >= 1.0:
                pi = 1.0
            else:
                zv = math.log((1.0 - lam_m) / lam_m) + math.log(v2 / t2) - s * u
                if zv >= 0.0:
                    e = math.exp(-zv)
                    pi = e / (1.0 + e)
                else:
                    pi = 1.0 / (1.0 + math.exp(zv))
            x[m] = pi * c * r[m]
            dsum += c * (pi + s * pi * (1.0 - pi) * u)
        dbar = dsum / m_dim
        z_new = y - np.dot(s_mat, x)
        if onsager:
            z_new = z_new + (dbar / mu) * z
        z = z_new
        ok = True
        for m in range(m_dim):
            if not (math.isfinite(x[m].real) and math.isfinite(x[m].imag)):
                ok = False
                break
        if not ok:
            return x, r, trace, n_iter, DIVERGED
        if tau_prev > 0 and abs(tau - tau_prev) < tau_tol * tau_prev:
            break
        tau_prev = tau
    acc = 0.0
    for i in range(l_dim):
        acc += z[i].real * z[i].real + z[i].imag * z[i].imag
    tau = math.sqrt(acc / l_dim)
    if not math.isfinite(tau):
        return x, r, trace, n_iter, DIVERGED
    trace[n_iter] = tau
    r = x + np.dot(sh_mat, z)
    return x, r, trace, n_iter + 1, 0


def _assign_with_capacity_plain(offsets, cand_head, cap, n_heads,
                                head_x, head_y, user_x, user_y):
    """Greedy capacity-capped assignment in ascending user order.

    Candidates per user arrive pre-sorted by preference; a user whose
    candidates are all full falls back to the nearest head with space.
    Returns the chosen head index per user.
    """
    n_users = offsets.shape[0] - 1
    load = np.zeros(n_heads, dtype=np.int64)
    choice = np.full(n_users, -1, dtype=np.int64)
    for u in range(n_users):
        picked = -1
        for idx in range(offsets[u], offsets[u + 1]):
            h = cand_head[idx]
            if load[h] < cap:
                picked = h
                break
        if picked < 0:
            best_d = 1e300
            for h in range(n_heads):
                if load[h] < cap:
                    dx = head_x[h] - user_x[u]
                    dy = head_y[h] - user_y[u]
                    d2 = dx * dx + dy * dy
                    if d2 < best_d:
                        best_d = d2
                        picked = h
        load[picked] += 1
        choice[u] = picked
    return choice


if HAVE_NUMBA:
    _amp_loop_numba = njit(cache=True, fastmath=False)(_amp_loop_plain)
    _assign_numba = njit(cache=True)(_assign_with_capacity_plain)


def assign_with_capacity(offsets, cand_head, cap, n_heads, head_x, head_y,
                         user_x, user_y, force=None):
    impl = force or ("numba" if HAVE_NUMBA else "numpy")
    fn = _assign_numba if impl == "numba" and HAVE_NUMBA else _assign_with_capacity_plain
    return fn(np.ascontiguousarray(offsets, dtype=np.int64),
              np.ascontiguousarray(cand_head, dtype=np.int64),
              int(cap), int(n_heads),
              np.ascontiguousarray(head_x, dtype=np.float64),
              np.ascontiguousarray(head_y, dtype=np.float64),
              np.ascontiguousarray(user_x, dtype=np.float64),
              np.ascontiguousarray(user_y, dtype=np.float64))


def amp_loop(y, s_mat, sh_mat, g, lam, max_iters, tau_tol, onsager=True, force=None):
    """Run the AMP iteration; force='numpy'/'numba' overrides the default path.

    Returns (x_denoised, r_pseudo, tau_trace, n_taus, status) with status 0
    or DIVERGED; r_pseudo = x + A^H z is the final effective observation
    X + tau*W (the decision statistic) and the trace includes its noise std
    as the last of n_taus entries.
    """
    impl = force or ("numba" if HAVE_NUMBA else "numpy")
    if impl == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba path requested but numba is unavailable/disabled")
        return _amp_loop_numba(y, s_mat, sh_mat, g, lam,
                               max_iters, tau_tol, onsager)
    return _amp_loop_numpy(y, s_mat, sh_mat, g, lam, max_iters, tau_tol, onsager)


def warmup():
    """Trigger JIT compilation once (call before forking worker pools)."""
    if not HAVE_NUMBA:
        return
    rng = np.random.default_rng(0)
    s = (rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))) / 4.0
    y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    amp_loop(y.astype(np.complex128), s.astype(np.complex128),
             np.ascontiguousarray(s.conj().T), np.ones(16), np.full(16, 0.1),
             5, 1e-3, True, force="numba")
    assign_with_capacity(np.array([0, 1]), np.array([0]), 1, 2,
                         np.zeros(2), np.zeros(2), np.zeros(1), np.zeros(1),
                         force="numba")

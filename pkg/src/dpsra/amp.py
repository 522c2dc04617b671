"""Approximate message passing with a posterior-mean denoiser, plus the
detection metrics and threshold calibration built on top of it.

The detector receives y = sqrt(P * L) * S x + w with unit-norm-column S
(per-symbol transmit power P); it normalizes to the unit-column compressed
model internally, so its state std tau lives in the same units as the
composite channel amplitudes x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, se
from .channel import FadingPdf
from .exceptions import AmpDivergenceError, CalibrationError


def mmse_denoise(x_hat, tau: float, g, lam):
    """Posterior mean and real Wirtinger partial of the spike+CN(0,g^2) prior.

    Accepts scalars or arrays; broadcasting follows numpy rules.  The value
    preserves the phase of x_hat and shrinks its magnitude.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    x_arr = np.atleast_1d(np.asarray(x_hat, dtype=complex))
    g_arr = np.broadcast_to(np.asarray(g, dtype=float), x_arr.shape)
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), x_arr.shape)
    value, deriv = kernels.denoise_numpy(x_arr, float(tau), g_arr, lam_arr)
    if np.isscalar(x_hat) or np.asarray(x_hat).ndim == 0:
        return complex(value[0]), float(deriv[0])
    return value, deriv


@dataclass
class AmpResult:
    """x_hat is the final effective observation X + tau*W (the per-column
    decision statistic and denoiser input); estimates is its posterior mean
    (the recovered composite channel coefficients)."""

    x_hat: np.ndarray
    estimates: np.ndarray
    tau_trace: np.ndarray
    iterations: int

    @property
    def tau(self) -> float:
        return float(self.tau_trace[-1])


def amp_detect(y: np.ndarray, s_mat: np.ndarray, g: np.ndarray, lam,
               noise_power: float, tx_power: float, max_iters: int = 50,
               tau_tol: float = 1e-3, onsager: bool = True,
               force_impl: str | None = None) -> AmpResult:
    """Recover the sparse composite-channel vector from one cluster slot.

    y: received vector (length L), s_mat: unit-norm-column preamble matrix
    (L x M), g: per-column large-scale amplitude prior, lam: scalar or
    per-column activity prior, noise_power/tx_power: linear (mW).
    """
    l_dim, m_dim = s_mat.shape
    if y.shape[0] != l_dim:
        raise ValueError("y and S dimensions disagree")
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), (m_dim,)).astype(float).copy()
    g_arr = np.asarray(g, dtype=float)
    scale = math.sqrt(tx_power * l_dim)
    y_n = np.ascontiguousarray(y / scale, dtype=np.complex128)
    s_c = np.ascontiguousarray(s_mat, dtype=np.complex128)
    sh = np.ascontiguousarray(s_c.conj().T)
    _, r, trace, n_taus, status = kernels.amp_loop(
        y_n, s_c, sh, g_arr, lam_arr, int(max_iters), float(tau_tol),
        onsager, force=force_impl)
    if status == kernels.DIVERGED:
        raise AmpDivergenceError(n_taus)
    tau_final = float(trace[n_taus - 1])
    estimates, _ = kernels.denoise_numpy(r, tau_final, g_arr, lam_arr)
    return AmpResult(x_hat=r, estimates=estimates,
                     tau_trace=trace[:n_taus].copy(), iterations=n_taus - 1)


@dataclass
class DetectionMetrics:
    theta: float
    decisions: np.ndarray
    n_active: int
    n_inactive: int
    n_missed: int
    n_false: int
    pF: float | None = field(init=False)
    pM: float | None = field(init=False)
    pS: float | None = field(init=False)

    def __post_init__(self):
        self.pF = self.n_false / self.n_inactive if self.n_inactive else None
        if self.n_active:
            self.pM = self.n_missed / self.n_active
            self.pS = 1.0 - self.pM
        else:
            self.pM = None
            self.pS = None


def decide_and_score(x_hat: np.ndarray, truth: np.ndarray, theta: float) -> DetectionMetrics:
    """Threshold |x_hat| at theta and score against the true activity."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    truth = np.asarray(truth).astype(bool)
    decisions = np.abs(x_hat) >= theta
    n_active = int(truth.sum())
    n_inactive = truth.size - n_active
    n_missed = int(np.sum(~decisions & truth))
    n_false = int(np.sum(decisions & ~truth))
    return DetectionMetrics(theta=float(theta), decisions=decisions,
                            n_active=n_active, n_inactive=n_inactive,
                            n_missed=n_missed, n_false=n_false)


def calibrate_threshold_empirical(scores: np.ndarray, truth: np.ndarray,
                                  tol: float = 1e-2) -> float:
    """Threshold equalizing empirical pF and pM on a scored population."""
    truth = np.asarray(truth).astype(bool)
    act = np.sort(np.abs(scores[truth]))
    inact = np.sort(np.abs(scores[~truth]))
    if act.size == 0 or inact.size == 0:
        raise CalibrationError("both classes must be present to calibrate")

    def gap(theta):
        p_f = np.mean(inact >= theta)
        p_m = np.mean(act < theta)
        return p_f - p_m

    lo, hi = 0.0, float(max(act[-1], inact[-1])) * (1 + 1e-9)
    if gap(lo) < 0 or gap(hi) > 0:
        raise CalibrationError("no pF = pM crossing in the score range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1e-300):
            break
    return 0.5 * (lo + hi)


def calibrate_threshold_se(tau: float, pdf: FadingPdf) -> float:
    """Threshold equalizing the closed-form pF and the pM integral at std tau."""
    return se.solve_balanced_threshold(tau, pdf)


def calibrate_threshold(mode: str, *, scores=None, truth=None, tau=None,
                        pdf=None, tol: float = 1e-2) -> float:
    if mode == "empirical":
        return calibrate_threshold_empirical(scores, truth, tol)
    if mode == "se":
        return calibrate_threshold_se(tau, pdf)
    raise ValueError(f"unknown calibration mode {mode!r}")

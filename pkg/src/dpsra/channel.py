"""Large-scale fading, Rayleigh small-scale fading, and the analytic
amplitude density of a ring-uniform user population.

Conventions: gains in dB are signed (path loss is negative gain), amplitude
g = 10^(gain_db / 20) so that beta = g^2 is the linear power gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .exceptions import ConfigError

LN10 = math.log(10.0)


def large_scale_gain_db(d, shadow_db, alpha: float, beta: float):
    """Signed dB gain -(alpha + beta*log10(d)) + shadow_db for d in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be strictly positive")
    out = -(alpha + beta * np.log10(d)) + shadow_db
    return float(out) if out.ndim == 0 else out


def gain_db_to_amplitude(gain_db):
    return 10.0 ** (np.asarray(gain_db, dtype=float) / 20.0)


# ---------------------------------------------------------------------------
# Analytic amplitude pdf over a ring
# ---------------------------------------------------------------------------

def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 50):
    """Adaptive Simpson quadrature for a smooth scalar integrand."""
    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(x0, xm, f0, fl, f1, left, eps / 2.0, depth - 1)
                + recurse(xm, x2, f1, fr, f2, right, eps / 2.0, depth - 1))

    if b <= a:
        return 0.0
    fm = f(0.5 * (a + b))
    fa, fb = f(a), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, depth)


def gauss_tail_integral(lo: float, hi: float, tol: float = 1e-8) -> float:
    """Integral of exp(-s^2) over [lo, hi] by adaptive Simpson."""
    lo = max(lo, -9.0)
    hi = min(hi, 9.0)
    if hi <= lo:
        return 0.0
    return _adaptive_simpson(lambda s: math.exp(-s * s), lo, hi, tol)


@dataclass
class FadingPdf:
    """Amplitude density of path loss + log-normal shadowing over a ring.

    mode="area" uses the density implied by area-uniform placement
    (p(d) = 2d / (R2^2 - R1^2)); mode="paper" uses the published two-term
    constants, which correspond to p(d) = 2(d - R1) / (R2 - R1)^2.
    """

    ring: tuple[float, float]
    alpha: float
    beta: float
    sigma_s: float
    mode: str = "area"
    a1: float = field(init=False)
    a2: float = field(init=False)
    gamma1: float = field(init=False)
    gamma2: float = field(init=False)
    b: float = field(init=False)
    c11: float = field(init=False)
    c12: float = field(init=False)
    c21: float = field(init=False)
    c22: float = field(init=False)
    point_value: float | None = None
    n_distance_nodes: int = 48
    n_shadow_nodes: int = 25

    def __post_init__(self):
        r1, r2 = self.ring
        if self.point_value is not None:
            self._init_point_nodes()
            return
        if not (0.0 <= r1 < r2):
            raise ConfigError(f"invalid ring {self.ring}")
        if self.beta <= 0:
            raise ConfigError("pathloss beta must be positive")
        if self.sigma_s < 0:
            raise ConfigError("shadowing std must be non-negative")
        a, be, ss = self.alpha, self.beta, self.sigma_s
        self.gamma1 = 40.0 / be + 1.0
        self.gamma2 = 20.0 / be + 1.0
        if ss > 0:
            self.b = -10.0 * math.sqrt(2.0) / (LN10 * ss)
            denom = (r2 - r1) ** 2 if self.mode == "paper" else (r2 ** 2 - r1 ** 2)
            self.a1 = (40.0 / (denom * be * math.sqrt(math.pi))
                       * math.exp(2.0 * (LN10 * ss / be) ** 2 - 2.0 * LN10 * a / be))
            if self.mode == "paper":
                self.a2 = (40.0 * r1 / (denom * be * math.sqrt(math.pi))
                           * math.exp(0.5 * (LN10 * ss / be) ** 2 - LN10 * a / be))
            else:
                self.a2 = 0.0
            log_r1 = math.log10(r1) if r1 > 0 else None
            self.c12 = (math.inf if log_r1 is None
                        else (-a - be * log_r1) / (math.sqrt(2.0) * ss) - 20.0 / (1.0 * be * self.b))
            self.c11 = (-a - be * math.log10(r2)) / (math.sqrt(2.0) * ss) - 20.0 / (1.0 * be * self.b)
            self.c22 = (math.inf if log_r1 is None
                        else (-a - be * log_r1) / (math.sqrt(2.0) * ss) - 20.0 / (2.0 * be * self.b))
            self.c21 = (-a - be * math.log10(r2)) / (math.sqrt(2.0) * ss) - 20.0 / (2.0 * be * self.b)
        else:
            self.b = -math.inf
            self.a1 = self.a2 = 0.0
            self.c11 = self.c12 = self.c21 = self.c22 = math.nan
        self._init_nodes()

    @classmethod
    def point_mass(cls, g: float = 1.0) -> "FadingPdf":
        """Degenerate pdf for unit-gain (AWGN-style) configurations."""
        obj = cls.__new__(cls)
        obj.ring = (0.0, 0.0)
        obj.alpha = obj.beta = obj.sigma_s = 0.0
        obj.mode = "point"
        obj.point_value = g
        obj._init_point_nodes()
        return obj

    def _init_point_nodes(self):
        self.g_nodes = np.array([float(self.point_value)])
        self.g_weights = np.array([1.0])

    def _init_nodes(self):
        """Generative quadrature nodes for expectations E_g[f(g)].

        Distance is integrated in the log domain (resolves the near-field
        decades of inner rings), shadowing by Gauss-Hermite; weights are
        renormalized so they sum to one exactly.
        """
        r1, r2 = self.ring
        r1 = max(r1, 1e-9)
        gl_x, gl_w = np.polynomial.legendre.leggauss(self.n_distance_nodes)
        t1, t2 = math.log(r1), math.log(r2)
        t = 0.5 * (t2 - t1) * gl_x + 0.5 * (t1 + t2)
        d = np.exp(t)
        if self.mode == "paper":
            pd = 2.0 * (d - self.ring[0]) / (r2 - self.ring[0]) ** 2
        else:
            pd = 2.0 * d / (r2 ** 2 - self.ring[0] ** 2)
        dw = pd * d * gl_w * 0.5 * (t2 - t1)
        dw = np.maximum(dw, 0.0)
        if self.sigma_s > 0:
            gh_x, gh_w = np.polynomial.hermite.hermgauss(self.n_shadow_nodes)
            shadow = math.sqrt(2.0) * self.sigma_s * gh_x
            sw = gh_w / math.sqrt(math.pi)
        else:
            shadow = np.array([0.0])
            sw = np.array([1.0])
        gain = large_scale_gain_db(d[:, None], shadow[None, :], self.alpha, self.beta)
        self.g_nodes = gain_db_to_amplitude(gain).ravel()
        w = (dw[:, None] * sw[None, :]).ravel()
        self.g_weights = w / np.sum(w)

    # -- queries -------------------------------------------------------------

    def evaluate(self, g, tol: float = 1e-8):
        """Analytic density at amplitude g (scalar or array)."""
        if self.point_value is not None:
            raise RuntimeError("point-mass pdf has no density to evaluate")
        if self.sigma_s == 0:
            raise RuntimeError("analytic density requires sigma_s > 0")
        g_arr = np.atleast_1d(np.asarray(g, dtype=float))
        if np.any(g_arr <= 0):
            raise ValueError("amplitude must be strictly positive")
        out = np.empty_like(g_arr)
        for i, gv in enumerate(g_arr):
            lg = math.log(gv)
            q1 = gauss_tail_integral(self.b * lg + self.c11, self.b * lg + self.c12, tol)
            val = self.a1 * gv ** (-self.gamma1) * q1
            if self.a2 != 0.0:
                q2 = gauss_tail_integral(self.b * lg + self.c21, self.b * lg + self.c22, tol)
                val -= self.a2 * gv ** (-self.gamma2) * q2
            out[i] = val
        return float(out[0]) if np.isscalar(g) or np.asarray(g).ndim == 0 else out

    def expect(self, fn) -> float:
        """E[fn(g)] over the quadrature nodes; fn must accept an array."""
        return float(np.sum(self.g_weights * fn(self.g_nodes)))

    def mean_power(self) -> float:
        """E[g^2] (average linear power gain)."""
        return self.expect(lambda g: g ** 2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw amplitudes from the generative model matching this mode."""
        if self.point_value is not None:
            return np.full(n, self.point_value)
        r1, r2 = self.ring
        v = rng.random(n)
        if self.mode == "paper":
            d = r1 + (r2 - r1) * np.sqrt(v)
        else:
            d = np.sqrt(r1 ** 2 + (r2 ** 2 - r1 ** 2) * v)
        shadow = rng.normal(0.0, self.sigma_s, n) if self.sigma_s > 0 else 0.0
        return gain_db_to_amplitude(large_scale_gain_db(d, shadow, self.alpha, self.beta))


def fading_pdf(ring, alpha: float, beta: float, sigma_s: float, mode: str = "area") -> FadingPdf:
    return FadingPdf(ring=tuple(ring), alpha=alpha, beta=beta, sigma_s=sigma_s, mode=mode)


def pdf_for_cluster(config: ScenarioConfig, k: int) -> FadingPdf:
    """Amplitude pdf the analysis modules assume for cluster k.

    The inner ring edge is clamped at the path-loss validity floor so the
    amplitude tail (and E[g^2]) stays finite, matching user placement.
    """
    if config.unit_gain:
        return FadingPdf.point_mass(1.0)
    r1, r2 = config.cluster_rings[k]
    ring = (max(r1, config.min_distance_m), r2)
    return FadingPdf(ring=ring, alpha=config.pathloss_alpha,
                     beta=config.pathloss_beta, sigma_s=config.shadowing_std,
                     mode=config.pdf_mode)


# ---------------------------------------------------------------------------
# Deterministic reciprocal pair channels (splitmix64 hashing)
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x + _SM_GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def _hash_uniform(key: np.ndarray, stream: int) -> np.ndarray:
    """u in (0,1) derived from 64-bit keys; independent per stream index."""
    offset = np.uint64((stream * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    z = _splitmix64(key + offset)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def pair_key(seed: int, i, j) -> np.ndarray:
    """Symmetric 64-bit key per unordered user pair."""
    i = np.asarray(i, dtype=np.uint64)
    j = np.asarray(j, dtype=np.uint64)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    base = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + lo * np.uint64(0x100000001B3))
    return _splitmix64(base ^ (hi + _SM_GAMMA))


def pair_normals(key: np.ndarray, n_streams: int) -> np.ndarray:
    """Standard normals (len(key), n_streams) via Box-Muller on hashed uniforms."""
    cols = []
    for t in range(0, n_streams, 2):
        u1 = _hash_uniform(key, 2 * t)
        u2 = _hash_uniform(key, 2 * t + 1)
        r = np.sqrt(-2.0 * np.log(u1))
        cols.append(r * np.cos(2.0 * np.pi * u2))
        if t + 1 < n_streams:
            cols.append(r * np.sin(2.0 * np.pi * u2))
    return np.stack(cols[:n_streams], axis=-1)


# ---------------------------------------------------------------------------
# Per-cell channel table
# ---------------------------------------------------------------------------

@dataclass
class ChannelTable:
    """Static channel state of one cell build.

    g / beta are the realized large-scale amplitude / power gains, h_small
    the registration-time small-scale draw, h_ub their composite.  D2D
    coefficients are derived on demand from a symmetric hash so that
    reciprocity is exact and no dense pair table is stored.
    """

    seed: int
    alpha: float
    beta_exp: float
    sigma_s: float
    smallscale: bool
    unit_gain: bool
    min_distance: float
    shadow_db: np.ndarray
    gain_db: np.ndarray
    g: np.ndarray
    beta: np.ndarray
    h_small: np.ndarray
    h_ub: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def d2d(self, i, j) -> np.ndarray:
        """Composite complex coefficient of the i<->j device link (reciprocal)."""
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        dist = np.hypot(self.x[i] - self.x[j], self.y[i] - self.y[j])
        dist = np.maximum(dist, self.min_distance)
        key = pair_key(self.seed, i, j)
        z = pair_normals(key, 4)
        shadow = z[:, 0] * self.sigma_s
        gain = large_scale_gain_db(dist, shadow, self.alpha, self.beta_exp)
        amp = gain_db_to_amplitude(gain)
        if self.smallscale:
            h = (z[:, 1] + 1j * z[:, 2]) / math.sqrt(2.0)
        else:
            h = np.ones_like(amp, dtype=complex)
        return amp * h


def sample_channels(distance: np.ndarray, angle: np.ndarray,
                    config: ScenarioConfig, seed: int) -> ChannelTable:
    """Draw the static per-user channel state for a placed population."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    n = distance.shape[0]
    sigma_s = config.shadowing_std
    shadow = rng.normal(0.0, sigma_s, n) if sigma_s > 0 else np.zeros(n)
    if config.unit_gain:
        gain = np.zeros(n)
    else:
        gain = large_scale_gain_db(np.maximum(distance, config.min_distance_m),
                                   shadow, config.pathloss_alpha, config.pathloss_beta)
    g = gain_db_to_amplitude(gain)
    if config.smallscale_enabled:
        h_small = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    else:
        h_small = np.ones(n, dtype=complex)
    return ChannelTable(
        seed=seed,
        alpha=config.pathloss_alpha,
        beta_exp=config.pathloss_beta,
        sigma_s=sigma_s,
        smallscale=config.smallscale_enabled,
        unit_gain=config.unit_gain,
        min_distance=config.min_distance_m,
        shadow_db=shadow,
        gain_db=gain,
        g=g,
        beta=g ** 2,
        h_small=h_small,
        h_ub=g * h_small,
        x=distance * np.cos(angle),
        y=distance * np.sin(angle),
    )

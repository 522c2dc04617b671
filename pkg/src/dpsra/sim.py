"""End-to-end two-phase random-access Monte Carlo engine: phase-I load
estimation, dynamic planning, per-cluster AMP detection, and the energy and
delay accounting, batched over independent trials."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dps, kernels
from .amp import amp_detect, calibrate_threshold_empirical, calibrate_threshold_se, decide_and_score
from .cell import CellState, build_cell
from .channel import FadingPdf
from .config import ScenarioConfig
from .exceptions import AmpDivergenceError
from .preamble import (PreambleSet, build_preambles, estimate_cluster_load,
                       group_preambles, phase1_receive, phase1_transmit_powers)
from .se import TargetCache

CSV_HEADER = ("trial_id,K,M,lambda,estimator,mean_L,pF,pM,pS,"
              "eps_pmb1,eps_wait1,eps_pcs1,eps_pmb2,eps_wait2,eps_pcs2,"
              "eps_total,eps_theoretical,delay_total_symbols,failed")


@dataclass
class EnergyBreakdown:
    """Six-component access energy (mJ); preamble terms normalized by the
    nominal active-user count N*lambda, wait/processing terms are per-active-
    head averages.  per_active_group carries the alternate normalization."""

    pmb1: float
    wait1: float
    pcs1: float
    pmb2: float
    wait2: float
    pcs2: float
    theoretical_pmb2: float
    theoretical_wait2: float
    per_active_group: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.pmb1 + self.wait1 + self.pcs1 + self.pmb2 + self.wait2 + self.pcs2

    @property
    def theoretical_total(self) -> float:
        return (self.pmb1 + self.wait1 + self.pcs1
                + self.theoretical_pmb2 + self.theoretical_wait2 + self.pcs2)


@dataclass
class DelayBreakdown:
    """Six-component access delay in symbols, averaged over active heads."""

    t1: float
    wait1: float
    pcs1: float
    t2: float
    wait2: float
    pcs2: float

    @property
    def total(self) -> float:
        return self.t1 + self.wait1 + self.pcs1 + self.t2 + self.wait2 + self.pcs2


@dataclass
class ClusterOutcome:
    cluster: int
    m_cols: int
    length: int
    n_active: int
    n_inactive: int
    n_missed: int
    n_false: int
    theta: float
    tau_hat: float
    iterations: int


@dataclass
class TrialResult:
    trial_index: int
    failed: bool
    clusters: list
    plan: dps.DpsPlan | None = None
    energy: EnergyBreakdown | None = None
    delay: DelayBreakdown | None = None

    def pooled(self):
        act = sum(c.n_active for c in self.clusters)
        inact = sum(c.n_inactive for c in self.clusters)
        miss = sum(c.n_missed for c in self.clusters)
        false = sum(c.n_false for c in self.clusters)
        p_f = false / inact if inact else None
        p_m = miss / act if act else None
        p_s = 1.0 - p_m if p_m is not None else None
        return p_f, p_m, p_s

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.plan.lengths)) if self.plan is not None else float("nan")


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trial_csv_row(trial: TrialResult, config: ScenarioConfig) -> str:
    p_f, p_m, p_s = trial.pooled() if not trial.failed else (None, None, None)
    e = trial.energy
    d = trial.delay
    cells = [
        trial.trial_index, config.n_clusters, config.groups_per_cluster,
        config.sparsity, config.estimator,
        _fmt(trial.mean_length if trial.plan is not None else None),
        _fmt(p_f), _fmt(p_m), _fmt(p_s),
        _fmt(e.pmb1 if e else None), _fmt(e.wait1 if e else None),
        _fmt(e.pcs1 if e else None), _fmt(e.pmb2 if e else None),
        _fmt(e.wait2 if e else None), _fmt(e.pcs2 if e else None),
        _fmt(e.total if e else None), _fmt(e.theoretical_total if e else None),
        _fmt(d.total if d else None), int(trial.failed),
    ]
    return ",".join(str(c) for c in cells)


# ---------------------------------------------------------------------------
# Single-trial pipeline
# ---------------------------------------------------------------------------

def _draw_trial_randomness(cell: CellState, config: ScenarioConfig,
                           rng: np.random.Generator):
    """Activity and per-RAO small-scale head coefficients for one trial."""
    activity, h_small = [], []
    for k in range(cell.n_clusters):
        m_k = int(cell.m_per_cluster[k])
        nonempty = cell.nonempty_mask(k)
        a = (rng.random(m_k) < config.sparsity).astype(np.int8)
        a[~nonempty] = 0
        activity.append(a)
        if config.smallscale_enabled:
            h = (rng.standard_normal(m_k) + 1j * rng.standard_normal(m_k)) / math.sqrt(2.0)
        else:
            h = np.ones(m_k, dtype=complex)
        h[~nonempty] = 0.0
        h_small.append(h)
    return activity, h_small


def _prior_gains(cell: CellState, config: ScenarioConfig, k: int) -> np.ndarray:
    """Per-column amplitude prior the detector assumes for cluster k."""
    heads = cell.head_user[k]
    mask = heads >= 0
    g = np.zeros(len(heads))
    if config.bs_channel_knowledge == "realized":
        g[mask] = cell.channels.g[heads[mask]]
    else:
        d = cell.distance[heads[mask]]
        g[mask] = 10.0 ** (-(config.pathloss_alpha
                             + config.pathloss_beta * np.log10(d)) / 20.0)
    if config.unit_gain:
        g[mask] = 1.0
    fill = np.median(g[mask]) if mask.any() else 1.0
    g[~mask] = fill
    return g


def energy_report(cell: CellState, config: ScenarioConfig, plan: dps.DpsPlan,
                  activity: list, p1_powers: list) -> EnergyBreakdown:
    t_sym = config.symbol_seconds
    l1_total = config.cluster_preamble_len * config.phase1_reps
    p2 = config.tx_power2_mw
    n_norm = config.n_users * config.sparsity

    sum_pmb1 = sum_pmb2 = sum_pmb2_star = 0.0
    wait2_list, wait2_star_list = [], []
    total_len = plan.total_symbols
    total_bound = int(np.sum(plan.bounds)) + config.guard_symbols * (cell.n_clusters - 1)
    n_active_groups = 0
    for k in range(cell.n_clusters):
        act = activity[k].astype(bool)
        n_act = int(act.sum())
        if n_act == 0:
            continue
        n_active_groups += n_act
        sum_pmb1 += float(np.sum(p1_powers[k][act])) * l1_total * t_sym
        sum_pmb2 += n_act * p2 * int(plan.lengths[k]) * t_sym
        sum_pmb2_star += n_act * p2 * int(plan.bounds[k]) * t_sym
        wait2_list += [total_len - int(plan.lengths[k])] * n_act
        wait2_star_list += [total_bound - int(plan.bounds[k])] * n_act

    if n_active_groups == 0:
        return EnergyBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                               per_active_group={"pmb1": 0.0, "pmb2": 0.0})
    wait_mw, pcs_mw = config.wait_power_mw, config.pcs_power_mw
    wait1 = wait_mw * config.wait1_symbols * t_sym
    pcs1 = pcs_mw * config.pcs_symbols * t_sym
    wait2 = wait_mw * float(np.mean(wait2_list)) * t_sym
    wait2_star = wait_mw * float(np.mean(wait2_star_list)) * t_sym
    pcs2 = pcs_mw * config.pcs_symbols * t_sym
    denom = n_norm if n_norm > 0 else float(n_active_groups)
    return EnergyBreakdown(
        pmb1=sum_pmb1 / denom, wait1=wait1, pcs1=pcs1,
        pmb2=sum_pmb2 / denom, wait2=wait2, pcs2=pcs2,
        theoretical_pmb2=sum_pmb2_star / denom, theoretical_wait2=wait2_star,
        per_active_group={"pmb1": sum_pmb1 / n_active_groups,
                          "pmb2": sum_pmb2 / n_active_groups})


def delay_report(cell: CellState, config: ScenarioConfig, plan: dps.DpsPlan,
                 activity: list) -> DelayBreakdown:
    l1_total = config.cluster_preamble_len * config.phase1_reps
    t2_list, wait2_list = [], []
    total_len = plan.total_symbols
    for k in range(cell.n_clusters):
        n_act = int(activity[k].sum())
        if n_act == 0:
            continue
        t2_list += [int(plan.lengths[k])] * n_act
        wait2_list += [total_len - int(plan.lengths[k])] * n_act
    if not t2_list:
        return DelayBreakdown(l1_total, config.wait1_symbols, config.pcs_symbols,
                              0.0, 0.0, config.pcs_symbols)
    return DelayBreakdown(
        t1=float(l1_total), wait1=float(config.wait1_symbols),
        pcs1=float(config.pcs_symbols), t2=float(np.mean(t2_list)),
        wait2=float(np.mean(wait2_list)), pcs2=float(config.pcs_symbols))


def run_rao(cell: CellState, config: ScenarioConfig, preambles: PreambleSet,
            cache: TargetCache, trial_index: int, master_seed: int) -> TrialResult:
    """One complete random-access opportunity on a built cell."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(11, trial_index)))
    activity, h_small = _draw_trial_randomness(cell, config, rng)
    y1 = phase1_receive(cell, activity, h_small, preambles, config, rng)
    plan = dps.plan(y1, preambles, cell, config, cache)
    p1_powers = phase1_transmit_powers(cell)

    sigma = math.sqrt(config.noise_power_mw)
    outcomes = []
    for k in plan.priority:
        k = int(k)
        m_k = int(cell.m_per_cluster[k])
        length = int(plan.lengths[k])
        s_mat = group_preambles(cell.seed, trial_index, k, length, m_k)
        g_heads = cell.head_gains(k)
        if config.unit_gain:
            g_heads = np.where(cell.nonempty_mask(k), 1.0, 0.0)
        x = activity[k] * g_heads * h_small[k]
        noise = (rng.standard_normal(length) + 1j * rng.standard_normal(length)) \
            / math.sqrt(2.0)
        y2 = math.sqrt(config.tx_power2_mw * length) * (s_mat @ x) + sigma * noise

        g_prior = _prior_gains(cell, config, k)
        if config.use_true_sparsity_prior:
            lam_prior = max(config.sparsity, 0.5 / m_k)
        else:
            lam_prior = min(max(plan.lambda_hat[k], 0.5 / m_k), 0.95)
        try:
            res = amp_detect(y2, s_mat, g_prior, lam_prior, config.noise_power_mw,
                             config.tx_power2_mw, config.amp_max_iters,
                             config.amp_tau_tol)
        except AmpDivergenceError:
            return TrialResult(trial_index=trial_index, failed=True,
                               clusters=[], plan=plan)
        if config.calibration == "empirical":
            truth = activity[k].astype(bool)
            if truth.any() and (~truth).any():
                theta = calibrate_threshold_empirical(np.abs(res.x_hat), truth)
            else:
                theta = calibrate_threshold_se(res.tau, cache.pdf(k))
        else:
            theta = calibrate_threshold_se(res.tau, cache.pdf(k))
        scored = decide_and_score(res.x_hat, activity[k], theta)
        outcomes.append(ClusterOutcome(
            cluster=k, m_cols=m_k, length=length, n_active=scored.n_active,
            n_inactive=scored.n_inactive, n_missed=scored.n_missed,
            n_false=scored.n_false, theta=theta, tau_hat=res.tau,
            iterations=res.iterations))

    energy = energy_report(cell, config, plan, activity, p1_powers)
    delay = delay_report(cell, config, plan, activity)
    return TrialResult(trial_index=trial_index, failed=False, clusters=outcomes,
                       plan=plan, energy=energy, delay=delay)


# ---------------------------------------------------------------------------
# Batch driver
# ---------------------------------------------------------------------------

def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    vals = values[~np.isnan(values)]
    if vals.size == 0:
        return float("nan"), float("nan")
    if vals.size == 1:
        return float(vals[0]), 0.0
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(vals.size))


@dataclass
class RaReport:
    config: ScenarioConfig
    master_seed: int
    n_trials: int
    n_failed: int
    pF: float | None
    pM: float | None
    pS: float | None
    ps_mean: float
    ps_stderr: float
    eps_total_mean: float
    eps_total_stderr: float
    eps_theoretical_mean: float
    mean_length: float
    delay_total_mean: float
    energy_means: dict
    delay_means: dict
    per_trial_ps: np.ndarray
    per_trial_eps: np.ndarray
    per_trial_mean_length: np.ndarray
    per_trial_delay: np.ndarray
    csv_rows: list


_WORKER: dict = {}


def _worker_init(cell, config, master_seed, cache=None):
    _WORKER["cell"] = cell
    _WORKER["config"] = config
    _WORKER["seed"] = master_seed
    _WORKER["preambles"] = build_preambles(config)
    _WORKER["cache"] = cache if cache is not None else TargetCache(config)


def _worker_trial(index: int) -> TrialResult:
    return run_rao(_WORKER["cell"], _WORKER["config"], _WORKER["preambles"],
                   _WORKER["cache"], index, _WORKER["seed"])


def run_batch(config: ScenarioConfig, n_trials: int, parallelism: int = 1,
              seed: int | None = None, cell: CellState | None = None) -> RaReport:
    """Independent seeded trials with order-independent aggregation.

    The aggregate is a pure function of (config, seed, n_trials); the
    parallelism degree only changes wall time.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    master_seed = config.rng_seed if seed is None else seed
    if cell is None:
        cell = build_cell(config, master_seed)
    kernels.warmup()
    cache = TargetCache(config)
    if config.fixed_length == 0:
        cache.warm(cell.m_per_cluster)
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism, initializer=_worker_init,
                                 initargs=(cell, config, master_seed, cache)) as pool:
            trials = list(pool.map(_worker_trial, range(n_trials), chunksize=4))
    else:
        _worker_init(cell, config, master_seed, cache)
        trials = [_worker_trial(i) for i in range(n_trials)]
    trials.sort(key=lambda t: t.trial_index)

    n_failed = sum(t.failed for t in trials)
    if n_failed * 2 > n_trials:
        raise RuntimeError(f"{n_failed}/{n_trials} trials failed (AMP divergence)")
    ok = [t for t in trials if not t.failed]

    act = sum(c.n_active for t in ok for c in t.clusters)
    inact = sum(c.n_inactive for t in ok for c in t.clusters)
    miss = sum(c.n_missed for t in ok for c in t.clusters)
    false = sum(c.n_false for t in ok for c in t.clusters)
    p_f = false / inact if inact else None
    p_m = miss / act if act else None
    p_s = 1.0 - p_m if p_m is not None else None

    ps_arr = np.array([t.pooled()[2] if t.pooled()[2] is not None else np.nan
                       for t in ok], dtype=float)
    eps_arr = np.array([t.energy.total for t in ok], dtype=float)
    len_arr = np.array([t.mean_length for t in ok], dtype=float)
    delay_arr = np.array([t.delay.total for t in ok], dtype=float)
    ps_mean, ps_se = _mean_stderr(ps_arr)
    eps_mean, eps_se = _mean_stderr(eps_arr)
    energy_means = {}
    for name in ("pmb1", "wait1", "pcs1", "pmb2", "wait2", "pcs2"):
        energy_means[name], _ = _mean_stderr(
            np.array([getattr(t.energy, name) for t in ok], dtype=float))
    delay_means = {}
    for name in ("t1", "wait1", "pcs1", "t2", "wait2", "pcs2"):
        delay_means[name], _ = _mean_stderr(
            np.array([getattr(t.delay, name) for t in ok], dtype=float))

    return RaReport(
        config=config, master_seed=master_seed, n_trials=n_trials,
        n_failed=n_failed, pF=p_f, pM=p_m, pS=p_s,
        ps_mean=ps_mean, ps_stderr=ps_se,
        eps_total_mean=eps_mean, eps_total_stderr=eps_se,
        eps_theoretical_mean=_mean_stderr(
            np.array([t.energy.theoretical_total for t in ok], dtype=float))[0],
        mean_length=_mean_stderr(len_arr)[0],
        delay_total_mean=_mean_stderr(delay_arr)[0],
        energy_means=energy_means, delay_means=delay_means,
        per_trial_ps=ps_arr, per_trial_eps=eps_arr,
        per_trial_mean_length=len_arr, per_trial_delay=delay_arr,
        csv_rows=[trial_csv_row(t, config) for t in trials])


# ---------------------------------------------------------------------------
# Capacity search (bound-based)
# ---------------------------------------------------------------------------

def _ring_area_fractions(config: ScenarioConfig) -> np.ndarray:
    r = np.array(config.cluster_rings, dtype=float)
    area = r[:, 1] ** 2 - r[:, 0] ** 2
    return area / np.sum(area)


def capacity_search(config: ScenarioConfig, fixed_length: int,
                    lam: float | None = None, mode: str = "grouped",
                    n_max: int = 50_000_000) -> int:
    """Largest user count whose per-cluster length bounds fit fixed_length.

    Cluster column counts scale proportionally with N (area-proportional
    populations, group_size users per column).  mode="none" evaluates the
    degenerate single-cluster, size-1-group layout.
    """
    lam = config.sparsity if lam is None else lam
    if mode == "none":
        cfg = config.with_overrides(
            n_clusters=1, cluster_rings=[(0.0, config.cell_radius_m)], group_size=1)
    else:
        cfg = config
    cache = TargetCache(cfg)
    fracs = _ring_area_fractions(cfg)

    def fits(n: int) -> bool:
        for k in range(cfg.n_clusters):
            m_k = max(1, math.ceil(n * fracs[k] / cfg.group_size))
            if cache.solution(k, m_k, lam).l_bound > fixed_length:
                return False
        return True

    lo = cfg.n_clusters * cfg.group_size
    if not fits(lo):
        return 0
    hi = lo
    while fits(hi) and hi < n_max:
        hi *= 2
    hi = min(hi, n_max)
    while hi - lo > max(1, lo // 1000):
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def compare_capacity(config: ScenarioConfig, fixed_length: int,
                     lam: float | None = None) -> dict:
    return {"grouped": capacity_search(config, fixed_length, lam, "grouped"),
            "no_grouping": capacity_search(config, fixed_length, lam, "none")}


# ---------------------------------------------------------------------------
# Prior-matched detection trials and simulated minimum length
# ---------------------------------------------------------------------------

def detection_trial(m_cols: int, length: int, lam: float, pdf: FadingPdf,
                    power_mw: float, noise_mw: float, rng: np.random.Generator,
                    calibration: str = "se", smallscale: bool = True,
                    max_iters: int = 50, onsager: bool = True):
    """One single-cluster detection with activity/channels drawn from the
    same prior the analysis assumes; returns the scored metrics and result."""
    g = pdf.sample(m_cols, rng)
    active = rng.random(m_cols) < lam
    if smallscale:
        h = (rng.standard_normal(m_cols) + 1j * rng.standard_normal(m_cols)) / math.sqrt(2.0)
    else:
        h = np.ones(m_cols, dtype=complex)
    x = np.where(active, g, 0.0) * h
    s_mat = math.sqrt(0.5 / length) * (rng.standard_normal((length, m_cols))
                                       + 1j * rng.standard_normal((length, m_cols)))
    noise = (rng.standard_normal(length) + 1j * rng.standard_normal(length)) / math.sqrt(2.0)
    y = math.sqrt(power_mw * length) * (s_mat @ x) + math.sqrt(noise_mw) * noise
    res = amp_detect(y, s_mat, g, max(lam, 0.5 / m_cols), noise_mw, power_mw,
                     max_iters=max_iters, onsager=onsager)
    if calibration == "empirical" and active.any() and (~active).any():
        theta = calibrate_threshold_empirical(np.abs(res.x_hat), active)
    else:
        theta = calibrate_threshold_se(res.tau, pdf)
    return decide_and_score(res.x_hat, active, theta), res, x


def probe_length(length: int, m_cols: int, lam: float, pdf: FadingPdf,
                 power_mw: float, noise_mw: float, trials: int, seed: int,
                 calibration: str = "se", smallscale: bool = True) -> tuple[float, float]:
    """Pooled (pF, pM) over prior-matched trials at one preamble length."""
    act = inact = miss = false = 0
    for t in range(trials):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(13, length, t)))
        scored, _, _ = detection_trial(m_cols, length, lam, pdf, power_mw,
                                       noise_mw, rng, calibration, smallscale)
        act += scored.n_active
        inact += scored.n_inactive
        miss += scored.n_missed
        false += scored.n_false
    p_f = false / inact if inact else 0.0
    p_m = miss / act if act else 0.0
    return p_f, p_m


def simulated_mpl(m_cols: int, lam: float, pdf: FadingPdf, power_mw: float,
                  noise_mw: float, pf_target: float, pm_target: float,
                  l_lo: int, l_hi: int, trials: int = 200, seed: int = 0,
                  margin: float = 0.01, calibration: str = "se",
                  smallscale: bool = True) -> int:
    """Smallest length in [l_lo, l_hi] whose pooled pF and pM both land at or
    below target + margin (binary search over length)."""

    def ok(length: int) -> bool:
        p_f, p_m = probe_length(length, m_cols, lam, pdf, power_mw, noise_mw,
                                trials, seed, calibration, smallscale)
        return p_f <= pf_target + margin and p_m <= pm_target + margin

    lo, hi = int(l_lo), int(l_hi)
    while not ok(hi):
        lo = hi
        hi = int(math.ceil(hi * 1.5))
        if hi > 16 * l_hi:
            raise RuntimeError(f"no achievable length up to {hi}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi

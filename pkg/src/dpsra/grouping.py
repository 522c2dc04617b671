"""Self-organized group formation: head election, strongest-head
subscription, and energy-optimal head re-selection (K-means style rounds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .channel import ChannelTable
from .config import ScenarioConfig


@dataclass
class GroupEnergyScore:
    user: int
    eps_inner: float
    eps_outer: float

    @property
    def gamma(self) -> float:
        return self.eps_inner + self.eps_outer


@dataclass
class GroupingState:
    cluster_of_user: np.ndarray
    group_of_user: np.ndarray    # group index within the user's cluster
    is_head: np.ndarray
    m_per_cluster: np.ndarray
    head_user: list              # per cluster: array group -> user id (-1 empty)


def achievable_rate(h, power_mw: float, bandwidth_hz: float, noise_mw: float):
    """Error-free rate B*log2(1 + P|h|^2/N_o); zero only when h = 0."""
    snr = power_mw * np.abs(np.asarray(h)) ** 2 / noise_mw
    return bandwidth_hz * np.log2(1.0 + snr)


def score_candidate(channels: ChannelTable, members: np.ndarray, candidate: int,
                    config: ScenarioConfig) -> GroupEnergyScore:
    """Energy of electing `candidate` as head of the group `members`."""
    members = np.asarray(members, dtype=np.int64)
    power = config.tx_power_mw
    d_bits = config.d2d_payload_bits
    bw = config.d2d_bandwidth_hz
    noise = config.noise_power_mw
    others = members[members != candidate]
    if others.size:
        rates = achievable_rate(channels.d2d(others, np.full(others.size, candidate)),
                                power, bw, noise)
        if np.any(rates == 0.0):
            return GroupEnergyScore(candidate, math.inf, math.inf)
        eps_inner = float(np.sum(power * d_bits / rates))
    else:
        eps_inner = 0.0
    rate_up = achievable_rate(channels.h_ub[candidate], power, bw, noise)
    if rate_up == 0.0:
        return GroupEnergyScore(candidate, eps_inner, math.inf)
    eps_outer = float(power * members.size * d_bits / rate_up)
    return GroupEnergyScore(candidate, eps_inner, eps_outer)


def _elect_heads(ids: np.ndarray, m_k: int, group_size: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Self-election at rate 1/group_size, topped up so every user fits under
    the hard size cap and trimmed to the column budget."""
    n_k = ids.size
    need = max(1, math.ceil(n_k / group_size))
    elected = ids[rng.random(n_k) < 1.0 / group_size]
    if elected.size < need:
        pool = np.setdiff1d(ids, elected, assume_unique=False)
        extra = rng.choice(pool, size=need - elected.size, replace=False)
        elected = np.concatenate([elected, extra])
    if elected.size > m_k:
        elected = rng.choice(elected, size=m_k, replace=False)
    return np.sort(elected)


def _subscribe_cluster(state: GroupingState, k: int, channels: ChannelTable,
                       config: ScenarioConfig) -> int:
    """Re-subscribe every non-head user of cluster k to its strongest heard
    head, capacity capped; returns the number of changed memberships.

    Preference per user: heard heads by descending channel power (ties by
    head id), then unheard in-range heads, then the nearest head with space.
    Users are served in ascending id order.
    """
    heads = state.head_user[k]
    head_ids = heads[heads >= 0]
    head_group = np.nonzero(heads >= 0)[0]
    ids = np.nonzero(state.cluster_of_user == k)[0]
    subscribers = ids[~state.is_head[ids]]
    if head_ids.size == 0 or subscribers.size == 0:
        return 0

    cap = config.group_size - 1 if config.group_cap_enforced else 1 << 60
    tree = cKDTree(np.column_stack([channels.x[head_ids], channels.y[head_ids]]))
    cand = tree.query_ball_point(
        np.column_stack([channels.x[subscribers], channels.y[subscribers]]),
        r=config.d2d_max_range_m)

    # one vectorized channel evaluation for every (user, candidate head) pair
    lengths = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(cand))
    total = int(lengths.sum())
    if total:
        local = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand])
    else:
        local = np.empty(0, dtype=np.int64)
    user_idx = np.repeat(np.arange(subscribers.size), lengths)
    strength = np.abs(channels.d2d(subscribers[user_idx], head_ids[local])) ** 2 \
        if total else np.empty(0)
    snr_floor = config.noise_power_mw * 10.0 ** (config.hearing_threshold_db / 10.0)
    unheard = (config.tx_power_mw * strength < snr_floor).astype(np.int8)
    # per-user preference order in one global sort
    order = np.lexsort((head_ids[local], -strength, unheard, user_idx))
    cand_sorted = local[order]
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)

    choice = kernels.assign_with_capacity(
        offsets, cand_sorted, cap, head_ids.size,
        channels.x[head_ids], channels.y[head_ids],
        channels.x[subscribers], channels.y[subscribers])
    new_groups = head_group[choice].astype(np.int32)
    changed = int(np.sum(new_groups != state.group_of_user[subscribers]))
    state.group_of_user[subscribers] = new_groups
    return changed


def _group_gammas(state: GroupingState, k: int, channels: ChannelTable,
                  config: ScenarioConfig):
    """Vectorized candidate energies for every group of cluster k.

    Returns (members_sorted, group_of_member, gamma_per_member): the rate of
    an intra-group link is direction-independent here (reciprocal channel,
    common P/B/N_o), so each unordered pair is evaluated once.
    """
    ids = np.nonzero(state.cluster_of_user == k)[0]
    order = np.lexsort((ids, state.group_of_user[ids]))
    members = ids[order]
    groups = state.group_of_user[members]
    power = config.tx_power_mw
    d_bits = config.d2d_payload_bits
    bw = config.d2d_bandwidth_hz
    noise = config.noise_power_mw

    # all intra-group unordered pairs
    pair_a, pair_b = [], []
    start = 0
    boundaries = np.nonzero(np.diff(groups))[0] + 1
    for chunk in np.split(members, boundaries):
        n = chunk.size
        if n >= 2:
            ii, jj = np.triu_indices(n, k=1)
            pair_a.append(chunk[ii])
            pair_b.append(chunk[jj])
        start += n
    eps_inner = np.zeros(channels.g.shape[0])
    if pair_a:
        pa = np.concatenate(pair_a)
        pb = np.concatenate(pair_b)
        rates = achievable_rate(channels.d2d(pa, pb), power, bw, noise)
        with np.errstate(divide="ignore"):
            w = np.where(rates > 0, power * d_bits / rates, np.inf)
        np.add.at(eps_inner, pa, w)
        np.add.at(eps_inner, pb, w)

    size_of_group = np.bincount(groups, minlength=state.m_per_cluster[k])
    rate_up = achievable_rate(channels.h_ub[members], power, bw, noise)
    with np.errstate(divide="ignore"):
        eps_outer = np.where(rate_up > 0,
                             power * size_of_group[groups] * d_bits / rate_up, np.inf)
    return members, groups, eps_inner[members] + eps_outer


def _reselect_heads(state: GroupingState, k: int, channels: ChannelTable,
                    config: ScenarioConfig) -> int:
    """Per-group argmin-energy head selection; ties broken by lowest user id."""
    members, groups, gamma = _group_gammas(state, k, channels, config)
    changed = 0
    boundaries = np.nonzero(np.diff(groups))[0] + 1
    for chunk, gam in zip(np.split(members, boundaries),
                          np.split(gamma, boundaries)):
        m = int(state.group_of_user[chunk[0]])
        current = state.head_user[k][m]
        finite = np.isfinite(gam)
        if not finite.any():
            continue
        # members are id-sorted within the group, so argmin keeps the lowest id
        best_user = int(chunk[np.argmin(np.where(finite, gam, np.inf))])
        if best_user != current:
            state.is_head[current] = False
            state.is_head[best_user] = True
            state.head_user[k][m] = best_user
            changed += 1
    return changed


def total_head_energy(state: GroupingState, channels: ChannelTable,
                      config: ScenarioConfig) -> float:
    """Sum over groups of the selected head's gamma (monotonicity probe)."""
    total = 0.0
    for k in range(len(state.m_per_cluster)):
        members, _, gamma = _group_gammas(state, k, channels, config)
        is_head = state.is_head[members]
        total += float(np.sum(gamma[is_head]))
    return total


def initialize_groups(channels: ChannelTable, cluster_of_user: np.ndarray,
                      config: ScenarioConfig, rng: np.random.Generator) -> GroupingState:
    """Elect provisional heads and subscribe everyone once."""
    n = cluster_of_user.shape[0]
    n_clusters = config.n_clusters
    group_of_user = np.full(n, -1, dtype=np.int32)
    is_head = np.zeros(n, dtype=bool)
    m_per_cluster = np.zeros(n_clusters, dtype=np.int64)
    head_user = []
    for k in range(n_clusters):
        ids = np.nonzero(cluster_of_user == k)[0]
        m_k = max(config.groups_per_cluster,
                  math.ceil(ids.size / config.group_size))
        m_per_cluster[k] = m_k
        heads_k = _elect_heads(ids, m_k, config.group_size, rng)
        hu = np.full(m_k, -1, dtype=np.int64)
        hu[:heads_k.size] = heads_k
        head_user.append(hu)
        is_head[heads_k] = True
        group_of_user[heads_k] = np.arange(heads_k.size, dtype=np.int32)
    state = GroupingState(cluster_of_user=cluster_of_user.astype(np.int32),
                          group_of_user=group_of_user, is_head=is_head,
                          m_per_cluster=m_per_cluster, head_user=head_user)
    for k in range(n_clusters):
        _subscribe_cluster(state, k, channels, config)
    return state


def kmeans_round(state: GroupingState, channels: ChannelTable,
                 config: ScenarioConfig) -> int:
    """One round: re-subscribe members, then re-select each group's head.

    The total selected-head energy is non-increasing across the re-selection
    step. Returns the number of membership/head changes (0 at a fixed point).
    """
    changed = 0
    for k in range(len(state.m_per_cluster)):
        changed += _subscribe_cluster(state, k, channels, config)
    for k in range(len(state.m_per_cluster)):
        changed += _reselect_heads(state, k, channels, config)
    return changed

"""Static cell topology: user placement, ring clustering, group structure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import grouping
from .channel import ChannelTable, sample_channels
from .config import ScenarioConfig
from .exceptions import ConfigError, RingInfeasibleError


@dataclass
class User:
    id: int
    distance: float
    angle: float
    cluster: int
    group: int
    is_group_head: bool


@dataclass
class CellState:
    """Immutable after construction; shared read-only by Monte Carlo workers."""

    config: ScenarioConfig
    seed: int
    distance: np.ndarray
    angle: np.ndarray
    cluster: np.ndarray          # ring index per user
    group: np.ndarray            # group index within the user's cluster
    is_head: np.ndarray
    m_per_cluster: np.ndarray    # column count per cluster (>= nonempty groups)
    head_user: list = field(default_factory=list)  # per cluster: group -> user id (-1 empty)
    channels: ChannelTable | None = None
    beta_min: float = 0.0        # min large-scale power gain over group heads

    @property
    def n_users(self) -> int:
        return int(self.distance.shape[0])

    @property
    def n_clusters(self) -> int:
        return len(self.m_per_cluster)

    @cached_property
    def users(self) -> list:
        return [User(int(i), float(self.distance[i]), float(self.angle[i]),
                     int(self.cluster[i]), int(self.group[i]), bool(self.is_head[i]))
                for i in range(self.n_users)]

    @cached_property
    def cluster_membership(self) -> dict:
        """cluster -> list of group indices that have members."""
        out = {}
        for k in range(self.n_clusters):
            out[k] = [m for m in range(self.m_per_cluster[k]) if self.head_user[k][m] >= 0]
        return out

    @cached_property
    def group_membership(self) -> dict:
        """(cluster, group) -> set of member user ids."""
        out = {}
        for i in range(self.n_users):
            out.setdefault((int(self.cluster[i]), int(self.group[i])), set()).add(i)
        return out

    def nonempty_mask(self, k: int) -> np.ndarray:
        return self.head_user[k] >= 0

    def head_gains(self, k: int) -> np.ndarray:
        """Large-scale amplitude per column of cluster k (0 for empty columns)."""
        heads = self.head_user[k]
        g = np.zeros(len(heads))
        mask = heads >= 0
        g[mask] = self.channels.g[heads[mask]]
        return g


def build_cell(config: ScenarioConfig, seed: int | None = None) -> CellState:
    """Place users on the disc, sample channels, and form groups.

    Deterministic for a fixed seed. Raises a structured error when a ring
    cannot host at least one group.
    """
    if seed is None:
        seed = config.rng_seed
    n = config.n_users
    if n <= 0:
        raise ConfigError("cannot build a cell with zero users")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    radius = config.cell_radius_m
    distance = radius * np.sqrt(rng.random(n))
    angle = rng.random(n) * 2.0 * math.pi

    d_assign = distance
    if config.distance_noise_std_m > 0:
        noise = rng.normal(0.0, config.distance_noise_std_m, n)
        d_assign = np.clip(distance + noise, config.min_distance_m, radius * (1 - 1e-12))
    edges = np.array([r2 for _, r2 in config.cluster_rings[:-1]])
    cluster = np.searchsorted(edges, d_assign, side="right").astype(np.int32)

    for k in range(config.n_clusters):
        if int(np.sum(cluster == k)) < 1:
            raise RingInfeasibleError(k, "fewer users than one group")

    channels = sample_channels(distance, angle, config, seed)
    group_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    state = grouping.initialize_groups(channels, cluster, config, group_rng)
    for _ in range(config.kmeans_rounds):
        changed = grouping.kmeans_round(state, channels, config)
        if changed == 0:
            break

    head_ids = np.concatenate([hu[hu >= 0] for hu in state.head_user])
    beta_min = float(np.min(channels.beta[head_ids]))
    return CellState(
        config=config,
        seed=seed,
        distance=distance,
        angle=angle,
        cluster=cluster,
        group=state.group_of_user,
        is_head=state.is_head,
        m_per_cluster=state.m_per_cluster,
        head_user=state.head_user,
        channels=channels,
        beta_min=beta_min,
    )


def draw_activity(cell: CellState, lam: float, seed: int) -> list:
    """Per-cluster binary activity vectors; empty columns are never active."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(4,)))
    out = []
    for k in range(cell.n_clusters):
        a = (rng.random(cell.m_per_cluster[k]) < lam).astype(np.int8)
        a[~cell.nonempty_mask(k)] = 0
        out.append(a)
    return out

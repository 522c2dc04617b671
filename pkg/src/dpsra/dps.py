"""Per-cluster preamble-length selection and access-slot scheduling from
phase-I load estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cell import CellState
from .config import ScenarioConfig
from .preamble import PreambleSet, estimate_cluster_load
from .se import TargetCache


@dataclass
class DpsPlan:
    lengths: np.ndarray        # per-cluster phase-II preamble length (symbols)
    bounds: np.ndarray         # per-cluster raw length bound (pre safety factor)
    slot_start: np.ndarray     # per-cluster slot start offset (symbols)
    priority: np.ndarray       # cluster indices in service order
    loads: np.ndarray          # estimated active-group counts
    lambda_hat: np.ndarray
    zero_load: np.ndarray      # clusters planned at the floor length

    @property
    def total_symbols(self) -> int:
        return int(self.slot_start[self.priority[-1]] + self.lengths[self.priority[-1]])

    def to_records(self) -> list:
        """(cluster, priority_rank, slot_start, length) rows for CSV output."""
        rank = {int(k): r for r, k in enumerate(self.priority)}
        return [(k, rank[k], int(self.slot_start[k]), int(self.lengths[k]))
                for k in range(len(self.lengths))]

    def to_text(self) -> str:
        lines = ["cluster,priority,slot_start,length"]
        lines += [f"{c},{p},{s},{l}" for c, p, s, l in self.to_records()]
        return "\n".join(lines) + "\n"


def plan(y1: np.ndarray, preambles: PreambleSet, cell: CellState,
         config: ScenarioConfig, cache: TargetCache) -> DpsPlan:
    """Estimate per-cluster loads, size each cluster's preamble from the
    length bound at the estimated sparsity, and schedule slots by load."""
    n_k = cell.n_clusters
    loads = np.zeros(n_k, dtype=np.int64)
    lam_hat = np.zeros(n_k)
    lengths = np.zeros(n_k, dtype=np.int64)
    bounds = np.zeros(n_k, dtype=np.int64)
    zero = np.zeros(n_k, dtype=bool)
    for k in range(n_k):
        m_hat, lam_k = estimate_cluster_load(y1, preambles, k, cell, config)
        loads[k] = m_hat
        lam_hat[k] = lam_k
        if config.fixed_length > 0:
            lengths[k] = config.fixed_length
            bounds[k] = config.fixed_length
            continue
        if m_hat == 0:
            zero[k] = True
            lengths[k] = config.min_preamble_len
            bounds[k] = config.min_preamble_len
            continue
        relaxed, planned = cache.plan_bounds(k, int(cell.m_per_cluster[k]), lam_k)
        bounds[k] = relaxed
        lengths[k] = max(config.min_preamble_len,
                         math.ceil(config.safety_factor * planned))
    # descending load, ties by cluster index; zero-load clusters last
    priority = np.array(sorted(range(n_k), key=lambda k: (zero[k], -loads[k], k)),
                        dtype=np.int64)
    slot_start = np.zeros(n_k, dtype=np.int64)
    cursor = 0
    for k in priority:
        slot_start[k] = cursor
        cursor += lengths[k] + config.guard_symbols
    return DpsPlan(lengths=lengths, bounds=bounds, slot_start=slot_start,
                   priority=priority, loads=loads, lambda_hat=lam_hat, zero_load=zero)

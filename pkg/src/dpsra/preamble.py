"""Cluster and group preambles, phase-I superposed reception, and
cluster-load estimation.

Both preamble families are stored with unit-norm columns; the transmitter
radiates its configured power per symbol, so a sequence of length L carries
L times that power in total.  Receive equations carry the matching sqrt(L)
factor and the load estimator projects through <y, s_k>/sqrt(L), which keeps
the single-active coherent projection at exactly sqrt(P * beta_min).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from .cell import CellState
from .config import ScenarioConfig


@dataclass
class PreambleSet:
    cluster_preambles: np.ndarray  # (K, L1), orthonormal rows

    @property
    def length(self) -> int:
        return self.cluster_preambles.shape[1]


def walsh_preambles(n_clusters: int, length: int) -> np.ndarray:
    """First n_clusters rows of the order-`length` Hadamard matrix, unit norm."""
    if length < 1 or length & (length - 1):
        raise ValueError("cluster preamble length must be a power of two")
    if n_clusters > length:
        raise ValueError(f"cannot draw {n_clusters} orthogonal rows of length {length}")
    h = hadamard(length)
    return h[:n_clusters].astype(float) / math.sqrt(length)


def build_preambles(config: ScenarioConfig) -> PreambleSet:
    return PreambleSet(walsh_preambles(config.n_clusters, config.cluster_preamble_len))


def group_preambles(seed: int, rao_index: int, k: int, length: int, m_cols: int) -> np.ndarray:
    """Gaussian group-signature matrix, entries CN(0, 1/L).

    Regenerated deterministically from (seed, rao, cluster, length) so the
    receiver and the group heads derive the same matrix independently.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(7, rao_index, k, length)))
    scale = math.sqrt(0.5 / length)
    return scale * (rng.standard_normal((length, m_cols))
                    + 1j * rng.standard_normal((length, m_cols)))


def phase1_transmit_powers(cell: CellState) -> list:
    """Per-column phase-I powers P * beta_min / beta (0 for empty columns)."""
    p = cell.config.tx_power_mw
    out = []
    for k in range(cell.n_clusters):
        heads = cell.head_user[k]
        powers = np.zeros(len(heads))
        mask = heads >= 0
        powers[mask] = p * cell.beta_min / cell.channels.beta[heads[mask]]
        out.append(powers)
    return out


def phase1_receive(cell: CellState, activity: list, h_small: list,
                   preambles: PreambleSet, config: ScenarioConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Superposed phase-I signal, one row per repetition.

    Power control inverts each head's realized large-scale gain, so every
    active head lands at P*beta_min; repetitions (if configured) re-dither
    each head's phase so their sum decorrelates across rows.
    """
    l1 = preambles.length
    reps = config.phase1_reps
    sigma = math.sqrt(config.noise_power_mw)
    amp = math.sqrt(config.tx_power_mw * cell.beta_min * l1)
    y = np.zeros((reps, l1), dtype=np.complex128)
    for r in range(reps):
        for k in range(cell.n_clusters):
            active = activity[k].astype(bool)
            if not np.any(active):
                continue
            h = h_small[k][active]
            if r > 0:
                h = h * np.exp(2j * np.pi * rng.random(h.shape[0]))
            y[r] += amp * np.sum(h) * preambles.cluster_preambles[k]
        noise = (rng.standard_normal(l1) + 1j * rng.standard_normal(l1)) / math.sqrt(2.0)
        y[r] += sigma * noise
    return y


def estimate_cluster_load(y1: np.ndarray, preambles: PreambleSet, k: int,
                          cell: CellState, config: ScenarioConfig) -> tuple[int, float]:
    """Estimated active-group count and sparsity of cluster k.

    estimator="literal": round(Re proj / sqrt(P beta_min)) -- unbiased only
    under coherent channels; estimator="energy" (default): noise-corrected
    energy estimate, unbiased under Rayleigh small-scale fading.
    """
    y1 = np.atleast_2d(y1)
    l1 = preambles.length
    m_cols = int(cell.m_per_cluster[k])
    ref = config.tx_power_mw * cell.beta_min
    proj = y1 @ preambles.cluster_preambles[k] / math.sqrt(l1)
    if config.estimator == "literal":
        est = float(np.mean(proj.real)) / math.sqrt(ref)
    else:
        est = float(np.mean(np.abs(proj) ** 2 - config.noise_power_mw / l1)) / ref
    m_hat = int(np.clip(math.floor(est + 0.5), 0, m_cols))
    return m_hat, m_hat / m_cols

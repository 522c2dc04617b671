import numpy as np
import pytest
from scipy import stats

from dpsra.cell import build_cell, draw_activity
from dpsra.config import ScenarioConfig
from dpsra.exceptions import ConfigError, RingInfeasibleError


def test_users_fall_inside_their_ring(small_cell):
    rings = small_cell.config.cluster_rings
    for i in range(small_cell.n_users):
        r1, r2 = rings[small_cell.cluster[i]]
        assert r1 <= small_cell.distance[i] < r2 or (
            small_cell.distance[i] == r1 == 0.0)


def test_ring_partition_is_exact(small_cell):
    counts = np.bincount(small_cell.cluster, minlength=small_cell.n_clusters)
    assert counts.sum() == small_cell.n_users
    assert (counts > 0).all()


def test_zero_users_is_infeasible():
    cfg = ScenarioConfig(n_users=0)
    with pytest.raises(ConfigError):
        build_cell(cfg, seed=1)


def test_empty_ring_raises_named_error():
    # 3 users on a 4-ring layout leaves at least one ring empty
    cfg = ScenarioConfig(n_users=3, groups_per_cluster=1)
    with pytest.raises(RingInfeasibleError):
        build_cell(cfg, seed=1)


def test_same_seed_same_cell(small_config):
    a = build_cell(small_config, seed=11)
    b = build_cell(small_config, seed=11)
    assert np.array_equal(a.distance, b.distance)
    assert np.array_equal(a.cluster, b.cluster)
    assert np.array_equal(a.group, b.group)
    assert np.array_equal(a.is_head, b.is_head)
    assert a.beta_min == b.beta_min


def test_placement_area_uniformity():
    # d^2 must be uniform on [0, R^2]: Kolmogorov-Smirnov at the 1% level
    cfg = ScenarioConfig(n_users=100_000, groups_per_cluster=5000)
    cell = build_cell(cfg, seed=3)
    u = (cell.distance / cfg.cell_radius_m) ** 2
    stat = stats.kstest(u, "uniform").statistic
    assert stat < 1.63 / np.sqrt(cfg.n_users)


def test_membership_partition_and_cap(small_cell):
    gs = small_cell.config.group_size
    sizes = {}
    for i in range(small_cell.n_users):
        key = (int(small_cell.cluster[i]), int(small_cell.group[i]))
        sizes[key] = sizes.get(key, 0) + 1
    assert all(v <= gs for v in sizes.values())
    assert (small_cell.group >= 0).all()
    # one head per nonempty group, and the head is a member of it
    for k in range(small_cell.n_clusters):
        for m, u in enumerate(small_cell.head_user[k]):
            if u >= 0:
                assert small_cell.cluster[u] == k
                assert small_cell.group[u] == m
                assert small_cell.is_head[u]
            else:
                assert (k, m) not in sizes


def test_draw_activity_degenerate_rates(small_cell):
    zeros = draw_activity(small_cell, 0.0, seed=5)
    assert all(int(a.sum()) == 0 for a in zeros)
    ones = draw_activity(small_cell, 1.0, seed=5)
    for k, a in enumerate(ones):
        assert int(a.sum()) == int(small_cell.nonempty_mask(k).sum())


def test_draw_activity_binomial_concentration():
    cfg = ScenarioConfig(n_users=20000, n_clusters=4, groups_per_cluster=1000)
    cell = build_cell(cfg, seed=2)
    lam, n_draws = 0.05, 200
    counts = np.zeros((n_draws, 4))
    for t in range(n_draws):
        acts = draw_activity(cell, lam, seed=1000 + t)
        counts[t] = [a.sum() for a in acts]
    for k in range(4):
        nonempty = int(cell.nonempty_mask(k).sum())
        expected = lam * nonempty
        band = 3 * np.sqrt(expected * (1 - lam)) / np.sqrt(n_draws)
        assert abs(counts[:, k].mean() - expected) < max(band, 1.0)


def test_draw_activity_determinism(small_cell):
    a = draw_activity(small_cell, 0.05, seed=9)
    b = draw_activity(small_cell, 0.05, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_group_count_floor_and_raise():
    # configured floor applies; overfull rings get extra columns
    cfg = ScenarioConfig(n_users=20000, n_clusters=4, groups_per_cluster=1000)
    cell = build_cell(cfg, seed=2)
    counts = np.bincount(cell.cluster, minlength=4)
    for k in range(4):
        need = int(np.ceil(counts[k] / cfg.group_size))
        assert cell.m_per_cluster[k] == max(1000, need)


def test_users_property_matches_arrays(small_cell):
    users = small_cell.users
    assert len(users) == small_cell.n_users
    u = users[17]
    assert u.distance == small_cell.distance[17]
    assert u.cluster == small_cell.cluster[17]
    assert u.is_group_head == small_cell.is_head[17]

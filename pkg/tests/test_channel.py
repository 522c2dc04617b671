import math

import numpy as np
import pytest

from dpsra.channel import (FadingPdf, fading_pdf, gain_db_to_amplitude,
                           large_scale_gain_db, pdf_for_cluster, sample_channels)
from dpsra.config import ScenarioConfig

ALPHA, BETA = 15.3, 37.6
SIGMA_S = math.sqrt(8.0)


def test_gain_at_one_meter():
    assert large_scale_gain_db(1.0, 0.0, ALPHA, BETA) == pytest.approx(-15.3)


def test_gain_at_cell_edge():
    # 15.3 + 37.6*log10(1000) = 128.1 dB loss
    assert large_scale_gain_db(1000.0, 0.0, ALPHA, BETA) == pytest.approx(-128.1)


def test_gain_with_shadow_offset():
    # hand arithmetic: -(15.3 + 75.2) + 8 = -82.5
    assert large_scale_gain_db(100.0, 8.0, ALPHA, BETA) == pytest.approx(-82.5)


def test_gain_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        large_scale_gain_db(0.0, 0.0, ALPHA, BETA)
    with pytest.raises(ValueError):
        large_scale_gain_db(-5.0, 0.0, ALPHA, BETA)


def test_sampling_deterministic_without_shadowing():
    cfg = ScenarioConfig(shadowing_enabled=False, smallscale_enabled=False)
    d = np.full(50, 400.0)
    ang = np.zeros(50)
    a = sample_channels(d, ang, cfg, seed=1)
    b = sample_channels(d, ang, cfg, seed=2)   # no randomness left in g
    assert np.allclose(a.g, b.g)
    assert np.allclose(a.g, gain_db_to_amplitude(large_scale_gain_db(400.0, 0.0, ALPHA, BETA)))


def test_sampled_gain_mean_matches_pathloss():
    cfg = ScenarioConfig()
    n = 100_000
    d = np.full(n, 300.0)
    table = sample_channels(d, np.zeros(n), cfg, seed=3)
    mean_db = np.mean(20.0 * np.log10(table.g))
    assert abs(mean_db - large_scale_gain_db(300.0, 0.0, ALPHA, BETA)) < 0.1


def test_composite_variance_matches_beta():
    cfg = ScenarioConfig()
    n = 100_000
    d = np.full(n, 500.0)
    table = sample_channels(d, np.zeros(n), cfg, seed=4)
    ratio = np.mean(np.abs(table.h_ub) ** 2) / np.mean(table.beta)
    assert abs(ratio - 1.0) < 0.02


def test_smallscale_unit_power():
    cfg = ScenarioConfig()
    table = sample_channels(np.full(200_000, 100.0), np.zeros(200_000), cfg, seed=5)
    assert abs(np.mean(np.abs(table.h_small) ** 2) - 1.0) < 0.01


def test_d2d_reciprocity_exact():
    cfg = ScenarioConfig(n_users=100, groups_per_cluster=10)
    rng = np.random.default_rng(0)
    d = rng.uniform(50, 900, 100)
    table = sample_channels(d, rng.uniform(0, 2 * np.pi, 100), cfg, seed=6)
    i = np.arange(0, 50)
    j = np.arange(50, 100)
    assert np.array_equal(table.d2d(i, j), table.d2d(j, i))


def test_d2d_deterministic_and_pair_specific():
    cfg = ScenarioConfig(n_users=10, groups_per_cluster=2)
    rng = np.random.default_rng(1)
    table = sample_channels(rng.uniform(100, 900, 10), rng.uniform(0, 6.28, 10), cfg, seed=7)
    a = table.d2d([0, 1], [2, 3])
    b = table.d2d([0, 1], [2, 3])
    assert np.array_equal(a, b)
    assert a[0] != a[1]


# --- analytic amplitude density ---------------------------------------------

def test_pdf_normalizes_to_one(outer_ring_pdf):
    gs = np.geomspace(1e-9, 1e-4, 4000)
    total = np.trapezoid(outer_ring_pdf.evaluate(gs), gs)
    assert abs(total - 1.0) < 1e-3


def test_pdf_matches_sampled_histogram(outer_ring_pdf):
    rng = np.random.default_rng(12)
    samples = outer_ring_pdf.sample(300_000, rng)
    lo, hi = np.quantile(samples, [0.0005, 0.9995])
    edges = np.geomspace(lo, hi, 160)
    hist, _ = np.histogram(samples, bins=edges, density=True)
    centers = np.sqrt(edges[1:] * edges[:-1])
    l1 = np.sum(np.abs(hist - outer_ring_pdf.evaluate(centers)) * np.diff(edges))
    assert l1 < 0.05


def test_published_constants_match_triangular_distance_density():
    # the two-term closed form corresponds to p(d) = 2(d-R1)/(R2-R1)^2
    pdf = fading_pdf((500.0, 1000.0), ALPHA, BETA, SIGMA_S, mode="paper")
    rng = np.random.default_rng(5)
    samples = pdf.sample(300_000, rng)
    lo, hi = np.quantile(samples, [0.0005, 0.9995])
    edges = np.geomspace(lo, hi, 160)
    hist, _ = np.histogram(samples, bins=edges, density=True)
    centers = np.sqrt(edges[1:] * edges[:-1])
    l1 = np.sum(np.abs(hist - pdf.evaluate(centers)) * np.diff(edges))
    assert l1 < 0.05


def test_pdf_modes_agree_when_inner_radius_zero():
    g = np.geomspace(1e-8, 1e-5, 50)
    pa = fading_pdf((0.0, 250.0), ALPHA, BETA, SIGMA_S, mode="area").evaluate(g)
    pp = fading_pdf((0.0, 250.0), ALPHA, BETA, SIGMA_S, mode="paper").evaluate(g)
    assert np.allclose(pa, pp, rtol=1e-9)


def test_degenerate_ring_concentrates_on_lognormal():
    pdf = fading_pdf((500.0, 500.5), ALPHA, BETA, SIGMA_S)
    # compare against a pure log-normal at d = 500.25
    mean_db = -(ALPHA + BETA * math.log10(500.25))
    g = np.geomspace(10 ** ((mean_db - 4 * SIGMA_S) / 20),
                     10 ** ((mean_db + 4 * SIGMA_S) / 20), 400)
    ln10 = math.log(10.0)
    lognormal = (20.0 / (g * ln10 * math.sqrt(2 * math.pi) * SIGMA_S)
                 * np.exp(-(20 * np.log10(g) - mean_db) ** 2 / (2 * SIGMA_S ** 2)))
    assert np.allclose(pdf.evaluate(g), lognormal, rtol=2e-2)


def test_pdf_rejects_invalid_amplitude(outer_ring_pdf):
    with pytest.raises(ValueError):
        outer_ring_pdf.evaluate(0.0)


def test_pdf_gamma_ordering(outer_ring_pdf):
    assert outer_ring_pdf.gamma1 > outer_ring_pdf.gamma2 > 1.0


def test_point_mass_pdf_for_unit_gain():
    cfg = ScenarioConfig(unit_gain=True)
    pdf = pdf_for_cluster(cfg, 0)
    assert pdf.g_nodes.tolist() == [1.0]
    assert pdf.mean_power() == 1.0
    with pytest.raises(RuntimeError):
        pdf.evaluate(1.0)


def test_expectation_nodes_match_sampling(outer_ring_pdf):
    rng = np.random.default_rng(8)
    samples = outer_ring_pdf.sample(400_000, rng)
    assert abs(outer_ring_pdf.mean_power() / np.mean(samples ** 2) - 1.0) < 0.02

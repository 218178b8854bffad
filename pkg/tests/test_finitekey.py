"""Decoy-state bounds, key-length formula and the analytic rate model."""
import math
from dataclasses import replace

import numpy as np
import pytest

import timebin_qkd as tq
from conftest import tagged_counts

EPS_PRIME = 1e-15 / 19


def test_fluctuation_delta_formula():
    for n, eps in ((1e6, 1e-10), (2.5e8, EPS_PRIME)):
        assert tq.fluctuation_delta(n, eps) == pytest.approx(
            math.sqrt(n / 2 * math.log(1 / eps)))
    assert tq.fluctuation_delta(0.0, 1e-10) == 0.0
    with pytest.raises(tq.DomainError):
        tq.fluctuation_delta(-1.0, 1e-10)
    with pytest.raises(tq.DomainError):
        tq.fluctuation_delta(10.0, 2.0)


def test_scale_counts_scales_every_tally():
    counts = tq.DecoyCounts(z=tq.BasisCounts(1000, 500, 10, 5),
                            x=tq.BasisCounts(100, 50, 4, 2))
    scaled = tq.scale_counts(counts, 2.5)
    assert scaled.z.n_mu0 == pytest.approx(2500)
    assert scaled.z.m_mu1 == pytest.approx(12.5)
    assert scaled.x.n_mu1 == pytest.approx(125)
    assert scaled.x.m_mu0 == pytest.approx(10)


def test_vacuum_bound_brackets_tagged_truth():
    # Dark-count-only scenario: every detection is a dark click, so the
    # vacuum contribution dominates and the one-decoy bound is nearly tight.
    p = tq.ProtocolParams(mu0=0.15, mu1=0.06, p_mu0=0.5, p_za=0.5, p_zb=0.5)
    basis, s_true, _ = tagged_counts(p, eta=0.0, dark_prob=0.05,
                                     err_prob=0.0, n_slots=20_000_000,
                                     seed=11)
    low, up = tq.vacuum_bounds(basis, p, EPS_PRIME, asymptotic=True)
    truth = s_true[0]
    assert low <= truth <= up
    assert (truth - low) / truth < 0.015
    s1 = tq.single_photon_lower(basis, p, EPS_PRIME, up, asymptotic=True)
    assert s1 <= s_true[1]


def test_single_photon_bound_brackets_tagged_truth():
    # Thinning-only scenario: no darks and perfect visibility make the
    # single-photon term the whole story.
    p = tq.ProtocolParams(mu0=0.2, mu1=0.08, p_mu0=0.5, p_za=0.5, p_zb=0.5)
    basis, s_true, _ = tagged_counts(p, eta=0.3, dark_prob=0.0,
                                     err_prob=0.0, n_slots=20_000_000,
                                     seed=12)
    low, up = tq.vacuum_bounds(basis, p, EPS_PRIME, asymptotic=True)
    assert low <= s_true[0] == 0
    s1 = tq.single_photon_lower(basis, p, EPS_PRIME, up, asymptotic=True)
    assert s1 <= s_true[1]
    assert (s_true[1] - s1) / s_true[1] < 0.015


def test_single_photon_error_bound_covers_truth():
    p = tq.ProtocolParams(mu0=0.2, mu1=0.08, p_mu0=0.5, p_za=0.5, p_zb=0.5)
    basis, s_true, v1_true = tagged_counts(p, eta=0.3, dark_prob=0.001,
                                           err_prob=0.05,
                                           n_slots=10_000_000, seed=13)
    v1 = tq.error_upper_single(basis, p, EPS_PRIME, asymptotic=True)
    assert v1 >= v1_true
    # Finite-sample fluctuation terms only widen the bound.
    assert tq.error_upper_single(basis, p, EPS_PRIME, asymptotic=False) >= v1


def test_fluctuations_tighten_nothing():
    p = tq.ProtocolParams(mu0=0.49, mu1=0.22, p_mu0=0.74, p_za=0.65,
                          p_zb=0.99)
    basis = tq.BasisCounts(2_000_000, 700_000, 8_000, 2_800)
    lo_a, up_a = tq.vacuum_bounds(basis, p, EPS_PRIME, asymptotic=True)
    lo_f, up_f = tq.vacuum_bounds(basis, p, EPS_PRIME, asymptotic=False)
    assert lo_f <= lo_a
    assert up_f >= up_a


def test_sampling_penalty_properties():
    assert tq.sampling_penalty(1e-15, 0.0, 1e6, 1e4) == 0.0
    gamma = tq.sampling_penalty(1e-15, 0.01, 1e8, 1e6)
    assert gamma > 0
    # Larger samples shrink the penalty.
    smaller = tq.sampling_penalty(1e-15, 0.01, 1e9, 1e7)
    assert smaller < gamma


def test_phase_error_upper_behaviour():
    asym = tq.phase_error_upper(50.0, 1e4, 1e6, 1e-15, asymptotic=True)
    assert asym == pytest.approx(50.0 / 1e4)
    finite = tq.phase_error_upper(50.0, 1e4, 1e6, 1e-15)
    assert finite > asym
    with pytest.raises(tq.InsufficientStatistics):
        tq.phase_error_upper(50.0, 0.0, 1e6, 1e-15)
    with pytest.raises(tq.InsufficientStatistics):
        tq.phase_error_upper(50.0, 1e4, -5.0, 1e-15)


def test_key_length_monotone_in_leakage(engine, cfg10):
    bd = engine.evaluate(cfg10.params, cfg10.link)
    lengths = [tq.key_length(bd.counts, cfg10.params, lam).length
               for lam in np.linspace(0, 6e7, 8)]
    assert all(a >= b for a, b in zip(lengths, lengths[1:]))
    assert lengths[0] > 0
    assert all(length >= 0 for length in lengths)


def test_small_blocks_pay_a_finite_size_penalty(engine, cfg10):
    bd = engine.evaluate(cfg10.params, cfg10.link)
    big = cfg10.params.block_bits            # 2^27 sifted bits
    small = 1 << 20
    lam_frac = bd.lambda_ec / big
    counts_small = tq.scale_counts(bd.counts, small / bd.counts.z.n_total)
    per_bit_big = tq.key_length(bd.counts, cfg10.params,
                                bd.lambda_ec).length / big
    per_bit_small = tq.key_length(counts_small, cfg10.params,
                                  lam_frac * small).length / small
    assert per_bit_small < per_bit_big


def test_key_length_requires_counts():
    p = tq.ProtocolParams(mu0=0.49, mu1=0.22, p_mu0=0.74, p_za=0.65,
                          p_zb=0.99)
    empty_z = tq.DecoyCounts(z=tq.BasisCounts(0, 0, 0, 0),
                             x=tq.BasisCounts(10, 10, 1, 1))
    with pytest.raises(tq.InsufficientStatistics):
        tq.key_length(empty_z, p, 0.0)
    with pytest.raises(tq.DomainError):
        tq.key_length(tq.DecoyCounts(z=tq.BasisCounts(10, 10, 1, 1),
                                     x=tq.BasisCounts(10, 10, 1, 1)),
                      p, -1.0)


def test_pixel_efficiency_table(engine, model):
    assert engine.pixel_efficiency(1e3) == pytest.approx(model.eta_max,
                                                         abs=0.002)
    rates = [1e5, 1e6, 1e7, 1e8, 1e9]
    values = [engine.pixel_efficiency(r) for r in rates]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] < 0.5 * model.eta_max


def test_analytic_breakdown_sanity(engine, cfg10):
    bd = engine.evaluate(cfg10.params, cfg10.link)
    assert 1.4e8 < bd.sift_rate_bps < 1.8e8
    assert 0.002 < bd.qber_z < 0.007
    assert 0.003 < bd.phase_error < 0.015
    assert bd.skr_bps > 3e7
    assert 0 < bd.masked_fraction < 0.05
    assert 22.0 <= bd.jitter_fwhm_ps <= 47.0
    assert 0 < bd.accept_fraction <= 1.0


def test_doubling_detectors_recovers_efficiency(engine, cfg10):
    one = engine.evaluate(cfg10.params, cfg10.link)
    two = engine.evaluate(cfg10.params, cfg10.link, n_detectors=2)
    gain = two.pixel_efficiency / one.pixel_efficiency - 1.0
    assert 0.05 < gain < 0.20
    assert two.jitter_fwhm_ps < one.jitter_fwhm_ps
    assert two.skr_bps > one.skr_bps


def test_ideal_ec_reduces_leakage(engine, cfg10):
    real = engine.evaluate(cfg10.params, cfg10.link)
    ideal = engine.evaluate(cfg10.params, cfg10.link, ideal_ec=True)
    assert ideal.lambda_ec < real.lambda_ec
    assert ideal.skr_bps > real.skr_bps


def test_fit_receiver_loss_recovers_known_value(engine, cfg10):
    target = engine.evaluate(cfg10.params, cfg10.link).sift_rate_bps
    blank = replace(cfg10.link, receiver_loss_db=0.0)
    fitted = tq.fit_receiver_loss(engine, cfg10.params, blank, target)
    assert fitted == pytest.approx(cfg10.link.receiver_loss_db, abs=0.02)
    with pytest.raises(tq.FixedPointDiverged):
        tq.fit_receiver_loss(engine, cfg10.params, blank, target * 100)


def test_optimizer_does_not_regress(engine, cfg10):
    baseline = engine.evaluate(cfg10.params, cfg10.link).skr_bps
    result = tq.optimize_params(engine, cfg10.params, cfg10.link, seed=3,
                                restarts=2, maxiter=120)
    assert result.skr_bps >= baseline
    p = result.params
    assert 0 < p.mu1 < p.mu0
    assert 0 < p.p_mu0 < 1 and 0 < p.p_zb < 1

"""Shared fixtures and the tagged-photon Monte-Carlo decoy-bound oracle.

The oracle simulates slots with *known* photon numbers per detection, so the
true vacuum / single-photon detection counts are available alongside the
per-intensity tallies the estimator sees.  It deliberately re-derives the
physics with plain numpy draws instead of reusing the package's source or
detector stages, keeping the bound checks a genuine cross-validation.
"""
import os

import numpy as np
import pytest

import timebin_qkd as tq

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(REPO_ROOT, "configs")


@pytest.fixture(scope="session")
def model():
    return tq.read_model(os.path.join(CONFIG_DIR, "detector.model"))


@pytest.fixture(scope="session")
def engine(model):
    return tq.AnalyticEngine(model)


@pytest.fixture(scope="session")
def cfg10():
    return tq.load_config(os.path.join(CONFIG_DIR, "10km.cfg"))


@pytest.fixture(scope="session")
def cfg102():
    return tq.load_config(os.path.join(CONFIG_DIR, "102km.cfg"))


def tagged_counts(params, eta, dark_prob, err_prob, n_slots, seed,
                  chunk=10_000_000):
    """Per-slot MC with per-detection photon-number truth.

    Each slot draws an intensity, a Poisson photon number n, binomial
    survival at efficiency eta and an independent dark coin.  A detection is
    any slot with a surviving photon or a dark click; signal detections err
    with probability err_prob, dark-only detections with probability 1/2.

    Returns (BasisCounts by intensity, s_true, v1_true) where s_true[t]
    counts detections from slots tagged n = 0, n = 1 and n >= 2, and v1_true
    counts the errored single-photon detections.
    """
    rng = np.random.default_rng(seed)
    n_mu = np.zeros(2, np.int64)
    m_mu = np.zeros(2, np.int64)
    s_true = np.zeros(3, np.int64)
    v1_true = 0
    mus = np.array([params.mu0, params.mu1])
    left = n_slots
    while left > 0:
        size = min(chunk, left)
        left -= size
        k = (rng.random(size) >= params.p_mu0).astype(np.int64)
        n = rng.poisson(mus[k])
        survivors = (rng.binomial(n, eta) if eta > 0.0
                     else np.zeros(size, np.int64))
        dark = rng.random(size) < dark_prob
        det = (survivors > 0) | dark
        sig = survivors > 0
        err = np.where(sig, rng.random(size) < err_prob,
                       rng.random(size) < 0.5) & det
        tag = np.minimum(n, 2)
        for kk in (0, 1):
            sel = det & (k == kk)
            n_mu[kk] += sel.sum()
            m_mu[kk] += (err & sel).sum()
        for t in (0, 1, 2):
            s_true[t] += (det & (tag == t)).sum()
        v1_true += int((err & (tag == 1)).sum())
    basis = tq.BasisCounts(int(n_mu[0]), int(n_mu[1]),
                           int(m_mu[0]), int(m_mu[1]))
    return basis, s_true, v1_true

"""Finite-key security analysis and an analytic throughput model.

One-decoy bounds
----------------
With two intensities mu0 > mu1 the observed per-intensity sifted counts
n_{B,k} and error counts m_{B,k} in basis B bound the vacuum and
single-photon contributions.  Writing delta(n, eps) = sqrt(n/2 ln(1/eps)) and
the rescaled counts n_k^+- = (e^{mu_k}/p_k)(n_{B,k} +- delta(n_B, eps')),

  vacuum lower     s_0^l = tau_0 (mu0 n^-_{mu1} - mu1 n^+_{mu0}) / (mu0 - mu1)
  vacuum upper     s_0^u = 2 (tau_0 mbar + delta(n_B, eps'))
  single lower     s_1^l = tau_1 mu0 / (mu1 (mu0 - mu1)) *
                            (n^-_{mu1} - (mu1^2/mu0^2) n^+_{mu0}
                             - ((mu0^2 - mu1^2)/mu0^2) s_0^u / tau_0)

with tau_n the n-photon emission probability of the intensity mixture and
mbar the smaller of the two rescaled upper error counts.  The single-photon
phase-error rate in the key basis is bounded by the X-basis single-photon
error ratio plus a random-sampling penalty gamma, and the extractable length
of a block with reconciliation leakage lambda_EC is

  l = s_0^l(Z) + s_1^l(Z) (1 - h(phi_Z)) - lambda_EC
      - 6 log2(19/eps_sec) - log2(2/eps_cor).

Analytic model
--------------
The same detector description used by the Monte Carlo is evaluated in closed
form: per-pixel detection is a renewal process with hazard
nu eta_max (1 - e^(-t/tau))^2, whose mean recurrence time gives the
rate-dependent efficiency; OR masking follows the non-paralyzable formula
lambda w / (1 + lambda w); and the timing-window acceptance follows from the
rate-dependent Gaussian jitter.  The resulting expected counts feed the same
key-length formula, which makes parameter optimisation and what-if studies
(duplicate detectors, ideal reconciliation) cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize

from .detector import BIN_PITCH_PS, MultipixelModel, XDetectorModel, jitter_fwhm_at_rate
from .errors import (DomainError, FixedPointDiverged, InsufficientStatistics,
                     NoPositiveRate)
from .protocol import (LinkParams, ProtocolParams, binary_entropy,
                       channel_transmittance, photon_number_prob,
                       validate_link, validate_params)

#: Security-budget split: eps' = eps_sec / EPS_SPLIT, and the key-length
#: penalty is 6 log2(EPS_SPLIT / eps_sec).
EPS_SPLIT = 19
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
#: Default reconciliation leakage per sifted bit (rate-5/6 syndrome plus a
#: 64-bit verification hash per 6144-bit frame).
DEFAULT_EC_OVERHEAD = (1024 + 64) / 6144


@dataclass(frozen=True)
class BasisCounts:
    """Per-intensity sifted and error counts observed in one basis."""

    n_mu0: float
    n_mu1: float
    m_mu0: float
    m_mu1: float

    @property
    def n_total(self) -> float:
        return self.n_mu0 + self.n_mu1

    @property
    def m_total(self) -> float:
        return self.m_mu0 + self.m_mu1


@dataclass(frozen=True)
class DecoyCounts:
    """Observed counts in both bases, the input to the key-length formula."""

    z: BasisCounts
    x: BasisCounts


def scale_counts(counts: DecoyCounts, factor: float) -> DecoyCounts:
    """Scale every tally, e.g. to project a measured sample onto a full block."""
    if factor < 0:
        raise DomainError("scale factor must be non-negative")

    def _scale(b: BasisCounts) -> BasisCounts:
        return BasisCounts(b.n_mu0 * factor, b.n_mu1 * factor,
                           b.m_mu0 * factor, b.m_mu1 * factor)

    return DecoyCounts(z=_scale(counts.z), x=_scale(counts.x))


def fluctuation_delta(n: float, eps: float) -> float:
    """Concentration half-width sqrt(n/2 ln(1/eps)) for n Bernoulli trials."""
    if n < 0:
        raise DomainError("count must be non-negative")
    if not 0.0 < eps < 1.0:
        raise DomainError("failure probability must lie in (0, 1)")
    return math.sqrt(0.5 * n * math.log(1.0 / eps))


def _rescaled(value: float, mu: float, p_k: float, delta: float, sign: float) -> float:
    return math.exp(mu) / p_k * (value + sign * delta)


def vacuum_bounds(basis: BasisCounts, params: ProtocolParams, eps_prime: float,
                  asymptotic: bool = False) -> tuple[float, float]:
    """Lower and upper bounds on the vacuum contribution s_0 in one basis."""
    mu0, mu1 = params.mu0, params.mu1
    p0, p1 = params.p_mu0, params.p_mu1
    tau0 = photon_number_prob(0, params)
    dn = 0.0 if asymptotic else fluctuation_delta(basis.n_total, eps_prime)
    dm = 0.0 if asymptotic else fluctuation_delta(basis.m_total, eps_prime)
    n_minus_mu1 = _rescaled(basis.n_mu1, mu1, p1, dn, -1.0)
    n_plus_mu0 = _rescaled(basis.n_mu0, mu0, p0, dn, +1.0)
    lower = max(0.0, tau0 * (mu0 * n_minus_mu1 - mu1 * n_plus_mu0) / (mu0 - mu1))
    m_bar = min(_rescaled(basis.m_mu0, mu0, p0, dm, +1.0),
                _rescaled(basis.m_mu1, mu1, p1, dm, +1.0))
    upper = 2.0 * (tau0 * m_bar + dn)
    return lower, upper


def single_photon_lower(basis: BasisCounts, params: ProtocolParams,
                        eps_prime: float, vacuum_upper: float,
                        asymptotic: bool = False) -> float:
    """Lower bound on the single-photon contribution s_1 in one basis."""
    mu0, mu1 = params.mu0, params.mu1
    p0, p1 = params.p_mu0, params.p_mu1
    tau0 = photon_number_prob(0, params)
    tau1 = photon_number_prob(1, params)
    dn = 0.0 if asymptotic else fluctuation_delta(basis.n_total, eps_prime)
    n_minus_mu1 = _rescaled(basis.n_mu1, mu1, p1, dn, -1.0)
    n_plus_mu0 = _rescaled(basis.n_mu0, mu0, p0, dn, +1.0)
    inner = (n_minus_mu1 - (mu1 ** 2 / mu0 ** 2) * n_plus_mu0
             - ((mu0 ** 2 - mu1 ** 2) / mu0 ** 2) * vacuum_upper / tau0)
    return max(0.0, tau1 * mu0 / (mu1 * (mu0 - mu1)) * inner)


def error_upper_single(basis: BasisCounts, params: ProtocolParams,
                       eps_prime: float, asymptotic: bool = False) -> float:
    """Upper bound on the single-photon error count v_1 in one basis."""
    mu0, mu1 = params.mu0, params.mu1
    p0, p1 = params.p_mu0, params.p_mu1
    tau1 = photon_number_prob(1, params)
    dm = 0.0 if asymptotic else fluctuation_delta(basis.m_total, eps_prime)
    m_plus_mu0 = _rescaled(basis.m_mu0, mu0, p0, dm, +1.0)
    m_minus_mu1 = _rescaled(basis.m_mu1, mu1, p1, dm, -1.0)
    return max(0.0, tau1 * (m_plus_mu0 - m_minus_mu1) / (mu0 - mu1))


def sampling_penalty(eps: float, ratio: float, n_key: float, n_test: float) -> float:
    """Random-sampling correction gamma for estimating the key-basis phase
    error rate from a test basis observed ratio."""
    if n_key <= 0.0 or n_test <= 0.0:
        raise DomainError("sample sizes must be positive")
    b = min(max(ratio, 0.0), 0.5)
    if b == 0.0:
        return 0.0
    c, d = n_key, n_test
    log_arg = (c + d) / (c * d * (1.0 - b) * b) * (21.0 / eps) ** 2
    log_arg = max(log_arg, 1.0 + 1e-12)
    val = ((c + d) * (1.0 - b) * b) / (c * d * math.log(2.0)) * math.log2(log_arg)
    return math.sqrt(max(val, 0.0))


def phase_error_upper(v_x1: float, s_x1: float, s_z1: float, eps_sec: float,
                      asymptotic: bool = False) -> float:
    """Phase-error bound in the key basis, clamped to [0, 1/2]."""
    if s_x1 <= 0.0:
        raise InsufficientStatistics(
            "single-photon bound in the test basis is not positive")
    ratio = v_x1 / s_x1
    if asymptotic:
        return min(max(ratio, 0.0), 0.5)
    if s_z1 <= 0.0:
        raise InsufficientStatistics(
            "single-photon bound in the key basis is not positive")
    gamma = sampling_penalty(eps_sec, ratio, s_z1, s_x1)
    return min(max(ratio + gamma, 0.0), 0.5)


@dataclass(frozen=True)
class KeyLengthResult:
    """Extractable key length and the intermediate bounds behind it."""

    length: int
    phase_error: float
    s_z0: float
    s_z1: float
    s_x1: float
    v_x1: float
    lambda_ec: float


def key_length(counts: DecoyCounts, params: ProtocolParams, lambda_ec: float,
               asymptotic: bool = False) -> KeyLengthResult:
    """Extractable secret length of one block given its observed counts."""
    params = validate_params(params)
    if lambda_ec < 0:
        raise DomainError("reconciliation leakage must be non-negative")
    if counts.z.n_total <= 0:
        raise InsufficientStatistics("no sifted key-basis counts")
    if counts.x.n_total <= 0:
        raise InsufficientStatistics("no test-basis counts")
    eps_prime = params.eps_sec / EPS_SPLIT
    s_z0, s_z0_up = vacuum_bounds(counts.z, params, eps_prime, asymptotic)
    _, s_x0_up = vacuum_bounds(counts.x, params, eps_prime, asymptotic)
    s_z1 = single_photon_lower(counts.z, params, eps_prime, s_z0_up, asymptotic)
    s_x1 = single_photon_lower(counts.x, params, eps_prime, s_x0_up, asymptotic)
    v_x1 = error_upper_single(counts.x, params, eps_prime, asymptotic)
    try:
        phi = phase_error_upper(v_x1, s_x1, s_z1, params.eps_sec, asymptotic)
    except InsufficientStatistics:
        # The test-basis sample is too small to certify anything once the
        # fluctuation terms are subtracted; the block yields no key.
        return KeyLengthResult(length=0, phase_error=0.5, s_z0=s_z0,
                               s_z1=s_z1, s_x1=s_x1, v_x1=v_x1,
                               lambda_ec=float(lambda_ec))
    raw = (s_z0 + s_z1 * (1.0 - binary_entropy(phi)) - lambda_ec
           - 6.0 * math.log2(EPS_SPLIT / params.eps_sec)
           - math.log2(2.0 / params.eps_cor))
    length = max(0, math.floor(raw))
    return KeyLengthResult(length=length, phase_error=phi, s_z0=s_z0,
                           s_z1=s_z1, s_x1=s_x1, v_x1=v_x1,
                           lambda_ec=float(lambda_ec))


# --- analytic rate model ----------------------------------------------------

def _interval_mean(nu_eta: float, tau_s: float) -> float:
    """Mean time between clicks of one pixel under hazard
    nu_eta (1 - e^(-t/tau))^2, by quadrature plus an exponential tail."""
    if nu_eta <= 0.0:
        return math.inf
    if tau_s <= 0.0:
        return 1.0 / nu_eta

    def survival(t):
        g = (t - 2.0 * tau_s * (1.0 - math.exp(-t / tau_s))
             + 0.5 * tau_s * (1.0 - math.exp(-2.0 * t / tau_s)))
        return math.exp(-nu_eta * g)

    upper = 20.0 * tau_s + 60.0 / nu_eta
    body, _ = quad(survival, 0.0, upper, limit=200, epsabs=0.0, epsrel=1e-10)
    return body + survival(upper) / nu_eta


class AnalyticEngine:
    """Closed-form rate and key-length model sharing the detector description.

    Builds an interpolation table of the renewal-process pixel efficiency
    over a wide log-spaced range of incident rates; everything else is
    evaluated directly.
    """

    def __init__(self, model: MultipixelModel, x_model: XDetectorModel | None = None,
                 table_points: int = 160):
        self.model = model
        self.x_model = x_model if x_model is not None else XDetectorModel()
        tau_s = model.tau_recovery_ns * 1e-9
        self._log_nu = np.linspace(math.log(1e2), math.log(1e12), table_points)
        eff = np.empty(table_points)
        for i, ln in enumerate(self._log_nu):
            nu = math.exp(ln)
            eff[i] = 1.0 / (nu * _interval_mean(nu * model.eta_max, tau_s))
        self._eff = eff

    def pixel_efficiency(self, per_pixel_rate_cps: float) -> float:
        """Detected/incident ratio of one pixel at a given incident rate."""
        if per_pixel_rate_cps <= 0.0:
            return self.model.eta_max
        ln = math.log(per_pixel_rate_cps)
        ln = min(max(ln, self._log_nu[0]), self._log_nu[-1])
        return float(np.interp(ln, self._log_nu, self._eff))

    def evaluate(self, params: ProtocolParams, link: LinkParams,
                 n_detectors: int = 1, ideal_ec: bool = False,
                 ec_overhead: float = DEFAULT_EC_OVERHEAD) -> "RateBreakdown":
        """Expected rates, QBER, phase error and SKR for one operating point."""
        params = validate_params(params)
        link = validate_link(link)
        if n_detectors < 1:
            raise DomainError("detector count must be >= 1")
        model = self.model
        clock = params.clock_hz
        mu_bar = params.p_mu0 * params.mu0 + params.p_mu1 * params.mu1
        eta_ch = channel_transmittance(link)

        # Z-basis array load: every emitted photon that reaches Bob's Z arm,
        # regardless of Alice's basis, occupies pixels.  With duplicated
        # arrays a splitter halves the load per array; each photon still
        # lands on exactly one array.
        r_inc = clock * mu_bar * eta_ch * params.p_zb / n_detectors
        nu_pix = (r_inc + link.dark_rate_hz) / model.n_pixels
        eta_ren = self.pixel_efficiency(nu_pix)
        clicks_per_det = (r_inc + link.dark_rate_hz *
                          min(eta_ren / model.eta_max, 1.0)) * eta_ren
        fwhm = jitter_fwhm_at_rate(clicks_per_det, model)
        sigma = fwhm * _FWHM_TO_SIGMA

        lam_ch = clicks_per_det * 2.0 / model.n_pixels
        or_surv = 1.0 / (1.0 + lam_ch * model.or_window_ns * 1e-9)
        half = 0.5 * model.accept_width_ps
        keep = math.erf(half / (math.sqrt(2.0) * sigma)) if sigma > 0 else 1.0
        z = (BIN_PITCH_PS - half) / (math.sqrt(2.0) * sigma) if sigma > 0 else math.inf
        z2 = (BIN_PITCH_PS + half) / (math.sqrt(2.0) * sigma) if sigma > 0 else math.inf
        wrong_bin = 0.5 * (math.erfc(z) - math.erfc(z2))

        # Per-photon probability of producing a kept, correctly-timed event.
        eff_photon = eta_ren * or_surv * keep
        # Dark events: unit base efficiency, comb classification keeps the
        # accept window around either bin centre of the 200 ps pitch.  Every
        # array contributes its own dark process.
        dark_det = (n_detectors * link.dark_rate_hz
                    * min(eta_ren / model.eta_max, 1.0)
                    * or_surv * (model.accept_width_ps / BIN_PITCH_PS))
        lam_dark_slot = dark_det / clock

        # The interferometer output detectors saturate like the Z pixels.
        # At Z-heavy operating points their load is negligible, but an
        # optimiser probing small p_zb routes a macroscopic flux here and
        # must pay the same dead-time cost; two output ports share it.
        r_inc_x = clock * mu_bar * eta_ch * (1.0 - params.p_zb) / 2.0
        sat_x = self.pixel_efficiency(r_inc_x) / model.eta_max
        eta_x_eff = self.x_model.eta_x * sat_x

        mus = (params.mu0, params.mu1)
        p_int = (params.p_mu0, params.p_mu1)
        n_z = [0.0, 0.0]
        m_z = [0.0, 0.0]
        n_x = [0.0, 0.0]
        m_x = [0.0, 0.0]
        lam_dark_x = link.dark_rate_hz / clock
        for k in range(2):
            lam_sig = mus[k] * eta_ch * params.p_zb * eff_photon
            p_det = 1.0 - math.exp(-(lam_sig + lam_dark_slot))
            n_z[k] = params.p_za * p_int[k] * p_det
            # Error probability of the one event kept per detected slot:
            # a weighted coin over its signal/dark origin.
            err_event = ((lam_sig * (link.z_error_prob * (1.0 - wrong_bin)
                                     + wrong_bin) + 0.5 * lam_dark_slot)
                         / (lam_sig + lam_dark_slot))
            m_z[k] = n_z[k] * err_event

            lam_x = mus[k] * eta_ch * (1.0 - params.p_zb) * eta_x_eff
            p_click = 1.0 - math.exp(-(lam_x + lam_dark_x))
            n_x[k] = (1.0 - params.p_za) * p_int[k] * p_click
            err_x = ((lam_x * 0.5 * (1.0 - link.visibility) + 0.5 * lam_dark_x)
                     / (lam_x + lam_dark_x))
            m_x[k] = n_x[k] * err_x

        n_z_slot = n_z[0] + n_z[1]
        if n_z_slot <= 0.0:
            raise NoPositiveRate("no expected key-basis detections")
        r_sift = clock * n_z_slot
        q_z = (m_z[0] + m_z[1]) / n_z_slot

        factor = params.block_bits / n_z_slot
        counts = DecoyCounts(
            z=BasisCounts(n_z[0] * factor, n_z[1] * factor,
                          m_z[0] * factor, m_z[1] * factor),
            x=BasisCounts(n_x[0] * factor, n_x[1] * factor,
                          m_x[0] * factor, m_x[1] * factor))
        if ideal_ec:
            lambda_ec = params.block_bits * binary_entropy(q_z)
        else:
            lambda_ec = params.block_bits * ec_overhead
        result = key_length(counts, params, lambda_ec)
        if result.length <= 0:
            raise NoPositiveRate(
                "operating point certifies no extractable key")
        skr = result.length * r_sift / params.block_bits
        return RateBreakdown(
            sift_rate_bps=r_sift, qber_z=q_z, phase_error=result.phase_error,
            skr_bps=skr, key_length=result.length, counts=counts,
            pixel_efficiency=eta_ren, jitter_fwhm_ps=fwhm,
            masked_fraction=1.0 - or_surv, accept_fraction=keep,
            lambda_ec=lambda_ec)


@dataclass(frozen=True)
class RateBreakdown:
    """Analytic operating-point summary."""

    sift_rate_bps: float
    qber_z: float
    phase_error: float
    skr_bps: float
    key_length: int
    counts: DecoyCounts
    pixel_efficiency: float
    jitter_fwhm_ps: float
    masked_fraction: float
    accept_fraction: float
    lambda_ec: float


def analytic_skr(params: ProtocolParams, link: LinkParams,
                 model: MultipixelModel, x_model: XDetectorModel | None = None,
                 **kwargs) -> RateBreakdown:
    """One-shot convenience wrapper around AnalyticEngine.evaluate."""
    return AnalyticEngine(model, x_model).evaluate(params, link, **kwargs)


def fit_receiver_loss(engine: AnalyticEngine, params: ProtocolParams,
                      link: LinkParams, target_sift_bps: float,
                      lo_db: float = 0.0, hi_db: float = 12.0) -> float:
    """Receiver insertion loss that reproduces a measured sifted-key rate."""

    def gap(loss_db: float) -> float:
        trial = replace(link, receiver_loss_db=loss_db)
        return engine.evaluate(params, trial).sift_rate_bps - target_sift_bps

    g_lo, g_hi = gap(lo_db), gap(hi_db)
    if g_lo < 0.0 or g_hi > 0.0:
        raise FixedPointDiverged(
            f"target sift rate {target_sift_bps:.3e} not bracketed in "
            f"[{lo_db}, {hi_db}] dB")
    return float(brentq(gap, lo_db, hi_db, xtol=1e-6))


# --- parameter optimisation -------------------------------------------------

#: Search box for (mu0, mu1/mu0, p_mu0, p_za, p_zb).
OPTIMIZER_BOUNDS = ((0.05, 1.2), (0.05, 0.9), (0.1, 0.95),
                    (0.1, 0.95), (0.5, 0.999))


@dataclass(frozen=True)
class OptimizeResult:
    params: ProtocolParams
    skr_bps: float
    breakdown: RateBreakdown


def _params_from_vector(base: ProtocolParams, x) -> ProtocolParams:
    mu0, ratio, p_mu0, p_za, p_zb = (float(v) for v in x)
    return replace(base, mu0=mu0, mu1=mu0 * ratio, p_mu0=p_mu0,
                   p_za=p_za, p_zb=p_zb)


def optimize_params(engine: AnalyticEngine, base_params: ProtocolParams,
                    link: LinkParams, seed=0, restarts: int = 20,
                    maxiter: int = 400, **eval_kwargs) -> OptimizeResult:
    """Maximise the analytic SKR over source and basis probabilities.

    Nelder-Mead from `restarts` starting points: the provided parameters
    first (the result can therefore never fall below them), then
    seed-deterministic uniform draws from the search box.  Raises
    NoPositiveRate when no starting point reaches a positive rate.
    """
    base_params = validate_params(base_params)
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in OPTIMIZER_BOUNDS])
    hi = np.array([b[1] for b in OPTIMIZER_BOUNDS])

    def objective(x) -> float:
        if np.any(x < lo) or np.any(x > hi):
            return float(np.sum(np.maximum(lo - x, 0.0) ** 2)
                         + np.sum(np.maximum(x - hi, 0.0) ** 2)) + 1.0
        try:
            bd = engine.evaluate(_params_from_vector(base_params, x), link,
                                 **eval_kwargs)
        except (InsufficientStatistics, NoPositiveRate, DomainError):
            return 0.5
        return -bd.skr_bps

    x0 = np.array([base_params.mu0, base_params.mu1 / base_params.mu0,
                   base_params.p_mu0, base_params.p_za, base_params.p_zb])
    starts = [np.clip(x0, lo, hi)]
    for _ in range(max(restarts - 1, 0)):
        starts.append(lo + rng.random(5) * (hi - lo))

    best_x, best_f = None, math.inf
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-4,
                                "fatol": 1e-3, "adaptive": True})
        if res.fun < best_f:
            best_f, best_x = res.fun, res.x
    if best_x is None or best_f >= 0.0:
        raise NoPositiveRate("no parameter point with positive key rate found")
    params = _params_from_vector(base_params, np.clip(best_x, lo, hi))
    breakdown = engine.evaluate(params, link, **eval_kwargs)
    if breakdown.skr_bps <= 0.0:
        raise NoPositiveRate("optimiser converged to a zero-rate point")
    params, breakdown = _prefer_key_basis(engine, params, link, breakdown,
                                          **eval_kwargs)
    return OptimizeResult(params=params, skr_bps=breakdown.skr_bps,
                          breakdown=breakdown)


RIDGE_TOLERANCE = 2e-3


def _prefer_key_basis(engine: AnalyticEngine, params: ProtocolParams,
                      link: LinkParams, breakdown: "RateBreakdown",
                      **eval_kwargs):
    """Walk the flat rate ridge towards a key-basis-heavy receiver.

    Around the optimum the rate is nearly constant in Bob's basis bias, so
    the simplex argmax lands at a numerically arbitrary point of the ridge.
    Among operating points within RIDGE_TOLERANCE of the best rate the
    largest p_zb is preferred: it routes the least light into the
    interferometer arm for the same key throughput.  A genuine interior
    optimum survives, because leaving it costs more than the tolerance.
    """
    floor = (1.0 - RIDGE_TOLERANCE) * breakdown.skr_bps

    def rate(p_zb: float) -> float:
        try:
            return engine.evaluate(replace(params, p_zb=p_zb), link,
                                   **eval_kwargs).skr_bps
        except (InsufficientStatistics, NoPositiveRate, DomainError):
            return 0.0

    top = OPTIMIZER_BOUNDS[4][1]
    if rate(top) >= floor:
        best = top
    else:
        good, bad = params.p_zb, top
        for _ in range(30):
            mid = 0.5 * (good + bad)
            if rate(mid) >= floor:
                good = mid
            else:
                bad = mid
        best = good
    if best <= params.p_zb:
        return params, breakdown
    params = replace(params, p_zb=best)
    return params, engine.evaluate(params, link, **eval_kwargs)

"""Protocol parameter types and the shared math helpers of the one-decoy model.

The protocol is a simplified three-state time-bin BB84: Alice encodes key bits
in the Z basis (photon in the early or late 100 ps bin of a 400 ps clock slot)
and monitors coherence in the X basis, using one signal and one decoy
intensity.  Everything downstream (source, sifter, finite-key bounds) shares
the parameter records and the two scalar helpers defined here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, InvalidIntensities, InvalidProbability

#: Nominal centres of the early/late bins inside a slot, in ps.  Bins are
#: 100 ps wide, start at slot offsets 0 ps and 200 ps, and repeat with the
#: 400 ps slot period, so consecutive usable bins sit 200 ps apart.
BIN_WIDTH_PS = 100.0
BIN_PITCH_PS = 200.0
EARLY_CENTER_PS = 50.0
LATE_CENTER_PS = 250.0


@dataclass(frozen=True)
class ProtocolParams:
    """Source and post-processing parameters.

    mu0, mu1    : signal / decoy mean photon numbers, mu0 > mu1 > 0.
    p_mu0       : probability of emitting the signal intensity.
    p_za, p_zb  : Alice's / Bob's Z-basis probabilities.
    clock_hz    : pulse repetition rate (slot rate).
    block_bits  : privacy-amplification block size counted in sifted bits.
    eps_sec     : secrecy failure budget.
    eps_cor     : correctness failure budget.
    """

    mu0: float
    mu1: float
    p_mu0: float
    p_za: float
    p_zb: float
    clock_hz: float = 2.5e9
    block_bits: int = 1 << 27
    eps_sec: float = 1e-15
    eps_cor: float = 1e-15

    @property
    def p_mu1(self) -> float:
        return 1.0 - self.p_mu0

    @property
    def slot_ps(self) -> float:
        return 1e12 / self.clock_hz


@dataclass(frozen=True)
class LinkParams:
    """Channel and receiver-side properties of one link configuration.

    attenuation_db   : fibre attenuation of the link.
    receiver_loss_db : lumped receiver insertion loss; the single fitted free
                       parameter of a distance point.
    visibility       : interference visibility of the X-basis measurement; an
                       X-basis detection is wrong with probability (1 - V)/2.
    dark_rate_hz     : dark-count rate per detector.
    z_error_prob     : probability that a Z photon registers in the wrong bin
                       (finite modulator extinction and timing tails that the
                       Gaussian jitter model does not carry).
    """

    attenuation_db: float
    receiver_loss_db: float = 0.0
    visibility: float = 1.0
    dark_rate_hz: float = 100.0
    z_error_prob: float = 0.0


def validate_params(params: ProtocolParams) -> ProtocolParams:
    """Check a parameter record and hand it back unchanged.

    Raises InvalidIntensities unless mu0 > mu1 > 0, and InvalidProbability
    for any probability outside the open interval (0, 1).  Idempotent by
    construction: validation never mutates the record.
    """
    if not (params.mu0 > params.mu1 > 0.0):
        raise InvalidIntensities(
            f"need mu0 > mu1 > 0, got mu0={params.mu0!r} mu1={params.mu1!r}")
    for name in ("p_mu0", "p_za", "p_zb"):
        value = getattr(params, name)
        if not (0.0 < value < 1.0):
            raise InvalidProbability(f"{name}={value!r} outside (0, 1)")
    for name in ("eps_sec", "eps_cor"):
        value = getattr(params, name)
        if not (0.0 < value < 1.0):
            raise InvalidProbability(f"{name}={value!r} outside (0, 1)")
    if params.clock_hz <= 0.0:
        raise DomainError(f"clock_hz={params.clock_hz!r} must be positive")
    if params.block_bits < 1:
        raise DomainError(f"block_bits={params.block_bits!r} must be >= 1")
    return params


def validate_link(link: LinkParams) -> LinkParams:
    """Range-check a link record (attenuation >= 0, V in (0, 1], ...)."""
    if link.attenuation_db < 0.0 or link.receiver_loss_db < 0.0:
        raise DomainError("attenuation_db and receiver_loss_db must be >= 0")
    if not (0.0 < link.visibility <= 1.0):
        raise InvalidProbability(f"visibility={link.visibility!r} outside (0, 1]")
    if link.dark_rate_hz < 0.0:
        raise DomainError("dark_rate_hz must be >= 0")
    if not (0.0 <= link.z_error_prob < 0.5):
        raise InvalidProbability(f"z_error_prob={link.z_error_prob!r} outside [0, 0.5)")
    return link


def channel_transmittance(link: LinkParams) -> float:
    """Photon survival probability 10^(-(attenuation + receiver loss)/10)."""
    return 10.0 ** (-(link.attenuation_db + link.receiver_loss_db) / 10.0)


def binary_entropy(p: float) -> float:
    """Binary entropy h(p) = -p log2 p - (1-p) log2 (1-p).

    Continuous extension h(0) = h(1) = 0.  Raises DomainError outside [0, 1].
    """
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"binary_entropy argument {p!r} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def photon_number_prob(n: int, params: ProtocolParams) -> float:
    """Probability tau_n that an emitted pulse carries exactly n photons.

    The source is a phase-randomised laser switched between two intensities,
    so the photon number is the Poisson mixture

        tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!

    over the signal and decoy settings.
    """
    if n < 0 or int(n) != n:
        raise DomainError(f"photon number {n!r} must be a non-negative integer")
    n = int(n)
    fact = math.factorial(n)
    total = 0.0
    for p_k, mu_k in ((params.p_mu0, params.mu0), (params.p_mu1, params.mu1)):
        total += p_k * math.exp(-mu_k) * mu_k ** n / fact
    return total

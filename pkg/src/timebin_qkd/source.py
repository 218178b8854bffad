"""Photon emission and fibre-channel transport.

A block of clock slots is simulated column-wise with numpy: per-slot basis,
bit, intensity choice and the Poisson photon number split over the early/late
bins.  The channel is pure binomial thinning of those per-bin counts at the
survival probability 10^(-(attenuation_db + receiver_loss_db)/10); surviving
slots are kept as a sparse arrival record.

All randomness is drawn from a numpy Generator seeded from the `seed`
argument, so identical (params, n_slots, seed) reproduce identical blocks.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, ParseError
from .protocol import LinkParams, ProtocolParams, channel_transmittance

EMITTED_MAGIC = b"QKDE"
_EMITTED_VERSION = 1

#: Photon counts are stored as uint8; Poisson tails beyond 255 photons for
#: mu < 2 are far below 1e-300 per slot and are clipped without consequence.
_MAX_PHOTONS = 255


def _rng(seed) -> np.random.Generator:
    """Generator from an int seed, a tuple of ints, or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


@dataclass
class EmittedBlock:
    """Alice's truth record for one block of slots.

    basis     : bool per slot, True where Alice chose Z.
    bit       : uint8 per slot, key bit (meaningful only for Z slots).
    intensity : bool per slot, True where the signal intensity mu0 was used.
    early/late: uint8 photon counts per bin.  Z pulses put every photon into
                the bit's bin; X pulses split photons evenly over both bins.

    The record deliberately has no optical-phase field: the security argument
    assumes phase-randomised pulses, so no global phase exists to leak.
    """

    params: ProtocolParams
    n_slots: int
    basis: np.ndarray
    bit: np.ndarray
    intensity: np.ndarray
    early: np.ndarray
    late: np.ndarray

    @property
    def photon_count(self) -> np.ndarray:
        return self.early.astype(np.int64) + self.late.astype(np.int64)


@dataclass
class ArrivalBlock:
    """Sparse record of the slots with at least one surviving photon.

    Carries the originating protocol parameters so downstream stages can
    recover slot timing without re-plumbing arguments.  `n_slots` is the full
    emitted span, not the number of surviving entries.
    """

    params: ProtocolParams
    n_slots: int
    slot: np.ndarray        # int64, strictly increasing
    basis: np.ndarray       # bool, Alice's basis (True = Z)
    bit: np.ndarray         # uint8
    intensity: np.ndarray   # bool (True = mu0)
    early: np.ndarray       # uint8 surviving photons in the early bin
    late: np.ndarray        # uint8 surviving photons in the late bin

    def __len__(self) -> int:
        return int(self.slot.size)


def simulate_emission(params: ProtocolParams, n_slots: int, seed) -> EmittedBlock:
    """Draw one block of emitted pulses.

    Per slot: basis ~ Bernoulli(p_za), bit uniform, intensity ~ Bernoulli(p_mu0)
    and photon count ~ Poisson(mu of the slot).  Z pulses place all photons in
    the bin selected by the bit; X pulses route each photon to a uniformly
    random bin, which is how the 50/50 bin superposition shows up in counts.
    """
    if n_slots < 0:
        raise LengthMismatch(f"n_slots={n_slots!r} must be >= 0")
    rng = _rng(seed)
    basis = rng.random(n_slots) < params.p_za
    bit = (rng.random(n_slots) < 0.5).astype(np.uint8)
    intensity = rng.random(n_slots) < params.p_mu0
    mu = np.where(intensity, params.mu0, params.mu1)
    photons = np.minimum(rng.poisson(mu), _MAX_PHOTONS).astype(np.int64)

    early = np.zeros(n_slots, dtype=np.int64)
    late = np.zeros(n_slots, dtype=np.int64)
    z_mask = basis
    early[z_mask & (bit == 0)] = photons[z_mask & (bit == 0)]
    late[z_mask & (bit == 1)] = photons[z_mask & (bit == 1)]
    x_mask = ~basis
    x_early = rng.binomial(photons[x_mask], 0.5)
    early[x_mask] = x_early
    late[x_mask] = photons[x_mask] - x_early
    return EmittedBlock(
        params=params,
        n_slots=int(n_slots),
        basis=basis,
        bit=bit,
        intensity=intensity,
        early=early.astype(np.uint8),
        late=late.astype(np.uint8),
    )


def apply_channel(block: EmittedBlock, link: LinkParams, seed) -> ArrivalBlock:
    """Thin the per-bin photon counts through the lossy channel.

    Each photon independently survives with probability
    10^(-(attenuation_db + receiver_loss_db)/10); slots left with zero photons
    are dropped from the sparse arrival record.
    """
    rng = _rng(seed)
    p = channel_transmittance(link)
    early = rng.binomial(block.early.astype(np.int64), p)
    late = rng.binomial(block.late.astype(np.int64), p)
    keep = (early + late) > 0
    slots = np.nonzero(keep)[0].astype(np.int64)
    return ArrivalBlock(
        params=block.params,
        n_slots=block.n_slots,
        slot=slots,
        basis=block.basis[keep].copy(),
        bit=block.bit[keep].copy(),
        intensity=block.intensity[keep].copy(),
        early=early[keep].astype(np.uint8),
        late=late[keep].astype(np.uint8),
    )


# --- emitted-block dump -----------------------------------------------------
#
# Layout: magic "QKDE", one version byte, little-endian uint64 slot count,
# then three bytes per slot: a flag byte (bit0 = Z basis, bit1 = key bit,
# bit2 = signal intensity) followed by the early and late photon counts.

def write_emitted(block: EmittedBlock, path) -> None:
    flags = (
        block.basis.astype(np.uint8)
        | (block.bit << 1)
        | (block.intensity.astype(np.uint8) << 2)
    )
    body = np.empty((block.n_slots, 3), dtype=np.uint8)
    body[:, 0] = flags
    body[:, 1] = block.early
    body[:, 2] = block.late
    with open(path, "wb") as fh:
        fh.write(EMITTED_MAGIC)
        fh.write(struct.pack("<BQ", _EMITTED_VERSION, block.n_slots))
        fh.write(body.tobytes())


def read_emitted(path, params: ProtocolParams) -> EmittedBlock:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMITTED_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        version, n_slots = struct.unpack("<BQ", fh.read(9))
        if version != _EMITTED_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        body = np.frombuffer(fh.read(), dtype=np.uint8)
    if body.size != 3 * n_slots:
        raise ParseError(f"{path}: truncated body ({body.size} bytes)")
    body = body.reshape(n_slots, 3)
    flags = body[:, 0]
    return EmittedBlock(
        params=params,
        n_slots=int(n_slots),
        basis=(flags & 1).astype(bool),
        bit=((flags >> 1) & 1).astype(np.uint8),
        intensity=((flags >> 2) & 1).astype(bool),
        early=body[:, 1].copy(),
        late=body[:, 2].copy(),
    )

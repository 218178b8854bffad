"""Basis reconciliation: turn detection events plus Alice's record into key
bit pairs and the per-basis, per-intensity tallies the decoy analysis needs.

Sifting itself is deterministic bookkeeping; all randomness lives upstream.
Z-detector events in a valid bin (T0/T1/TM1) at a slot where Alice chose Z
become key bits - shifted bins keep the event but read out the wrong bit, so
they surface as QBER rather than loss.  ND events are discarded, cross-basis
events are tallied (they never feed the security bound), and X/X coincidences
feed the phase-error statistics.  When one slot collects more than one valid
Z/Z click, the earliest click defines the key bit and the extras land in a
duplicate bucket so the event count stays conserved.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .detector import BASIS_X, BASIS_Z, TND, DetectionEvents
from .errors import EmptyBlock, ParseError, SlotOutOfRange
from .source import EmittedBlock

SIFTED_MAGIC = b"QKDS"
_SIFTED_VERSION = 1

# Fixed order of the uint64 tally table inside a sifted-block file.
_TALLY_FIELDS = (
    "n_slots", "n_z_mu0", "n_z_mu1", "m_z_mu0", "m_z_mu1",
    "n_x_mu0", "n_x_mu1", "m_x_mu0", "m_x_mu1",
    "cross_az_bx", "cross_ax_bz", "discarded_nd", "duplicates",
)


@dataclass
class SiftedBlock:
    """Matched key bits and counting statistics for a span of slots.

    n_{z,x}_mu{0,1} count matched-basis detections by Alice's intensity;
    m_* count the errored subset.  cross_az_bx / cross_ax_bz are the
    basis-mismatch tallies (Alice Z & Bob X, Alice X & Bob Z).  Tallies merge
    associatively across blocks, so a run can be accumulated block by block
    in any grouping that preserves bit order.
    """

    n_slots: int = 0
    alice_bits: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    bob_bits: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    intensity: np.ndarray = field(default_factory=lambda: np.empty(0, bool))
    n_z_mu0: int = 0
    n_z_mu1: int = 0
    m_z_mu0: int = 0
    m_z_mu1: int = 0
    n_x_mu0: int = 0
    n_x_mu1: int = 0
    m_x_mu0: int = 0
    m_x_mu1: int = 0
    cross_az_bx: int = 0
    cross_ax_bz: int = 0
    discarded_nd: int = 0
    duplicates: int = 0

    @property
    def n_z(self) -> int:
        return self.n_z_mu0 + self.n_z_mu1

    @property
    def n_x(self) -> int:
        return self.n_x_mu0 + self.n_x_mu1

    def merge(self, other: "SiftedBlock") -> "SiftedBlock":
        out = SiftedBlock(
            n_slots=self.n_slots + other.n_slots,
            alice_bits=np.concatenate([self.alice_bits, other.alice_bits]),
            bob_bits=np.concatenate([self.bob_bits, other.bob_bits]),
            intensity=np.concatenate([self.intensity, other.intensity]),
        )
        for name in _TALLY_FIELDS[1:]:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out


def sift(emitted: EmittedBlock, events: DetectionEvents) -> SiftedBlock:
    """Reconcile one block of detection events against Alice's record."""
    if np.any(events.slot < 0) or np.any(events.slot >= emitted.n_slots):
        raise SlotOutOfRange("event slot outside the emitted block")

    out = SiftedBlock(n_slots=emitted.n_slots)
    if len(events) == 0:
        return out

    alice_z = emitted.basis[events.slot]
    alice_mu0 = emitted.intensity[events.slot]
    is_z = events.basis == BASIS_Z
    is_x = events.basis == BASIS_X

    # ND-window events carry no usable readout whatever Alice sent.
    nd = is_z & (events.bin == TND)
    out.discarded_nd = int(np.count_nonzero(nd))

    # Cross-basis tallies: raw counts only, never part of the key.
    out.cross_ax_bz = int(np.count_nonzero(is_z & ~nd & ~alice_z))
    out.cross_az_bx = int(np.count_nonzero(is_x & alice_z))

    # Z/Z key candidates, earliest click per slot wins.
    cand = np.nonzero(is_z & ~nd & alice_z)[0]
    if cand.size:
        order = np.lexsort((events.timestamp_ps[cand], events.slot[cand]))
        cand = cand[order]
        slots = events.slot[cand]
        first = np.ones(cand.size, bool)
        first[1:] = slots[1:] != slots[:-1]
        out.duplicates = int(np.count_nonzero(~first))
        keep = cand[first]

        out.alice_bits = emitted.bit[events.slot[keep]].copy()
        out.bob_bits = events.bit[keep].copy()
        out.intensity = emitted.intensity[events.slot[keep]].copy()
        err = out.alice_bits != out.bob_bits
        mu0 = out.intensity
        out.n_z_mu0 = int(np.count_nonzero(mu0))
        out.n_z_mu1 = int(np.count_nonzero(~mu0))
        out.m_z_mu0 = int(np.count_nonzero(err & mu0))
        out.m_z_mu1 = int(np.count_nonzero(err & ~mu0))

    # X/X coincidences feed the phase-error statistics.
    xx = np.nonzero(is_x & ~alice_z)[0]
    if xx.size:
        order = np.lexsort((events.timestamp_ps[xx], events.slot[xx]))
        xx = xx[order]
        slots = events.slot[xx]
        first = np.ones(xx.size, bool)
        first[1:] = slots[1:] != slots[:-1]
        out.duplicates += int(np.count_nonzero(~first))
        keep = xx[first]
        mu0 = alice_mu0[keep]
        err = events.xerr[keep]
        out.n_x_mu0 = int(np.count_nonzero(mu0))
        out.n_x_mu1 = int(np.count_nonzero(~mu0))
        out.m_x_mu0 = int(np.count_nonzero(err & mu0))
        out.m_x_mu1 = int(np.count_nonzero(err & ~mu0))

    return out


def event_conservation(block: SiftedBlock, n_events: int) -> bool:
    """Every detection lands in exactly one bucket."""
    total = (block.n_z + block.n_x + block.cross_az_bx + block.cross_ax_bz
             + block.discarded_nd + block.duplicates)
    return total == n_events


def compute_qber(block: SiftedBlock) -> float:
    """Fraction of sifted key bits where Alice and Bob disagree."""
    if block.alice_bits.size == 0:
        raise EmptyBlock("no sifted bits; QBER undefined")
    return float(np.count_nonzero(block.alice_bits != block.bob_bits)
                 / block.alice_bits.size)


def sifted_rate(block: SiftedBlock, clock_hz: float) -> float:
    """Sifted key bits per second: bits/slots * clock."""
    if block.n_slots == 0:
        raise EmptyBlock("no slots elapsed; rate undefined")
    return block.alice_bits.size / block.n_slots * clock_hz


# --- two-party sifting messages ---------------------------------------------
#
# Bob announces which slots produced a usable event and in which measurement
# basis; Alice answers with her basis and intensity choice for exactly those
# slots.  Wire layout is length-prefixed little-endian: uint64 count, then
# the slot indices (uint64 each), then one flag byte per entry.

@dataclass
class BobAnnouncement:
    slots: np.ndarray   # int64
    basis: np.ndarray   # uint8, BASIS_Z / BASIS_X


@dataclass
class AliceReply:
    basis_z: np.ndarray    # bool, True where Alice used Z
    intensity: np.ndarray  # bool, True where mu0


def announce_detections(events: DetectionEvents) -> BobAnnouncement:
    usable = ~((events.basis == BASIS_Z) & (events.bin == TND))
    return BobAnnouncement(slots=events.slot[usable].copy(),
                           basis=events.basis[usable].copy())


def reply_bases(emitted: EmittedBlock, ann: BobAnnouncement) -> AliceReply:
    if np.any(ann.slots < 0) or np.any(ann.slots >= emitted.n_slots):
        raise SlotOutOfRange("announced slot outside the emitted block")
    return AliceReply(basis_z=emitted.basis[ann.slots].copy(),
                      intensity=emitted.intensity[ann.slots].copy())


def encode_announcement(ann: BobAnnouncement) -> bytes:
    return (struct.pack("<Q", ann.slots.size)
            + ann.slots.astype("<u8").tobytes()
            + ann.basis.astype(np.uint8).tobytes())


def decode_announcement(blob: bytes) -> BobAnnouncement:
    if len(blob) < 8:
        raise ParseError("announcement shorter than its header")
    (count,) = struct.unpack_from("<Q", blob)
    need = 8 + 9 * count
    if len(blob) != need:
        raise ParseError(f"announcement length {len(blob)} != {need}")
    slots = np.frombuffer(blob, dtype="<u8", count=count, offset=8)
    basis = np.frombuffer(blob, dtype=np.uint8, count=count, offset=8 + 8 * count)
    return BobAnnouncement(slots=slots.astype(np.int64), basis=basis.copy())


def encode_reply(reply: AliceReply) -> bytes:
    flags = (reply.basis_z.astype(np.uint8)
             | (reply.intensity.astype(np.uint8) << 1))
    return struct.pack("<Q", flags.size) + flags.tobytes()


def decode_reply(blob: bytes) -> AliceReply:
    if len(blob) < 8:
        raise ParseError("reply shorter than its header")
    (count,) = struct.unpack_from("<Q", blob)
    if len(blob) != 8 + count:
        raise ParseError(f"reply length {len(blob)} != {8 + count}")
    flags = np.frombuffer(blob, dtype=np.uint8, count=count, offset=8)
    return AliceReply(basis_z=(flags & 1).astype(bool),
                      intensity=((flags >> 1) & 1).astype(bool))


# --- sifted-block file ------------------------------------------------------
#
# Layout: magic "QKDS", version byte, a little-endian uint64 tally table in
# _TALLY_FIELDS order plus the bit count, then Alice's and Bob's key bits
# packed 8 per byte (big-endian within the byte, numpy packbits order), then
# the per-bit intensity flags packed the same way.

def write_sifted(block: SiftedBlock, path) -> None:
    n_bits = int(block.alice_bits.size)
    header = [getattr(block, name) for name in _TALLY_FIELDS] + [n_bits]
    with open(path, "wb") as fh:
        fh.write(SIFTED_MAGIC)
        fh.write(struct.pack("<B", _SIFTED_VERSION))
        fh.write(struct.pack(f"<{len(header)}Q", *header))
        fh.write(np.packbits(block.alice_bits).tobytes())
        fh.write(np.packbits(block.bob_bits).tobytes())
        fh.write(np.packbits(block.intensity.astype(np.uint8)).tobytes())


def read_sifted(path) -> SiftedBlock:
    with open(path, "rb") as fh:
        if fh.read(4) != SIFTED_MAGIC:
            raise ParseError(f"{path}: bad magic")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _SIFTED_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        n_fields = len(_TALLY_FIELDS) + 1
        header = struct.unpack(f"<{n_fields}Q", fh.read(8 * n_fields))
        n_bits = header[-1]
        n_bytes = (n_bits + 7) // 8
        alice = np.unpackbits(np.frombuffer(fh.read(n_bytes), np.uint8))[:n_bits]
        bob = np.unpackbits(np.frombuffer(fh.read(n_bytes), np.uint8))[:n_bits]
        inten = np.unpackbits(np.frombuffer(fh.read(n_bytes), np.uint8))[:n_bits]
    block = SiftedBlock(alice_bits=alice.astype(np.uint8),
                        bob_bits=bob.astype(np.uint8),
                        intensity=inten.astype(bool))
    for name, value in zip(_TALLY_FIELDS, header):
        setattr(block, name, int(value))
    if block.alice_bits.size != block.n_z:
        raise ParseError(f"{path}: bit count {n_bits} != n_z tally {block.n_z}")
    return block

"""Privacy amplification by seeded Toeplitz hashing.

The corrected key of length n is compressed to the final length by a random
n-column Toeplitz matrix over GF(2), described by n + out - 1 seed bits:
T[i, j] = seed[n - 1 + i - j].  Every such matrix is a 2-universal hash, so
the leftover-hash lemma applies with the secrecy budget priced into the key
length elsewhere.

Multiplying by a Toeplitz matrix is a linear convolution: the output bits are
the middle slice of conv(seed, key) reduced mod 2.  The fast path therefore
runs an FFT convolution in float64 and rounds; with at most 2^27 one-bit
inputs the floating-point error stays near 1e-6 of a unit, far below the 0.5
rounding margin, so the result is exact.  A dense matrix product is kept as
an independent reference for small sizes.
"""
from __future__ import annotations

import struct

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, ParseError, SeedLengthMismatch

KEY_MAGIC = b"QKDK"
_KEY_VERSION = 1


def seed_bits_needed(n_in: int, n_out: int) -> int:
    """Seed length describing an (n_out x n_in) Toeplitz matrix."""
    if n_in < 0 or n_out < 0:
        raise DomainError("lengths must be non-negative")
    if n_out > n_in:
        raise DomainError(f"cannot expand {n_in} bits to {n_out}")
    return max(n_in + n_out - 1, 0)


def _checked(bits, seed, n_out):
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    seed = np.ascontiguousarray(seed, dtype=np.uint8)
    need = seed_bits_needed(bits.size, n_out)
    if seed.size != need:
        raise SeedLengthMismatch(
            f"seed has {seed.size} bits, need {need} for {bits.size}->{n_out}")
    return bits, seed


def toeplitz_hash(bits: np.ndarray, seed: np.ndarray, n_out: int) -> np.ndarray:
    """Compress `bits` to `n_out` bits with the seed's Toeplitz matrix."""
    bits, seed = _checked(bits, seed, n_out)
    if n_out == 0:
        return np.zeros(0, dtype=np.uint8)
    conv = fftconvolve(seed.astype(np.float64), bits.astype(np.float64))
    window = conv[bits.size - 1: bits.size - 1 + n_out]
    return (np.rint(window).astype(np.int64) & 1).astype(np.uint8)


def toeplitz_hash_naive(bits: np.ndarray, seed: np.ndarray, n_out: int) -> np.ndarray:
    """Reference implementation multiplying the explicit matrix over GF(2)."""
    bits, seed = _checked(bits, seed, n_out)
    if n_out == 0:
        return np.zeros(0, dtype=np.uint8)
    if bits.size * n_out > 1 << 26:
        raise DomainError("dense reference limited to 2^26 matrix entries")
    rows = np.arange(n_out, dtype=np.int64)[:, None]
    cols = np.arange(bits.size, dtype=np.int64)[None, :]
    matrix = seed[bits.size - 1 + rows - cols]
    return (matrix @ bits.astype(np.int64) & 1).astype(np.uint8)


def derive_seed(seed, n_bits: int) -> np.ndarray:
    """Deterministic seed-bit expansion from a counter-based generator."""
    if n_bits < 0:
        raise DomainError("seed length must be non-negative")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.integers(0, 2, size=n_bits, dtype=np.uint8)


# --- final key file ---------------------------------------------------------

def write_key(path, key_bits: np.ndarray) -> None:
    """Store a final key: magic, version byte, uint64 LE bit count, packed bits."""
    key_bits = np.ascontiguousarray(key_bits, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(KEY_MAGIC)
        fh.write(struct.pack("<B", _KEY_VERSION))
        fh.write(struct.pack("<Q", key_bits.size))
        fh.write(np.packbits(key_bits).tobytes())


def read_key(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != KEY_MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 13:
        raise ParseError(f"{path}: truncated header")
    version = blob[4]
    if version != _KEY_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    (nbits,) = struct.unpack_from("<Q", blob, 5)
    need = 13 + (nbits + 7) // 8
    if len(blob) != need:
        raise ParseError(f"{path}: length {len(blob)} != expected {need}")
    return np.unpackbits(np.frombuffer(blob, np.uint8, offset=13))[:nbits]

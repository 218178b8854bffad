"""Syndrome-based error correction with a rate-5/6 quasi-cyclic LDPC code.

Alice holds the noisy sifted string; Bob sends the 1/6-rate syndrome of his
string plus a 64-bit polynomial verification hash.  Decoding runs a layered
normalised min-sum over the expanded parity-check matrix, looking for the
error pattern whose syndrome matches the XOR of the two parties' syndromes.

The default code is a deterministic 4 x 24 quasi-cyclic construction: twenty
information columns carry circulant shifts i*(c+2) (girth 6 because the shift
differences (i1-i2)*(c1-c2) never vanish modulo the lifting size), and a
four-column tail makes the matrix invertible on its last block column for
every lifting size, hence full row rank.  Any base matrix with the same 1/6
row/column ratio can be loaded from a text file instead.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import BadLifting, BadRate, LengthMismatch, NotConverged, ParseError
from .source import _rng

DEFAULT_LIFTING = 256
DECODE_MAX_ITERS = 60
MINSUM_ALPHA = 0.8
#: Prior-QBER clamp keeping the channel LLR finite and the decoder stable.
QBER_CLAMP = (1e-4, 0.25)
#: Verification hash length in bits; also the per-block hash leakage.
HASH_BITS = 64


def default_base_matrix() -> np.ndarray:
    """4 x 24 base matrix of circulant shifts, -1 marking an absent block."""
    base = np.full((4, 24), -1, dtype=np.int64)
    for i in range(4):
        for c in range(20):
            base[i, c] = i * (c + 2)
    base[0, 20] = 1
    base[2, 20] = 0
    base[3, 20] = 1
    base[0, 21] = 0
    base[1, 21] = 0
    base[1, 22] = 0
    base[2, 22] = 0
    base[2, 23] = 0
    base[3, 23] = 0
    return base


@dataclass
class QcLdpcCode:
    """Expanded parity-check matrix in CSR form plus its QC description."""

    base: np.ndarray
    lifting: int
    n: int
    m: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    @property
    def syndrome_rate(self) -> float:
        return self.m / self.n


def build_code(base_matrix, lifting: int = DEFAULT_LIFTING) -> QcLdpcCode:
    """Expand a base matrix of circulant shifts into a QcLdpcCode.

    Each non-negative entry s becomes the Z x Z circulant with ones at
    (j, (j + s) mod Z); shifts are reduced modulo the lifting size, so
    lifting 1 degenerates to the binary presence matrix of the base.
    Raises BadRate unless rows/cols = 1/6 and BadLifting for lifting < 1.
    """
    base = np.asarray(base_matrix, dtype=np.int64)
    if base.ndim != 2:
        raise BadRate(f"base matrix must be 2-D, got shape {base.shape}")
    rows, cols = base.shape
    if cols != 6 * rows:
        raise BadRate(f"base is {rows}x{cols}; syndrome rate {rows}/{cols} != 1/6")
    if np.any(base < -1):
        raise BadRate("base entries must be >= -1")
    if not (isinstance(lifting, (int, np.integer)) and lifting >= 1):
        raise BadLifting(f"lifting size {lifting!r} must be an integer >= 1")
    z = int(lifting)

    n, m = cols * z, rows * z
    row_weight = np.count_nonzero(base >= 0, axis=1)
    row_ptr = np.zeros(m + 1, dtype=np.int64)
    row_ptr[1:] = np.repeat(row_weight, z).cumsum()
    col_idx = np.empty(row_ptr[-1], dtype=np.int64)
    j = np.arange(z, dtype=np.int64)
    for i in range(rows):
        row_start = row_ptr[i * z: (i + 1) * z]
        for p, jb in enumerate(np.nonzero(base[i] >= 0)[0]):
            s = int(base[i, jb]) % z
            col_idx[row_start + p] = jb * z + (j + s) % z
    return QcLdpcCode(base=base, lifting=z, n=n, m=m,
                      row_ptr=row_ptr, col_idx=col_idx)


# --- kernels ----------------------------------------------------------------

@njit(cache=True, nogil=True)
def _syndrome_kernel(row_ptr, col_idx, bits):
    m = row_ptr.size - 1
    out = np.zeros(m, np.uint8)
    for r in range(m):
        acc = np.uint8(0)
        for e in range(row_ptr[r], row_ptr[r + 1]):
            acc ^= bits[col_idx[e]]
        out[r] = acc
    return out


@njit(cache=True, nogil=True)
def _minsum_kernel(row_ptr, col_idx, n, prior, target, alpha, max_iters, scratch_deg):
    """Layered normalised min-sum searching for e with syndrome(e) == target.

    Posterior LLRs start at the channel prior (favouring e = 0); check rows
    are swept in order, each row update being immediately visible to the
    next (layered schedule).  Deterministic: no randomness, fixed sweep
    order, single thread.
    """
    m = row_ptr.size - 1
    L = np.full(n, prior)
    R = np.zeros(col_idx.size)
    Q = np.zeros(scratch_deg)
    iters = 0
    converged = False
    for _ in range(max_iters):
        iters += 1
        for r in range(m):
            s = row_ptr[r]
            deg = row_ptr[r + 1] - s
            sign = -1.0 if target[r] else 1.0
            min1 = 1e300
            min2 = 1e300
            argmin = -1
            for jj in range(deg):
                q = L[col_idx[s + jj]] - R[s + jj]
                Q[jj] = q
                if q < 0.0:
                    sign = -sign
                aq = -q if q < 0.0 else q
                if aq < min1:
                    min2 = min1
                    min1 = aq
                    argmin = jj
                elif aq < min2:
                    min2 = aq
            for jj in range(deg):
                q = Q[jj]
                mag = min2 if jj == argmin else min1
                sgn = -sign if q < 0.0 else sign
                r_new = alpha * sgn * mag
                L[col_idx[s + jj]] = q + r_new
                R[s + jj] = r_new
        converged = True
        for r in range(m):
            acc = np.uint8(1) if target[r] else np.uint8(0)
            for e in range(row_ptr[r], row_ptr[r + 1]):
                if L[col_idx[e]] < 0.0:
                    acc ^= np.uint8(1)
            if acc:
                converged = False
                break
        if converged:
            break
    e_hat = (L < 0.0)
    return e_hat, iters, converged


# --- public operations ------------------------------------------------------

def compute_syndrome(code: QcLdpcCode, bits: np.ndarray) -> np.ndarray:
    """Syndrome H * bits over GF(2); linear in its input by construction."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.size != code.n:
        raise LengthMismatch(f"bit string length {bits.size} != n {code.n}")
    return _syndrome_kernel(code.row_ptr, code.col_idx, bits)


@dataclass
class CorrectionResult:
    corrected: np.ndarray
    iterations: int
    converged: bool
    flips: int


def decode(code: QcLdpcCode, noisy: np.ndarray, syndrome: np.ndarray,
           qber_prior: float, max_iters: int = DECODE_MAX_ITERS,
           alpha: float = MINSUM_ALPHA) -> CorrectionResult:
    """Correct `noisy` towards the string whose syndrome was transmitted.

    The channel prior enters as the flat LLR log((1-q)/q) with q clamped to
    [1e-4, 0.25].  The decoder works on the error pattern: its target is the
    XOR of the received syndrome and the syndrome of `noisy`.  A result with
    converged=False means the frame must be discarded (or retried at higher
    max_iters); decode itself does not raise.
    """
    noisy = np.ascontiguousarray(noisy, dtype=np.uint8)
    if noisy.size != code.n:
        raise LengthMismatch(f"frame length {noisy.size} != n {code.n}")
    syndrome = np.ascontiguousarray(syndrome, dtype=np.uint8)
    if syndrome.size != code.m:
        raise LengthMismatch(f"syndrome length {syndrome.size} != m {code.m}")
    q = min(max(float(qber_prior), QBER_CLAMP[0]), QBER_CLAMP[1])
    prior = math.log((1.0 - q) / q)
    target = _syndrome_kernel(code.row_ptr, code.col_idx, noisy) ^ syndrome
    max_deg = int(np.max(np.diff(code.row_ptr))) if code.m else 0
    e_hat, iters, conv = _minsum_kernel(
        code.row_ptr, code.col_idx, code.n, prior, target,
        float(alpha), int(max_iters), max(max_deg, 1))
    corrected = noisy ^ e_hat.astype(np.uint8)
    return CorrectionResult(corrected=corrected, iterations=int(iters),
                            converged=bool(conv), flips=int(np.count_nonzero(e_hat)))


RESCUE_ITERS = 30
RESCUE_MAX_UNSAT = 40


def _rescue_trapped_frame(code: QcLdpcCode, noisy: np.ndarray,
                          syndrome: np.ndarray, qber_prior: float,
                          stalled: CorrectionResult,
                          alpha: float) -> CorrectionResult | None:
    """Break a small trapping set by single-bit flip restarts.

    A stalled min-sum decode at working-point noise almost always ends a
    few bits away from the right word, with a handful of unsatisfied
    checks whose shared neighbours pinpoint the trapped variables.  Each
    variable touching at least two unsatisfied checks is flipped in turn
    and the decoder restarted from the flipped word.  Several restarts may
    converge, and not necessarily to the same codeword, so the winner is
    the converged word closest in Hamming distance to the received frame
    (maximum likelihood for a binary symmetric channel); ties keep the
    lowest flip index.  Everything is deterministic.  Returns None when
    the stall does not look like a trapping set (no or too many
    unsatisfied checks).
    """
    residual = _syndrome_kernel(code.row_ptr, code.col_idx,
                                stalled.corrected) ^ syndrome
    unsat = np.nonzero(residual)[0]
    if unsat.size == 0 or unsat.size > RESCUE_MAX_UNSAT:
        return None
    touched = np.concatenate([
        code.col_idx[code.row_ptr[r]:code.row_ptr[r + 1]] for r in unsat])
    counts = np.bincount(touched, minlength=code.n)
    best: CorrectionResult | None = None
    best_dist = code.n + 1
    for v in np.nonzero(counts >= 2)[0]:
        flipped = stalled.corrected.copy()
        flipped[v] ^= 1
        retry = decode(code, flipped, syndrome, qber_prior,
                       max_iters=RESCUE_ITERS, alpha=alpha)
        if not retry.converged:
            continue
        dist = int(np.count_nonzero(retry.corrected != noisy))
        if dist < best_dist:
            best_dist = dist
            best = CorrectionResult(
                corrected=retry.corrected,
                iterations=stalled.iterations + retry.iterations,
                converged=True, flips=dist)
    return best


def correct_frame(code: QcLdpcCode, noisy: np.ndarray, syndrome: np.ndarray,
                  qber_prior: float, **kwargs) -> CorrectionResult:
    """decode() plus trapping-set rescue; raises NotConverged on failure."""
    result = decode(code, noisy, syndrome, qber_prior, **kwargs)
    if result.converged:
        return result
    noisy = np.ascontiguousarray(noisy, dtype=np.uint8)
    rescued = _rescue_trapped_frame(
        code, noisy, syndrome, qber_prior, result,
        float(kwargs.get("alpha", MINSUM_ALPHA)))
    if rescued is None:
        raise NotConverged(
            f"no matching syndrome after {result.iterations} iterations")
    return rescued


# --- 64-bit polynomial verification hash ------------------------------------
#
# Carter-Wegman polynomial evaluation over GF(2^64): the packed bit string is
# read as 64-bit words m_0..m_{W-1} and hashed to
#     h = (((len ^ m_0) a ^ m_1) a ...) a
# with a a seeded nonzero field point.  Two distinct inputs collide only when
# a is a root of their (degree <= W+1) difference polynomial, i.e. with
# probability about (W+1) / 2^64.

_GF64_POLY = (1 << 64) | 0x1B  # x^64 + x^4 + x^3 + x + 1


def _gf64_mul(a: int, b: int) -> int:
    res = 0
    while b:
        if b & 1:
            res ^= a
        b >>= 1
        a <<= 1
        if a >> 64:
            a ^= _GF64_POLY
    return res


def poly_hash(bits: np.ndarray, seed) -> int:
    """64-bit polynomial hash of a bit string under a transmitted seed."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    alpha = int(_rng(seed).integers(1, np.iinfo(np.uint64).max, dtype=np.uint64))
    packed = np.packbits(bits)
    pad = (-packed.size) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, np.uint8)])
    words = packed.view("<u8")
    h = bits.size
    for w in words:
        h = _gf64_mul(h ^ int(w), alpha)
    return h


def verify_block(corrected: np.ndarray, reference_hash: int, seed) -> bool:
    """Compare the corrected frame's hash against Bob's transmitted hash."""
    return poly_hash(corrected, seed) == int(reference_hash)


def leaked_bits(code: QcLdpcCode) -> int:
    """Reconciliation leakage per frame: syndrome plus verification hash."""
    return code.m + HASH_BITS


# --- base matrix file -------------------------------------------------------
#
# One row per line, whitespace-separated integers, -1 for an absent block.

def save_base_matrix(base: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(base, np.int64):
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_base_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([int(tok) for tok in line.split()])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no matrix rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=np.int64)


# --- syndrome wire format ---------------------------------------------------

def encode_syndrome(syndrome: np.ndarray) -> bytes:
    """Length-prefixed packed syndrome bits (uint64 LE bit count + packbits)."""
    syndrome = np.ascontiguousarray(syndrome, np.uint8)
    return struct.pack("<Q", syndrome.size) + np.packbits(syndrome).tobytes()


def decode_syndrome(blob: bytes) -> np.ndarray:
    if len(blob) < 8:
        raise ParseError("syndrome blob shorter than its header")
    (nbits,) = struct.unpack_from("<Q", blob)
    need = 8 + (nbits + 7) // 8
    if len(blob) != need:
        raise ParseError(f"syndrome blob length {len(blob)} != {need}")
    return np.unpackbits(np.frombuffer(blob, np.uint8, offset=8))[:nbits]

"""Quasi-cyclic LDPC code structure, min-sum decoding and verification hash."""
from itertools import combinations

import numpy as np
import pytest

import timebin_qkd as tq
from timebin_qkd.ldpc import DECODE_MAX_ITERS, HASH_BITS


@pytest.fixture(scope="module")
def code():
    return tq.build_code(tq.default_base_matrix(), 256)


def _dense_h(code):
    h = np.zeros((code.m, code.n), np.uint8)
    for r in range(code.m):
        h[r, code.col_idx[code.row_ptr[r]:code.row_ptr[r + 1]]] = 1
    return h


def _gf2_rank(rows):
    h = rows.copy()
    m, n = h.shape
    rank = 0
    for col in range(n):
        if rank == m:
            break
        pivot = np.nonzero(h[rank:, col])[0]
        if pivot.size == 0:
            continue
        p = rank + pivot[0]
        if p != rank:
            h[[rank, p]] = h[[p, rank]]
        hits = np.nonzero(h[:, col])[0]
        hits = hits[hits != rank]
        h[hits] ^= h[rank]
        rank += 1
    return rank


def test_code_dimensions(code):
    base = tq.default_base_matrix()
    assert base.shape == (4, 24)
    # -1 marks an empty circulant block; real shifts stay below the lifting.
    assert np.all(base >= -1) and np.all(base < 256)
    assert int((base >= 0).sum()) == 89
    assert (code.n, code.m) == (6144, 1024)
    assert code.syndrome_rate == pytest.approx(1.0 / 6.0)
    assert tq.leaked_bits(code) == code.m + HASH_BITS


def test_parity_matrix_has_full_rank(code):
    # Independent oracle: plain GF(2) Gaussian elimination on the dense H.
    assert _gf2_rank(_dense_h(code)) == code.m


def test_expanded_graph_has_no_four_cycles(code):
    # A 4-cycle means two columns sharing two rows; count column pairs
    # appearing in more than one row of the expanded matrix.
    seen = set()
    for r in range(code.m):
        cols = code.col_idx[code.row_ptr[r]:code.row_ptr[r + 1]]
        for a, b in combinations(sorted(cols.tolist()), 2):
            key = a * code.n + b
            assert key not in seen, f"columns {a},{b} share two checks"
            seen.add(key)


def test_build_code_rejects_bad_shapes():
    with pytest.raises(tq.BadRate):
        tq.build_code(np.zeros((4, 20), np.int64), 16)
    with pytest.raises(tq.BadLifting):
        tq.build_code(tq.default_base_matrix(), 0)


def test_decoder_fixes_planted_errors(code):
    rng = np.random.default_rng(5)
    reference = rng.integers(0, 2, code.n, dtype=np.uint8)
    syndrome = tq.compute_syndrome(code, reference)
    clean = tq.decode(code, reference.copy(), syndrome, 0.005)
    assert clean.converged and clean.iterations <= 1 and clean.flips == 0

    noisy = reference.copy()
    flip_at = rng.choice(code.n, 24, replace=False)
    noisy[flip_at] ^= 1
    result = tq.decode(code, noisy, syndrome, 0.005)
    assert result.converged
    assert np.array_equal(result.corrected, reference)
    assert result.flips == 24


def test_decoder_small_frame_sample(code):
    rng = np.random.default_rng(9)
    failures = 0
    for _ in range(200):
        reference = rng.integers(0, 2, code.n, dtype=np.uint8)
        noisy = reference ^ (rng.random(code.n) < 0.005).astype(np.uint8)
        syndrome = tq.compute_syndrome(code, reference)
        try:
            result = tq.correct_frame(code, noisy, syndrome, 0.005)
        except tq.NotConverged:
            failures += 1
            continue
        if not np.array_equal(result.corrected, reference):
            failures += 1
    assert failures == 0


def test_trapping_set_rescue(code):
    # Walking this RNG stream, frame 47 stalls the plain decoder in a small
    # trapping set; the flip-restart pass must still recover it exactly.
    rng = np.random.default_rng(9)
    for _ in range(47):
        rng.integers(0, 2, code.n, dtype=np.uint8)
        rng.random(code.n)
    reference = rng.integers(0, 2, code.n, dtype=np.uint8)
    noisy = reference ^ (rng.random(code.n) < 0.005).astype(np.uint8)
    syndrome = tq.compute_syndrome(code, reference)
    stalled = tq.decode(code, noisy, syndrome, 0.005)
    assert not stalled.converged
    result = tq.correct_frame(code, noisy, syndrome, 0.005)
    assert result.converged
    assert np.array_equal(result.corrected, reference)
    assert result.flips == int((noisy != reference).sum())


def test_decoder_gives_up_at_absurd_noise(code):
    rng = np.random.default_rng(13)
    reference = rng.integers(0, 2, code.n, dtype=np.uint8)
    noisy = reference ^ (rng.random(code.n) < 0.15).astype(np.uint8)
    syndrome = tq.compute_syndrome(code, reference)
    result = tq.decode(code, noisy, syndrome, 0.15)
    assert not result.converged
    assert result.iterations == DECODE_MAX_ITERS
    with pytest.raises(tq.NotConverged):
        tq.correct_frame(code, noisy, syndrome, 0.15)


def test_syndrome_matches_dense_product(code):
    rng = np.random.default_rng(17)
    bits = rng.integers(0, 2, code.n, dtype=np.uint8)
    dense = (_dense_h(code) @ bits) & 1
    assert np.array_equal(tq.compute_syndrome(code, bits),
                          dense.astype(np.uint8))


def test_poly_hash_behaviour():
    rng = np.random.default_rng(19)
    bits = rng.integers(0, 2, 6144, dtype=np.uint8)
    seed = 12345
    h = tq.poly_hash(bits, seed)
    assert h == tq.poly_hash(bits, seed)
    assert 0 <= h < 1 << 64
    assert tq.verify_block(bits, h, seed)
    tampered = bits.copy()
    tampered[100] ^= 1
    assert tq.poly_hash(tampered, seed) != h
    assert not tq.verify_block(tampered, h, seed)
    assert tq.poly_hash(bits, seed + 1) != h
    # Length is part of the hash input: a zero-padded message differs.
    assert tq.poly_hash(np.concatenate([bits, np.zeros(64, np.uint8)]),
                        seed) != h


def test_base_matrix_file_roundtrip(tmp_path):
    base = tq.default_base_matrix()
    path = tmp_path / "code.base"
    tq.save_base_matrix(base, path)
    assert np.array_equal(tq.load_base_matrix(path), base)
    commented = tmp_path / "commented.base"
    commented.write_text("# rate 5/6 base graph\n" + path.read_text())
    assert np.array_equal(tq.load_base_matrix(commented), base)


def test_base_matrix_file_rejects_bad_content(tmp_path):
    ragged = tmp_path / "ragged.base"
    ragged.write_text("1 2 3\n4 5\n")
    with pytest.raises(tq.ParseError):
        tq.load_base_matrix(ragged)
    junk = tmp_path / "junk.base"
    junk.write_text("1 qq 3\n")
    with pytest.raises(tq.ParseError):
        tq.load_base_matrix(junk)
    empty = tmp_path / "empty.base"
    empty.write_text("\n")
    with pytest.raises(tq.ParseError):
        tq.load_base_matrix(empty)


def test_syndrome_wire_roundtrip(code):
    rng = np.random.default_rng(23)
    bits = rng.integers(0, 2, code.n, dtype=np.uint8)
    syndrome = tq.compute_syndrome(code, bits)
    blob = tq.ldpc.encode_syndrome(syndrome)
    assert len(blob) == 8 + code.m // 8
    assert np.array_equal(tq.ldpc.decode_syndrome(blob), syndrome)
    with pytest.raises(tq.ParseError):
        tq.ldpc.decode_syndrome(blob[:-1])
    with pytest.raises(tq.ParseError):
        tq.ldpc.decode_syndrome(b"\x01")


def test_custom_lifting_sizes():
    # All shifts in the default base stay below 64, so a lifting of 64 is
    # valid as-is and still satisfies the four-cycle-free shift condition.
    small = tq.build_code(tq.default_base_matrix(), 64)
    assert (small.n, small.m) == (24 * 64, 4 * 64)
    rng = np.random.default_rng(29)
    bits = rng.integers(0, 2, small.n, dtype=np.uint8)
    syndrome = tq.compute_syndrome(small, bits)
    noisy = bits.copy()
    noisy[3] ^= 1
    result = tq.decode(small, noisy, syndrome, 0.01)
    assert result.converged and np.array_equal(result.corrected, bits)

"""Sifting bookkeeping: bucket accounting, dedupe, messages, file format."""
import numpy as np
import pytest

import timebin_qkd as tq
from timebin_qkd.detector import BASIS_X, BASIS_Z, T0, T1, TND, DetectionEvents

PARAMS = tq.ProtocolParams(mu0=0.49, mu1=0.22, p_mu0=0.74, p_za=0.65,
                           p_zb=0.99)


def _emitted(basis, bit, intensity):
    n = len(basis)
    return tq.EmittedBlock(
        params=PARAMS, n_slots=n,
        basis=np.asarray(basis, bool),
        bit=np.asarray(bit, np.uint8),
        intensity=np.asarray(intensity, bool),
        early=np.zeros(n, np.uint8), late=np.zeros(n, np.uint8))


def _events(slot, basis, bin_, bit, xerr=None, time=None):
    n = len(slot)
    return DetectionEvents(
        slot_ps=400.0,
        slot=np.asarray(slot, np.int64),
        timestamp_ps=(np.asarray(time, np.float64) if time is not None
                      else np.full(n, 50.0)),
        pixel=np.zeros(n, np.int16),
        basis=np.asarray(basis, np.uint8),
        bin=np.asarray(bin_, np.uint8),
        bit=np.asarray(bit, np.uint8),
        xerr=(np.asarray(xerr, bool) if xerr is not None
              else np.zeros(n, bool)),
        dark=np.zeros(n, bool),
    )


def test_bucket_accounting_exact():
    #        slot:    0     1     2     3     4     5
    emitted = _emitted(basis=[1, 1, 1, 0, 1, 0],
                       bit=[0, 1, 0, 0, 0, 1],
                       intensity=[1, 0, 1, 1, 0, 0])
    events = _events(
        slot=[0, 1, 2, 3, 4, 5],
        basis=[BASIS_Z, BASIS_Z, BASIS_Z, BASIS_Z, BASIS_X, BASIS_X],
        bin_=[T0, T0, TND, T0, T0, T0],
        bit=[0, 0, 0, 0, 0, 0],
        xerr=[0, 0, 0, 0, 0, 1])
    out = tq.sift(emitted, events)
    # slot0: matched Z, correct (mu0); slot1: matched Z, errored (mu1);
    # slot2: ND discard; slot3: Alice X, Bob Z cross; slot4: Alice Z, Bob X
    # cross; slot5: X/X coincidence with a wrong-port flag (mu1).
    assert (out.n_z_mu0, out.n_z_mu1) == (1, 1)
    assert (out.m_z_mu0, out.m_z_mu1) == (0, 1)
    assert out.discarded_nd == 1
    assert out.cross_ax_bz == 1
    assert out.cross_az_bx == 1
    assert (out.n_x_mu0, out.n_x_mu1) == (0, 1)
    assert (out.m_x_mu0, out.m_x_mu1) == (0, 1)
    assert out.duplicates == 0
    assert tq.event_conservation(out, len(events))
    assert list(out.alice_bits) == [0, 1]
    assert list(out.bob_bits) == [0, 0]


def test_earliest_click_defines_the_bit():
    emitted = _emitted(basis=[1], bit=[1], intensity=[1])
    events = _events(slot=[0, 0], basis=[BASIS_Z, BASIS_Z],
                     bin_=[T0, T0], bit=[0, 1], time=[260.0, 55.0])
    out = tq.sift(emitted, events)
    assert out.n_z == 1
    assert out.duplicates == 1
    assert list(out.bob_bits) == [1]  # the 55 ps click came first
    assert tq.event_conservation(out, 2)


def test_shifted_bin_reads_out_as_error():
    emitted = _emitted(basis=[1], bit=[0], intensity=[1])
    # A T1-shifted click keeps the event but lands in the wrong bin.
    events = _events(slot=[0], basis=[BASIS_Z], bin_=[T1], bit=[1])
    out = tq.sift(emitted, events)
    assert out.n_z_mu0 == 1
    assert out.m_z_mu0 == 1


def test_sift_rejects_out_of_range_slots():
    emitted = _emitted(basis=[1], bit=[0], intensity=[1])
    events = _events(slot=[3], basis=[BASIS_Z], bin_=[T0], bit=[0])
    with pytest.raises(tq.SlotOutOfRange):
        tq.sift(emitted, events)


def test_qber_and_rate_helpers():
    block = tq.SiftedBlock(
        n_slots=1000,
        alice_bits=np.array([0, 1, 1, 0], np.uint8),
        bob_bits=np.array([0, 1, 0, 0], np.uint8),
        intensity=np.array([1, 1, 0, 0], bool))
    assert tq.compute_qber(block) == pytest.approx(0.25)
    assert tq.sifted_rate(block, 2.5e9) == pytest.approx(4 / 1000 * 2.5e9)
    empty = tq.SiftedBlock()
    with pytest.raises(tq.EmptyBlock):
        tq.compute_qber(empty)
    with pytest.raises(tq.EmptyBlock):
        tq.sifted_rate(empty, 2.5e9)


def _random_sifted(rng, n_bits):
    block = tq.SiftedBlock(
        n_slots=int(rng.integers(1, 1000)),
        alice_bits=rng.integers(0, 2, n_bits, dtype=np.uint8),
        bob_bits=rng.integers(0, 2, n_bits, dtype=np.uint8),
        intensity=rng.random(n_bits) < 0.7)
    for name in ("n_z_mu0", "n_z_mu1", "m_z_mu0", "m_z_mu1", "n_x_mu0",
                 "n_x_mu1", "m_x_mu0", "m_x_mu1", "cross_az_bx",
                 "cross_ax_bz", "discarded_nd", "duplicates"):
        setattr(block, name, int(rng.integers(0, 50)))
    return block


def test_merge_is_associative_with_identity():
    rng = np.random.default_rng(61)
    a, b, c = (_random_sifted(rng, int(rng.integers(0, 64)))
               for _ in range(3))
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    assert left.__dict__.keys() == right.__dict__.keys()
    for name, value in left.__dict__.items():
        other = getattr(right, name)
        if isinstance(value, np.ndarray):
            assert np.array_equal(value, other)
        else:
            assert value == other
    padded = tq.SiftedBlock().merge(a)
    assert np.array_equal(padded.alice_bits, a.alice_bits)
    assert padded.n_z_mu0 == a.n_z_mu0


def test_announcement_reply_roundtrip():
    emitted = _emitted(basis=[1, 0, 1, 0], bit=[0, 1, 1, 0],
                       intensity=[1, 1, 0, 0])
    events = _events(slot=[0, 2, 3],
                     basis=[BASIS_Z, BASIS_X, BASIS_Z],
                     bin_=[T0, T0, TND], bit=[0, 0, 0])
    ann = tq.announce_detections(events)
    # The ND event is not announced: it carries no usable readout.
    assert list(ann.slots) == [0, 2]
    back = tq.sifting.decode_announcement(tq.sifting.encode_announcement(ann))
    assert np.array_equal(back.slots, ann.slots)
    assert np.array_equal(back.basis, ann.basis)
    reply = tq.reply_bases(emitted, back)
    assert list(reply.basis_z) == [True, True]
    assert list(reply.intensity) == [True, False]
    reply_back = tq.sifting.decode_reply(tq.sifting.encode_reply(reply))
    assert np.array_equal(reply_back.basis_z, reply.basis_z)
    assert np.array_equal(reply_back.intensity, reply.intensity)


def test_message_decoding_rejects_corruption():
    ann = tq.sifting.BobAnnouncement(
        slots=np.array([1, 5], np.int64),
        basis=np.array([BASIS_Z, BASIS_X], np.uint8))
    blob = tq.sifting.encode_announcement(ann)
    with pytest.raises(tq.ParseError):
        tq.sifting.decode_announcement(blob[:-1])
    with pytest.raises(tq.ParseError):
        tq.sifting.decode_announcement(b"\x00" * 4)
    reply = tq.sifting.AliceReply(basis_z=np.array([True], bool),
                                  intensity=np.array([False], bool))
    rblob = tq.sifting.encode_reply(reply)
    with pytest.raises(tq.ParseError):
        tq.sifting.decode_reply(rblob + b"\x00")


def test_reply_rejects_out_of_range_announcement():
    emitted = _emitted(basis=[1], bit=[0], intensity=[1])
    ann = tq.sifting.BobAnnouncement(slots=np.array([7], np.int64),
                                     basis=np.array([BASIS_Z], np.uint8))
    with pytest.raises(tq.SlotOutOfRange):
        tq.reply_bases(emitted, ann)


def test_sifted_file_roundtrip(tmp_path):
    rng = np.random.default_rng(67)
    block = _random_sifted(rng, 1000)
    block.n_z_mu0 = 600           # keep the n_z tally consistent with the
    block.n_z_mu1 = 400           # stored bit count
    path = tmp_path / "block.qkds"
    tq.sifting.write_sifted(block, path)
    back = tq.sifting.read_sifted(path)
    assert np.array_equal(back.alice_bits, block.alice_bits)
    assert np.array_equal(back.bob_bits, block.bob_bits)
    assert np.array_equal(back.intensity, block.intensity)
    for name in ("n_slots", "n_z_mu0", "m_x_mu1", "duplicates"):
        assert getattr(back, name) == getattr(block, name)


def test_sifted_file_rejects_corruption(tmp_path):
    block = tq.SiftedBlock(
        n_slots=10, alice_bits=np.zeros(4, np.uint8),
        bob_bits=np.zeros(4, np.uint8), intensity=np.zeros(4, bool),
        n_z_mu0=4)
    path = tmp_path / "block.qkds"
    tq.sifting.write_sifted(block, path)
    blob = path.read_bytes()
    bad = tmp_path / "bad.qkds"
    bad.write_bytes(b"ZZZZ" + blob[4:])
    with pytest.raises(tq.ParseError):
        tq.sifting.read_sifted(bad)
    # Bit count disagreeing with the n_z tally is rejected.
    block.n_z_mu0 = 5
    tq.sifting.write_sifted(block, path)
    with pytest.raises(tq.ParseError):
        tq.sifting.read_sifted(path)


def test_end_to_end_conservation(model):
    link = tq.LinkParams(attenuation_db=1.58, receiver_loss_db=1.37,
                         visibility=0.996, dark_rate_hz=100.0,
                         z_error_prob=0.004)
    emitted = tq.simulate_emission(PARAMS, 200_000, seed=71)
    arrivals = tq.apply_channel(emitted, link, seed=72)
    z_arr, x_arr = tq.split_bob_basis(arrivals, seed=73)
    ev_z = tq.or_gate_combine(
        tq.simulate_z_detection(z_arr, model, link, seed=74), model)
    ev_x = tq.simulate_x_detection(x_arr, tq.XDetectorModel(), link, seed=75)
    events = tq.detector.concat_events([ev_z, ev_x])
    out = tq.sift(emitted, events)
    assert tq.event_conservation(out, len(events))
    assert out.n_z == out.alice_bits.size
    assert out.n_z_mu0 > 0 and out.n_x > 0

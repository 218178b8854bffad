"""End-to-end distillation pipeline: simulate, sift, correct, amplify, analyze.

The slot stream is cut into fixed-size blocks.  Every block derives its
randomness from SeedSequence((seed, block_index, stage)), so the result of a
block is a pure function of (config, seed, block_index) and the run can be
spread over worker processes freely: blocks are submitted with a bounded
in-flight window (back-pressure) and merged strictly in index order, making
the output byte-identical for any worker count.

Error correction treats Bob's string as the reference: a rate-5/6 syndrome
and a 64-bit verification hash travel per 6144-bit frame, and Alice's frames
are corrected towards them.  Frames whose hash check fails are discarded and
counted.  Privacy amplification compresses the verified concatenation with a
seeded Toeplitz matrix to the finite-key length of the measured sample, while
the report also projects the tallies onto a full accumulation block to state
the secret-key rate the operating point sustains.
"""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, replace
from functools import reduce

import numpy as np

from .config import DistillationReport, RunConfig, append_csv_row, write_report
from .detector import (CalibrationTargets, MultipixelModel, XDetectorModel,
                       calibrate_detector, concat_events, or_gate_combine,
                       read_model, simulate_x_detection, simulate_z_detection,
                       split_bob_basis, write_model)
from .errors import InsufficientStatistics, NoPositiveRate, QkdError, StageError
from .finitekey import (DEFAULT_EC_OVERHEAD, AnalyticEngine, BasisCounts,
                        DecoyCounts, key_length, scale_counts)
from .ldpc import (HASH_BITS, QcLdpcCode, build_code, compute_syndrome, decode,
                   default_base_matrix, load_base_matrix, poly_hash)
from .privacy import derive_seed, toeplitz_hash, write_key
from .protocol import validate_link, validate_params
from .sifting import SiftedBlock, sift
from .source import apply_channel, simulate_emission

_STAGE_EMIT, _STAGE_CHANNEL, _STAGE_SPLIT = 0, 1, 2
_STAGE_DET_Z, _STAGE_DET_X = 3, 4
_STAGE_EC_HASH, _STAGE_PA_SEED = 5, 6


def _stage_seed(seed: int, block: int, stage: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(seed), int(block), int(stage)))


def simulate_block(config: RunConfig, model: MultipixelModel, index: int,
                   n_slots: int) -> SiftedBlock:
    """Emit, transmit, detect and sift one block; deterministic in its index."""
    params, link, seed = config.params, config.link, config.seed
    emitted = simulate_emission(params, n_slots,
                                _stage_seed(seed, index, _STAGE_EMIT))
    arrivals = apply_channel(emitted, link,
                             _stage_seed(seed, index, _STAGE_CHANNEL))
    z_arr, x_arr = split_bob_basis(arrivals,
                                   _stage_seed(seed, index, _STAGE_SPLIT))
    events_z = or_gate_combine(
        simulate_z_detection(z_arr, model, link,
                             _stage_seed(seed, index, _STAGE_DET_Z)), model)
    events_x = simulate_x_detection(x_arr, XDetectorModel(), link,
                                    _stage_seed(seed, index, _STAGE_DET_X))
    return sift(emitted, concat_events([events_z, events_x]))


def _block_plan(n_slots: int, block_slots: int) -> list[int]:
    full, rest = divmod(n_slots, block_slots)
    return [block_slots] * full + ([rest] if rest else [])


@dataclass
class _SimulateOutcome:
    sifted: SiftedBlock
    max_buffered: int


def _run_simulation(config: RunConfig, model: MultipixelModel) -> _SimulateOutcome:
    plan = _block_plan(config.n_slots, config.block_slots)
    if not plan:
        return _SimulateOutcome(SiftedBlock(), 0)
    if config.workers <= 1:
        merged = reduce(SiftedBlock.merge,
                        (simulate_block(config, model, i, n)
                         for i, n in enumerate(plan)))
        return _SimulateOutcome(merged, 1)

    window = config.workers + 2
    merged: SiftedBlock | None = None
    ready: dict[int, SiftedBlock] = {}
    pending = {}
    next_merge = 0
    next_submit = 0
    max_buffered = 0
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        while next_merge < len(plan):
            while next_submit < len(plan) and len(pending) + len(ready) < window:
                fut = pool.submit(simulate_block, config, model,
                                  next_submit, plan[next_submit])
                pending[fut] = next_submit
                next_submit += 1
            if pending:
                done, _ = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    ready[pending.pop(fut)] = fut.result()
            max_buffered = max(max_buffered, len(ready))
            while next_merge in ready:
                block = ready.pop(next_merge)
                merged = block if merged is None else merged.merge(block)
                next_merge += 1
    return _SimulateOutcome(merged if merged is not None else SiftedBlock(),
                            max_buffered)


@dataclass
class CorrectionOutcome:
    """Verified key material and leakage bookkeeping of the EC stage."""

    key_bits: np.ndarray
    frames: int
    frames_failed: int
    leakage_bits: float


def correct_block(sifted: SiftedBlock, code: QcLdpcCode, seed: int) -> CorrectionOutcome:
    """Frame-wise reconciliation of Alice's bits towards Bob's reference.

    Leakage counts the syndrome plus verification hash of every frame that
    contributes key material; failed frames are dropped along with their
    leakage since their bits never enter the key.  Bits beyond the last full
    frame are discarded.
    """
    n_frames = sifted.n_z // code.n
    if n_frames == 0:
        return CorrectionOutcome(np.empty(0, np.uint8), 0, 0, 0.0)
    qber = max(sifted.m_z_mu0 + sifted.m_z_mu1, 1) / sifted.n_z
    kept: list[np.ndarray] = []
    failed = 0
    for f in range(n_frames):
        lo, hi = f * code.n, (f + 1) * code.n
        alice = sifted.alice_bits[lo:hi]
        bob = sifted.bob_bits[lo:hi]
        syndrome = compute_syndrome(code, bob)
        result = decode(code, alice, syndrome, qber)
        hash_seed = _stage_seed(seed, f, _STAGE_EC_HASH)
        reference = poly_hash(bob, hash_seed)
        if result.converged and poly_hash(result.corrected, hash_seed) == reference:
            kept.append(result.corrected)
        else:
            failed += 1
    key = (np.concatenate(kept) if kept else np.empty(0, np.uint8))
    leakage = float((n_frames - failed) * (code.m + HASH_BITS))
    return CorrectionOutcome(key_bits=key, frames=n_frames,
                             frames_failed=failed, leakage_bits=leakage)


def _decoy_counts(sifted: SiftedBlock) -> DecoyCounts:
    return DecoyCounts(
        z=BasisCounts(sifted.n_z_mu0, sifted.n_z_mu1,
                      sifted.m_z_mu0, sifted.m_z_mu1),
        x=BasisCounts(sifted.n_x_mu0, sifted.n_x_mu1,
                      sifted.m_x_mu0, sifted.m_x_mu1))


def _load_code(config: RunConfig) -> QcLdpcCode:
    base = (load_base_matrix(config.base_matrix) if config.base_matrix
            else default_base_matrix())
    return build_code(base, config.lifting)


def _load_model(config: RunConfig) -> MultipixelModel:
    return (read_model(config.detector_model) if config.detector_model
            else MultipixelModel())


def run_pipeline(config: RunConfig, report_path=None, key_path=None,
                 csv_path=None) -> DistillationReport:
    """Execute the staged pipeline and (optionally) write report and key.

    On a stage failure a partial report with status "failed:<stage>" is still
    written before StageError propagates.
    """
    params = validate_params(config.params)
    link = validate_link(config.link)
    stage = "setup"
    report = _blank_report(config)
    try:
        model = _load_model(config)
        code = _load_code(config)

        stage = "simulate"
        sim = _run_simulation(config, model)
        sifted = sim.sifted

        stage = "correct"
        ec = correct_block(sifted, code, config.seed)

        stage = "amplify"
        counts = _decoy_counts(sifted)
        n_kept = int(ec.key_bits.size)
        measured_len = 0
        if n_kept > 0:
            try:
                measured_len = key_length(counts, params, ec.leakage_bits).length
            except InsufficientStatistics:
                measured_len = 0
        final_len = min(measured_len, n_kept)
        pa_seed = derive_seed(_stage_seed(config.seed, 0, _STAGE_PA_SEED),
                              max(n_kept + final_len - 1, 0))
        final_key = toeplitz_hash(ec.key_bits, pa_seed, final_len)
        digest = hashlib.sha256(np.packbits(final_key).tobytes()).hexdigest()

        stage = "analyze"
        n_z, n_x = sifted.n_z, sifted.n_x
        m_z = sifted.m_z_mu0 + sifted.m_z_mu1
        m_x = sifted.m_x_mu0 + sifted.m_x_mu1
        sift_rate = (n_z / config.n_slots * params.clock_hz
                     if config.n_slots else 0.0)
        if ec.frames - ec.frames_failed > 0:
            leak_per_bit = ec.leakage_bits / ((ec.frames - ec.frames_failed)
                                              * code.n)
        else:
            leak_per_bit = DEFAULT_EC_OVERHEAD
        scaled_len, phi = 0, 0.0
        if n_z > 0:
            factor = params.block_bits / n_z
            try:
                scaled = key_length(scale_counts(counts, factor), params,
                                    params.block_bits * leak_per_bit)
                scaled_len, phi = scaled.length, scaled.phase_error
            except InsufficientStatistics:
                scaled_len, phi = 0, 0.0
        skr = scaled_len * sift_rate / params.block_bits
        report = replace(
            report, sift_rate_bps=sift_rate,
            qber_z=(m_z / n_z if n_z else 0.0), phi_z=phi,
            key_length=scaled_len, measured_key_length=final_len,
            skr_bps=skr, leakage_bits=params.block_bits * leak_per_bit,
            n_z=n_z, m_z=m_z, n_x=n_x, m_x=m_x,
            frames=ec.frames, frames_failed=ec.frames_failed,
            discarded_nd=sifted.discarded_nd, duplicates=sifted.duplicates,
            max_buffered=sim.max_buffered, key_digest=digest, status="ok")
    except QkdError as exc:
        report = replace(report, status=f"failed:{stage}")
        if report_path is not None:
            write_report(report, report_path, csv_path)
        raise StageError(stage, str(exc)) from exc

    if key_path is not None:
        write_key(key_path, final_key)
    if report_path is not None:
        write_report(report, report_path, csv_path)
    return report


def _blank_report(config: RunConfig) -> DistillationReport:
    p = config.params
    return DistillationReport(
        fiber_length_km=config.fiber_length_km,
        attenuation_db=config.link.attenuation_db,
        mu0=p.mu0, mu1=p.mu1, p_mu0=p.p_mu0, p_za=p.p_za, p_zb=p.p_zb,
        sift_rate_bps=0.0, qber_z=0.0, phi_z=0.0, key_length=0,
        skr_bps=0.0, leakage_bits=0.0, block_bits=p.block_bits,
        seed=config.seed, n_slots=config.n_slots, workers=config.workers,
        status="ok")


def analytic_report(config: RunConfig, n_detectors: int = 1,
                    ideal_ec: bool = False) -> DistillationReport:
    """Closed-form counterpart of run_pipeline for one operating point."""
    model = _load_model(config)
    engine = AnalyticEngine(model)
    bd = engine.evaluate(config.params, config.link,
                         n_detectors=n_detectors, ideal_ec=ideal_ec)
    return replace(
        _blank_report(config), sift_rate_bps=bd.sift_rate_bps,
        qber_z=bd.qber_z, phi_z=bd.phase_error, key_length=bd.key_length,
        skr_bps=bd.skr_bps, leakage_bits=bd.lambda_ec, status="analytic")


def sweep_attenuations(config: RunConfig, attenuations_db, csv_path=None,
                       n_detectors: int = 1,
                       ideal_ec: bool = False) -> list[DistillationReport]:
    """Analytic rate-vs-attenuation sweep, one CSV row per point."""
    model = _load_model(config)
    engine = AnalyticEngine(model)
    reports = []
    for att in attenuations_db:
        link = replace(config.link, attenuation_db=float(att))
        row = replace(_blank_report(config), attenuation_db=float(att),
                      fiber_length_km=0.0, status="analytic")
        try:
            bd = engine.evaluate(config.params, link,
                                 n_detectors=n_detectors, ideal_ec=ideal_ec)
            row = replace(row, sift_rate_bps=bd.sift_rate_bps,
                          qber_z=bd.qber_z, phi_z=bd.phase_error,
                          key_length=bd.key_length, skr_bps=bd.skr_bps,
                          leakage_bits=bd.lambda_ec)
        except (NoPositiveRate, InsufficientStatistics):
            row = replace(row, status="no-rate")
        reports.append(row)
        if csv_path is not None:
            append_csv_row(row, csv_path)
    return reports


def run_calibration(model_path, targets: CalibrationTargets | None = None,
                    seed: int = 20240317) -> MultipixelModel:
    """Fit the detector model to its rate anchors and store it."""
    model = calibrate_detector(targets or CalibrationTargets(), seed=seed)
    write_model(model, model_path)
    return model


def benchmark(config: RunConfig, frames: int = 64,
              pa_bits: int = 1 << 22) -> dict[str, float]:
    """Informational throughput figures for the EC decoder and PA hash."""
    rng = np.random.default_rng(7)
    code = _load_code(config)
    reference = rng.integers(0, 2, frames * code.n, dtype=np.uint8)
    noise = (rng.random(frames * code.n) < 0.005).astype(np.uint8)
    noisy = reference ^ noise
    decode(code, noisy[:code.n],
           compute_syndrome(code, reference[:code.n]), 0.005)  # JIT warm-up
    t0 = time.perf_counter()
    for f in range(frames):
        lo, hi = f * code.n, (f + 1) * code.n
        decode(code, noisy[lo:hi], compute_syndrome(code, reference[lo:hi]),
               0.005)
    ec_seconds = time.perf_counter() - t0
    bits = rng.integers(0, 2, pa_bits, dtype=np.uint8)
    out_len = int(pa_bits * 0.4)
    seed_bits = rng.integers(0, 2, pa_bits + out_len - 1, dtype=np.uint8)
    t1 = time.perf_counter()
    toeplitz_hash(bits, seed_bits, out_len)
    pa_seconds = time.perf_counter() - t1
    return {
        "ec_bits_per_s": frames * code.n / ec_seconds,
        "pa_bits_per_s": pa_bits / pa_seconds,
        "ec_frames": float(frames),
        "pa_input_bits": float(pa_bits),
    }

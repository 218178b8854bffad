"""Desk-scale simulator and key-distillation pipeline for a 2.5 GHz
time-bin QKD system with one decoy state.

The package models the full chain — pulsed decoy-state source, lossy fiber,
a rate-dependent 14-pixel superconducting detector with paired OR readout,
sifting, LDPC reconciliation, Toeplitz privacy amplification and one-decoy
finite-key analysis — and exposes both a Monte Carlo pipeline and a
closed-form rate model over the same detector description.
"""
from .config import (DistillationReport, RunConfig, load_config, read_report,
                     write_report)
from .detector import (CalibrationTargets, DetectionEvents, MultipixelModel,
                       XDetectorModel, calibrate_detector, classify_bin,
                       jitter_fwhm_at_rate, or_gate_combine, read_model,
                       simulate_x_detection, simulate_z_detection,
                       split_bob_basis, write_model)
from .errors import (BadLifting, BadRate, CalibrationDiverged, DomainError,
                     EmptyBlock, FixedPointDiverged, InsufficientStatistics,
                     InvalidIntensities, InvalidProbability, LengthMismatch,
                     MissingKey, NoPositiveRate, NotConverged, ParseError,
                     QkdError, SeedLengthMismatch, SlotOutOfRange, StageError)
from .finitekey import (AnalyticEngine, BasisCounts, DecoyCounts,
                        KeyLengthResult, OptimizeResult, RateBreakdown,
                        analytic_skr, error_upper_single, fit_receiver_loss,
                        fluctuation_delta, key_length, optimize_params,
                        phase_error_upper, sampling_penalty, scale_counts,
                        single_photon_lower, vacuum_bounds)
from .ldpc import (CorrectionResult, QcLdpcCode, build_code, compute_syndrome,
                   correct_frame, decode, default_base_matrix, leaked_bits,
                   load_base_matrix, poly_hash, save_base_matrix, verify_block)
from .pipeline import (CorrectionOutcome, analytic_report, benchmark,
                       correct_block, run_calibration, run_pipeline,
                       simulate_block, sweep_attenuations)
from .privacy import (derive_seed, read_key, seed_bits_needed, toeplitz_hash,
                      toeplitz_hash_naive, write_key)
from .protocol import (BIN_PITCH_PS, BIN_WIDTH_PS, EARLY_CENTER_PS,
                       LATE_CENTER_PS, LinkParams, ProtocolParams,
                       binary_entropy, channel_transmittance,
                       photon_number_prob, validate_link, validate_params)
from .sifting import (SiftedBlock, announce_detections, compute_qber,
                      event_conservation, reply_bases, sift, sifted_rate)
from .source import (ArrivalBlock, EmittedBlock, apply_channel, read_emitted,
                     simulate_emission, write_emitted)

__version__ = "0.1.0"

"""Exception taxonomy shared by all pipeline stages.

Every error raised on purpose by this package derives from QkdError so that
callers (CLI, pipeline driver) can separate configuration mistakes from
runtime stage failures without string matching.
"""
from __future__ import annotations


class QkdError(Exception):
    """Base class for all errors raised by this package."""


# --- parameter validation ---------------------------------------------------

class InvalidIntensities(QkdError, ValueError):
    """Signal/decoy intensities violate mu0 > mu1 > 0."""


class InvalidProbability(QkdError, ValueError):
    """A probability parameter is outside its admissible open interval."""


class DomainError(QkdError, ValueError):
    """Argument outside the mathematical domain of a helper function."""


# --- simulation stages ------------------------------------------------------

class SlotOutOfRange(QkdError, ValueError):
    """A detection event references a slot index outside the emitted block."""


class EmptyBlock(QkdError, ValueError):
    """An operation that needs data was handed an empty block."""


class CalibrationDiverged(QkdError, RuntimeError):
    """Detector calibration root search failed to bracket its target."""


# --- error correction and hashing -------------------------------------------

class BadRate(QkdError, ValueError):
    """Base matrix dimensions do not give the required syndrome rate."""


class BadLifting(QkdError, ValueError):
    """Circulant lifting size is not a positive integer."""


class LengthMismatch(QkdError, ValueError):
    """Bit-string length does not match the expected block length."""


class NotConverged(QkdError, RuntimeError):
    """Decoder failed to reproduce the target syndrome within max iterations."""


class SeedLengthMismatch(QkdError, ValueError):
    """Toeplitz seed length differs from input_len + output_len - 1."""


# --- finite-key analysis -----------------------------------------------------

class InsufficientStatistics(QkdError, RuntimeError):
    """Fluctuation interval wider than the observed count; bound is trivial."""


class FixedPointDiverged(QkdError, RuntimeError):
    """Analytic detector-rate fixed point did not settle within max iterations."""


class NoPositiveRate(QkdError, RuntimeError):
    """Parameter optimisation found no operating point with a positive rate."""


# --- configuration and pipeline ---------------------------------------------

class ParseError(QkdError, ValueError):
    """Malformed line in a key = value configuration or model file."""


class MissingKey(QkdError, ValueError):
    """Required configuration keys absent; message lists every missing key."""


class StageError(QkdError, RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage

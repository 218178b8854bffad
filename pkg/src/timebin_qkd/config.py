"""Run configuration files and distillation reports.

Both formats are flat `key = value` text: configs are written by hand, reports
by the pipeline (atomically, via a temporary file and rename).  Sweep runs
additionally append one CSV row per operating point, whose leading columns
follow the conventional summary-table order (fiber length, attenuation,
source and basis parameters, sifted rate, phase error, QBER, SKR) ahead of
package-specific extensions.
"""
from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import MISSING, dataclass, fields

from .errors import MissingKey, ParseError
from .protocol import (LinkParams, ProtocolParams, validate_link,
                       validate_params)


def _parse_kv(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blanks are skipped."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not key or not val:
                raise ParseError(f"{path}:{lineno}: empty key or value")
            if key in values:
                raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = val
    return values


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs besides the random seed's value."""

    params: ProtocolParams
    link: LinkParams
    fiber_length_km: float = 0.0
    seed: int = 1
    n_slots: int = 10_000_000
    block_slots: int = 1 << 22
    workers: int = 1
    detector_model: str | None = None
    base_matrix: str | None = None
    lifting: int = 256


_PROTOCOL_KEYS = {
    "mu0": float, "mu1": float, "p_mu0": float, "p_za": float, "p_zb": float,
    "clock_hz": float, "block_bits": int, "eps_sec": float, "eps_cor": float,
}
_LINK_KEYS = {
    "attenuation_db": float, "receiver_loss_db": float, "visibility": float,
    "dark_rate_hz": float, "z_error_prob": float,
}
_RUN_KEYS = {
    "fiber_length_km": float, "seed": int, "n_slots": int,
    "block_slots": int, "workers": int, "lifting": int,
    "detector_model": str, "base_matrix": str,
}
_REQUIRED = ("mu0", "mu1", "p_mu0", "p_za", "p_zb", "attenuation_db")


def load_config(path) -> RunConfig:
    """Read and validate a run configuration.

    Unknown keys are rejected (ParseError) and the required source/link keys
    must all be present (MissingKey lists every absent one).  Relative file
    paths inside the config resolve against the config file's directory.
    """
    values = _parse_kv(path)
    known = {**_PROTOCOL_KEYS, **_LINK_KEYS, **_RUN_KEYS}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ParseError(f"{path}: unknown keys {', '.join(unknown)}")
    missing = sorted(set(_REQUIRED) - set(values))
    if missing:
        raise MissingKey(f"{path}: missing keys {', '.join(missing)}")

    def convert(key, conv):
        try:
            return conv(values[key])
        except ValueError as exc:
            raise ParseError(f"{path}: key {key!r}: {exc}") from exc

    proto_kwargs = {k: convert(k, c) for k, c in _PROTOCOL_KEYS.items()
                    if k in values}
    link_kwargs = {k: convert(k, c) for k, c in _LINK_KEYS.items()
                   if k in values}
    run_kwargs = {k: convert(k, c) for k, c in _RUN_KEYS.items()
                  if k in values}
    base_dir = os.path.dirname(os.path.abspath(path))
    for key in ("detector_model", "base_matrix"):
        if key in run_kwargs and not os.path.isabs(run_kwargs[key]):
            run_kwargs[key] = os.path.join(base_dir, run_kwargs[key])
    params = validate_params(ProtocolParams(**proto_kwargs))
    link = validate_link(LinkParams(**link_kwargs))
    return RunConfig(params=params, link=link, **run_kwargs)


@dataclass(frozen=True)
class DistillationReport:
    """Summary record of one distillation run (or one sweep point)."""

    fiber_length_km: float
    attenuation_db: float
    mu0: float
    mu1: float
    p_mu0: float
    p_za: float
    p_zb: float
    sift_rate_bps: float
    qber_z: float
    phi_z: float
    key_length: int
    skr_bps: float
    leakage_bits: float
    block_bits: int
    seed: int
    n_slots: int
    workers: int = 1
    measured_key_length: int = 0
    n_z: int = 0
    m_z: int = 0
    n_x: int = 0
    m_x: int = 0
    frames: int = 0
    frames_failed: int = 0
    discarded_nd: int = 0
    duplicates: int = 0
    max_buffered: int = 0
    key_digest: str = ""
    status: str = "ok"


#: Execution-environment fields that must not leak into the report file: the
#: same (config, seed) run has to produce byte-identical artifacts no matter
#: how many workers carried it out.
_FILE_EXCLUDED = ("workers", "max_buffered")


def write_report(report: DistillationReport, path, csv_path=None) -> None:
    """Write `key = value` lines atomically; optionally append a CSV row."""
    lines = []
    for f in fields(DistillationReport):
        if f.name in _FILE_EXCLUDED:
            continue
        value = getattr(report, f.name)
        lines.append(f"{f.name} = {value!r}" if isinstance(value, str)
                     else f"{f.name} = {value}")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    if csv_path is not None:
        append_csv_row(report, csv_path)


_CSV_COLUMNS = (
    "fiber_length_km", "attenuation_db", "mu0", "mu1", "p_mu0", "p_za",
    "p_zb", "r_sift_mbps", "phi_z_pct", "q_z_pct", "skr_mbps",
    "key_length", "leakage_bits", "n_z", "n_x", "seed", "n_slots", "status",
)


def append_csv_row(report: DistillationReport, csv_path) -> None:
    """Append one summary row; writes the header when creating the file."""
    new_file = not os.path.exists(csv_path)
    with open(csv_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(_CSV_COLUMNS)
        writer.writerow([
            report.fiber_length_km, report.attenuation_db, report.mu0,
            report.mu1, report.p_mu0, report.p_za, report.p_zb,
            report.sift_rate_bps / 1e6, report.phi_z * 100.0,
            report.qber_z * 100.0, report.skr_bps / 1e6, report.key_length,
            report.leakage_bits, report.n_z, report.n_x, report.seed,
            report.n_slots, report.status,
        ])


def read_report(path) -> DistillationReport:
    """Parse a report file back into a DistillationReport.

    Fields excluded from the file (and any field with a dataclass default)
    fall back to that default; everything else must be present.
    """
    values = _parse_kv(path)
    kwargs = {}
    for f in fields(DistillationReport):
        if f.name not in values:
            if f.default is not MISSING:
                continue
            raise MissingKey(f"{path}: missing report field {f.name!r}")
        raw = values[f.name]
        try:
            if f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw.strip("'\"")
        except ValueError as exc:
            raise ParseError(f"{path}: field {f.name!r}: {exc}") from exc
    extra = sorted(set(values) - {f.name for f in fields(DistillationReport)})
    if extra:
        raise ParseError(f"{path}: unknown report fields {', '.join(extra)}")
    return DistillationReport(**kwargs)

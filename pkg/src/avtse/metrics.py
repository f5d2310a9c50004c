"""Objective quality metrics: SI-SNR and energy-ratio utilities.

SI-SNR follows the projection convention: both signals are zero-meaned,
the estimate is decomposed into its component along the reference and an
error term, and the ratio is capped at +-60 dB so that oracle outputs
stay finite in aggregates.  Computation is float64 throughout, which is
what makes scale invariance hold to ~1e-12 dB.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .frontend import AudioBuffer

SI_SNR_CAP_DB = 60.0


def si_snr(est: AudioBuffer | np.ndarray, ref: AudioBuffer | np.ndarray) -> float:
    """Scale-invariant signal-to-noise ratio of ``est`` against ``ref``, in dB."""
    e = np.asarray(est.samples if isinstance(est, AudioBuffer) else est,
                   dtype=np.float64)
    r = np.asarray(ref.samples if isinstance(ref, AudioBuffer) else ref,
                   dtype=np.float64)
    if e.shape != r.shape:
        raise DataError(f"length mismatch: estimate {e.shape}, reference {r.shape}")
    r = r - r.mean()
    ref_energy = np.dot(r, r)
    if ref_energy == 0.0:
        raise DataError("reference signal is identically zero")
    e = e - e.mean()
    if not np.any(e):
        return -SI_SNR_CAP_DB
    s_target = (np.dot(e, r) / ref_energy) * r
    noise = e - s_target
    num = np.dot(s_target, s_target)
    den = np.dot(noise, noise)
    if den == 0.0 or num / den > 10.0 ** (SI_SNR_CAP_DB / 10.0):
        return SI_SNR_CAP_DB
    if num == 0.0 or den / num > 10.0 ** (SI_SNR_CAP_DB / 10.0):
        return -SI_SNR_CAP_DB
    return float(10.0 * np.log10(num / den))


def energy_ratio_db(a: AudioBuffer | np.ndarray, b: AudioBuffer | np.ndarray,
                    region: tuple[int, int] | None = None) -> float:
    """10*log10(sum a^2 / sum b^2), optionally over a [start, end) span."""
    av = np.asarray(a.samples if isinstance(a, AudioBuffer) else a, dtype=np.float64)
    bv = np.asarray(b.samples if isinstance(b, AudioBuffer) else b, dtype=np.float64)
    if region is not None:
        start, end = region
        if not (0 <= start <= end <= len(av) and end <= len(bv)):
            raise DataError(f"region {region} outside signal bounds "
                            f"({len(av)}, {len(bv)})")
        av, bv = av[start:end], bv[start:end]
    den = np.sum(bv ** 2)
    if den == 0.0:
        raise DataError("denominator signal has zero energy")
    return float(10.0 * np.log10(np.sum(av ** 2) / den))


@dataclass
class FileMetrics:
    name: str
    si_snr_db: float
    unprocessed_db: float

    @property
    def improvement_db(self) -> float:
        return self.si_snr_db - self.unprocessed_db


@dataclass
class MetricReport:
    files: list[FileMetrics] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def mean_si_snr_db(self) -> float:
        return float(np.mean([f.si_snr_db for f in self.files]))

    @property
    def mean_improvement_db(self) -> float:
        return float(np.mean([f.improvement_db for f in self.files]))

    def lines(self) -> list[str]:
        rows = [f"{'scene':<24} {'SI-SNR':>10} {'unproc':>10} {'improve':>10}"]
        for f in self.files:
            rows.append(f"{f.name:<24} {f.si_snr_db:>10.2f} "
                        f"{f.unprocessed_db:>10.2f} {f.improvement_db:>10.2f}")
        if self.files:
            rows.append(f"{'mean':<24} {self.mean_si_snr_db:>10.2f} "
                        f"{'':>10} {self.mean_improvement_db:>10.2f}")
        rows.extend(f"error: {e}" for e in self.errors)
        return rows

    def keyvals(self) -> list[str]:
        out = []
        for f in self.files:
            out.append(f"{f.name}.si_snr_db={f.si_snr_db:.6f}")
            out.append(f"{f.name}.improvement_db={f.improvement_db:.6f}")
        if self.files:
            out.append(f"mean.si_snr_db={self.mean_si_snr_db:.6f}")
            out.append(f"mean.improvement_db={self.mean_improvement_db:.6f}")
        out.append(f"files={len(self.files)}")
        out.append(f"errors={len(self.errors)}")
        return out


def evaluate_batch(manifest_path, output_dir) -> MetricReport:
    """Score enhanced outputs against a scene manifest's reverberant targets.

    For every manifest record, the enhanced file is expected in
    ``output_dir`` under the mixture's file name.  Missing or unreadable
    files are itemized and the remaining files still produce a report.
    Records are processed in manifest order, so aggregates are deterministic.
    """
    from .audio_io import read_wav
    report = MetricReport()
    out_dir = Path(output_dir)
    base = Path(manifest_path).parent
    lines = Path(manifest_path).read_text().strip().splitlines()
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        name = rec["id"]
        try:
            mix = read_wav(base / rec["paths"]["mixture"])
            ref = read_wav(base / rec["paths"]["target"])
            est_path = out_dir / Path(rec["paths"]["mixture"]).name
            if not est_path.exists():
                raise DataError(f"{est_path}: enhanced output missing")
            est = read_wav(est_path)
            n = min(len(est), len(ref), len(mix))
            report.files.append(FileMetrics(
                name=name,
                si_snr_db=si_snr(est.samples[:n], ref.samples[:n]),
                unprocessed_db=si_snr(mix.samples[:n], ref.samples[:n])))
        except (DataError, OSError, KeyError) as exc:
            report.errors.append(f"{name}: {exc}")
    return report

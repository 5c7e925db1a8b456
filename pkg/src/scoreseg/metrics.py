"""Signal-to-distortion ratios and corpus aggregation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .dsp import Waveform

log = logging.getLogger(__name__)

CAP_DB = 60.0


def _flat(x) -> np.ndarray:
    return (x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)).ravel()


class SilentReference(ValueError):
    """The reference carries no energy, so the ratio is undefined."""


def _ratio_db(num: float, den: float, cap: float) -> float:
    if num <= 0:
        return -cap
    if den <= 0:
        return cap
    return float(np.clip(10.0 * np.log10(num / den), -cap, cap))


def _pair(reference, estimate):
    s, e = _flat(reference), _flat(estimate)
    if s.shape != e.shape:
        raise ValueError(f"length mismatch: reference {s.shape}, estimate {e.shape}")
    if not np.dot(s, s) > 0:
        raise SilentReference("reference signal has zero energy")
    return s, e


def sdr(reference, estimate, cap_db: float = CAP_DB) -> float:
    """``10 log10(|s|^2 / |s - s_hat|^2)``, clipped to ``[-cap_db, cap_db]``."""
    s, e = _pair(reference, estimate)
    return _ratio_db(float(np.dot(s, s)), float(np.dot(s - e, s - e)), cap_db)


def si_sdr(reference, estimate, cap_db: float = CAP_DB) -> float:
    """Scale-invariant SDR: the estimate is projected onto the reference first."""
    s, e = _pair(reference, estimate)
    alpha = np.dot(e, s) / np.dot(s, s)
    target = alpha * s
    noise = e - target
    return _ratio_db(float(np.dot(target, target)), float(np.dot(noise, noise)), cap_db)


@dataclass
class SdrReport:
    """Per-clip, per-source SDR values; silent references are recorded but not averaged."""

    values: dict = field(default_factory=dict)  # (clip, source) -> dB
    silent: list = field(default_factory=list)  # (clip, source)
    cap_db: float = CAP_DB

    def add(self, clip: str, source: str, reference, estimate, metric=sdr):
        try:
            self.values[(clip, source)] = metric(reference, estimate, self.cap_db)
        except SilentReference:
            self.silent.append((clip, source))
            log.info("clip %s source %s: silent reference excluded from means", clip, source)

    @property
    def sources(self) -> list:
        return sorted({s for _, s in self.values} | {s for _, s in self.silent})

    def mean(self, source=None) -> float:
        vals = [v for (c, s), v in self.values.items() if source is None or s == source]
        return float(np.mean(vals)) if vals else float("nan")

    def means(self) -> dict:
        return {s: self.mean(s) for s in self.sources}

    def to_dict(self) -> dict:
        return {
            "cap_db": self.cap_db,
            "mean": self.mean(),
            "per_source_mean": self.means(),
            "values": [{"clip": c, "source": s, "sdr_db": v} for (c, s), v in sorted(self.values.items())],
            "silent_references": [{"clip": c, "source": s} for c, s in sorted(self.silent)],
        }


def scenario_table_csv(rows: list, sources: list) -> str:
    """Rows of ``(scenario, model, {source: dB})``, shaped like a results table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "model"] + list(sources) + ["mean"])
    for scenario, model, means in rows:
        vals = [means.get(s, float("nan")) for s in sources]
        w.writerow([scenario, model] + [f"{v:.2f}" for v in vals] + [f"{np.nanmean(vals):.2f}"])
    return buf.getvalue()

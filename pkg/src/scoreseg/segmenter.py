"""Segment inventories and segmentation scoring."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .score import UNITS, UnitTimeline

DEFAULT_MIN_LEN_FRAMES = 300


@dataclass(frozen=True)
class Segment:
    unit: str
    start_frame: int
    end_frame: int
    start_sample: int = 0
    end_sample: int = 0
    sample_rate: int = 0
    clip_id: str = ""

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame

    @property
    def duration_s(self) -> float:
        if self.sample_rate:
            return (self.end_sample - self.start_sample) / self.sample_rate
        return self.n_frames * 0.01

    @property
    def segment_id(self) -> str:
        return f"{self.clip_id}:{self.unit}:{self.start_frame}-{self.end_frame}"


def extract_segments(alignment, min_len_frames: int = DEFAULT_MIN_LEN_FRAMES, sample_rate: int = 0,
                     units=None, clip_id: str = "", frame_shift_ms: float = 10.0) -> list:
    """Maximal same-unit runs at least ``min_len_frames`` long.

    ``alignment`` may be an Alignment or a UnitTimeline. With ``sample_rate``
    set, each segment also carries its sample span in the source audio.
    """
    timeline = getattr(alignment, "timeline", alignment)
    out = []
    samples_per_frame = sample_rate * frame_shift_ms / 1000.0
    for unit, start, end in timeline.segments:
        if end - start < min_len_frames:
            continue
        if units is not None and unit not in units:
            continue
        out.append(Segment(unit, start, end, int(round(start * samples_per_frame)),
                           int(round(end * samples_per_frame)), sample_rate, clip_id))
    return out


# -- boundary error -----------------------------------------------------------------

@dataclass
class BoundaryReport:
    """Per-transition counts and absolute-error totals, keyed ``(prev_unit, next_unit)``."""

    counts: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)

    def cell_mae(self, prev: str, nxt: str):
        n = self.counts.get((prev, nxt), 0)
        return self.totals[(prev, nxt)] / n if n else None

    @property
    def n_boundaries(self) -> int:
        return sum(self.counts.values())

    @property
    def overall_mae(self) -> float:
        n = self.n_boundaries
        return sum(self.totals.values()) / n if n else 0.0

    def merge(self, other: "BoundaryReport") -> "BoundaryReport":
        out = BoundaryReport(dict(self.counts), dict(self.totals))
        for key, n in other.counts.items():
            out.counts[key] = out.counts.get(key, 0) + n
            out.totals[key] = out.totals.get(key, 0.0) + other.totals[key]
        return out

    def group_mae(self, predicate) -> float:
        keys = [k for k in self.counts if predicate(*k)]
        n = sum(self.counts[k] for k in keys)
        return sum(self.totals[k] for k in keys) / n if n else float("nan")

    @classmethod
    def from_cells(cls, cells: dict, counts=None) -> "BoundaryReport":
        """Build from per-cell MAE values (counts default to 1 per cell)."""
        counts = counts or {k: 1 for k in cells}
        return cls(dict(counts), {k: cells[k] * counts[k] for k in cells})

    def to_dict(self) -> dict:
        return {
            "overall_mae": self.overall_mae,
            "n_boundaries": self.n_boundaries,
            "cells": [{"prev": p, "next": n, "count": self.counts[(p, n)], "mae": self.cell_mae(p, n)}
                      for p, n in sorted(self.counts)],
        }


def silence_adjacent(prev: str, nxt: str) -> bool:
    return "silence" in (prev, nxt)


def mixture_adjacent(prev: str, nxt: str) -> bool:
    """Mixture on one side and no silence on either side."""
    return "mixture" in (prev, nxt) and "silence" not in (prev, nxt)


def boundary_mae(hyp: UnitTimeline, ref: UnitTimeline) -> BoundaryReport:
    """Pair the k-th internal boundary of each timeline; clip edges are not scored."""
    if hyp.units != ref.units:
        raise ValueError("unit sequences differ; boundary MAE needs forced-alignment output. "
                         "Score recognition output with confusion_matrix instead.")
    report = BoundaryReport()
    for i, (h, r) in enumerate(zip(hyp.boundaries, ref.boundaries)):
        key = (ref.units[i], ref.units[i + 1])
        report.counts[key] = report.counts.get(key, 0) + 1
        report.totals[key] = report.totals.get(key, 0.0) + abs(h - r)
    return report


def boundary_table_csv(report: BoundaryReport, units=UNITS) -> str:
    """Table layout: rows are the next segment type, columns the previous one."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["next\\prev"] + list(units))
    for nxt in units:
        row = [nxt]
        for prev in units:
            mae = report.cell_mae(prev, nxt) if prev != nxt else None
            row.append("-" if mae is None else f"{mae:.2f}")
        w.writerow(row)
    return buf.getvalue()


def parse_boundary_table_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    prevs = rows[0][1:]
    cells = {}
    for row in rows[1:]:
        for prev, value in zip(prevs, row[1:]):
            if value != "-":
                cells[(prev, row[0])] = float(value)
    return cells


# -- confusion ---------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    """``counts[i, j]``: reference unit ``units[j]`` recognized as ``units[i]``."""

    counts: np.ndarray
    units: tuple = UNITS

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if tuple(other.units) != tuple(self.units):
            raise ValueError("unit orders differ")
        return ConfusionMatrix(self.counts + other.counts, self.units)

    def pair_confusions(self) -> dict:
        """Symmetric off-diagonal totals keyed by unordered unit pair."""
        out = {}
        n = len(self.units)
        for i in range(n):
            for j in range(i + 1, n):
                out[frozenset((self.units[i], self.units[j]))] = int(self.counts[i, j] + self.counts[j, i])
        return out

    def to_dict(self) -> dict:
        return {"units": list(self.units), "counts": self.counts.astype(int).tolist(),
                "accuracy": self.accuracy}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["recognized\\reference"] + list(self.units))
        for u, row in zip(self.units, self.counts):
            w.writerow([u] + [int(x) for x in row])
        return buf.getvalue()


def confusion_matrix(recognized: UnitTimeline, ref: UnitTimeline, units=UNITS,
                     frame_level: bool = False) -> ConfusionMatrix:
    """Classify each reference segment by majority recognized unit over its frames.

    Ties go to the unit whose overlapping recognized segments are longer in
    total, then to the earlier unit in ``units``. ``frame_level`` counts
    frames instead of segments.
    """
    if recognized.total_frames != ref.total_frames:
        raise ValueError(f"timelines span {recognized.total_frames} and {ref.total_frames} frames")
    index = {u: i for i, u in enumerate(units)}
    counts = np.zeros((len(units), len(units)), dtype=np.int64)
    rec_labels = np.array([index[u] for u in recognized.labels()])
    if frame_level:
        ref_labels = np.array([index[u] for u in ref.labels()])
        np.add.at(counts, (rec_labels, ref_labels), 1)
        return ConfusionMatrix(counts, tuple(units))
    for unit, start, end in ref.segments:
        votes = np.bincount(rec_labels[start:end], minlength=len(units))
        tied = np.flatnonzero(votes == votes.max())
        if len(tied) > 1:
            span = np.zeros(len(units))
            for u, s, e in recognized.segments:
                if s < end and e > start and index[u] in tied:
                    span[index[u]] += e - s
            tied = [k for k in tied if span[k] == max(span[j] for j in tied)]
        counts[tied[0], index[unit]] += 1
    return ConfusionMatrix(counts, tuple(units))

"""NMF templates and knowledge-gated Wiener separation.

Each source owns a block of spectral bases learned from its solo material.
At separation time a source's activations are pinned to zero in every STFT
frame where the knowledge marks it inactive, so multiplicative updates can
only explain the mixture with the sources that are supposed to be playing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .dsp import StftConfig, Waveform, istft, stft, stft_frame_spans, stft_n_frames
from .knowledge import CATEGORIES, CATEGORY_INDEX
from .rng import CounterRng
from .score import UnitTimeline

EPS = 1e-12


def kl_divergence(V: np.ndarray, WH: np.ndarray, eps: float = EPS) -> float:
    """Generalized KL divergence ``sum(V log(V / WH) - V + WH)`` with ``0 log 0 = 0``."""
    WH = np.maximum(WH, eps)
    return float(np.sum(xlogy(V, V / WH)) - V.sum() + WH.sum())


def nmf_kl(V, W, H, n_iter: int, update_w: bool = True, eps: float = EPS, track_loss: bool = True):
    """Lee-Seung multiplicative updates for KL-NMF.

    Returns ``(W, H, losses)`` where ``losses[0]`` is the starting objective
    and ``losses[i]`` the objective after iteration i. With ``track_loss``
    off only the final objective is recorded. Zero entries of H stay zero.
    """
    W = W.copy()
    H = H.copy()
    losses = [kl_divergence(V, W @ H, eps)] if track_loss else []
    for _ in range(n_iter):
        WH = np.maximum(W @ H, eps)
        H *= (W.T @ (V / WH)) / np.maximum(W.sum(axis=0)[:, None], eps)
        if update_w:
            WH = np.maximum(W @ H, eps)
            W *= ((V / WH) @ H.T) / np.maximum(H.sum(axis=1)[None, :], eps)
        if track_loss:
            losses.append(kl_divergence(V, W @ H, eps))
    if not track_loss:
        losses.append(kl_divergence(V, W @ H, eps))
    return W, H, losses


def magnitude(w: Waveform, cfg: StftConfig) -> np.ndarray:
    """Channel-averaged STFT magnitude, ``(n_bins, n_frames)``."""
    return np.abs(stft(w, cfg)).mean(axis=0)


@dataclass
class TemplateModel:
    bases: dict  # source -> (n_bins, n_bases), columns sum to 1
    stft: StftConfig = StftConfig()
    sample_rate: int = 44100
    losses: dict = field(default_factory=dict)

    @property
    def sources(self) -> list:
        return list(self.bases)

    def stacked(self):
        names = self.sources
        W = np.hstack([self.bases[s] for s in names])
        owner = np.concatenate([np.full(self.bases[s].shape[1], i) for i, s in enumerate(names)])
        return W, owner

    def save(self, path):
        arrays = {f"bases__{s}": W for s, W in self.bases.items()}
        meta = {"sources": self.sources, "window_size": self.stft.window_size, "hop": self.stft.hop,
                "window": self.stft.window, "sample_rate": self.sample_rate}
        with open(path, "wb") as fh:
            np.savez(fh, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path) -> "TemplateModel":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            bases = {s: data[f"bases__{s}"] for s in meta["sources"]}
        cfg = StftConfig(meta["window_size"], meta["hop"], meta["window"])
        return cls(bases, cfg, meta["sample_rate"])


def learn_templates(solo_segments: dict, n_bases: int = 10, n_iter: int = 100,
                    cfg: StftConfig = StftConfig(), seed: int = 0, max_frames: int = 2000,
                    track_loss: bool = False) -> TemplateModel:
    """KL-NMF bases per source from its solo segments (concatenated in time).

    When a source has more than ``max_frames`` STFT frames, an evenly strided
    subset of that size is used.
    """
    bases, losses = {}, {}
    rate = None
    for source, segments in solo_segments.items():
        if not segments:
            raise ValueError(f"source {source!r} has no solo segments to learn from")
        rates = {s.sample_rate for s in segments}
        if rate is None:
            rate = rates.pop()
        if any(s.sample_rate != rate for s in segments):
            raise ValueError("solo segments use different sample rates")
        counts = [stft_n_frames(s.n_samples, cfg) for s in segments]
        total = sum(counts)
        keep = np.arange(total)
        if max_frames and total > max_frames:
            keep = np.linspace(0, total - 1, max_frames).round().astype(int)
        # pick the kept columns segment by segment rather than stacking every frame first
        cols, offset = [], 0
        for seg, n in zip(segments, counts):
            local = keep[(keep >= offset) & (keep < offset + n)] - offset
            if local.size:
                cols.append(magnitude(seg, cfg)[:, local])
            offset += n
        V = np.hstack(cols)
        rng = CounterRng(seed, "templates", source)
        W = rng.uniform(0.1, 1.0, size=(V.shape[0], n_bases))
        W /= W.sum(axis=0, keepdims=True)
        H = rng.uniform(0.1, 1.0, size=(n_bases, V.shape[1])) * (V.sum(axis=0).mean() / n_bases)
        W, H, hist = nmf_kl(V, W, H, n_iter, track_loss=track_loss)
        if n_iter:
            W = W / np.maximum(W.sum(axis=0, keepdims=True), EPS)
        bases[source] = W
        losses[source] = hist
    return TemplateModel(bases, cfg, rate, losses)


@dataclass
class StemSet:
    stems: dict
    masks: np.ndarray = None  # (n_sources, n_bins, n_frames)
    active: np.ndarray = None  # (n_sources, n_frames) after gating
    fit_losses: list = field(default_factory=list)


def gate_frames(active_knowledge: np.ndarray, n_frames: int, cfg: StftConfig, sample_rate: int,
                frame_shift_ms: float = 10.0) -> np.ndarray:
    """Map per-knowledge-frame activity ``(n_sources, K)`` onto STFT frames.

    A source is active in an STFT frame if it is active in any knowledge
    frame the analysis window touches.
    """
    n_src, K = active_knowledge.shape
    start, stop = stft_frame_spans(n_frames, cfg)
    per_frame = sample_rate * frame_shift_ms / 1000.0
    lo = np.clip(np.floor(start / per_frame).astype(int), 0, K - 1)
    hi = np.clip(np.ceil(stop / per_frame).astype(int) - 1, 0, K - 1)
    cum = np.concatenate([np.zeros((n_src, 1)), np.cumsum(active_knowledge, axis=1)], axis=1)
    return (cum[:, hi + 1] - cum[:, lo]) > 0


def wiener_masks(models: np.ndarray, active: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Ratio masks over active sources; bins with no modelled energy are split evenly."""
    gated = models * active[:, None, :]
    denom = gated.sum(axis=0)
    n_active = active.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = gated / denom
        even = np.where(n_active > 0, 1.0 / n_active, 0.0)
    masks = np.where(denom[None] > eps, ratio, even[None, None, :] * active[:, None, :])
    return np.where(active[:, None, :], masks, 0.0)


def separate_with_activity(mixture: Waveform, active_knowledge, tm: TemplateModel, fit_iter: int = 50,
                           frame_shift_ms: float = 10.0) -> StemSet:
    """Core routine: ``active_knowledge`` is ``(n_sources, K)`` booleans in ``tm.sources`` order, or None."""
    if mixture.sample_rate != tm.sample_rate:
        raise ValueError(f"mixture at {mixture.sample_rate} Hz, templates at {tm.sample_rate} Hz")
    X = stft(mixture, tm.stft)
    V = np.abs(X).mean(axis=0)
    n_frames = V.shape[1]
    n_src = len(tm.sources)
    if active_knowledge is None:
        active = np.ones((n_src, n_frames), dtype=bool)
    else:
        active = gate_frames(np.asarray(active_knowledge, dtype=bool), n_frames, tm.stft,
                             mixture.sample_rate, frame_shift_ms)
    W, owner = tm.stacked()
    H = np.ones((W.shape[1], n_frames)) * (V.sum(axis=0, keepdims=True) / W.shape[1] + EPS)
    H *= active[owner]
    _, H, fit_losses = nmf_kl(V, W, H, fit_iter, update_w=False, track_loss=False)
    models = np.stack([W[:, owner == i] @ H[owner == i] for i in range(n_src)])
    masks = wiener_masks(models, active)
    stems = {}
    for i, source in enumerate(tm.sources):
        stems[source] = istft(X * masks[i][None], tm.stft, mixture.n_samples, mixture.sample_rate)
    return StemSet(stems, masks, active, fit_losses)


def timeline_activity(knowledge: UnitTimeline, sources: list) -> np.ndarray:
    """Unit labels to per-frame source activity: silence -> none, mixture -> all sources."""
    active = np.zeros((len(sources), knowledge.total_frames), dtype=bool)
    for unit, start, end in knowledge.segments:
        if unit == "silence":
            continue
        if unit == "mixture":
            active[:, start:end] = True
        elif unit in sources:
            active[sources.index(unit), start:end] = True
        else:
            raise ValueError(f"knowledge names unknown source {unit!r}; templates cover {sources}")
    return active


def separate(mixture: Waveform, knowledge, tm: TemplateModel, fit_iter: int = 50) -> StemSet:
    """Separate with an optional unit timeline as knowledge (None = every source always active)."""
    active = None if knowledge is None else timeline_activity(knowledge, tm.sources)
    frame_shift = knowledge.frame_shift_ms if knowledge is not None else 10.0
    return separate_with_activity(mixture, active, tm, fit_iter, frame_shift)


def conditioned_separate(mixture: Waveform, activity, tm: TemplateModel, fit_iter: int = 50,
                         frame_shift_ms: float = 10.0) -> StemSet:
    """Gate by the top-level (speech, music, sfx) bits of a ``(n_frames, 7)`` activity matrix."""
    missing = [c for c in CATEGORIES if c not in tm.sources]
    if missing:
        raise ValueError(f"template model lacks categories {missing}")
    activity = np.asarray(activity)
    top = {c: activity[:, idx].astype(bool) for c, idx in zip(CATEGORIES, CATEGORY_INDEX)}
    active = np.stack([top[s] if s in top else np.ones(len(activity), dtype=bool) for s in tm.sources])
    return separate_with_activity(mixture, active, tm, fit_iter, frame_shift_ms)

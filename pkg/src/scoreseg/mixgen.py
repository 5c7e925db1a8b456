"""Pseudo-mixtures built from detected single-instrument segments."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np

from .dsp import Waveform
from .fsutil import atomic_write_json
from .rng import CounterRng
from .wavio import write_wav


@dataclass(frozen=True)
class AugmentationConfig:
    crop_s: float = 3.0
    min_seg_s: float = 3.0
    gain_range_db: tuple = (-10.0, 10.0)
    channel_swap_prob: float = 0.5
    drop_prob: float = 0.1
    seed: int = 0
    drop_mode: str = "independent"  # or "exactly_one"

    def __post_init__(self):
        for name in ("channel_swap_prob", "drop_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.gain_range_db
        if lo > hi:
            raise ValueError(f"gain range lower bound {lo} exceeds upper bound {hi}")
        if self.crop_s > self.min_seg_s:
            raise ValueError(f"crop_s ({self.crop_s}) must not exceed min_seg_s ({self.min_seg_s})")
        if self.drop_mode not in ("independent", "exactly_one"):
            raise ValueError(f"drop_mode must be 'independent' or 'exactly_one', got {self.drop_mode!r}")


@dataclass
class PoolSegment:
    segment_id: str
    unit: str
    audio: Waveform

    @property
    def duration_s(self) -> float:
        return self.audio.duration


@dataclass
class PseudoMixture:
    mixture: Waveform
    target_clean: Waveform
    perturbation_clean: Waveform
    provenance: dict


def build_pools(inventory, instrument: str, min_seg_s: float = 3.0, audio=None) -> list:
    """Segments of ``instrument`` lasting at least ``min_seg_s``.

    ``inventory`` holds :class:`PoolSegment` items, or segmenter
    ``Segment`` records together with ``audio``, a mapping from clip id to
    the source Waveform.
    """
    pool = []
    for item in inventory:
        if item.unit != instrument:
            continue
        if isinstance(item, PoolSegment):
            entry = item
        else:
            wave = None
            if audio is not None:
                wave = audio[item.clip_id].segment(item.start_sample, item.end_sample)
            entry = PoolSegment(item.segment_id, item.unit, wave)
        duration = entry.audio.duration if entry.audio is not None else item.duration_s
        if duration + 1e-9 >= min_seg_s:
            pool.append(entry)
    return pool


def _draw_part(rng: CounterRng, pool: list, cfg: AugmentationConfig, crop_len: int):
    idx = rng.integers(0, len(pool))
    seg = pool[idx]
    n = seg.audio.n_samples
    if n < crop_len:
        raise ValueError(f"segment {seg.segment_id} has {n} samples, crop needs {crop_len}")
    offset = rng.integers(0, n - crop_len + 1)
    gain_db = rng.uniform(*cfg.gain_range_db)
    swap = rng.uniform() < cfg.channel_swap_prob
    dropped = rng.uniform() < cfg.drop_prob
    x = seg.audio.samples[:, offset:offset + crop_len] * 10.0 ** (gain_db / 20.0)
    if swap:
        x = x[::-1]
    info = {"segment_id": seg.segment_id, "pool_index": idx, "offset": offset,
            "gain_db": gain_db, "swapped": bool(swap and seg.audio.channels == 2)}
    return x, dropped, info, seg.audio.sample_rate


def make_pseudo_mixture(target_pool: list, perturb_pool: list, cfg: AugmentationConfig,
                        draw_index: int) -> PseudoMixture:
    """One augmented (target, perturbation) pair; a pure function of ``(cfg.seed, draw_index)``."""
    if not target_pool:
        raise ValueError("target pool is empty")
    if not perturb_pool:
        raise ValueError("perturbation pool is empty")
    rng = CounterRng(cfg.seed, "mixgen", draw_index)
    rates = {s.audio.sample_rate for s in target_pool + perturb_pool}
    if len(rates) != 1:
        raise ValueError(f"pools mix sample rates {sorted(rates)}")
    rate = rates.pop()
    crop_len = int(round(cfg.crop_s * rate))
    target, t_drop, t_info, _ = _draw_part(rng.child("target"), target_pool, cfg, crop_len)
    perturb, p_drop, p_info, _ = _draw_part(rng.child("perturbation"), perturb_pool, cfg, crop_len)
    if cfg.drop_mode == "exactly_one":
        d = rng.child("drop")
        t_drop = p_drop = False
        if d.uniform() < cfg.drop_prob:
            if d.uniform() < 0.5:
                t_drop = True
            else:
                p_drop = True
    if target.shape[0] != perturb.shape[0]:
        raise ValueError("target and perturbation channel counts differ")
    if t_drop:
        target = np.zeros_like(target)
    if p_drop:
        perturb = np.zeros_like(perturb)
    t_info["dropped"] = bool(t_drop)
    p_info["dropped"] = bool(p_drop)
    mixture = target + perturb
    provenance = {"draw_index": draw_index, "seed": cfg.seed, "target": t_info, "perturbation": p_info}
    return PseudoMixture(Waveform(mixture, rate), Waveform(target, rate), Waveform(perturb, rate), provenance)


def write_batch(out_dir, target_pool: list, perturb_pool: list, cfg: AugmentationConfig, n_draws: int) -> list:
    """Write WAV triplets plus JSON sidecars, and a manifest listing every draw."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(n_draws):
        pm = make_pseudo_mixture(target_pool, perturb_pool, cfg, i)
        stem = f"draw{i:05d}"
        paths = {}
        for part, wave in (("mixture", pm.mixture), ("target", pm.target_clean),
                           ("perturbation", pm.perturbation_clean)):
            paths[part] = f"{stem}.{part}.wav"
            write_wav(os.path.join(out_dir, paths[part]), wave)
        sidecar = dict(pm.provenance, files=paths)
        atomic_write_json(os.path.join(out_dir, f"{stem}.json"), sidecar)
        records.append(sidecar)
    manifest = {"config": asdict(cfg), "n_draws": n_draws, "draws": records}
    atomic_write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return records

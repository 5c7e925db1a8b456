"""End-to-end experiments behind the evaluation reports and the acceptance suite.

Each function returns plain measurements; thresholds are applied by the
caller (the ``repro`` command and the acceptance tests).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import oracles
from .acoustic_model import (
    flat_start_init,
    log_likelihood,
    random_init,
    recognize,
    reestimate,
    viterbi_align,
)
from .dsp import StftConfig, Waveform, mfcc39
from .knowledge import (
    CATEGORIES,
    CATEGORY_INDEX,
    enumerate_activity_vectors,
    is_linearly_separable,
    project,
    train_projector,
)
from .metrics import SdrReport
from .mixgen import AugmentationConfig, PoolSegment, make_pseudo_mixture
from .rng import CounterRng
from .score import (
    UNITS,
    ScoreError,
    UnitTimeline,
    parse_score_json,
    parse_smf,
    score_to_json,
    timeline_from_score,
    write_smf,
)
from .segmenter import BoundaryReport, ConfusionMatrix, boundary_mae, confusion_matrix, extract_segments
from .separator import conditioned_separate, learn_templates, nmf_kl, separate, wiener_masks
from .synthsim import cinematic_corpus, music_corpus

log = logging.getLogger(__name__)


# -- configuration ------------------------------------------------------------------

@dataclass
class CorpusConfig:
    n_clips: int = 100
    n_test_clips: int = 50
    sample_rate: int = 44100
    timbre_distance: float = 1.0


@dataclass
class HmmConfig:
    n_states: int = 20
    n_mix: int = 2
    n_iter: int = 5
    mode: str = "baum_welch"
    loop_penalty: float = 0.0
    feature_rate: int = 16000


@dataclass
class SeparatorConfig:
    n_bases: int = 10
    n_iter: int = 60
    fit_iter: int = 30
    window_size: int = 4096
    hop: int = 1024
    window: str = "hamming"
    max_frames: int = 2000
    min_len_frames: int = 300

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.window_size, self.hop, self.window)


@dataclass
class CinematicConfig:
    n_train_clips: int = 20
    n_test_clips: int = 50
    duration_s: float = 10.0
    on_s: tuple = (0.5, 2.0)
    off_s: tuple = (1.5, 4.0)


@dataclass
class MixgenConfig:
    n_draws: int = 10000
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)


@dataclass
class ToyConfig:
    n_models: int = 200
    em_inits: int = 50
    em_iters: int = 10
    em_clips: int = 3
    em_states: int = 3
    em_mix: int = 2
    nmf_problems: int = 20
    nmf_iters: int = 100


@dataclass
class ExperimentConfig:
    seed: int = 0
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    hmm: HmmConfig = field(default_factory=HmmConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    cinematic: CinematicConfig = field(default_factory=CinematicConfig)
    mixgen: MixgenConfig = field(default_factory=MixgenConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    projector_iter: int = 2000

    def to_dict(self) -> dict:
        return asdict(self)


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Ordered map, optionally over a process pool of ``jobs`` workers."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# -- 1. decoder oracle equivalence ------------------------------------------------------

def viterbi_oracle_check(n_models: int = 200, seed: int = 0) -> dict:
    """Largest deviations of Viterbi / forward from exhaustive enumeration on random toy HMMs."""
    rng = np.random.default_rng(CounterRng(seed, "toy_hmms").words(1)[0])
    max_v = max_f = 0.0
    checked = 0
    for _ in range(n_models):
        units = ["a", "b"][: int(rng.integers(1, 3))]
        ms = oracles.random_toy_modelset(rng, units, max_total_states=4, dim=int(rng.integers(1, 4)))
        S = sum(ms.models[u].n_states for u in units)
        T = int(rng.integers(S, 7))
        X = rng.normal(size=(T, ms.feature_dim))
        paths = oracles.enumerate_chain_paths(*oracles.chain_arrays(ms, units, X))
        scores = np.array([s for _, s in paths])
        best = scores.max()
        total = np.logaddexp.reduce(scores)
        max_v = max(max_v, abs(viterbi_align(ms, X, units).log_likelihood - best))
        max_f = max(max_f, abs(log_likelihood(ms, X, units) - total))
        checked += 1
    return {"n_models": checked, "max_viterbi_error": max_v, "max_forward_error": max_f}


# -- 2. EM monotonicity -------------------------------------------------------------------

def music_features(clips, rate: int = 16000) -> list:
    """``(features, timeline cropped to the feature frames)`` per clip."""
    out = []
    for c in clips:
        f = mfcc39(c.mixture, rate)
        out.append((f, c.timeline.crop(f.n_frames)))
    return out


def em_monotonicity(cfg: ExperimentConfig) -> dict:
    t = cfg.toy
    clips = music_corpus(t.em_clips, cfg.seed, cfg.corpus.sample_rate, cfg.corpus.timbre_distance, prefix="em")
    corpus = music_features(clips, cfg.hmm.feature_rate)
    worst = np.inf
    histories = []
    for i in range(t.em_inits):
        ms = random_init(corpus, t.em_states, t.em_mix, UNITS, seed=CounterRng(cfg.seed, "em_init", i).key)
        res = reestimate(ms, corpus, "baum_welch", t.em_iters)
        # score the parameters left by the last update too, so every iteration is checked
        final = sum(log_likelihood(res.models, f, tl.units) for f, tl in corpus)
        hist = res.log_likelihoods + [final]
        histories.append(hist)
        steps = np.diff(hist)
        worst = min(worst, steps.min() if len(steps) else np.inf)
    return {"n_inits": t.em_inits, "n_iter": t.em_iters, "min_step": float(worst), "histories": histories}


# -- 3/4. alignment and recognition ------------------------------------------------------

@dataclass
class MusicModels:
    clips: list
    corpus: list
    models: object
    log_likelihoods: list


def train_music_models(cfg: ExperimentConfig, jobs: int = 1) -> MusicModels:
    c, h = cfg.corpus, cfg.hmm
    # training clips only need their mixtures; dropping stems keeps 100 clips in memory comfortably
    clips = music_corpus(c.n_clips, cfg.seed, c.sample_rate, c.timbre_distance, prefix="clip", keep_stems=False)
    corpus = music_features(clips, h.feature_rate)
    ms = flat_start_init(corpus, h.n_states, h.n_mix)
    res = reestimate(ms, corpus, h.mode, h.n_iter, jobs=jobs)
    return MusicModels(clips, corpus, res.models, res.log_likelihoods)


def _align_one(args):
    ms, f, units = args
    return viterbi_align(ms, f, units).timeline


def _recognize_one(args):
    ms, f, penalty = args
    return recognize(ms, f, penalty).timeline


def align_corpus(ms, corpus, jobs: int = 1) -> list:
    return parallel_map(_align_one, [(ms, f, tl.units) for f, tl in corpus], jobs)


def alignment_experiment(mm: MusicModels, jobs: int = 1):
    hyps = align_corpus(mm.models, mm.corpus, jobs)
    report = BoundaryReport()
    for hyp, (_, ref) in zip(hyps, mm.corpus):
        report = report.merge(boundary_mae(hyp, ref))
    return report, hyps


def recognition_experiment(mm: MusicModels, loop_penalty: float = 0.0, jobs: int = 1):
    hyps = parallel_map(_recognize_one, [(mm.models, f, loop_penalty) for f, _ in mm.corpus], jobs)
    cm = ConfusionMatrix(np.zeros((len(UNITS), len(UNITS)), dtype=np.int64))
    for hyp, (_, ref) in zip(hyps, mm.corpus):
        cm = cm.merge(confusion_matrix(hyp, ref))
    return cm, hyps


# -- 5. separation ordering ------------------------------------------------------------------

def rotate_timelines(timelines: list) -> list:
    """Shuffled control: clip i receives clip i+1's timeline, cropped or padded to its own length."""
    n = len(timelines)
    out = []
    for i, tl in enumerate(timelines):
        other = timelines[(i + 1) % n] if n > 1 else tl
        out.append(other.crop(tl.total_frames))
    return out


def solo_segments(clips, timelines, min_len_frames: int = 300, sources=("piano", "bass")) -> dict:
    """Mixture excerpts under each single-source segment of the knowledge timelines."""
    solo = {s: [] for s in sources}
    for clip, tl in zip(clips, timelines):
        for seg in extract_segments(tl, min_len_frames, clip.mixture.sample_rate, units=sources,
                                    clip_id=clip.clip_id):
            solo[seg.unit].append(clip.mixture.segment(seg.start_sample, seg.end_sample))
    return solo


def _full_length(tl: UnitTimeline, n_frames: int) -> UnitTimeline:
    # feature timelines are a couple of frames short of the clip; extend the last unit
    return tl.crop(n_frames)


def _merge(reports) -> SdrReport:
    total = SdrReport()
    for r in reports:
        total.values.update(r.values)
        total.silent.extend(r.silent)
    return total


def _separate_one(args):
    """Separate one clip and score it there, so only SDR values travel back."""
    clip, tl, tm, fit_iter = args
    out = separate(clip.mixture, tl, tm, fit_iter)
    rep = SdrReport()
    for src in tm.sources:
        rep.add(clip.clip_id, src, clip.stems[src], out.stems[src])
    return rep


def separation_ordering(cfg: ExperimentConfig, mm: MusicModels, train_fa: list, jobs: int = 1) -> dict:
    """Mean SDR for templates + gating from oracle, forced-alignment and shuffled timelines."""
    c, s = cfg.corpus, cfg.separator
    test_clips = music_corpus(c.n_test_clips, cfg.seed, c.sample_rate, c.timbre_distance, prefix="test")
    test_feats = music_features(test_clips, cfg.hmm.feature_rate)
    test_fa = align_corpus(mm.models, test_feats, jobs)

    def full(tls, clips):
        return [_full_length(tl, clip.timeline.total_frames) for tl, clip in zip(tls, clips)]

    train_oracle = [clip.timeline for clip in mm.clips]
    test_oracle = [clip.timeline for clip in test_clips]
    conditions = {
        "oracle": (train_oracle, test_oracle),
        "forced_alignment": (full(train_fa, mm.clips), full(test_fa, test_clips)),
        "shuffled": (rotate_timelines(train_oracle), rotate_timelines(test_oracle)),
    }
    results = {}
    for name, (train_tls, test_tls) in conditions.items():
        solo = solo_segments(mm.clips, train_tls, s.min_len_frames)
        missing = [k for k, v in solo.items() if not v]
        if missing:
            raise ValueError(f"condition {name}: no solo segments for {missing}")
        tm = learn_templates(solo, s.n_bases, s.n_iter, s.stft, seed=cfg.seed, max_frames=s.max_frames)
        rep = _merge(parallel_map(_separate_one, [(clip, tl, tm, s.fit_iter)
                                                  for clip, tl in zip(test_clips, test_tls)], jobs))
        results[name] = rep
        log.info("separation %s: mean SDR %.2f dB", name, rep.mean())
    return results


# -- 6. cinematic conditioning -----------------------------------------------------------------

def _activity_runs(active: np.ndarray):
    edges = np.flatnonzero(np.diff(np.concatenate([[0], active.astype(np.int8), [0]])))
    return list(zip(edges[::2], edges[1::2]))


def cinematic_templates(clips, cfg: ExperimentConfig):
    """Templates per category from the clean stems over that category's active runs."""
    s = cfg.separator
    solo = {c: [] for c in CATEGORIES}
    for clip in clips:
        sr = clip.mixture.sample_rate
        per_frame = sr // 100
        for cat, idx in zip(CATEGORIES, CATEGORY_INDEX):
            for a, b in _activity_runs(clip.activity[:, idx]):
                solo[cat].append(clip.stems[cat].segment(int(a) * per_frame, int(b) * per_frame))
    return learn_templates(solo, s.n_bases, s.n_iter, s.stft, seed=cfg.seed, max_frames=s.max_frames)


def _cinematic_one(args):
    clip, activity, tm, fit_iter = args
    out = conditioned_separate(clip.mixture, activity, tm, fit_iter)
    rep = SdrReport()
    for cat in CATEGORIES:
        rep.add(clip.clip_id, cat, clip.stems[cat], out.stems[cat])
    return rep


def cinematic_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    cc = cfg.cinematic
    sr = cfg.corpus.sample_rate
    train = cinematic_corpus(cc.n_train_clips, cfg.seed, cc.duration_s, sr, "cine_train", cc.on_s, cc.off_s)
    test = cinematic_corpus(cc.n_test_clips, cfg.seed, cc.duration_s, sr, "cine_test", cc.on_s, cc.off_s)
    tm = cinematic_templates(train, cfg)
    results = {}
    for name in ("with_activity", "without_activity"):
        args = [(clip, clip.activity if name == "with_activity" else np.ones_like(clip.activity), tm,
                 cfg.separator.fit_iter) for clip in test]
        rep = _merge(parallel_map(_cinematic_one, args, jobs))
        results[name] = rep
        log.info("cinematic %s: %s", name, rep.means())
    return results


# -- 7. mask / NMF properties -------------------------------------------------------------------

def mask_nmf_properties(cfg: ExperimentConfig) -> dict:
    t = cfg.toy
    rng = np.random.default_rng(CounterRng(cfg.seed, "nmf_props").words(1)[0])
    worst_increase = -np.inf
    for _ in range(t.nmf_problems):
        F, T, K = (int(x) for x in rng.integers([5, 5, 1], [60, 60, 8]))
        V = rng.gamma(1.0, 1.0, size=(F, T))
        _, _, losses = nmf_kl(V, rng.uniform(0.1, 1, (F, K)), rng.uniform(0.1, 1, (K, T)), t.nmf_iters)
        rel = np.diff(losses) / np.maximum(np.abs(losses[:-1]), 1.0)
        worst_increase = max(worst_increase, float(rel.max()))

    # masks and reconstruction on real separations, with and without knowledge
    s = cfg.separator
    clips = music_corpus(4, cfg.seed, cfg.corpus.sample_rate, cfg.corpus.timbre_distance, prefix="props")
    tm = learn_templates(solo_segments(clips, [c.timeline for c in clips], s.min_len_frames),
                         s.n_bases, 20, s.stft, seed=cfg.seed, max_frames=500)
    mask_err = 0.0
    recon_err = 0.0
    for clip in clips:
        for knowledge in (clip.timeline, None):
            out = separate(clip.mixture, knowledge, tm, 10)
            any_active = out.active.any(axis=0)
            total = out.masks.sum(axis=0)[:, any_active]
            mask_err = max(mask_err, float(np.abs(total - 1.0).max()) if total.size else 0.0)
            rebuilt = sum(w.samples for w in out.stems.values())
            x = clip.mixture.samples
            recon_err = max(recon_err, float(np.linalg.norm(rebuilt - x) / np.linalg.norm(x)))
    # random models exercise the epsilon-guarded branch too
    models = rng.uniform(size=(3, 20, 30)) * (rng.uniform(size=(3, 20, 30)) > 0.5)
    active = rng.uniform(size=(3, 30)) > 0.3
    m = wiener_masks(models, active)
    any_active = active.any(axis=0)
    mask_err = max(mask_err, float(np.abs(m.sum(axis=0)[:, any_active] - 1.0).max()))
    return {"nmf_problems": t.nmf_problems, "nmf_iters": t.nmf_iters, "nmf_max_relative_increase": worst_increase,
            "mask_max_error": mask_err, "stem_sum_max_relative_error": recon_err}


# -- 8. mixgen statistics ----------------------------------------------------------------------

def mixgen_statistics(cfg: ExperimentConfig) -> dict:
    aug = cfg.mixgen.augmentation
    sr = 1000  # short pools keep 10k draws cheap; the recipe does not depend on the rate
    rng = np.random.default_rng(CounterRng(cfg.seed, "mixgen_pools").words(1)[0])

    def pool(unit, n):
        return [PoolSegment(f"{unit}{i}", unit, Waveform(rng.normal(size=(2, int((aug.min_seg_s + i) * sr))), sr))
                for i in range(n)]

    targets, perturbs = pool("piano", 5), pool("bass", 5)
    drops = {"target": 0, "perturbation": 0}
    gains = []
    worst_additivity = 0.0
    for i in range(cfg.mixgen.n_draws):
        pm = make_pseudo_mixture(targets, perturbs, aug, i)
        for part in drops:
            drops[part] += pm.provenance[part]["dropped"]
            gains.append(pm.provenance[part]["gain_db"])
        resid = pm.mixture.samples - (pm.target_clean.samples + pm.perturbation_clean.samples)
        worst_additivity = max(worst_additivity, float(np.abs(resid).max()))
    lo, hi = aug.gain_range_db
    ks = stats.kstest(np.array(gains), stats.uniform(loc=lo, scale=hi - lo).cdf)
    n = cfg.mixgen.n_draws
    return {"n_draws": n, "drop_rate": {k: v / n for k, v in drops.items()}, "gain_ks_statistic": float(ks.statistic),
            "gain_ks_pvalue": float(ks.pvalue), "max_additivity_error": worst_additivity}


# -- 9. projector -------------------------------------------------------------------------------

def projector_experiment(cfg: ExperimentConfig) -> dict:
    vecs = enumerate_activity_vectors()
    p = train_projector(n_iter=cfg.projector_iter, seed=cfg.seed)
    bits = np.array([v.bits for v in vecs])
    coords = project(p, bits.astype(float))
    labels = bits[:, list(CATEGORY_INDEX)]
    separable = {c: bool(is_linearly_separable(coords, labels[:, j])) for j, c in enumerate(CATEGORIES)}
    consistent = all(v.speech == (v.dialog | v.nonverbal) and v.sfx == (v.fg_sfx | v.bg_sfx) for v in vecs)
    return {"n_vectors": len(vecs), "n_distinct": len({v.bits for v in vecs}), "hierarchy_consistent": consistent,
            "separable": separable, "final_loss": p.losses[-1], "projector": p}


# -- 10. parsers --------------------------------------------------------------------------------

def parser_checks(cfg: ExperimentConfig, n_scores: int = 20, n_corruptions: int = 200) -> dict:
    """Round trips on synthetic scores plus random corruptions that must fail cleanly."""
    clips = music_corpus(n_scores, cfg.seed, 8000, cfg.corpus.timbre_distance, prefix="parse")
    mismatches = 0
    for clip in clips:
        smf = parse_smf(write_smf(clip.score))
        js = parse_score_json(score_to_json(clip.score))
        n = clip.timeline.total_frames
        imap = {"piano": "piano", "bass": "bass"}
        a = timeline_from_score(smf, imap, n)
        b = timeline_from_score(js, imap, n)
        if a.segments != b.segments or a.segments != clip.timeline.segments:
            mismatches += 1
    rng = CounterRng(cfg.seed, "corrupt")
    data = write_smf(clips[0].score)
    crashes = []
    positioned = 0
    rejected = 0
    for i in range(n_corruptions):
        buf = bytearray(data)
        mode = i % 3
        if mode == 0:
            buf = buf[: rng.integers(0, len(buf))]
        elif mode == 1:
            for _ in range(4):
                buf[rng.integers(0, len(buf))] = rng.integers(0, 256)
        else:
            buf[rng.integers(0, 14)] = rng.integers(0, 256)
        try:
            parse_smf(bytes(buf))
        except ScoreError as err:
            rejected += 1
            positioned += err.offset is not None
        except Exception as err:  # anything else is a crash
            crashes.append(f"{type(err).__name__}: {err}")
    return {"n_scores": n_scores, "cross_parser_mismatches": mismatches, "n_corruptions": n_corruptions,
            "rejected": rejected, "rejected_with_offset": positioned, "crashes": crashes}


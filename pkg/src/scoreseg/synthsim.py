"""Synthetic labeled corpora.

Music clips imitate the piano/bass section structure used for alignment
experiments: 3-5 s sections of solo piano, solo bass, both, or silence,
12-15 s per clip, with an exact score and per-instrument stems. Cinematic
clips mix crude speech, music and sound-effect proxies under an activity
plan and carry a per-frame activity matrix.

All randomness comes from :class:`scoreseg.rng.CounterRng`, keyed by the
clip seed and a purpose label, so clips are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import Waveform
from .knowledge import activity_frames_from_leaves
from .rng import CounterRng
from .score import INSTRUMENTS, UNITS, Note, Score, UnitTimeline, frame_activity

FRAME_MS = 10
TICKS_PER_QUARTER = 480
TEMPO = 480000  # one tick per millisecond at 480 tpq


class PlanError(ValueError):
    pass


@dataclass
class ClipSpec:
    seed: int
    section_order: list
    section_dur_s: tuple = (3.0, 5.0)
    total_dur_s: tuple = (12.0, 15.0)
    sample_rate: int = 44100
    timbre_distance: float = 1.0
    stereo: bool = True

    def validate(self):
        order = list(self.section_order)
        if not order:
            raise PlanError("section_order is empty")
        bad = [u for u in order if u not in UNITS]
        if bad:
            raise PlanError(f"unknown units {bad}; expected members of {UNITS}")
        for a, b in zip(order, order[1:]):
            if a == b:
                raise PlanError(f"adjacent sections share unit {a!r}")
        lo, hi = self.section_dur_s
        tlo, thi = self.total_dur_s
        n = len(order)
        if not (0 < lo <= hi and 0 < tlo <= thi):
            raise PlanError(f"bad duration ranges section={self.section_dur_s} total={self.total_dur_s}")
        if n * lo > thi + 1e-9 or n * hi < tlo - 1e-9:
            raise PlanError(f"{n} sections of {lo}-{hi} s cannot fill {tlo}-{thi} s")
        if not 0.0 <= self.timbre_distance <= 1.0:
            raise PlanError(f"timbre_distance must lie in [0, 1], got {self.timbre_distance}")
        if (self.sample_rate * FRAME_MS) % 1000:
            raise PlanError(f"sample rate {self.sample_rate} does not divide into {FRAME_MS} ms frames")


@dataclass
class LabeledClip:
    mixture: Waveform
    stems: dict
    timeline: UnitTimeline
    score: Score
    spec: ClipSpec = None
    clip_id: str = ""

    @property
    def instrument_map(self) -> dict:
        return {name: name for name in self.score.tracks}


def random_clip_spec(seed: int, sample_rate: int = 44100, timbre_distance: float = 1.0,
                     n_sections=None) -> ClipSpec:
    """Random section order with no repeated neighbours; 3 or 4 sections."""
    rng = CounterRng(seed, "order")
    n = n_sections or rng.choice([3, 4])
    order = [rng.choice(UNITS)]
    while len(order) < n:
        order.append(rng.choice([u for u in UNITS if u != order[-1]]))
    return ClipSpec(seed, order, sample_rate=sample_rate, timbre_distance=timbre_distance)


def plan_sections(spec: ClipSpec) -> list:
    """Section lengths in 10 ms frames, each within the section range and summing to the total range."""
    spec.validate()
    n = len(spec.section_order)
    lo, hi = (int(round(x * 1000 / FRAME_MS)) for x in spec.section_dur_s)
    tlo, thi = (int(round(x * 1000 / FRAME_MS)) for x in spec.total_dur_s)
    rng = CounterRng(spec.seed, "sections")
    for _ in range(2000):
        durs = [int(d) for d in rng.integers(lo, hi + 1, size=n)]
        if tlo <= sum(durs) <= thi:
            return durs
    # rejection failed (tight plans): equal split of a feasible total
    total = min(max(tlo, n * lo), thi)
    base, extra = divmod(total, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


def _pitch_sets(distance: float):
    piano_low = 60 - int(round(12 * (1.0 - distance)))
    piano = [p for p in range(piano_low, piano_low + 15) if p % 12 in (0, 2, 4, 5, 7, 9, 11)]
    bass_high = 47 + int(round(10 * (1.0 - distance)))
    bass = [p for p in range(bass_high - 12, bass_high + 1) if p % 12 in (0, 2, 4, 5, 7, 9, 11)]
    return {"piano": piano, "bass": bass}


def _midi_hz(pitch) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def _ramp(n: int, length: int, shape: str = "linear") -> np.ndarray:
    length = max(1, min(length, n))
    r = np.ones(n)
    x = np.arange(1, length + 1) / length
    r[:length] = 0.5 - 0.5 * np.cos(np.pi * x) if shape == "cos" else x
    return r


def render_piano_note(n: int, sr: int, pitch: int, velocity: int, distance: float) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = _midi_hz(pitch)
    n_partials = 4 + int(round(4 * distance))
    y = np.zeros(n)
    for k in range(1, n_partials + 1):
        if k * f0 >= 0.45 * 16000:
            break
        y += np.sin(2 * np.pi * k * f0 * t) * np.exp(-t * (1.5 + 0.6 * k)) / k
    env = _ramp(n, int(0.004 * sr)) * _ramp(n, int(0.006 * sr))[::-1]
    return 0.3 * velocity / 127.0 * y * env


def render_bass_note(n: int, sr: int, pitch: int, velocity: int, distance: float) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = _midi_hz(pitch)
    closeness = 1.0 - distance
    amps = (1.0, 0.15 + 0.5 * closeness, 0.04 + 0.3 * closeness)
    y = sum(a * np.sin(2 * np.pi * (k + 1) * f0 * t) for k, a in enumerate(amps))
    env = _ramp(n, int(0.08 * sr), "cos") * _ramp(n, int(0.01 * sr))[::-1] * np.exp(-0.3 * t)
    return 0.35 * velocity / 127.0 * y * env


_NOTE_MS = {"piano": (180, 600), "bass": (300, 900)}
_RENDER = {"piano": render_piano_note, "bass": render_bass_note}


def _section_notes(rng: CounterRng, inst: str, start_ms: int, end_ms: int, pitches) -> list:
    lo, hi = _NOTE_MS[inst]
    notes = []
    t = start_ms
    while t < end_ms:
        dur = rng.integers(lo, hi + 1)
        stop = min(end_ms, t + dur)
        if end_ms - stop < 80:
            stop = end_ms
        notes.append(Note(t, stop, rng.choice(pitches), rng.integers(60, 101)))
        t = stop
    return notes


def synth_music_clip(spec: ClipSpec, clip_id: str = "") -> LabeledClip:
    """Render a clip from its spec; bit-identical output for equal specs."""
    durs = plan_sections(spec)
    sr = spec.sample_rate
    samples_per_ms = sr / 1000.0
    bounds = np.concatenate([[0], np.cumsum(durs)]) * FRAME_MS  # ms
    n_samples = int(round(bounds[-1] * samples_per_ms))
    pitch_sets = _pitch_sets(spec.timbre_distance)
    tracks = {inst: [] for inst in INSTRUMENTS}
    mono = {inst: np.zeros(n_samples) for inst in INSTRUMENTS}
    for i, unit in enumerate(spec.section_order):
        for inst in INSTRUMENTS:
            if unit not in (inst, "mixture"):
                continue
            rng = CounterRng(spec.seed, "notes", inst, i)
            notes = _section_notes(rng, inst, int(bounds[i]), int(bounds[i + 1]), pitch_sets[inst])
            for note in notes:
                a = int(round(note.onset * samples_per_ms))
                b = int(round(note.offset * samples_per_ms))
                mono[inst][a:b] += _RENDER[inst](b - a, sr, note.pitch, note.velocity, spec.timbre_distance)
            tracks[inst].extend(notes)

    stems = {}
    pan_rng = CounterRng(spec.seed, "pan")
    for inst in INSTRUMENTS:
        if spec.stereo:
            centre = -0.35 if inst == "piano" else 0.35
            pan = centre + pan_rng.uniform(-0.25, 0.25)
            theta = (pan + 1.0) * np.pi / 4.0
            stems[inst] = Waveform(np.stack([np.cos(theta) * mono[inst], np.sin(theta) * mono[inst]]), sr)
        else:
            stems[inst] = Waveform(mono[inst], sr)
    mixture = Waveform(stems["piano"].samples + stems["bass"].samples, sr)
    segs = [(u, int(bounds[i] // FRAME_MS), int(bounds[i + 1] // FRAME_MS))
            for i, u in enumerate(spec.section_order)]
    score = Score({inst: sorted(tracks[inst]) for inst in INSTRUMENTS}, TICKS_PER_QUARTER, [(0, TEMPO)])
    return LabeledClip(mixture, stems, UnitTimeline(segs, FRAME_MS), score, spec, clip_id)


def iter_music_corpus(n_clips: int, seed: int, sample_rate: int = 44100, timbre_distance: float = 1.0,
                      prefix: str = "clip", keep_stems: bool = True):
    """Clips one at a time; ``keep_stems=False`` discards the stems to save memory."""
    for i in range(n_clips):
        clip_seed = CounterRng(seed, "corpus", prefix).child(i).key
        spec = random_clip_spec(clip_seed, sample_rate, timbre_distance)
        clip = synth_music_clip(spec, f"{prefix}{i:04d}")
        yield clip if keep_stems else replace(clip, stems={})


def music_corpus(n_clips: int, seed: int, sample_rate: int = 44100, timbre_distance: float = 1.0,
                 prefix: str = "clip", keep_stems: bool = True) -> list:
    return list(iter_music_corpus(n_clips, seed, sample_rate, timbre_distance, prefix, keep_stems))


# -- cinematic ------------------------------------------------------------------

CINEMATIC_CATEGORIES = ("speech", "music", "sfx")


@dataclass
class ActivityPlan:
    """Active intervals in seconds. Speech tags: dialog/nonverbal; sfx tags: foreground/background."""

    speech: list = field(default_factory=list)
    music: list = field(default_factory=list)
    sfx: list = field(default_factory=list)

    def validate(self):
        for start, end, tag in self.speech:
            if tag not in ("dialog", "nonverbal"):
                raise PlanError(f"speech tag must be dialog or nonverbal, got {tag!r}")
        for start, end, tag in self.sfx:
            if tag not in ("foreground", "background"):
                raise PlanError(f"sfx tag must be foreground or background, got {tag!r}")
        for start, end, *_ in self.speech + self.music + self.sfx:
            if end <= start:
                raise PlanError(f"interval ({start}, {end}) is empty")

    def leaf_intervals(self) -> dict:
        leaves = {"dialog": [], "nonverbal": [], "music": [], "fg_sfx": [], "bg_sfx": []}
        for s, e, tag in self.speech:
            leaves[tag].append((s, e))
        for iv in self.music:
            leaves["music"].append((iv[0], iv[1]))
        for s, e, tag in self.sfx:
            leaves["fg_sfx" if tag == "foreground" else "bg_sfx"].append((s, e))
        return {k: merge_intervals(v) for k, v in leaves.items()}

    def to_dict(self) -> dict:
        return {"speech": [list(x) for x in self.speech], "music": [list(x) for x in self.music],
                "sfx": [list(x) for x in self.sfx]}


def merge_intervals(intervals) -> list:
    out = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


@dataclass
class CinematicClip:
    mixture: Waveform
    stems: dict
    activity: np.ndarray  # (n_frames, 7) in knowledge.BITS order
    plan: ActivityPlan
    clip_id: str = ""


def random_activity_plan(seed: int, duration_s: float, on_s=(0.5, 2.0), off_s=(1.5, 4.0)) -> ActivityPlan:
    """Alternating on/off runs per category; every category gets at least one interval.

    Run lengths are uniform on ``on_s`` and gaps uniform on ``off_s`` seconds.
    """
    plan = ActivityPlan()
    for cat in CINEMATIC_CATEGORIES:
        rng = CounterRng(seed, "plan", cat)
        t = rng.uniform(0.0, 1.5)
        while True:
            length = rng.uniform(*on_s)
            end = min(duration_s, t + length)
            if end - t >= 0.3:
                s, e = round(t, 2), round(end, 2)
                if cat == "speech":
                    plan.speech.append((s, e, "dialog" if rng.uniform() < 0.7 else "nonverbal"))
                elif cat == "music":
                    plan.music.append((s, e))
                else:
                    plan.sfx.append((s, e, "foreground" if rng.uniform() < 0.5 else "background"))
            t = end + rng.uniform(*off_s)
            if t >= duration_s - 0.3:
                break
    return plan


def _filtered_noise(rng: CounterRng, n: int, sr: int, centre: float, width: float) -> np.ndarray:
    noise = rng.normal(size=n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec *= np.exp(-0.5 * ((freqs - centre) / width) ** 2)
    y = np.fft.irfft(spec, n=n)
    peak = np.max(np.abs(y)) if n else 0.0
    return y / peak if peak > 0 else y


def _render_voice(rng: CounterRng, n: int, sr: int, nonverbal: bool) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(300.0, 480.0) if nonverbal else rng.uniform(100.0, 220.0)
    contour = f0 * (1.0 + 0.03 * np.sin(2 * np.pi * 5.0 * t) + 0.05 * np.sin(2 * np.pi * 0.7 * t))
    phase = 2 * np.pi * np.cumsum(contour) / sr
    formants = [rng.uniform(400, 900), rng.uniform(1100, 2000), rng.uniform(2300, 3200)]
    y = np.zeros(n)
    for k in range(1, 40):
        fk = k * f0
        if fk > 5000:
            break
        gain = sum(np.exp(-0.5 * ((fk - F) / 120.0) ** 2) for F in formants) + 0.03
        y += gain * np.sin(k * phase) / np.sqrt(k)
    syllable = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t)
    y *= syllable
    if nonverbal:
        y += 0.3 * _filtered_noise(rng, n, sr, 2500.0, 1200.0)
    peak = np.max(np.abs(y)) or 1.0
    return 0.25 * y / peak * _ramp(n, int(0.02 * sr)) * _ramp(n, int(0.02 * sr))[::-1]


def _render_music(rng: CounterRng, n: int, sr: int) -> np.ndarray:
    y = np.zeros(n)
    chord_len = int(1.5 * sr)
    for start in range(0, n, chord_len):
        stop = min(n, start + chord_len)
        m = stop - start
        t = np.arange(m) / sr
        root = rng.integers(48, 60)
        seg = np.zeros(m)
        for interval in (0, 4, 7):
            f = _midi_hz(root + interval)
            for k in range(1, 6):
                seg += np.sin(2 * np.pi * k * f * t) / k
        y[start:stop] = seg * _ramp(m, int(0.05 * sr)) * _ramp(m, int(0.05 * sr))[::-1]
    return 0.05 * y


def _render_sfx(rng: CounterRng, n: int, sr: int, foreground: bool) -> np.ndarray:
    if not foreground:
        return 0.08 * _filtered_noise(rng, n, sr, 300.0, 400.0)
    y = np.zeros(n)
    pos = 0
    while pos < n:
        length = min(n - pos, int(rng.uniform(0.2, 0.6) * sr))
        burst = _filtered_noise(rng, length, sr, rng.uniform(2000.0, 6000.0), 800.0)
        burst *= np.exp(-np.arange(length) / (0.12 * sr))
        y[pos:pos + length] += burst
        pos += length
    return 0.3 * y * _ramp(n, int(0.005 * sr))


def synth_cinematic_clip(seed: int, duration_s: float, plan: ActivityPlan, sample_rate: int = 44100,
                         clip_id: str = "") -> CinematicClip:
    """Render speech, music and sfx stems under ``plan``; mono output."""
    plan.validate()
    sr = sample_rate
    n = int(round(duration_s * sr))
    n_frames = int(round(duration_s * 1000 / FRAME_MS))
    leaves = plan.leaf_intervals()
    stems = {c: np.zeros(n) for c in CINEMATIC_CATEGORIES}
    for leaf, intervals in leaves.items():
        for j, (s, e) in enumerate(intervals):
            a, b = int(round(s * sr)), min(n, int(round(e * sr)))
            if b <= a:
                continue
            rng = CounterRng(seed, "render", leaf, j)
            if leaf in ("dialog", "nonverbal"):
                stems["speech"][a:b] += _render_voice(rng, b - a, sr, leaf == "nonverbal")
            elif leaf == "music":
                stems["music"][a:b] += _render_music(rng, b - a, sr)
            else:
                stems["sfx"][a:b] += _render_sfx(rng, b - a, sr, leaf == "fg_sfx")
    leaf_frames = np.stack([frame_activity(np.array(leaves[k], dtype=np.float64).reshape(-1, 2),
                                           n_frames, FRAME_MS)
                            for k in ("dialog", "nonverbal", "music", "fg_sfx", "bg_sfx")], axis=1)
    activity = activity_frames_from_leaves(leaf_frames.astype(np.int8))
    stem_waves = {c: Waveform(stems[c], sr) for c in CINEMATIC_CATEGORIES}
    mixture = Waveform(stems["speech"] + stems["music"] + stems["sfx"], sr)
    return CinematicClip(mixture, stem_waves, activity, plan, clip_id)


def iter_cinematic_corpus(n_clips: int, seed: int, duration_s: float = 10.0, sample_rate: int = 44100,
                          prefix: str = "cine", on_s=(0.5, 2.0), off_s=(1.5, 4.0)):
    for i in range(n_clips):
        clip_seed = CounterRng(seed, "corpus", prefix).child(i).key
        plan = random_activity_plan(clip_seed, duration_s, on_s, off_s)
        yield synth_cinematic_clip(clip_seed, duration_s, plan, sample_rate, f"{prefix}{i:04d}")


def cinematic_corpus(n_clips: int, seed: int, duration_s: float = 10.0, sample_rate: int = 44100,
                     prefix: str = "cine", on_s=(0.5, 2.0), off_s=(1.5, 4.0)) -> list:
    return list(iter_cinematic_corpus(n_clips, seed, duration_s, sample_rate, prefix, on_s, off_s))

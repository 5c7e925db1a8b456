import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoreseg.dsp import StftConfig, Waveform, stft_frame_spans
from scoreseg.score import UnitTimeline
from scoreseg.separator import (
    TemplateModel,
    gate_frames,
    kl_divergence,
    learn_templates,
    nmf_kl,
    separate,
    separate_with_activity,
    timeline_activity,
    wiener_masks,
)

SMALL = StftConfig(512, 128, "hamming")


def test_kl_divergence_by_hand():
    V = np.array([[1.0, 0.0], [2.0, 3.0]])
    WH = np.array([[2.0, 1.0], [2.0, 1.0]])
    expected = (1 * np.log(1 / 2) - 1 + 2) + (0 - 0 + 1) + (0 - 2 + 2) + (3 * np.log(3) - 3 + 1)
    assert kl_divergence(V, WH) == pytest.approx(expected, abs=1e-12)


def test_rank_one_problem_is_recovered():
    rng = np.random.default_rng(0)
    V = np.outer(rng.uniform(0.5, 2, 30), rng.uniform(0.5, 2, 40))
    W0 = rng.uniform(0.1, 1, (30, 1))
    H0 = rng.uniform(0.1, 1, (1, 40))
    W, H, losses = nmf_kl(V, W0, H0, 300)
    assert losses[-1] < 1e-6 * V.sum()
    assert np.allclose(W @ H, V, rtol=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_nmf_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    F, T, K = rng.integers(3, 30), rng.integers(3, 30), rng.integers(1, 6)
    V = rng.gamma(1.0, 1.0, size=(F, T)) * (rng.uniform(size=(F, T)) > 0.2)
    _, _, losses = nmf_kl(V, rng.uniform(0.1, 1, (F, K)), rng.uniform(0.1, 1, (K, T)), 100)
    assert len(losses) == 101
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(losses, losses[1:]))


def test_zero_activations_stay_zero():
    rng = np.random.default_rng(1)
    V = rng.uniform(size=(8, 10))
    H = rng.uniform(size=(3, 10))
    H[1, 4:] = 0.0
    _, H2, _ = nmf_kl(V, rng.uniform(size=(8, 3)), H, 20, update_w=False)
    assert np.all(H2[1, 4:] == 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_masks_partition_active_bins(seed):
    rng = np.random.default_rng(seed)
    n_src, F, T = rng.integers(1, 4), 6, 9
    models = rng.uniform(size=(n_src, F, T)) * (rng.uniform(size=(n_src, F, T)) > 0.3)
    active = rng.uniform(size=(n_src, T)) > 0.4
    masks = wiener_masks(models, active)
    total = masks.sum(axis=0)
    any_active = active.any(axis=0)
    assert np.all(np.abs(total[:, any_active] - 1.0) <= 1e-9)
    assert np.all(total[:, ~any_active] == 0.0)
    assert np.all(masks[~np.repeat(active[:, None, :], F, axis=1)] == 0.0)


def test_gate_frames_matches_span_overlap():
    rng = np.random.default_rng(2)
    K, sr = 57, 8000
    act = rng.uniform(size=(2, K)) > 0.6
    n_frames = 12
    got = gate_frames(act, n_frames, SMALL, sr)
    start, stop = stft_frame_spans(n_frames, SMALL)
    per = sr * 10 / 1000
    for j in range(n_frames):
        ks = [k for k in range(K) if k * per < stop[j] and (k + 1) * per > start[j]] or [K - 1]
        assert got[:, j].tolist() == act[:, ks].any(axis=1).tolist()


def _toy_templates(sr=8000):
    t = np.arange(sr) / sr
    low = Waveform(np.sin(2 * np.pi * 200 * t), sr)
    high = Waveform(np.sin(2 * np.pi * 2000 * t), sr)
    return learn_templates({"bass": [low], "piano": [high]}, n_bases=2, n_iter=30, cfg=SMALL), low, high


def test_stems_sum_to_mixture_without_knowledge():
    tm, low, high = _toy_templates()
    mix = Waveform(low.samples + high.samples, 8000)
    out = separate(mix, None, tm, fit_iter=20)
    total = sum(w.samples for w in out.stems.values())
    assert np.linalg.norm(total - mix.samples) <= 1e-6 * np.linalg.norm(mix.samples)


def test_single_active_source_receives_whole_mixture():
    tm, low, high = _toy_templates()
    mix = Waveform(low.samples + high.samples, 8000)
    K = 100
    act = np.zeros((2, K), dtype=bool)
    act[tm.sources.index("piano")] = True
    out = separate_with_activity(mix, act, tm, fit_iter=5)
    assert np.allclose(out.stems["piano"].samples, mix.samples, atol=1e-9)
    assert np.all(out.stems["bass"].samples == 0.0)


def test_silence_knowledge_routes_nothing():
    tm, low, high = _toy_templates()
    out = separate(low, UnitTimeline([("silence", 0, 100)]), tm, fit_iter=5)
    assert all(np.all(w.samples == 0.0) for w in out.stems.values())


def test_timeline_activity_mapping():
    tl = UnitTimeline([("silence", 0, 2), ("piano", 2, 4), ("mixture", 4, 5), ("bass", 5, 6)])
    act = timeline_activity(tl, ["piano", "bass"])
    assert act.astype(int).tolist() == [[0, 0, 1, 1, 1, 0], [0, 0, 0, 0, 1, 1]]
    with pytest.raises(ValueError, match="unknown source"):
        timeline_activity(UnitTimeline([("drums", 0, 3)]), ["piano", "bass"])


def test_templates_are_normalised_and_persist(tmp_path):
    tm, _, _ = _toy_templates()
    for W in tm.bases.values():
        assert np.allclose(W.sum(axis=0), 1.0)
    path = tmp_path / "tm.npz"
    tm.save(path)
    back = TemplateModel.load(path)
    assert back.sources == tm.sources and back.stft == tm.stft
    assert all(np.array_equal(back.bases[s], tm.bases[s]) for s in tm.sources)


def test_sample_rate_mismatch():
    tm, low, _ = _toy_templates()
    with pytest.raises(ValueError, match="Hz"):
        separate(Waveform(low.samples, 16000), None, tm)


def test_source_without_segments_rejected():
    with pytest.raises(ValueError, match="no solo segments"):
        learn_templates({"piano": []})

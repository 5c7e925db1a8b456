import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoreseg.dsp import (
    FeatureSequence,
    StftConfig,
    Waveform,
    append_deltas,
    dct_matrix,
    filterbank_energies,
    frame_signal,
    is_cola,
    istft,
    mfcc,
    mfcc39,
    n_frames_for,
    resample_linear,
    stft,
)


def test_waveform_invariants():
    w = Waveform(np.zeros((2, 10)), 8000)
    assert w.channels == 2 and w.n_samples == 10
    with pytest.raises(ValueError):
        Waveform(np.zeros(10), 0)
    with pytest.raises(ValueError):
        Waveform(np.zeros((2, 3, 4)), 8000)


@pytest.mark.parametrize("n, win, hop, expected", [
    (400, 400, 160, 1),
    (720, 400, 160, 3),
    (16000, 400, 160, 98),
    (399, 400, 160, 0),
    (0, 400, 160, 0),
])
def test_frame_counts(n, win, hop, expected):
    assert frame_signal(np.arange(n, dtype=float), win, hop).shape == (expected, win)


def test_frame_contents():
    x = np.arange(720, dtype=float)
    frames = frame_signal(x, 400, 160)
    for i, fr in enumerate(frames):
        assert np.array_equal(fr, x[i * 160:i * 160 + 400])


def test_frame_rejects_bad_sizes():
    with pytest.raises(ValueError):
        frame_signal(np.zeros(10), 0, 1)


@given(st.integers(1, 5000), st.integers(1, 600), st.integers(1, 300))
def test_frame_count_formula(n, win, hop):
    frames = frame_signal(np.zeros(n), win, hop)
    expected = (n - win) // hop + 1 if n >= win else 0
    assert len(frames) == expected == n_frames_for(n, win, hop)


def test_dct_matches_direct_summation():
    x = np.array([0.3, -1.2, 2.5, 0.0, 4.1, -0.7, 1.9, 3.3])
    N = len(x)
    direct = np.zeros(N)
    for k in range(N):
        scale = np.sqrt(1.0 / N) if k == 0 else np.sqrt(2.0 / N)
        direct[k] = scale * sum(x[n] * np.cos(np.pi * k * (2 * n + 1) / (2 * N)) for n in range(N))
    assert np.allclose(dct_matrix(N, N) @ x, direct, atol=1e-9, rtol=0)


@given(st.integers(1, 40))
def test_dct_rows_orthonormal(n):
    D = dct_matrix(n, n)
    gram = D @ D.T
    assert np.max(np.abs(gram - np.eye(n))) < 1e-9


def test_mfcc_silence_is_finite_and_constant():
    f = mfcc(Waveform(np.zeros(16000), 16000))
    assert f.data.shape == (98, 13)
    assert np.all(np.isfinite(f.data))
    assert np.all(f.data == f.data[0])


def _oracle_band(freq, n_mels, rate):
    # triangle responses evaluated directly from mel-spaced edges
    edges_mel = np.linspace(0.0, 1127.0 * np.log(1 + (rate / 2) / 700.0), n_mels + 2)
    m = 1127.0 * np.log(1 + freq / 700.0)
    best, best_val = None, -1.0
    for b in range(n_mels):
        lo, mid, hi = (700.0 * (np.exp(edges_mel[b + i] / 1127.0) - 1) for i in range(3))
        val = (freq - lo) / (mid - lo) if freq <= mid else (hi - freq) / (hi - mid)
        if val > best_val:
            best, best_val = b, val
    del m
    return best


def test_tone_peaks_in_its_mel_band():
    rate = 16000
    t = np.arange(rate) / rate
    w = Waveform(np.sin(2 * np.pi * 440.0 * t), rate)
    energies, _ = filterbank_energies(w, n_mels=26, n_fft=2048)
    assert int(np.argmax(energies.mean(axis=0))) == _oracle_band(440.0, 26, rate)


def test_mfcc_requires_enough_mel_bands():
    with pytest.raises(ValueError):
        mfcc(Waveform(np.zeros(1000), 16000), n_static=13, n_mels=10)


def test_deltas_of_constant_track_are_zero():
    f = FeatureSequence(np.full((20, 13), 3.7))
    out = append_deltas(f)
    assert out.dim == 39
    assert np.all(out.data[:, 13:] == 0.0)


def test_delta_of_ramp_recovers_slope():
    slope = 0.25
    f = FeatureSequence(np.outer(np.arange(30) * slope, np.ones(13)))
    d = append_deltas(f, delta_window=2).data[:, 13:26]
    assert np.allclose(d[2:-2], slope, atol=1e-12)


def test_single_frame_deltas_zero():
    out = append_deltas(FeatureSequence(np.arange(13, dtype=float)[None, :]))
    assert np.all(out.data[:, 13:] == 0.0)


def test_append_deltas_rejects_empty():
    with pytest.raises(ValueError):
        append_deltas(FeatureSequence(np.zeros((0, 13))))


def test_mfcc39_shape():
    rng = np.random.default_rng(0)
    f = mfcc39(Waveform(rng.normal(size=(2, 44100)) * 0.1, 44100))
    assert f.dim == 39
    assert f.n_frames == n_frames_for(16000, 400, 160)


def test_resample_linear_keeps_length_ratio():
    w = Waveform(np.sin(np.arange(44100) * 0.01), 44100)
    r = resample_linear(w, 16000)
    assert r.n_samples == 16000
    assert np.isclose(r.samples[0, 5], np.interp(5 * 44100 / 16000, np.arange(44100), w.samples[0]))


def test_stft_zero_signal():
    tf = stft(Waveform(np.zeros(20000), 44100))
    assert np.all(tf == 0)


def test_stft_round_trip_white_noise():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 44100))
    cfg = StftConfig(4096, 1024, "hamming")
    y = istft(stft(Waveform(x, 44100), cfg), cfg, x.shape[1], 44100).samples
    assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-6


def test_non_cola_config_rejected():
    cfg = StftConfig(4096, 2048, "hamming")
    assert not is_cola(cfg)
    with pytest.raises(ValueError, match="overlap-add"):
        stft(Waveform(np.zeros(10000), 44100), cfg)


def test_parseval_per_frame():
    rng = np.random.default_rng(2)
    cfg = StftConfig(1024, 256, "hamming")
    x = rng.normal(size=8000)
    tf = stft(Waveform(x, 16000), cfg)[0]
    # frame energies computed independently from the padded signal
    pad = cfg.window_size - cfg.hop
    padded = np.zeros(cfg.window_size + (tf.shape[1] - 1) * cfg.hop)
    padded[pad:pad + len(x)] = x
    win = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(1024) / 1024)
    time_energy = np.array([np.sum((padded[i * 256:i * 256 + 1024] * win) ** 2) for i in range(tf.shape[1])])
    weights = np.full(tf.shape[0], 2.0)
    weights[0] = weights[-1] = 1.0
    spec_energy = (weights[:, None] * np.abs(tf) ** 2).sum(axis=0) / 1024
    assert np.allclose(time_energy, spec_energy, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(512, 128, "hamming"), (256, 64, "hann"), (256, 64, "hamming"), (128, 128, "rect"),
                        (4096, 1024, "hamming")]),
       st.integers(1, 20000), st.integers(0, 2 ** 31 - 1))
def test_stft_round_trip_property(cfg_args, n, seed):
    cfg = StftConfig(*cfg_args)
    x = np.random.default_rng(seed).normal(size=n)
    y = istft(stft(Waveform(x, 16000), cfg), cfg, n, 16000).samples[0]
    assert np.linalg.norm(y - x) <= 1e-6 * np.linalg.norm(x)

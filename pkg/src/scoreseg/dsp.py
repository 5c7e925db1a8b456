"""Framing, spectral analysis and MFCC features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-10
PRE_EMPHASIS = 0.97


@dataclass
class Waveform:
    """Multichannel audio; ``samples`` has shape ``(channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"samples must be (channels, n), got shape {x.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = x
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def mono(self) -> np.ndarray:
        """Channel-mean downmix."""
        return self.samples.mean(axis=0)

    def segment(self, start: int, stop: int) -> "Waveform":
        return Waveform(self.samples[:, start:stop].copy(), self.sample_rate)


@dataclass
class FeatureSequence:
    data: np.ndarray
    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D (frames, dim), got {data.shape}")
        self.data = data

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n_frames


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 4096
    hop: int = 1024
    window: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_size:
            raise ValueError(f"need 0 < hop <= window_size, got hop={self.hop}, window={self.window_size}")


def get_window(name: str, n: int) -> np.ndarray:
    """Periodic taper of length ``n``."""
    k = np.arange(n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)
    if name in ("hann", "hanning"):
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)
    if name in ("rect", "boxcar", "rectangular"):
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def n_frames_for(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def frame_signal(x, win: int, hop: int) -> np.ndarray:
    """Split a mono signal into ``(n_frames, win)``; frame i starts at ``i * hop``."""
    if win <= 0 or hop <= 0:
        raise ValueError(f"win and hop must be positive, got win={win}, hop={hop}")
    if isinstance(x, Waveform):
        x = x.mono()
    x = np.asarray(x, dtype=np.float64)
    n = n_frames_for(len(x), win, hop)
    if n == 0:
        return np.zeros((0, win))
    idx = np.arange(win)[np.newaxis, :] + hop * np.arange(n)[:, np.newaxis]
    return x[idx]


def resample_linear(w: Waveform, rate: int) -> Waveform:
    """Linear-interpolation resampling; no anti-alias filter."""
    if rate == w.sample_rate:
        return Waveform(w.samples.copy(), rate)
    n_out = int(np.floor(w.n_samples * rate / w.sample_rate))
    t_out = np.arange(n_out) * (w.sample_rate / rate)
    t_in = np.arange(w.n_samples, dtype=np.float64)
    out = np.stack([np.interp(t_out, t_in, ch) for ch in w.samples])
    return Waveform(out, rate)


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are the first ``n_out`` cosines."""
    k = np.arange(n_out)[:, np.newaxis]
    n = np.arange(n_in)[np.newaxis, :]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    basis[0] /= np.sqrt(2.0)
    return basis


def hz_to_mel(f):
    return 1127.0 * np.log1p(np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * np.expm1(np.asarray(m, dtype=np.float64) / 1127.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0, f_max=None) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, shape ``(n_mels, n_fft // 2 + 1)``."""
    f_max = sample_rate / 2.0 if f_max is None else f_max
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_band_centers(n_mels: int, sample_rate: int, f_min: float = 0.0, f_max=None) -> np.ndarray:
    f_max = sample_rate / 2.0 if f_max is None else f_max
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))[1:-1]


def filterbank_energies(w: Waveform, n_mels: int = 26, n_fft: int = 512,
                        frame_length_ms: float = 25.0, frame_shift_ms: float = 10.0):
    """Mel filterbank energies and the raw frames they came from."""
    win = int(round(w.sample_rate * frame_length_ms / 1000.0))
    hop = int(round(w.sample_rate * frame_shift_ms / 1000.0))
    if n_fft < win:
        raise ValueError(f"n_fft={n_fft} shorter than frame length {win}")
    frames = frame_signal(w.mono(), win, hop)
    emph = frames.copy()
    emph[:, 1:] -= PRE_EMPHASIS * frames[:, :-1]
    emph[:, 0] *= 1.0 - PRE_EMPHASIS
    spec = np.abs(np.fft.rfft(emph * get_window("hamming", win), n=n_fft, axis=1))
    return spec @ mel_filterbank(n_mels, n_fft, w.sample_rate).T, frames


def mfcc(w: Waveform, n_static: int = 13, n_mels: int = 26, n_fft: int = 512,
         frame_length_ms: float = 25.0, frame_shift_ms: float = 10.0) -> FeatureSequence:
    """Static MFCCs with coefficient 0 replaced by the log raw frame energy.

    Per frame: pre-emphasis, Hamming window, magnitude spectrum, mel
    filterbank, log with floor ``LOG_FLOOR``, orthonormal DCT-II.
    """
    if n_mels < n_static:
        raise ValueError(f"n_mels ({n_mels}) must be >= n_static ({n_static})")
    energies, frames = filterbank_energies(w, n_mels, n_fft, frame_length_ms, frame_shift_ms)
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = logmel @ dct_matrix(n_static, n_mels).T
    if len(frames):
        ceps[:, 0] = np.log(np.maximum((frames ** 2).sum(axis=1), LOG_FLOOR))
    return FeatureSequence(ceps, frame_shift_ms, frame_length_ms)


def deltas(x: np.ndarray, delta_window: int = 2) -> np.ndarray:
    """Regression deltas with edge replication."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return x.copy()
    padded = np.concatenate([np.repeat(x[:1], delta_window, axis=0), x,
                             np.repeat(x[-1:], delta_window, axis=0)])
    num = np.zeros_like(x)
    for k in range(1, delta_window + 1):
        num += k * (padded[delta_window + k:delta_window + k + n] - padded[delta_window - k:delta_window - k + n])
    return num / (2.0 * sum(k * k for k in range(1, delta_window + 1)))


def append_deltas(f: FeatureSequence, delta_window: int = 2) -> FeatureSequence:
    if f.n_frames == 0:
        raise ValueError("cannot append deltas to an empty feature sequence")
    d1 = deltas(f.data, delta_window)
    d2 = deltas(d1, delta_window)
    return FeatureSequence(np.hstack([f.data, d1, d2]), f.frame_shift_ms, f.frame_length_ms)


def mfcc39(w: Waveform, rate: int = 16000, **kwargs) -> FeatureSequence:
    """Mono downmix, resample to ``rate``, 13 MFCCs plus first and second deltas."""
    mono = Waveform(w.mono(), w.sample_rate)
    return append_deltas(mfcc(resample_linear(mono, rate), **kwargs))


# -- STFT ---------------------------------------------------------------------

def ola_weight(cfg: StftConfig) -> np.ndarray:
    """Sum of squared windows over one hop period."""
    w2 = get_window(cfg.window, cfg.window_size) ** 2
    acc = np.zeros(cfg.hop)
    for start in range(0, cfg.window_size, cfg.hop):
        chunk = w2[start:start + cfg.hop]
        acc[:len(chunk)] += chunk
    return acc


def is_cola(cfg: StftConfig, rtol: float = 1e-10) -> bool:
    acc = ola_weight(cfg)
    return bool(np.ptp(acc) <= rtol * np.max(acc))


def _check_cola(cfg: StftConfig):
    if not is_cola(cfg):
        raise ValueError(f"{cfg.window} window {cfg.window_size}/{cfg.hop} does not satisfy "
                         "constant overlap-add for squared windows")


def stft_pad(cfg: StftConfig) -> int:
    return cfg.window_size - cfg.hop


def stft_n_frames(n_samples: int, cfg: StftConfig) -> int:
    pad = stft_pad(cfg)
    total = n_samples + 2 * pad
    total += (-(total - cfg.window_size)) % cfg.hop
    return n_frames_for(total, cfg.window_size, cfg.hop)


def stft(w, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex spectrogram, shape ``(channels, n_bins, n_frames)``.

    The signal is zero-padded by ``window_size - hop`` on both sides so that
    every original sample lies under a full set of overlapping frames.
    """
    _check_cola(cfg)
    x = w.samples if isinstance(w, Waveform) else np.atleast_2d(np.asarray(w, dtype=np.float64))
    pad = stft_pad(cfg)
    n_frames = stft_n_frames(x.shape[1], cfg)
    total = cfg.window_size + (n_frames - 1) * cfg.hop
    window = get_window(cfg.window, cfg.window_size)
    out = []
    for ch in x:
        padded = np.zeros(total)
        padded[pad:pad + len(ch)] = ch
        frames = frame_signal(padded, cfg.window_size, cfg.hop)
        out.append(np.fft.rfft(frames * window, axis=1).T)
    return np.stack(out)


def istft(tf: np.ndarray, cfg: StftConfig, n_samples: int, sample_rate: int) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`."""
    _check_cola(cfg)
    tf = np.asarray(tf)
    if tf.ndim == 2:
        tf = tf[np.newaxis]
    n_frames = tf.shape[2]
    total = cfg.window_size + (n_frames - 1) * cfg.hop
    window = get_window(cfg.window, cfg.window_size)
    norm = np.zeros(total)
    for i in range(n_frames):
        norm[i * cfg.hop:i * cfg.hop + cfg.window_size] += window ** 2
    pad = stft_pad(cfg)
    out = []
    for spec in tf:
        frames = np.fft.irfft(spec.T, n=cfg.window_size, axis=1) * window
        acc = np.zeros(total)
        for i in range(n_frames):
            acc[i * cfg.hop:i * cfg.hop + cfg.window_size] += frames[i]
        with np.errstate(invalid="ignore", divide="ignore"):
            y = np.where(norm > 1e-12, acc / norm, 0.0)
        out.append(y[pad:pad + n_samples])
    return Waveform(np.stack(out), sample_rate)


def stft_frame_spans(n_frames: int, cfg: StftConfig):
    """Original-sample span ``[start, stop)`` covered by each STFT frame."""
    start = np.arange(n_frames) * cfg.hop - stft_pad(cfg)
    return start, start + cfg.window_size

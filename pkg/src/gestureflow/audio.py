"""20 fps log-mel spectrogram features, the motion model's only speech input.

One STFT hop per output frame (hop = sample_rate / frame_rate), Hann window,
triangular mel filterbank on mel(f) = 2595 * log10(1 + f / 700).
"""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # (N,) float in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioConfig:
    frame_rate: float = 20.0  # output frames per second
    n_mels: int = 27
    window_ms: float = 50.0
    f_min: float = 20.0
    f_max: float = 8000.0
    floor: float = 1e-10  # energy floor before the log
    power_spectrum: bool = True  # |stft|^2 if true, |stft| otherwise

    def to_dict(self):
        return {
            "frame_rate": self.frame_rate,
            "n_mels": self.n_mels,
            "window_ms": self.window_ms,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "floor": self.floor,
            "power_spectrum": self.power_spectrum,
        }


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) log energies
    frame_rate: float
    log_floor: float

    @property
    def n_mels(self):
        return self.frames.shape[1]

    @property
    def frame_count(self):
        return self.frames.shape[0]


def load_wav(path):
    """Read a WAV file (PCM16, PCM32, or float32; stereo is averaged to mono)."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: cannot read WAV file ({exc})") from exc
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, int(rate))


def save_wav(path, waveform):
    """Write PCM16 mono."""
    clipped = np.clip(waveform.samples, -1.0, 1.0)
    wavfile.write(path, waveform.sample_rate, (clipped * 32767.0).astype(np.int16))


def _frame_signal(samples, window_length, hop):
    """Reflect-pad by window_length // 2 on both ends and slice frames so that
    frame t covers the samples centered on t * hop; frame count is
    (len - window_length) // hop + 1 of the unpadded signal."""
    n = len(samples)
    if window_length < hop or hop <= 0:
        raise ConfigurationError("need window_length >= hop > 0")
    if n < window_length:
        raise DataError(
            f"audio too short: {n} samples < one {window_length}-sample window"
        )
    count = (n - window_length) // hop + 1
    pad = window_length // 2
    padded = np.pad(samples, pad, mode="reflect")
    idx = np.arange(count)[:, None] * hop + np.arange(window_length)[None, :]
    return padded[idx]


def stft(waveform, window_length, hop):
    """Hann-windowed complex spectrogram, shape (frames, window_length // 2 + 1)."""
    frames = _frame_signal(np.asarray(waveform.samples, dtype=np.float64), window_length, hop)
    window = get_window("hann", window_length, fftbins=True)
    return np.fft.rfft(frames * window, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft_bins, n_mels, sample_rate, f_min, f_max):
    """Triangular filters (n_mels, n_fft_bins) with centers equally spaced in mel."""
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ConfigurationError(
            f"need 0 <= f_min < f_max <= Nyquist, got [{f_min}, {f_max}] at {sample_rate} Hz"
        )
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.linspace(0.0, sample_rate / 2.0, n_fft_bins)
    bank = np.zeros((n_mels, n_fft_bins))
    for i in range(n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
        if bank[i].max() == 0.0:
            raise ConfigurationError(
                f"mel filter {i} is empty: n_mels={n_mels} too large for "
                f"{n_fft_bins} FFT bins"
            )
    return bank


def filter_centers(n_mels, f_min, f_max):
    """Center frequencies (Hz) of the filterbank rows."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    return edges[1:-1]


def mel_spectrogram(waveform, config=AudioConfig()):
    """Log-mel features at config.frame_rate frames per second."""
    sr = waveform.sample_rate
    hop = int(round(sr / config.frame_rate))
    window = int(round(sr * config.window_ms / 1000.0))
    spec = np.abs(stft(waveform, window, hop))
    if config.power_spectrum:
        spec = spec ** 2
    bank = mel_filterbank(spec.shape[1], config.n_mels, sr, config.f_min, config.f_max)
    mel = spec @ bank.T
    return MelSpectrogram(
        frames=np.log(np.maximum(mel, config.floor)),
        frame_rate=config.frame_rate,
        log_floor=float(np.log(config.floor)),
    )


def amplitude_envelope(waveform, config=AudioConfig()):
    """Per-frame RMS amplitude with the same framing as mel_spectrogram."""
    sr = waveform.sample_rate
    hop = int(round(sr / config.frame_rate))
    window = int(round(sr * config.window_ms / 1000.0))
    frames = _frame_signal(np.asarray(waveform.samples, dtype=np.float64), window, hop)
    return np.sqrt(np.mean(frames ** 2, axis=1))

"""STFT analysis/synthesis and the magnitude-compressed representation.

Spectrogram data always has shape ``(frames, bins, channels)``. Frames are
centred: the waveform is zero-padded by ``fft_size // 2`` on both sides, so
frame ``l`` is centred on sample ``l * hop_size``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainMismatchError, InvalidConfigError, InvalidInputError

MAG_FLOOR = 1e-10

STFT = "stft"
COMPRESSIVE = "compressive"


@dataclass(frozen=True)
class StftParams:
    fft_size: int = 512
    hop_size: int = 128
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.window != "sqrt_hann":
            raise InvalidConfigError(f"unsupported window {self.window!r}")
        if self.fft_size <= 0 or self.hop_size <= 0:
            raise InvalidConfigError("fft_size and hop_size must be positive")
        if self.fft_size % self.hop_size:
            raise InvalidConfigError("fft_size must be divisible by hop_size")
        if 2 * self.hop_size > self.fft_size:
            raise InvalidConfigError("hop_size must not exceed fft_size / 2")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples):
        return 1 + -(-max(n_samples, 1) // self.hop_size)


# Settings used by the multichannel Wiener filter baseline.
MCWF_STFT = StftParams(256, 64)


@dataclass
class Spectrogram:
    """Complex STFT values plus the bookkeeping needed to invert them.

    ``length`` is the number of waveform samples seen at analysis time;
    ``domain`` is ``"stft"`` for raw values or ``"compressive"`` after
    :func:`compress`.
    """

    data: np.ndarray
    params: StftParams = StftParams()
    domain: str = STFT
    length: int | None = None

    @property
    def n_channels(self):
        return self.data.shape[-1]

    def channel(self, c):
        return self.data[..., c]


def sqrt_hann(n):
    """Periodic square-root Hann window of length ``n``."""
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))


def _as_2d_wave(wave):
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim == 1:
        wave = wave[:, None]
    if wave.ndim != 2:
        raise InvalidInputError(f"waveform must be 1-D or (samples, channels), got {wave.shape}")
    if not np.all(np.isfinite(wave)):
        raise InvalidInputError("waveform contains non-finite samples")
    return wave


def stft(wave, params=StftParams()):
    """Centred one-sided STFT of a ``(samples,)`` or ``(samples, channels)`` array."""
    wave = _as_2d_wave(wave)
    n, n_ch = wave.shape
    fft, hop = params.fft_size, params.hop_size
    n_frames = params.n_frames(n)
    padded_len = (n_frames - 1) * hop + fft
    padded = np.zeros((padded_len, n_ch))
    padded[fft // 2:fft // 2 + n] = wave

    idx = np.arange(n_frames)[:, None] * hop + np.arange(fft)[None, :]
    frames = padded[idx] * sqrt_hann(fft)[None, :, None]  # (L, fft, C)
    data = np.fft.rfft(frames, axis=1)
    return Spectrogram(data, params, STFT, n)


def istft(spec, params=None, length=None):
    """Weighted overlap-add inverse of :func:`stft`; returns ``(samples, channels)``."""
    if spec.domain != STFT:
        raise DomainMismatchError("istft expects a raw STFT spectrogram, not compressive values")
    params = params or spec.params
    data = np.asarray(spec.data)
    if data.ndim == 2:
        data = data[..., None]
    n_frames, n_bins, n_ch = data.shape
    if n_bins != params.n_bins:
        raise InvalidInputError(f"expected {params.n_bins} bins, got {n_bins}")
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("spectrogram contains non-finite values")
    fft, hop = params.fft_size, params.hop_size
    win = sqrt_hann(fft)

    frames = np.fft.irfft(data, n=fft, axis=1) * win[None, :, None]
    padded_len = (n_frames - 1) * hop + fft
    out = np.zeros((padded_len, n_ch))
    envelope = np.zeros(padded_len)
    for m in range(n_frames):
        out[m * hop:m * hop + fft] += frames[m]
        envelope[m * hop:m * hop + fft] += win ** 2

    if length is None:
        length = spec.length if spec.length is not None else padded_len - fft
    start = fft // 2
    out = out[start:start + length]
    env = envelope[start:start + length]
    # the envelope only vanishes in padding that never carries signal
    out /= np.where(env > 1e-12, env, 1.0)[:, None]
    if out.shape[0] < length:
        out = np.concatenate([out, np.zeros((length - out.shape[0], n_ch))])
    return out


def _compress_values(x):
    x = np.asarray(x)
    return x / np.sqrt(np.maximum(np.abs(x), MAG_FLOOR))


def _decompress_values(x):
    x = np.asarray(x)
    return x * np.abs(x)


def compress(spec):
    """Map each value x to ``|x|**0.5 * exp(j*angle(x))``.

    Accepts a :class:`Spectrogram` (domain-checked) or a bare complex array.
    """
    if isinstance(spec, Spectrogram):
        if spec.domain != STFT:
            raise DomainMismatchError("compress expects raw STFT values")
        return replace(spec, data=_compress_values(spec.data), domain=COMPRESSIVE)
    return _compress_values(spec)


def decompress(spec):
    """Inverse of :func:`compress`: ``x' -> |x'|**2 * exp(j*angle(x'))``."""
    if isinstance(spec, Spectrogram):
        if spec.domain != COMPRESSIVE:
            raise DomainMismatchError("decompress expects compressive-domain values")
        return replace(spec, data=_decompress_values(spec.data), domain=STFT)
    return _decompress_values(spec)


def decompress_vjp(x_prime, cotangent):
    """Pull a cotangent back through :func:`decompress`.

    Complex numbers are treated as (real, imag) pairs. At ``x' = a + jb`` with
    ``r = |x'|`` the Jacobian is ``r*I + (1/r) [a, b]^T [a, b]``, which is
    symmetric, so the VJP is that matrix applied to the cotangent.
    """
    if isinstance(x_prime, Spectrogram):
        if x_prime.domain != COMPRESSIVE:
            raise DomainMismatchError("decompress_vjp expects compressive-domain values")
        cot = cotangent.data if isinstance(cotangent, Spectrogram) else cotangent
        return replace(x_prime, data=decompress_vjp(x_prime.data, cot))
    x = np.asarray(x_prime)
    g = np.asarray(cotangent)
    if x.shape != g.shape:
        raise InvalidInputError(f"shape mismatch {x.shape} vs {g.shape}")
    r = np.maximum(np.abs(x), MAG_FLOOR)
    proj = (x.real * g.real + x.imag * g.imag) / r
    return r * g + proj * x

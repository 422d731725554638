import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcrefine.errors import DomainMismatchError, InvalidConfigError, InvalidInputError
from mcrefine.spectral import (
    MAG_FLOOR, Spectrogram, StftParams, compress, decompress, decompress_vjp, istft, sqrt_hann, stft,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dense_dft(frame):
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    return np.exp(-2j * np.pi * k * np.arange(n)[None, :] / n) @ frame


def dense_irdft(spec, n):
    k = np.arange(1, n // 2)
    t = np.arange(n)
    x = spec[0].real + spec[n // 2].real * (-1.0) ** t
    x = x + 2 * np.real(np.exp(2j * np.pi * k[None, :] * t[:, None] / n) @ spec[1:n // 2])
    return x / n


def test_zero_wave_gives_zero_spectrogram():
    spec = stft(np.zeros(64000))
    assert spec.data.shape == (1 + 64000 // 128, 257, 1)
    assert not np.any(spec.data)


def test_sinusoid_matches_dense_dft_and_concentrates():
    p = StftParams()
    n = 4096
    b = 20
    wave = np.cos(2 * np.pi * b * np.arange(n) / p.fft_size + 0.3)
    spec = stft(wave, p).data[..., 0]
    padded = np.concatenate([np.zeros(256), wave, np.zeros(p.fft_size)])
    win = sqrt_hann(p.fft_size)
    for m in range(2, spec.shape[0] - 4):
        frame = padded[m * p.hop_size:m * p.hop_size + p.fft_size] * win
        np.testing.assert_allclose(spec[m], dense_dft(frame), atol=1e-9)
        power = np.abs(spec[m]) ** 2
        assert np.argmax(power) == b
        assert power[b - 1:b + 2].sum() > 0.99 * power.sum()


@pytest.mark.parametrize("params", [StftParams(512, 128), StftParams(256, 64)])
@pytest.mark.parametrize("n", [64000, 1001, 300])
def test_round_trip(params, n):
    w = np.random.default_rng(n).standard_normal((n, 2))
    back = istft(stft(w, params))
    assert back.shape == w.shape
    assert np.linalg.norm(back - w) / np.linalg.norm(w) < 1e-6


def test_istft_zero():
    p = StftParams()
    out = istft(Spectrogram(np.zeros((10, 257, 1), complex), p, "stft", 1000))
    assert out.shape == (1000, 1) and not np.any(out)


def test_single_frame_impulse_matches_dense_inverse():
    p = StftParams()
    rng = np.random.default_rng(3)
    L, m = 12, 5
    S = rng.standard_normal(257) + 1j * rng.standard_normal(257)
    S[0], S[-1] = S[0].real, S[-1].real
    data = np.zeros((L, 257, 1), complex)
    data[m, :, 0] = S
    length = (L - 1) * p.hop_size
    out = istft(Spectrogram(data, p, "stft", length))[:, 0]

    win = sqrt_hann(p.fft_size)
    env = np.zeros((L - 1) * p.hop_size + p.fft_size)
    for j in range(L):
        env[j * p.hop_size:j * p.hop_size + p.fft_size] += win ** 2
    expected = np.zeros_like(env)
    expected[m * p.hop_size:m * p.hop_size + p.fft_size] = dense_irdft(S, p.fft_size) * win
    expected = (expected / np.where(env > 0, env, 1))[256:256 + length]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_stft_is_linear():
    rng = np.random.default_rng(1)
    w1, w2 = rng.standard_normal((2, 5000))
    lhs = stft(2.5 * w1 - 0.7 * w2).data
    rhs = 2.5 * stft(w1).data - 0.7 * stft(w2).data
    assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(rhs).max()


def test_short_input_padded_to_a_frame():
    spec = stft(np.ones(10))
    assert spec.data.shape[0] == 2
    np.testing.assert_allclose(istft(spec)[:, 0], np.ones(10), atol=1e-12)


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        stft(np.array([0.0, np.nan, 1.0]))
    with pytest.raises(InvalidConfigError):
        StftParams(512, 300)
    with pytest.raises(InvalidConfigError):
        StftParams(512, 512)
    comp = compress(stft(np.ones(1000)))
    with pytest.raises(DomainMismatchError):
        istft(comp)
    with pytest.raises(DomainMismatchError):
        compress(comp)
    with pytest.raises(DomainMismatchError):
        decompress(stft(np.ones(1000)))


@pytest.mark.parametrize("x, expected", [(4 + 0j, 2 + 0j), (0j, 0j), (-9j, -3j)])
def test_compress_examples(x, expected):
    assert compress(np.array([x]))[0] == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("x, expected", [(2 + 0j, 4 + 0j), (1 + 1j, np.sqrt(2) * (1 + 1j))])
def test_decompress_examples(x, expected):
    assert decompress(np.array([x]))[0] == pytest.approx(expected, rel=1e-15)


def test_compress_tags_domain():
    spec = stft(np.random.default_rng(0).standard_normal(2000))
    comp = compress(spec)
    assert comp.domain == "compressive"
    back = decompress(comp)
    assert back.domain == "stft"
    np.testing.assert_allclose(back.data, spec.data, rtol=1e-9)


@given(finite, finite)
def test_compress_round_trip_and_phase(a, b):
    x = np.array([complex(a, b)])
    if abs(x[0]) <= MAG_FLOOR:
        return
    c = compress(x)
    assert abs(decompress(c)[0] - x[0]) <= 1e-9 * abs(x[0])
    assert abs(np.angle(c[0] / x[0])) < 1e-12
    assert abs(c[0]) == pytest.approx(np.sqrt(abs(x[0])), rel=1e-12)


def test_vjp_real_axis():
    r = 1.7
    assert decompress_vjp(np.array([r + 0j]), np.array([1 + 0j]))[0] == pytest.approx(2 * r)
    assert decompress_vjp(np.array([r + 0j]), np.array([0j]))[0] == 0


def _fd_vjp(x, g, h=1e-6):
    # <g, d decompress> along each real coordinate, central differences
    out = np.zeros_like(x)
    for i in range(x.size):
        for u in (1, 1j):
            e = np.zeros_like(x)
            e.flat[i] = u * h
            d = (decompress(x + e) - decompress(x - e)) / (2 * h)
            out.flat[i] += u * np.sum(g.real * d.real + g.imag * d.imag)
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vjp_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    g = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    vjp = decompress_vjp(x, g)
    fd = _fd_vjp(x, g)
    assert np.abs(vjp - fd).max() <= 1e-6 * np.abs(fd).max()


def test_vjp_spectrogram_wrapper():
    spec = compress(stft(np.random.default_rng(2).standard_normal(600)))
    cot = np.ones_like(spec.data)
    out = decompress_vjp(spec, cot)
    np.testing.assert_allclose(out.data, decompress_vjp(spec.data, cot))
    with pytest.raises(DomainMismatchError):
        decompress_vjp(stft(np.ones(600)), cot)

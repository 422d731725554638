import math

import numpy as np
import pytest

from helpers import cn
from mcrefine.errors import InvalidConfigError, InvalidInputError
from mcrefine.fcp import FcpParams, apply_filter, estimate_filter
from mcrefine.simulate import SI_SDR_CAP, TAP_DECAY, MixtureSpec, gen_mixture, make_benchmark, si_sdr


def test_noiseless_mixture_is_filtered_source():
    X = cn(np.random.default_rng(0), 30, 8)
    mix = gen_mixture(X, MixtureSpec(snr_db=math.inf, seed=1))
    np.testing.assert_array_equal(mix.Y, apply_filter(mix.H_true, X))
    assert not np.any(mix.N_true)
    assert mix.snr_db == math.inf


def test_white_noise_scm_is_isotropic():
    X = cn(np.random.default_rng(1), 50, 6)
    mix = gen_mixture(X, MixtureSpec(n_channels=3, noise="white", snr_db=5.0))
    sigma2 = mix.Phi_true[0, 0, 0].real
    assert sigma2 > 0
    np.testing.assert_allclose(mix.Phi_true, np.broadcast_to(sigma2 * np.eye(3), mix.Phi_true.shape), atol=0)


@pytest.mark.parametrize("noise", ["white", "diffuse"])
def test_sample_covariance_converges(noise):
    X = cn(np.random.default_rng(2), 4000, 3)
    mix = gen_mixture(X, MixtureSpec(n_channels=3, noise=noise, snr_db=0.0, seed=4))
    N = mix.N_true
    sample = np.einsum("lki,lkj->kij", N, N.conj()) / N.shape[0]
    for k in range(3):
        err = np.linalg.norm(sample[k] - mix.Phi_true[k]) / np.linalg.norm(mix.Phi_true[k])
        assert err < 0.05


def test_diffuse_scm_is_hermitian_positive_definite():
    X = cn(np.random.default_rng(3), 20, 5)
    phi = gen_mixture(X, MixtureSpec(n_channels=4, noise="diffuse")).Phi_true
    np.testing.assert_allclose(phi, np.conj(np.swapaxes(phi, -1, -2)), atol=0)
    assert np.all(np.linalg.eigvalsh(phi) > 0)


@pytest.mark.parametrize("snr", [-10.0, 0.0, 5.0, 17.3])
def test_reported_snr_matches_realised(snr):
    X = cn(np.random.default_rng(5), 100, 10)
    mix = gen_mixture(X, MixtureSpec(snr_db=snr, seed=9))
    realised = 10 * np.log10(np.sum(np.abs(mix.image[..., 0]) ** 2) / np.sum(np.abs(mix.N_true[..., 0]) ** 2))
    assert abs(realised - snr) < 0.01
    assert abs(mix.snr_db - snr) < 0.01


def test_tap_magnitudes_decay():
    X = cn(np.random.default_rng(6), 10, 200)
    H = gen_mixture(X, MixtureSpec(n_channels=4, n_taps=4, seed=2)).H_true
    power = np.mean(np.abs(H) ** 2, axis=(1, 2))
    np.testing.assert_allclose(power / power[0], TAP_DECAY ** (2 * np.arange(4)), rtol=0.2)


def test_noiseless_filter_is_recoverable():
    X = cn(np.random.default_rng(7), 80, 6)
    mix = gen_mixture(X, MixtureSpec(n_channels=3, n_taps=3, snr_db=math.inf, seed=8))
    H = estimate_filter(X, mix.Y, FcpParams(5))
    assert np.linalg.norm(H[:3] - mix.H_true) / np.linalg.norm(mix.H_true) < 1e-6
    assert np.abs(H[3:]).max() < 1e-6 * np.abs(mix.H_true).max()


def test_mixture_is_seeded():
    X = cn(np.random.default_rng(9), 10, 4)
    a = gen_mixture(X, MixtureSpec(seed=3))
    np.testing.assert_array_equal(a.Y, gen_mixture(X, MixtureSpec(seed=3)).Y)
    assert np.any(a.Y != gen_mixture(X, MixtureSpec(seed=4)).Y)


@pytest.mark.parametrize("kwargs", [dict(n_channels=0), dict(n_taps=0), dict(noise="pink"),
                                    dict(snr_db=math.nan), dict(snr_db=-math.inf)])
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidConfigError):
        MixtureSpec(**kwargs)


def test_non_finite_source_rejected():
    X = np.ones((3, 2), complex)
    X[1, 1] = np.inf
    with pytest.raises(InvalidInputError):
        gen_mixture(X)


def test_si_sdr_examples():
    ref = np.random.default_rng(10).standard_normal(1000)
    assert si_sdr(ref, ref) == SI_SDR_CAP
    assert si_sdr(3 * ref, ref) == SI_SDR_CAP
    noise = np.random.default_rng(11).standard_normal(1000)
    noise -= noise @ ref / (ref @ ref) * ref
    noise *= np.linalg.norm(ref) / np.linalg.norm(noise) / 10
    assert si_sdr(ref + noise, ref) == pytest.approx(20.0, abs=1e-9)


def test_si_sdr_scale_invariance():
    rng = np.random.default_rng(12)
    ref, est = rng.standard_normal((2, 500))
    base = si_sdr(est, ref)
    for a in (0.5, -2.0, 1e3):
        assert si_sdr(a * est, ref) == pytest.approx(base, rel=1e-12)


def test_si_sdr_errors_and_orthogonal_estimate():
    with pytest.raises(InvalidInputError):
        si_sdr(np.ones(4), np.zeros(4))
    with pytest.raises(InvalidInputError):
        si_sdr(np.ones(4), np.ones(5))
    assert si_sdr(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == -math.inf


def test_benchmark_is_peak_normalised_and_consistent():
    bench = make_benchmark(duration=0.25, seed=3)
    assert np.abs(bench.waveform(bench.X_tilde)).max() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(bench.Y, bench.mixture.image + bench.mixture.N_true, rtol=1e-12)
    np.testing.assert_allclose(bench.mixture.image, apply_filter(bench.mixture.H_true, bench.X),
                               atol=1e-12 * np.abs(bench.Y).max())
    clean = bench.waveform(bench.X)
    assert si_sdr(bench.waveform(bench.X_tilde), clean) == pytest.approx(10.0, abs=0.5)
    assert bench.Y.shape == (*bench.X.shape, 4)

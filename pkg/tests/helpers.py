"""Shared oracles and fixtures for the test suite."""

import numpy as np

from mcrefine.diffusion import GaussianDenoiser, make_schedule, tweedie_denoise
from mcrefine.fcp import FcpParams, apply_filter, estimate_filter
from mcrefine.guidance import log_likelihood
from mcrefine.noise_model import estimate_scm, invert_scm
from mcrefine.spectral import decompress


def cn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def tiny_instance(seed, L=4, K=3, C=2, n_taps=2):
    """Random guidance problem small enough for a full finite-difference sweep."""
    rng = np.random.default_rng(seed)
    sched = make_schedule()
    t = int(rng.integers(20, 400))
    den = GaussianDenoiser(cn(rng, L, K), rng.uniform(0.2, 1.0, (L, K)), sched)
    x = cn(rng, L, K)
    Y = cn(rng, L, K, C)
    phi_inv = invert_scm(estimate_scm(cn(rng, L, K, C), 0.5))
    return dict(x_t=x, denoiser=den, Y=Y, phi_inv=phi_inv, fcp=FcpParams(n_taps), t=t, sched=sched)


def frozen_objective(x_t, denoiser, Y, phi_inv, fcp, t, sched):
    """Log-likelihood as a function of the state, with the filter fitted once at ``x_t``."""
    def estimate(x):
        return decompress(tweedie_denoise(x, denoiser.predict_noise(x, t), t, sched))

    H = estimate_filter(estimate(x_t), Y, fcp)
    return lambda x: log_likelihood(Y - apply_filter(H, estimate(x)), phi_inv)


def fd_gradient(f, x, h=1e-5):
    """Central differences over every real component, packed as ``d/dRe + 1j d/dIm``."""
    grad = np.zeros_like(x, dtype=complex)
    for idx in np.ndindex(x.shape):
        for u in (1, 1j):
            e = np.zeros_like(x, dtype=complex)
            e[idx] = u * h
            grad[idx] += u * (f(x + e) - f(x - e)) / (2 * h)
    return grad


def componentwise_rel_error(G, fd):
    """Largest relative error over real components; tiny components are judged against the gradient scale."""
    a = np.concatenate([G.real.ravel(), G.imag.ravel()])
    b = np.concatenate([fd.real.ravel(), fd.imag.ravel()])
    scale = np.maximum(np.abs(b), 1e-4 * np.abs(b).max())
    return float(np.max(np.abs(a - b) / scale))


ACCEPTANCE_LINES = []


def verdict(number, ok, detail):
    """Record and print one acceptance line, then return ``ok`` for the caller to assert."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok

"""Likelihood score for noise-SCM guided posterior sampling.

Gradients treat complex numbers as (real, imag) pairs: the returned array
holds ``df/dRe + 1j * df/dIm``.
"""

import numpy as np

from .diffusion import tweedie_denoise
from .errors import InvalidConfigError, InvalidInputError
from .fcp import FcpParams, apply_filter_adjoint, estimate_filter, lag_matrix
from .spectral import decompress, decompress_vjp

EXACT_VJP = "exact_vjp"
TWEEDIE_IDENTITY = "tweedie_identity"
POLICIES = (EXACT_VJP, TWEEDIE_IDENTITY)


def resolve_policy(policy, denoiser):
    """Pick the Jacobian treatment for ``denoiser``; ``None`` means automatic."""
    if policy is None:
        return EXACT_VJP if getattr(denoiser, "has_vjp", False) else TWEEDIE_IDENTITY
    if policy not in POLICIES:
        raise InvalidConfigError(f"jacobian policy must be one of {POLICIES}, got {policy!r}")
    if policy == EXACT_VJP and not getattr(denoiser, "has_vjp", False):
        raise InvalidConfigError("exact_vjp needs a denoiser with an exact vjp")
    return policy


def check_hermitian(phi_inv, rtol=1e-8):
    phi_inv = np.asarray(phi_inv)
    if phi_inv.ndim != 4 or phi_inv.shape[-1] != phi_inv.shape[-2]:
        raise InvalidInputError(f"expected (L, K, C, C) matrices, got {phi_inv.shape}")
    skew = np.abs(phi_inv - np.conj(np.swapaxes(phi_inv, -1, -2))).max()
    if skew > rtol * max(np.abs(phi_inv).max(), 1e-300):
        raise InvalidInputError(f"noise precision matrices are not Hermitian (max skew {skew:.3g})")
    return phi_inv


def _quadratic(N, phi_inv):
    PN = np.einsum("lkij,lkj->lki", phi_inv, N)
    return -0.5 * np.real(np.sum(np.conj(N) * PN)), PN


def log_likelihood(N_hat, phi_inv):
    """``-1/2 * sum_{l,k} N^H phi_inv N`` with constants dropped."""
    N_hat = np.asarray(N_hat)
    phi_inv = check_hermitian(phi_inv)
    if N_hat.shape != phi_inv.shape[:3]:
        raise InvalidInputError(f"residual {N_hat.shape} does not match precision {phi_inv.shape}")
    return _quadratic(N_hat, phi_inv)[0]


def score_terms(x_t, denoiser, Y, phi_inv, fcp, t, sched, policy=None, eps_hat=None, weights=None):
    """Return ``(G, log_likelihood)`` at ``x_t``.

    The FCP filter is refitted at the one-step estimate but treated as a
    constant when differentiating. ``eps_hat`` and the FCP ``weights`` can be
    passed in when the caller already has them.
    """
    policy = resolve_policy(policy, denoiser)
    if eps_hat is None:
        eps_hat = denoiser.predict_noise(x_t, t)
    x0p = tweedie_denoise(x_t, eps_hat, t, sched)
    x0 = decompress(x0p)
    lags = lag_matrix(x0, fcp.n_taps)
    H = estimate_filter(x0, Y, fcp, weights=weights, lags=lags)
    N_hat = Y - np.transpose(lags @ np.transpose(H, (1, 0, 2)), (1, 0, 2))
    ll, PN = _quadratic(N_hat, phi_inv)

    g = decompress_vjp(x0p, apply_filter_adjoint(H, PN))
    ab = sched.alpha_bar[t - 1]
    if policy == EXACT_VJP:
        g = (g - np.sqrt(1.0 - ab) * denoiser.vjp(x_t, t, g)) / np.sqrt(ab)
    else:
        g = g / np.sqrt(ab)
    return g, ll


def likelihood_score(x_t, denoiser, Y, phi_inv, fcp=FcpParams(), t=1, sched=None, policy=None):
    """Gradient of the noise-SCM log-likelihood with respect to the compressive state."""
    if sched is None:
        raise InvalidInputError("a diffusion schedule is required")
    sched.check_step(t)
    phi_inv = check_hermitian(phi_inv)
    return score_terms(x_t, denoiser, Y, phi_inv, fcp, t, sched, policy)[0]


def apply_guidance(x_prev, G, t, xi, sched):
    """Likelihood step ``x_prev + xi * (1 - alpha_t) / sqrt(alpha_t) * G``."""
    if xi < 0:
        raise InvalidConfigError("guidance scale must be non-negative")
    a = sched.alpha[sched.check_step(t)]
    return x_prev + xi * (1.0 - a) / np.sqrt(a) * G

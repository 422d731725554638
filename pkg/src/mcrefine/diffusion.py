"""DDPM schedule, forward/reverse kernels and in-process denoisers.

Steps are 1-based: ``beta[t - 1]`` is the variance of step ``t`` and
``alpha_bar`` of step 0 is taken to be one. Complex states are diffused
component-wise, i.e. ``CN(0, 2I)`` noise has unit-variance real and
imaginary parts.
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

NOISE_COEFS = ("sigma2", "sigma")


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma2: np.ndarray

    @property
    def T(self):
        return len(self.beta)

    def check_step(self, t):
        if not 1 <= t <= self.T:
            raise InvalidInputError(f"diffusion step {t} outside [1, {self.T}]")
        return t - 1


def make_schedule(T=1000, beta_1=1e-4, beta_T=0.02):
    """Linear beta schedule from ``beta_1`` to ``beta_T`` over ``T`` steps."""
    if T < 2:
        raise InvalidConfigError("schedule needs at least two steps")
    if not 0 < beta_1 < beta_T < 1:
        raise InvalidConfigError(f"need 0 < beta_1 < beta_T < 1, got {beta_1}, {beta_T}")
    beta = np.linspace(beta_1, beta_T, T)
    beta[0], beta[-1] = beta_1, beta_T
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    sigma2 = (1.0 - prev) / (1.0 - alpha_bar) * beta
    return DiffusionSchedule(beta, alpha, alpha_bar, sigma2)


def complex_normal(rng, shape):
    """Draw ``CN(0, 2I)``: independent standard normal real and imaginary parts."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def forward_diffuse(x0, t, noise, sched):
    i = sched.check_step(t)
    ab = sched.alpha_bar[i]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def tweedie_denoise(x_t, eps_hat, t, sched):
    """One-step estimate of the clean state from ``x_t`` and predicted noise."""
    i = sched.check_step(t)
    ab = sched.alpha_bar[i]
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def reverse_step(x_t, eps_hat, t, z, sched, noise_coef="sigma2"):
    """Ancestral DDPM step from ``t`` to ``t - 1``.

    ``noise_coef="sigma2"`` scales ``z`` by the posterior variance itself;
    ``"sigma"`` uses its square root, the standard DDPM kernel. Only the
    latter reproduces the prior's spread when run from pure noise.
    """
    i = sched.check_step(t)
    a, ab = sched.alpha[i], sched.alpha_bar[i]
    if noise_coef == "sigma2":
        scale = sched.sigma2[i]
    elif noise_coef == "sigma":
        scale = np.sqrt(sched.sigma2[i])
    else:
        raise InvalidConfigError(f"noise_coef must be one of {NOISE_COEFS}, got {noise_coef!r}")
    mean = (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
    return mean + scale * z


class Denoiser(Protocol):
    """Noise predictor ``eps(x_t, t)`` on compressive-domain ``(L, K)`` states.

    ``vjp`` returns the cotangent pulled back through ``predict_noise``;
    implementations without an exact derivative set ``has_vjp = False``.
    """

    has_vjp: bool

    def predict_noise(self, x_t, t): ...

    def vjp(self, x_t, t, cotangent): ...


class GaussianDenoiser:
    """Exact MMSE noise predictor for a component-wise Gaussian prior.

    Each real and imaginary component of ``x0`` is independently
    ``N(mu, s2)``; ``s2`` is real and broadcastable to ``mu``. Its posterior
    mean is linear in ``x_t`` so the Jacobian is a per-bin scalar gain.
    """

    has_vjp = True

    def __init__(self, mu, s2, sched):
        self.mu = np.asarray(mu, dtype=np.complex128)
        self.s2 = np.broadcast_to(np.asarray(s2, dtype=np.float64), self.mu.shape)
        if np.any(self.s2 <= 0):
            raise InvalidConfigError("prior variance must be positive")
        self.sched = sched

    def posterior_mean(self, x_t, t):
        ab = self.sched.alpha_bar[self.sched.check_step(t)]
        den = ab * self.s2 + (1.0 - ab)
        return (self.s2 * np.sqrt(ab) * x_t + (1.0 - ab) * self.mu) / den

    def predict_noise(self, x_t, t):
        ab = self.sched.alpha_bar[self.sched.check_step(t)]
        return (x_t - np.sqrt(ab) * self.posterior_mean(x_t, t)) / np.sqrt(1.0 - ab)

    def gain(self, t):
        ab = self.sched.alpha_bar[self.sched.check_step(t)]
        return (1.0 - ab * self.s2 / (ab * self.s2 + 1.0 - ab)) / np.sqrt(1.0 - ab)

    def vjp(self, x_t, t, cotangent):
        return self.gain(t) * cotangent


class ZeroDenoiser:
    """Predicts zero noise everywhere (the flat-prior limit)."""

    has_vjp = True

    def predict_noise(self, x_t, t):
        return np.zeros_like(x_t)

    def vjp(self, x_t, t, cotangent):
        return np.zeros_like(cotangent)


def gaussian_analytic_denoiser(mu, s2, sched):
    return GaussianDenoiser(mu, s2, sched)

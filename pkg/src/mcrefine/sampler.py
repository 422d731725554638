"""Warm-started, noise-SCM guided DDPM refinement of a speech estimate."""

from dataclasses import dataclass, field

import numpy as np

from .diffusion import NOISE_COEFS, complex_normal, forward_diffuse, make_schedule, reverse_step
from .errors import InvalidConfigError, InvalidInputError, NonFiniteError
from .fcp import FcpParams, _as_multichannel, _as_single, align, fcp_weights
from .guidance import apply_guidance, check_hermitian, resolve_policy, score_terms
from .spectral import StftParams, compress, decompress


@dataclass
class RefineConfig:
    t_start: int = 300
    xi: float = 0.4
    scm_alpha: float = 0.95
    fcp: FcpParams = field(default_factory=FcpParams)
    align_eps: float = 1e-3
    seed: int = 0
    jacobian: str | None = None  # None: exact vjp when the denoiser has one
    noise_coef: str = "sigma2"
    stft: StftParams = field(default_factory=StftParams)

    def validate(self, sched):
        if not 1 <= self.t_start <= sched.T:
            raise InvalidConfigError(f"t_start must lie in [1, {sched.T}], got {self.t_start}")
        if self.xi < 0:
            raise InvalidConfigError("xi must be non-negative")
        if not 0 <= self.scm_alpha < 1:
            raise InvalidConfigError("scm_alpha must lie in [0, 1)")
        if self.noise_coef not in NOISE_COEFS:
            raise InvalidConfigError(f"noise_coef must be one of {NOISE_COEFS}")


@dataclass
class StepRecord:
    t: int
    log_likelihood: float
    grad_norm: float
    state_norm: float


def step_rng(seed, t):
    """Generator for diffusion step ``t``; ``t = 0`` seeds the initial noise."""
    return np.random.default_rng([seed, t])


def _finite(x, t, what):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(t, what)


def _run(Y, X_tilde, phi_inv, denoiser, cfg, sched, trace):
    Y = _as_multichannel(Y)
    X_tilde = _as_single(X_tilde)
    if Y.shape[:2] != X_tilde.shape:
        raise InvalidInputError(f"mixture {Y.shape} and estimate {X_tilde.shape} disagree on (L, K)")
    if np.shape(phi_inv)[:3] != Y.shape:
        raise InvalidInputError(f"noise precision {np.shape(phi_inv)} does not match mixture {Y.shape}")
    cfg.validate(sched)
    phi_inv = check_hermitian(phi_inv)
    policy = resolve_policy(cfg.jacobian, denoiser)
    weights = fcp_weights(Y, cfg.fcp.eps)
    need_score = cfg.xi > 0 or trace is not None

    x = forward_diffuse(compress(X_tilde), cfg.t_start, complex_normal(step_rng(cfg.seed, 0), X_tilde.shape), sched)
    for t in range(cfg.t_start, 0, -1):
        eps_hat = denoiser.predict_noise(x, t)
        _finite(eps_hat, t, "noise prediction")
        z = complex_normal(step_rng(cfg.seed, t), x.shape)
        x_prev = reverse_step(x, eps_hat, t, z, sched, cfg.noise_coef)
        if need_score:
            G, ll = score_terms(x, denoiser, Y, phi_inv, cfg.fcp, t, sched, policy, eps_hat, weights)
            _finite(G, t, "likelihood score")
            if cfg.xi > 0:
                x_prev = apply_guidance(x_prev, G, t, cfg.xi, sched)
            if trace is not None:
                trace.append(StepRecord(t, float(ll), float(np.linalg.norm(G)), float(np.linalg.norm(x))))
        _finite(x_prev, t, "state")
        x = x_prev

    return align(decompress(x), X_tilde, cfg.align_eps)


def refine(Y, X_tilde, phi_inv, denoiser, cfg=None, sched=None):
    """Refine the single-channel estimate ``X_tilde`` (``(L, K)``) given mixture ``Y`` (``(L, K, C)``).

    ``phi_inv`` is the ``(L, K, C, C)`` inverse noise SCM, fixed during
    sampling. Returns the aligned ``(L, K)`` STFT of the refined speech.
    """
    return _run(Y, X_tilde, phi_inv, denoiser, cfg or RefineConfig(), sched or make_schedule(), None)


def refine_trace(Y, X_tilde, phi_inv, denoiser, cfg=None, sched=None):
    """Like :func:`refine` but also returns one :class:`StepRecord` per step."""
    trace = []
    out = _run(Y, X_tilde, phi_inv, denoiser, cfg or RefineConfig(), sched or make_schedule(), trace)
    return out, trace


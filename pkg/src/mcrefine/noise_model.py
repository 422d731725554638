"""Noise estimation from a speech estimate, noise SCM tracking and the MCWF baseline."""

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidConfigError, InvalidInputError
from .fcp import FcpParams, _as_multichannel, _as_single, apply_filter, estimate_filter

LOAD_REL = 1e-6
INVERT_DELTA_REL = 1e-4
MCWF_DELTA_REL = 1e-7


def estimate_noise(Y, X_tilde, fcp=FcpParams()):
    """Subtract the FCP-predicted reverberant image of ``X_tilde`` from ``Y``."""
    Y = _as_multichannel(Y)
    X_tilde = _as_single(X_tilde)
    if not np.any(X_tilde):
        return Y.copy()
    H = estimate_filter(X_tilde, Y, fcp)
    return Y - apply_filter(H, X_tilde)


def estimate_scm(N, alpha=0.95, init="mean"):
    """Recursively averaged noise spatial covariance, shape ``(L, K, C, C)``.

    ``phi(l) = alpha * phi(l - 1) + (1 - alpha) * N(l) N(l)^H``. The state
    before frame 0 is the utterance-mean outer product (``init="mean"``) or
    the first frame's (``init="first"``), plus ``delta * I`` with ``delta``
    equal to ``LOAD_REL`` times the bin's mean noise power. A first-frame
    start leaves the opening frames nearly rank one, and their inverses then
    dominate any likelihood built on them.
    """
    if not 0 <= alpha < 1:
        raise InvalidConfigError(f"smoothing alpha must lie in [0, 1), got {alpha}")
    if init not in ("mean", "first"):
        raise InvalidConfigError(f"init must be 'mean' or 'first', got {init!r}")
    N = _as_multichannel(N)
    n_ch = N.shape[-1]
    outer = N[..., :, None] * np.conj(N[..., None, :])
    load = LOAD_REL * np.mean(np.abs(N) ** 2, axis=(0, 2))
    start = outer.mean(axis=0) if init == "mean" else outer[0]
    start = start + load[:, None, None] * np.eye(n_ch)
    phi = lfilter([1 - alpha], [1.0, -alpha], outer, axis=0, zi=alpha * start[None])[0]
    # restore exact Hermitian symmetry lost to rounding
    return 0.5 * (phi + np.conj(np.swapaxes(phi, -1, -2)))


def _loaded_inverse(mats, delta_rel):
    n_ch = mats.shape[-1]
    trace = np.real(np.trace(mats, axis1=-2, axis2=-1))
    delta = np.where(trace > 0, delta_rel * trace / n_ch, delta_rel)
    inv = np.linalg.inv(mats + delta[..., None, None] * np.eye(n_ch))
    return 0.5 * (inv + np.conj(np.swapaxes(inv, -1, -2)))


def invert_scm(phi, delta_rel=INVERT_DELTA_REL):
    """Diagonally loaded inverse ``(phi + delta I)^-1`` with ``delta = delta_rel * tr(phi) / C``."""
    phi = np.asarray(phi)
    if phi.ndim < 2 or phi.shape[-1] != phi.shape[-2]:
        raise InvalidInputError(f"expected stacked square matrices, got {phi.shape}")
    return _loaded_inverse(phi, delta_rel)


def noise_precision(Y, X_tilde, fcp=FcpParams(), alpha=0.95, delta_rel=INVERT_DELTA_REL):
    """Inverse noise SCM field estimated from a mixture and a speech estimate."""
    return invert_scm(estimate_scm(estimate_noise(Y, X_tilde, fcp), alpha), delta_rel)


def mcwf_weights(Y, X_tilde, delta_rel=MCWF_DELTA_REL):
    """Time-invariant MCWF weights ``w(k) = (Phi_YY + delta I)^-1 phi_YX``, shape ``(K, C)``."""
    Y = _as_multichannel(Y)
    X_tilde = _as_single(X_tilde)
    if Y.shape[:2] != X_tilde.shape:
        raise InvalidInputError(f"mixture {Y.shape} and target {X_tilde.shape} disagree on (L, K)")
    L = Y.shape[0]
    phi_yy = np.einsum("lki,lkj->kij", Y, np.conj(Y)) / L
    phi_yx = np.einsum("lki,lk->ki", Y, np.conj(X_tilde)) / L
    inv = _loaded_inverse(phi_yy, delta_rel)
    return np.einsum("kij,kj->ki", inv, phi_yx)


def apply_mcwf(w, Y):
    """``out(l, k) = w(k)^H Y(l, k)``."""
    return np.einsum("ki,lki->lk", np.conj(w), _as_multichannel(Y))


def mcwf(Y, X_tilde, delta_rel=MCWF_DELTA_REL):
    """Single-frame time-invariant multichannel Wiener filter towards ``X_tilde``."""
    return apply_mcwf(mcwf_weights(Y, X_tilde, delta_rel), Y)

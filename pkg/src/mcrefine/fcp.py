"""Forward convolutive prediction (FCP).

Per-frequency weighted least-squares fits of multi-frame filters that map a
single-channel source spectrogram onto a multichannel target.

Shapes: source ``X`` is ``(L, K)``, targets ``Y`` are ``(L, K, C)`` and filters
are ``(n_taps, K, C)``. Frames before the start of the signal count as zero,
so filters are strictly causal.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

RIDGE_REL = 1e-8
REFINE_SWEEPS = 2


@dataclass(frozen=True)
class FcpParams:
    n_taps: int = 13
    eps: float = 1e-3

    def __post_init__(self):
        if self.n_taps < 1:
            raise InvalidConfigError("n_taps must be >= 1")
        if not self.eps > 0:
            raise InvalidConfigError("eps must be positive")


def _as_multichannel(Y):
    Y = np.asarray(Y)
    if Y.ndim == 2:
        Y = Y[..., None]
    if Y.ndim != 3:
        raise InvalidInputError(f"expected (L, K, C) array, got shape {Y.shape}")
    return Y


def _as_single(X):
    X = np.asarray(X)
    if X.ndim == 3 and X.shape[-1] == 1:
        X = X[..., 0]
    if X.ndim != 2:
        raise InvalidInputError(f"expected single-channel (L, K) array, got shape {X.shape}")
    return X


def fcp_weights(Y, eps):
    """Per-(frame, bin) weights ``lambda``; the WLS cost divides by them.

    ``lambda = p + eps * max(p)`` where ``p`` is the channel-averaged power of
    ``Y``. An all-zero ``Y`` gets uniform weights of one and a warning.
    """
    Y = _as_multichannel(Y)
    power = np.mean(Y.real ** 2 + Y.imag ** 2, axis=-1)
    peak = power.max()
    if peak == 0:
        warnings.warn("all-zero FCP target; using uniform weights", RuntimeWarning, stacklevel=2)
        return np.ones_like(power)
    return power + eps * peak


def lag_matrix(X, n_taps):
    """Causal convolution matrices, shape ``(K, L, n_taps)``: ``A[k, m, n] = X[m - n, k]``."""
    XT = np.ascontiguousarray(_as_single(X).T)
    K, L = XT.shape
    A = np.zeros((K, L, n_taps), dtype=np.result_type(XT.dtype, np.complex128))
    for n in range(min(n_taps, L)):
        A[:, n:, n] = XT[:, :L - n]
    return A


def solve_wls(A, y, w, ridge_rel=RIDGE_REL, refine=REFINE_SWEEPS):
    """Batched ridge-stabilised weighted least squares.

    ``A`` is ``(K, L, N)``, ``y`` is ``(K, L, C)``, ``w`` is ``(K, L)``. Solves
    ``(A^H W A + delta I) h = A^H W y`` per batch with
    ``delta = ridge_rel * trace(A^H W A) / N`` and returns ``h`` as ``(K, N, C)``.

    ``refine`` iterated-Tikhonov sweeps then shrink the ridge bias on
    well-conditioned batches by a factor ``delta / lambda_min`` each, while
    leaving null-space directions of rank-deficient batches at zero.
    """
    n = A.shape[-1]
    AhW = np.conj(np.swapaxes(A, -1, -2)) * w[:, None, :]
    R = AhW @ A
    rhs = AhW @ y
    trace = np.real(np.trace(R, axis1=-2, axis2=-1))
    delta = ridge_rel * trace / n
    delta = np.where(delta > 0, delta, ridge_rel)
    loaded = R + delta[:, None, None] * np.eye(n)
    h = np.linalg.solve(loaded, rhs)
    for _ in range(refine):
        h = h + np.linalg.solve(loaded, rhs - R @ h)
    return h


def estimate_filter(X, Y, params=FcpParams(), weights=None, lags=None):
    """Fit ``H`` minimising ``sum_m |Y^c(m,k) - sum_n H^c(n,k) X(m-n,k)|^2 / lambda(m,k)``.

    Each (bin, channel) pair is solved independently through its normal
    equations. ``weights`` may pass precomputed ``lambda`` values (shape
    ``(L, K)``) when the same target is fitted repeatedly, and ``lags`` the
    output of :func:`lag_matrix` for ``X``.
    """
    X = _as_single(X)
    Y = _as_multichannel(Y)
    if X.shape != Y.shape[:2]:
        raise InvalidInputError(f"source {X.shape} and target {Y.shape} disagree on (L, K)")
    lam = fcp_weights(Y, params.eps) if weights is None else weights
    A = lag_matrix(X, params.n_taps) if lags is None else lags
    h = solve_wls(A, np.transpose(Y, (1, 0, 2)), (1.0 / lam).T)
    return np.transpose(h, (1, 0, 2))


def _check_filter(H, n_bins):
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[..., None]
    if H.ndim != 3 or H.shape[1] != n_bins:
        raise InvalidInputError(f"filter shape {H.shape} does not match {n_bins} bins")
    return H


def apply_filter(H, X):
    """Causal per-bin convolution across frames; output ``(L, K, C)``, no tail."""
    X = _as_single(X)
    H = _check_filter(H, X.shape[1])
    L = X.shape[0]
    out = np.zeros((L,) + H.shape[1:], dtype=np.result_type(H.dtype, X.dtype, np.complex128))
    for n in range(min(H.shape[0], L)):
        out[n:] += X[:L - n, :, None] * H[n][None]
    return out


def apply_filter_adjoint(H, R):
    """Adjoint of :func:`apply_filter` in ``X`` under ``Re<a, b>``; output ``(L, K)``."""
    R = _as_multichannel(R)
    H = _check_filter(H, R.shape[1])
    if H.shape[2] != R.shape[2]:
        raise InvalidInputError(f"filter has {H.shape[2]} channels, residual {R.shape[2]}")
    L = R.shape[0]
    # S[k, m, n] = sum_c conj(H[n, k, c]) R[m, k, c]
    S = np.transpose(R, (1, 0, 2)) @ np.conj(np.transpose(H, (1, 2, 0)))
    out = np.zeros((R.shape[1], L), dtype=S.dtype)
    for n in range(min(H.shape[0], L)):
        out[:, :L - n] += S[:, n:, n]
    return out.T


def align(X0, X_ref, eps=1e-3):
    """Rescale ``X0`` bin by bin with a single-tap FCP filter fitted to ``X_ref``."""
    X0 = _as_single(X0)
    X_ref = _as_single(X_ref)
    if X0.shape != X_ref.shape:
        raise InvalidInputError(f"shape mismatch {X0.shape} vs {X_ref.shape}")
    H = estimate_filter(X0, X_ref, FcpParams(n_taps=1, eps=eps))
    return apply_filter(H, X0)[..., 0]

"""Training-free refinement of multichannel speech enhancement outputs.

A discriminative model's single-channel estimate is used to estimate the
noise spatial covariance of a multichannel mixture; guided DDPM sampling
with a pluggable denoiser then refines the estimate.
"""

from .diffusion import DiffusionSchedule, GaussianDenoiser, ZeroDenoiser, make_schedule
from .fcp import FcpParams, align, apply_filter, apply_filter_adjoint, estimate_filter
from .noise_model import estimate_noise, estimate_scm, invert_scm, mcwf, noise_precision
from .sampler import RefineConfig, refine, refine_trace
from .simulate import MixtureSpec, gen_mixture, make_benchmark, si_sdr
from .spectral import Spectrogram, StftParams, compress, decompress, istft, stft

__version__ = "0.1.0"

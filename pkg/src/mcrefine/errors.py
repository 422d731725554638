"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Malformed, non-finite or shape-inconsistent input data."""


class DomainMismatchError(InvalidInputError):
    """A spectrogram is in the wrong (raw STFT vs compressive) domain."""


class InvalidConfigError(ValueError):
    """A hyperparameter lies outside its admissible range."""


class ExternalDenoiserError(RuntimeError):
    """The external denoiser process misbehaved or violated the wire protocol."""


class NonFiniteError(FloatingPointError):
    """A sampler intermediate became NaN or infinite."""

    def __init__(self, step, what):
        super().__init__(f"non-finite {what} at diffusion step t={step}")
        self.step = step
        self.what = what

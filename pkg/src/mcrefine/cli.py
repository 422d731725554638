"""Command-line entry point: ``mcrefine {refine,mcwf,simulate,metrics,serve-denoiser}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np
from scipy.io import wavfile

from .diffusion import GaussianDenoiser, ZeroDenoiser, make_schedule
from .errors import InvalidInputError
from .fcp import FcpParams
from .guidance import EXACT_VJP, TWEEDIE_IDENTITY
from .noise_model import mcwf, noise_precision
from .protocol import ExternalDenoiser, serve_stream, serve_tcp
from .sampler import RefineConfig, refine, refine_trace
from .simulate import MixtureSpec, gen_mixture, si_sdr
from .spectral import MCWF_STFT, Spectrogram, StftParams, compress, istft, stft

PRIOR_RATE = 16000
DEGENERATE_REL_VAR = 1e-6


class CliError(Exception):
    pass


def read_wav(path):
    """Return ``(rate, samples)`` with samples as float64 ``(n, channels)`` in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise CliError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 1:
        data = data[:, None]
    return rate, data


def write_wav(path, rate, samples):
    wavfile.write(path, rate, np.asarray(samples, dtype=np.float32))


def _match_lengths(a, b, hop, what):
    if abs(a.shape[0] - b.shape[0]) > hop:
        raise CliError(f"{what}: durations differ by {abs(a.shape[0] - b.shape[0])} samples (> one hop)")
    n = min(a.shape[0], b.shape[0])
    return a[:n], b[:n]


def _load_pair(mix_path, enh_path, hop):
    rate_y, y = read_wav(mix_path)
    rate_x, x = read_wav(enh_path)
    if rate_y != rate_x:
        raise CliError(f"sample rates differ: {rate_y} vs {rate_x}")
    if x.shape[1] != 1:
        raise CliError(f"{enh_path}: enhanced signal must be single-channel, got {x.shape[1]} channels")
    y, x = _match_lengths(y, x, hop, "mixture/enhanced")
    return rate_y, y, x[:, 0]


def make_denoiser(spec, X_tilde, sched):
    kind, _, arg = spec.partition(":")
    if kind == "analytic":
        if arg == "degenerate" or arg.startswith("degenerate:"):
            rel = float(arg.split(":", 1)[1]) if ":" in arg else DEGENERATE_REL_VAR
            mu = compress(X_tilde)
            s2 = max(rel * np.mean(np.abs(mu) ** 2) / 2.0, 1e-20)
            return GaussianDenoiser(mu, s2, sched)
        if arg == "zero":
            return ZeroDenoiser()
        try:
            prior = np.load(arg)
            mu, s2 = prior["mu"], prior["s2"]
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"cannot load analytic prior {arg!r}: {exc}") from exc
        if mu.shape != X_tilde.shape:
            raise CliError(f"prior mean has shape {mu.shape}, expected {X_tilde.shape}")
        return GaussianDenoiser(mu, s2, sched)
    if kind == "external" and arg:
        return ExternalDenoiser(arg)
    raise CliError(f"unknown denoiser {spec!r}; use analytic:<degenerate|zero|prior.npz> or external:<cmd|tcp://host:port>")


def cmd_refine(args):
    params = StftParams()
    rate, y, x = _load_pair(args.mixture, args.enhanced, params.hop_size)
    if rate != PRIOR_RATE:
        raise CliError(f"refinement needs {PRIOR_RATE} Hz audio, got {rate} Hz")
    gain = 1.0
    if args.normalize and np.abs(x).max() > 0:
        gain = 1.0 / np.abs(x).max()
    Y = stft(y * gain, params).data
    X_tilde = stft(x * gain, params).data[..., 0]

    cfg = RefineConfig(
        t_start=args.t_start, xi=args.xi, scm_alpha=args.scm_alpha,
        fcp=FcpParams(args.nh, args.fcp_eps), align_eps=args.fcp_eps, seed=args.seed,
        jacobian={"exact": EXACT_VJP, "tweedie-identity": TWEEDIE_IDENTITY}.get(args.jacobian),
        noise_coef=args.noise_coef, stft=params,
    )
    sched = make_schedule()
    start = time.perf_counter()
    phi_inv = noise_precision(Y, X_tilde, cfg.fcp, cfg.scm_alpha)
    denoiser = make_denoiser(args.denoiser, X_tilde, sched)
    try:
        if args.trace:
            out, trace = refine_trace(Y, X_tilde, phi_inv, denoiser, cfg, sched)
            with open(args.trace, "w") as fh:
                for rec in trace:
                    fh.write(json.dumps(rec.__dict__) + "\n")
        else:
            out = refine(Y, X_tilde, phi_inv, denoiser, cfg, sched)
    finally:
        if isinstance(denoiser, ExternalDenoiser):
            denoiser.close()
    wave = istft(Spectrogram(out[..., None], params, "stft", x.shape[0]))[:, 0] / gain
    write_wav(args.output, rate, wave)
    print(f"t_start={cfg.t_start} xi={cfg.xi} steps={cfg.t_start} channels={Y.shape[2]} "
          f"wall_time={time.perf_counter() - start:.1f}s")


def cmd_mcwf(args):
    rate, y, x = _load_pair(args.mixture, args.enhanced, MCWF_STFT.hop_size)
    Y = stft(y, MCWF_STFT).data
    X_tilde = stft(x, MCWF_STFT).data[..., 0]
    out = mcwf(Y, X_tilde)
    write_wav(args.output, rate, istft(Spectrogram(out[..., None], MCWF_STFT, "stft", x.shape[0]))[:, 0])


def cmd_simulate(args):
    rate, clean = read_wav(args.clean)
    if clean.shape[1] != 1:
        raise CliError("clean input must be single-channel")
    params = StftParams()
    X = stft(clean[:, 0], params).data[..., 0]
    spec = MixtureSpec(args.channels, args.taps, args.noise, args.snr, args.seed)
    mix = gen_mixture(X, spec)
    n = clean.shape[0]
    image = istft(Spectrogram(mix.image, params, "stft", n))
    noise = istft(Spectrogram(mix.N_true, params, "stft", n))
    if math.isinf(args.snr):
        realized = math.inf
    else:
        # recalibrate on the waveforms so the written files hit the requested SNR
        noise *= np.sqrt(np.sum(image[:, 0] ** 2) / np.sum(noise[:, 0] ** 2) / 10 ** (args.snr / 10.0))
        realized = 10.0 * np.log10(np.sum(image[:, 0] ** 2) / np.sum(noise[:, 0] ** 2))
    write_wav(f"{args.prefix}mixture.wav", rate, image + noise)
    write_wav(f"{args.prefix}noise.wav", rate, noise)
    with open(f"{args.prefix}meta.txt", "w", encoding="utf-8") as fh:
        for key, value in [("seed", args.seed), ("snr_db", args.snr), ("n_taps", args.taps),
                           ("n_channels", args.channels), ("noise", args.noise),
                           ("realized_snr_db", realized)]:
            fh.write(f"{key}={value}\n")


def cmd_metrics(args):
    _, est = read_wav(args.estimate)
    _, ref = read_wav(args.reference)
    est, ref = _match_lengths(est, ref, StftParams().hop_size, "estimate/reference")
    try:
        value = si_sdr(est[:, 0], ref[:, 0])
    except InvalidInputError as exc:
        raise CliError(str(exc)) from exc
    print(f"si_sdr_db={value:.4f}")


def cmd_serve(args):
    sched = make_schedule()
    if args.prior:
        prior = np.load(args.prior)
        denoiser = GaussianDenoiser(prior["mu"], prior["s2"], sched)
    else:
        denoiser = ZeroDenoiser()
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        serve_tcp(denoiser, host or "127.0.0.1", int(port),
                  ready=lambda p: print(f"listening on {host or '127.0.0.1'}:{p}", flush=True))
    else:
        out = sys.stdout.buffer

        def write(data):
            out.write(data)
            out.flush()

        serve_stream(denoiser, lambda n: os.read(sys.stdin.fileno(), n), write)


def build_parser():
    parser = argparse.ArgumentParser(prog="mcrefine", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="refine a single-channel enhanced estimate with guided diffusion")
    p.add_argument("mixture")
    p.add_argument("enhanced")
    p.add_argument("output")
    p.add_argument("--denoiser", required=True,
                   help="analytic:degenerate[:rel_var] | analytic:zero | analytic:<prior.npz> | "
                        "external:<command> | external:tcp://host:port")
    p.add_argument("--xi", type=float, default=0.4)
    p.add_argument("--t-start", type=int, default=300)
    p.add_argument("--scm-alpha", type=float, default=0.95)
    p.add_argument("--nh", type=int, default=13)
    p.add_argument("--fcp-eps", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jacobian", choices=["exact", "tweedie-identity"])
    p.add_argument("--noise-coef", choices=["sigma2", "sigma"], default="sigma2")
    p.add_argument("--trace", help="write one JSON record per diffusion step to this path")
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="skip peak normalisation of the inputs")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("mcwf", help="time-invariant multichannel Wiener filter baseline")
    p.add_argument("mixture")
    p.add_argument("enhanced")
    p.add_argument("output")
    p.set_defaults(func=cmd_mcwf)

    p = sub.add_parser("simulate", help="synthesise a multichannel mixture from clean speech")
    p.add_argument("clean")
    p.add_argument("--prefix", default="sim_", help="output path prefix")
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--taps", type=int, default=3)
    p.add_argument("--noise", choices=["white", "diffuse"], default="white")
    p.add_argument("--snr", type=float, default=0.0, help="dB; 'inf' disables noise")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="print SI-SDR of an estimate against a reference")
    p.add_argument("estimate")
    p.add_argument("reference")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve-denoiser", help="serve an analytic denoiser over the wire protocol")
    p.add_argument("--prior", help=".npz file with compressive-domain 'mu' and per-component 's2'")
    p.add_argument("--listen", help="HOST:PORT to serve over TCP instead of stdin/stdout")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"mcrefine {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

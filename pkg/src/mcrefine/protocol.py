"""Wire protocol and client/server adapters for out-of-process denoisers.

Every message travels as a frame: a little-endian ``u32`` byte count
followed by that many bytes. Request frames carry::

    b"ADPR" | u8 version=1 | u32 t | u32 L | u32 K | f32[L*K] real | f32[L*K] imag

and responses::

    b"ADPE" | u32 L | u32 K | f32[L*K] real | f32[L*K] imag

All integers and floats are little-endian; planes are frame-major, bin-minor.
"""

import os
import select
import shlex
import socket
import struct
import subprocess

import numpy as np

from .errors import ExternalDenoiserError

REQUEST_MAGIC = b"ADPR"
RESPONSE_MAGIC = b"ADPE"
VERSION = 1

_REQ_HEADER = struct.Struct("<4sBIII")
_RESP_HEADER = struct.Struct("<4sII")
_LEN = struct.Struct("<I")
_F32 = np.dtype("<f4")


class ProtocolError(ExternalDenoiserError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _planes(x):
    x = np.asarray(x)
    return np.ascontiguousarray(x.real, dtype=_F32).tobytes() + np.ascontiguousarray(x.imag, dtype=_F32).tobytes()


def _unplanes(buf, offset, L, K):
    n = L * K
    need = offset + 8 * n
    if len(buf) != need:
        raise ProtocolError(f"payload holds {len(buf) - offset} bytes, expected {8 * n}", min(len(buf), need))
    planes = np.frombuffer(buf, dtype=_F32, count=2 * n, offset=offset).astype(np.float64)
    return (planes[:n] + 1j * planes[n:]).reshape(L, K)


def encode_request(x_t, t):
    L, K = np.shape(x_t)
    return _REQ_HEADER.pack(REQUEST_MAGIC, VERSION, t, L, K) + _planes(x_t)


def decode_request(buf):
    if len(buf) < _REQ_HEADER.size:
        raise ProtocolError("truncated request header", len(buf))
    magic, version, t, L, K = _REQ_HEADER.unpack_from(buf)
    if magic != REQUEST_MAGIC:
        raise ProtocolError(f"bad request magic {magic!r}", 0)
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", 4)
    return t, _unplanes(buf, _REQ_HEADER.size, L, K)


def encode_response(eps):
    L, K = np.shape(eps)
    return _RESP_HEADER.pack(RESPONSE_MAGIC, L, K) + _planes(eps)


def decode_response(buf):
    if len(buf) < _RESP_HEADER.size:
        raise ProtocolError("truncated response header", len(buf))
    magic, L, K = _RESP_HEADER.unpack_from(buf)
    if magic != RESPONSE_MAGIC:
        raise ProtocolError(f"bad response magic {magic!r}", 0)
    return _unplanes(buf, _RESP_HEADER.size, L, K)


def write_frame(write, payload):
    write(_LEN.pack(len(payload)) + payload)


def read_frame(read_exact):
    """Read one length-prefixed frame; returns ``None`` on clean EOF."""
    head = read_exact(_LEN.size, allow_eof=True)
    if head is None:
        return None
    (n,) = _LEN.unpack(head)
    return read_exact(n)


class _StreamReader:
    def __init__(self, recv, timeout=None, fileno=None):
        self._recv = recv
        self._timeout = timeout
        self._fileno = fileno

    def __call__(self, n, allow_eof=False):
        chunks, got = [], 0
        while got < n:
            if self._fileno is not None and self._timeout is not None:
                ready, _, _ = select.select([self._fileno], [], [], self._timeout)
                if not ready:
                    raise ExternalDenoiserError(f"denoiser timed out after {self._timeout} s")
            chunk = self._recv(n - got)
            if not chunk:
                if allow_eof and got == 0:
                    return None
                raise ExternalDenoiserError(f"denoiser closed the stream after {got} of {n} bytes")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)


class ExternalDenoiser:
    """Noise predictor served by another process.

    ``endpoint`` is either ``"tcp://host:port"`` or a command line, which is
    launched with the protocol spoken over its stdin/stdout. Requests are
    strictly sequential. No derivative is available, so ``has_vjp`` is False.
    """

    has_vjp = False

    def __init__(self, endpoint, timeout=60.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._proc = None
        self._sock = None
        if endpoint.startswith("tcp://"):
            host, _, port = endpoint[len("tcp://"):].rpartition(":")
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
            self._write = self._sock.sendall
            self._read = _StreamReader(self._sock.recv)
        else:
            self._proc = subprocess.Popen(
                shlex.split(endpoint), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
            out = self._proc.stdout.fileno()

            def write(data):
                self._proc.stdin.write(data)
                self._proc.stdin.flush()

            self._write = write
            self._read = _StreamReader(lambda n: os.read(out, n), timeout, out)

    def predict_noise(self, x_t, t):
        try:
            write_frame(self._write, encode_request(x_t, t))
            frame = read_frame(self._read)
        except (OSError, socket.timeout) as exc:
            raise ExternalDenoiserError(f"denoiser I/O failed: {exc}") from exc
        if frame is None:
            raise ExternalDenoiserError("denoiser closed the stream before responding")
        eps = decode_response(frame)
        if eps.shape != np.shape(x_t):
            raise ExternalDenoiserError(f"denoiser returned shape {eps.shape}, expected {np.shape(x_t)}")
        return eps

    def vjp(self, x_t, t, cotangent):
        raise ExternalDenoiserError("external denoisers expose no vector-Jacobian product")

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        if self._proc is not None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_denoiser(endpoint, timeout=60.0):
    return ExternalDenoiser(endpoint, timeout)


def serve_stream(denoiser, read, write):
    """Answer requests from ``read`` (``read(n) -> bytes``) until EOF."""
    read_exact = _StreamReader(read)
    while True:
        frame = read_frame(read_exact)
        if frame is None:
            return
        t, x_t = decode_request(frame)
        write_frame(write, encode_response(denoiser.predict_noise(x_t, t)))


def serve_tcp(denoiser, host="127.0.0.1", port=0, ready=None):
    """Serve one connection at a time on a TCP socket. ``ready`` receives the bound port."""
    with socket.create_server((host, port)) as srv:
        if ready is not None:
            ready(srv.getsockname()[1])
        while True:
            conn, _ = srv.accept()
            with conn:
                try:
                    serve_stream(denoiser, conn.recv, conn.sendall)
                except ExternalDenoiserError:
                    continue

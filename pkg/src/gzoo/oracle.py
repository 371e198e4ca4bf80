"""Stochastic zeroth-order oracle abstraction and seeded randomness streams.

Points and gradient estimates are plain 1-D ``numpy`` arrays of float64 with
Euclidean-norm semantics.  An index sample ``xi`` is an opaque 64-bit integer
that each problem interprets however it likes (e.g. row index modulo n).
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import threading
import queue

import numpy as np

from .errors import OracleFailure

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _splitmix64(z: int) -> int:
    # SplitMix64 finalizer; the documented label-mixing primitive.
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class RandomStream:
    """A single-consumer, counter-based random stream.

    Identical ``(seed, stream_id)`` pairs reproduce bitwise-identical draw
    sequences on every platform; distinct stream ids are statistically
    independent (Philox is keyed by the pair, so substreams never overlap).

    Substream derivation is the fixed hash

        sid' = splitmix64(sid XOR splitmix64(label + GOLDEN))

    applied per label, where string labels are first FNV-1a hashed.  Deriving
    never consumes draws, so parallel batch evaluation cannot perturb results.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen: np.random.Generator | None = None

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def substream(self, *labels) -> "RandomStream":
        sid = self.stream_id
        for label in labels:
            h = _fnv1a(label.encode()) if isinstance(label, str) else int(label) & _MASK64
            sid = _splitmix64(sid ^ _splitmix64((h + _GOLDEN) & _MASK64))
        return RandomStream(self.seed, sid)

    def draw_index(self) -> int:
        """One opaque 64-bit index sample."""
        return int(self.generator.integers(0, 1 << 64, dtype=np.uint64))

    def draw_indices(self, n: int) -> np.ndarray:
        """n index samples; bit-identical to n successive draw_index calls."""
        return self.generator.integers(0, 1 << 64, size=n, dtype=np.uint64)


def sample_sphere(rng: RandomStream, d: int) -> np.ndarray:
    """Uniform draw from the unit sphere, by normalizing a Gaussian vector."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    gen = rng.generator
    while True:
        v = gen.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 0.0:
            return v / norm


def sample_sphere_batch(rng: RandomStream, b: int, d: int) -> np.ndarray:
    """(b, d) matrix of unit rows; row i equals the i-th sequential draw."""
    gen = rng.generator
    v = gen.standard_normal((b, d))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms == 0.0):  # probability zero; redraw offending rows
        bad = norms == 0.0
        v[bad] = gen.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def sample_ball(rng: RandomStream, d: int) -> np.ndarray:
    """Uniform draw from the unit ball, via radial inversion r^(1/d) * w."""
    w = sample_sphere(rng, d)
    r = rng.generator.uniform()
    return (r ** (1.0 / d)) * w


class StochasticOracle:
    """Two-argument stochastic evaluator F(x; xi).

    ``lipschitz`` is the root-mean-square Lipschitz budget L of the stochastic
    components; planners require it positive.  ``eval`` must be deterministic
    given (x, xi) and never mutate x.  Implementations are safe for concurrent
    eval on distinct inputs.
    """

    def __init__(self, dim: int, lipschitz: float, name: str = ""):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.lipschitz = float(lipschitz)
        self.name = name or type(self).__name__

    def eval(self, x: np.ndarray, xi: int) -> float:
        raise NotImplementedError

    def sample_index(self, rng: RandomStream) -> int:
        return rng.draw_index()

    def sample_indices(self, rng: RandomStream, n: int) -> np.ndarray:
        return rng.draw_indices(n)

    # Optional hooks; diagnostics skip audits that need an absent hook.
    def exact_value(self, x: np.ndarray) -> float:
        """Exact f(x), when computable in closed form."""
        raise NotImplementedError

    def smoothed_gradient(self, x: np.ndarray, delta: float) -> np.ndarray:
        """Analytic gradient of the delta-smoothed surrogate, when known."""
        raise NotImplementedError

    def has_exact_value(self) -> bool:
        return type(self).exact_value is not StochasticOracle.exact_value

    def has_smoothed_gradient(self) -> bool:
        return type(self).smoothed_gradient is not StochasticOracle.smoothed_gradient


class FunctionOracle(StochasticOracle):
    """Wraps a deterministic callable f(x) as a stochastic oracle.

    The index sample is drawn but ignored, so the same driver code runs
    against deterministic and genuinely stochastic targets.
    """

    def __init__(self, dim, fn, lipschitz, name="function"):
        super().__init__(dim, lipschitz, name)
        self._fn = fn

    def eval(self, x, xi):
        return float(self._fn(x))

    def exact_value(self, x):
        return float(self._fn(x))


class CountingOracle(StochasticOracle):
    """Forwarding wrapper that counts single evaluations of F(.;xi)."""

    def __init__(self, inner: StochasticOracle):
        super().__init__(inner.dim, inner.lipschitz, inner.name)
        self.inner = inner
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def eval(self, x, xi):
        with self._lock:
            self._calls += 1
        return self.inner.eval(x, xi)

    def sample_index(self, rng):
        return self.inner.sample_index(rng)

    def sample_indices(self, rng, n):
        return self.inner.sample_indices(rng, n)

    def exact_value(self, x):
        return self.inner.exact_value(x)

    def smoothed_gradient(self, x, delta):
        return self.inner.smoothed_gradient(x, delta)

    def has_exact_value(self):
        return self.inner.has_exact_value()

    def has_smoothed_gradient(self):
        return self.inner.has_smoothed_gradient()


def make_counting(oracle: StochasticOracle) -> CountingOracle:
    return CountingOracle(oracle)


_DEFAULT_TIMEOUT_S = 30.0


def _oracle_timeout_s(configured: float | None) -> float:
    # GZOO_ORACLE_TIMEOUT_MS takes precedence over the constructor argument.
    env = os.environ.get("GZOO_ORACLE_TIMEOUT_MS")
    if env is not None:
        return float(env) / 1000.0
    if configured is not None:
        return configured
    return _DEFAULT_TIMEOUT_S


class ExternalProcessOracle(StochasticOracle):
    """Black-box oracle backed by a child process speaking a line protocol.

    Requests are a single ASCII line ``EVAL <xi> <x1> ... <xd>\\n`` with
    full-precision decimal coordinates; the child answers with one line
    containing a single real number.  Child exit, a malformed response or a
    timeout raise :class:`OracleFailure` carrying the raw response.
    """

    def __init__(self, command: str, dim: int, lipschitz: float, timeout_s: float | None = None):
        super().__init__(dim, lipschitz, name=f"external({command})")
        self.command = command
        self.timeout_s = _oracle_timeout_s(timeout_s)
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._responses: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        try:
            for line in self._proc.stdout:
                self._responses.put(line)
        except ValueError:
            pass  # stdout closed during shutdown
        self._responses.put(None)  # EOF marker

    def eval(self, x, xi):
        request = "EVAL %d %s\n" % (int(xi), " ".join(repr(float(v)) for v in x))
        with self._lock:
            try:
                self._proc.stdin.write(request)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise OracleFailure(f"oracle child is gone: {exc}") from exc
            try:
                line = self._responses.get(timeout=self.timeout_s)
            except queue.Empty:
                raise OracleFailure(
                    f"oracle timed out after {self.timeout_s:.3f} s"
                ) from None
        if line is None:
            raise OracleFailure("oracle child closed its output (exited?)")
        try:
            return float(line.strip())
        except ValueError:
            raise OracleFailure("malformed oracle response", raw=line) from None

    def close(self):
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_process_oracle(command: str, dim: int, lipschitz: float,
                            timeout_s: float | None = None) -> ExternalProcessOracle:
    return ExternalProcessOracle(command, dim, lipschitz, timeout_s)

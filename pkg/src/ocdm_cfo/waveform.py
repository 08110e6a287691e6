"""OCDM-NSC transmitter, channel and receiver front end.

A frame carries K data symbols at Fresnel indices 1..K followed by N - K null
subchirps, is modulated by the IDFnT, gets a cyclic prefix, passes through a
time-invariant multipath channel, and is hit by a normalized CFO ``w0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FramingError, RangeError
from .fresnel import DfntMatrix, build_dfnt, circulant_from_taps


@dataclass(frozen=True)
class SystemConfig:
    N: int
    K: int
    L: int
    cp_len: int | None = None
    Es: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self):
        if self.cp_len is None:
            object.__setattr__(self, "cp_len", self.L)
        if not (1 <= self.K <= self.N):
            raise ValueError(f"need 1 <= K <= N, got K={self.K}, N={self.N}")
        if self.L < 0 or self.L + 1 > self.N:
            raise ValueError(f"channel order L={self.L} invalid for N={self.N}")
        if self.cp_len < self.L:
            raise ValueError(f"cp_len={self.cp_len} shorter than channel order {self.L}")
        if not self.Es > 0:
            raise ValueError("Es must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    @property
    def null_count(self) -> int:
        return self.N - self.K

    @property
    def identifiable(self) -> bool:
        """At least L + 1 consecutive null subchirps."""
        return self.N - self.K >= self.L + 1

    @property
    def dfnt(self) -> DfntMatrix:
        return build_dfnt(self.N)

    def with_noise(self, sigma2: float) -> "SystemConfig":
        return SystemConfig(self.N, self.K, self.L, self.cp_len, self.Es, sigma2)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """SNR is Es / sigma2."""
        return self.with_noise(self.Es * 10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    taps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taps", np.atleast_1d(np.asarray(self.taps, dtype=complex)))

    @property
    def order(self) -> int:
        return len(self.taps) - 1


@dataclass(frozen=True, eq=False)
class TxBlock:
    symbols: np.ndarray
    time_samples: np.ndarray
    block_index: int = 0


@dataclass(frozen=True, eq=False)
class RxBlock:
    samples: np.ndarray
    block_index: int = 0


_QPSK = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j])  # index = 2*b1 + b0


def qpsk_constellation(Es: float = 1.0) -> np.ndarray:
    return np.sqrt(Es / 2) * _QPSK


def map_qpsk(bits, Es: float = 1.0) -> np.ndarray:
    """Gray QPSK: first bit of a pair picks the imaginary sign, second the real sign.

    00 -> (1+j), 01 -> (-1+j), 11 -> (-1-j), 10 -> (1-j), scaled to energy ``Es``.
    """
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % 2:
        raise FramingError(f"QPSK needs an even number of bits, got {b.size}")
    pairs = b.reshape(-1, 2)
    return np.sqrt(Es / 2) * _QPSK[2 * pairs[:, 0] + pairs[:, 1]]


def demap_qpsk(symbols) -> np.ndarray:
    s = np.asarray(symbols, dtype=complex).ravel()
    bits = np.empty((s.size, 2), dtype=np.int8)
    bits[:, 0] = s.imag < 0
    bits[:, 1] = s.real < 0
    return bits.ravel()


def zero_pad(s, cfg: SystemConfig) -> np.ndarray:
    """Apply ``T_zp``: data on the first K Fresnel indices, zeros after."""
    s = np.asarray(s, dtype=complex)
    if s.shape[-1] != cfg.K:
        raise DimensionError(f"expected {cfg.K} symbols per block, got {s.shape[-1]}")
    out = np.zeros(s.shape[:-1] + (cfg.N,), dtype=complex)
    out[..., : cfg.K] = s
    return out


def assemble_block(s, cfg: SystemConfig, block_index: int = 0) -> TxBlock:
    s = np.asarray(s, dtype=complex)
    x = cfg.dfnt.H @ zero_pad(s, cfg)
    return TxBlock(s, x, block_index)


def assemble_blocks(S, cfg: SystemConfig) -> np.ndarray:
    """Vectorized assembly: rows of ``S`` (n_blocks x K) to rows of x (n_blocks x N)."""
    S = np.asarray(S, dtype=complex)
    if S.ndim != 2 or S.shape[1] != cfg.K:
        raise DimensionError(f"expected (n_blocks, {cfg.K}) symbols, got {S.shape}")
    return S @ cfg.dfnt.matrix[: cfg.K].conj()


def draw_channel(L: int, rng: np.random.Generator) -> ChannelRealization:
    """Rayleigh taps: L + 1 i.i.d. CN(0, 1/(L+1)), unit average total power."""
    if L < 0:
        raise ValueError("channel order must be nonnegative")
    scale = np.sqrt(0.5 / (L + 1))
    taps = scale * (rng.standard_normal(L + 1) + 1j * rng.standard_normal(L + 1))
    return ChannelRealization(taps)


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric white Gaussian noise with variance sigma2 per sample."""
    shape = tuple(np.atleast_1d(shape))
    if sigma2 == 0:
        return np.zeros(shape, dtype=complex)
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(sigma2 / 2) * z.view(complex)[..., 0]


def check_cfo(w: float) -> float:
    if not (-np.pi <= w < np.pi):
        raise RangeError(f"normalized CFO {w!r} outside [-pi, pi)")
    return float(w)


def wrap_cfo(w):
    """Wrap into [-pi, pi)."""
    return np.mod(np.asarray(w) + np.pi, 2 * np.pi) - np.pi


def cfo_diagonal(w: float, N: int) -> np.ndarray:
    """Diagonal of ``D_N(w)``: exp(j w (n - 1)), n = 1..N."""
    return np.exp(1j * w * np.arange(N))


def block_phase(w: float, block_index, cfg: SystemConfig):
    """Common phase exp(j w (i (N + cp) - N)) accumulated up to block i's first sample."""
    i = np.asarray(block_index)
    return np.exp(1j * w * (i * (cfg.N + cfg.cp_len) - cfg.N))


def propagate_block(x: TxBlock, ch: ChannelRealization, w0: float, cfg: SystemConfig,
                    rng: np.random.Generator | None = None) -> RxBlock:
    """Received block after CP removal: phase * D_N(w0) H x + n."""
    check_cfo(w0)
    H = circulant_from_taps(ch.taps, cfg.N).matrix
    y = block_phase(w0, x.block_index, cfg) * cfo_diagonal(w0, cfg.N) * (H @ x.time_samples)
    if cfg.sigma2 > 0:
        if rng is None:
            raise ValueError("noisy propagation needs an rng")
        y = y + complex_noise(cfg.N, cfg.sigma2, rng)
    return RxBlock(y, x.block_index)


def propagate_blocks(X, ch: ChannelRealization, w0: float, cfg: SystemConfig,
                     rng: np.random.Generator | None = None, first_index: int = 1) -> np.ndarray:
    """Vectorized :func:`propagate_block` for rows of ``X``; block indices start at ``first_index``."""
    check_cfo(w0)
    X = np.asarray(X, dtype=complex)
    H = circulant_from_taps(ch.taps, cfg.N).matrix
    idx = first_index + np.arange(X.shape[0])
    Y = (X @ H.T) * cfo_diagonal(w0, cfg.N)[None, :] * block_phase(w0, idx, cfg)[:, None]
    if cfg.sigma2 > 0:
        if rng is None:
            raise ValueError("noisy propagation needs an rng")
        Y = Y + complex_noise(Y.shape, cfg.sigma2, rng)
    return Y


def compensate_cfo(y, w_hat: float, cfg: SystemConfig) -> np.ndarray:
    """r = exp(-j w_hat (i (N + cp) - N)) D_N^H(w_hat) y.

    Accepts an :class:`RxBlock` (its block index is used) or a bare vector,
    which is taken as block index 0.
    """
    check_cfo(w_hat)
    if isinstance(y, RxBlock):
        samples, i = y.samples, y.block_index
    else:
        samples, i = np.asarray(y, dtype=complex), 0
    if samples.shape[-1] != cfg.N:
        raise DimensionError(f"block length {samples.shape[-1]} != N={cfg.N}")
    return np.conj(block_phase(w_hat, i, cfg)) * np.conj(cfo_diagonal(w_hat, cfg.N)) * samples


def compensate_blocks(Y, w_hat: float, cfg: SystemConfig, first_index: int = 1) -> np.ndarray:
    check_cfo(w_hat)
    Y = np.asarray(Y, dtype=complex)
    idx = first_index + np.arange(Y.shape[0])
    return Y * np.conj(cfo_diagonal(w_hat, cfg.N))[None, :] * np.conj(block_phase(w_hat, idx, cfg))[:, None]


def transmit_stream(X, ch: ChannelRealization, w0: float, cfg: SystemConfig,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Received sample stream with CPs still attached.

    Block 1's CP starts at sample time 0, so block i's data part starts at
    ``i (N + cp) - N``. The channel is silent before the first block and the
    tail of the last block's convolution is dropped.
    """
    check_cfo(w0)
    X = np.asarray(X, dtype=complex)
    cp = cfg.cp_len
    framed = np.concatenate([X[:, cfg.N - cp:], X], axis=1) if cp else X
    tx = framed.ravel()
    rx = np.convolve(tx, ch.taps)[: tx.size]
    rx = rx * np.exp(1j * w0 * np.arange(tx.size))
    if cfg.sigma2 > 0:
        if rng is None:
            raise ValueError("noisy propagation needs an rng")
        rx = rx + complex_noise(rx.shape, cfg.sigma2, rng)
    return rx


def strip_cp(stream, cfg: SystemConfig) -> np.ndarray:
    """Drop each block's CP; returns (n_blocks x N)."""
    stream = np.asarray(stream)
    step = cfg.N + cfg.cp_len
    if stream.size % step:
        raise DimensionError(f"stream length {stream.size} not a multiple of N + cp = {step}")
    return stream.reshape(-1, step)[:, cfg.cp_len:]

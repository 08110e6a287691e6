"""Linear (ZF, MMSE) and exhaustive ML detection for OCDM-NSC blocks.

The composite channel is ``B = H Phi^H T_zp`` (N x K). Because circulant
matrices commute with the DFnT, ``Phi B = H T_zp`` is a tall banded Toeplitz
matrix, the same equivalent channel a zero-padded single-carrier link sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CombinatorialBlowupError, DimensionError, SingularChannelError
from .fresnel import circulant_from_taps
from .waveform import ChannelRealization, SystemConfig, zero_pad

RANK_RTOL = 1e-10
ML_CAP = 4 ** 10
_ML_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class CompositeChannel:
    B: np.ndarray
    taps: np.ndarray
    cfg: SystemConfig

    @property
    def demodulated(self) -> np.ndarray:
        """``Phi B``, equal to ``H T_zp``."""
        return self.cfg.dfnt.matrix @ self.B

    @property
    def degenerate(self) -> bool:
        return not np.any(self.B)


@dataclass(frozen=True, eq=False)
class Equalizer:
    kind: str
    G: np.ndarray


def toeplitz_channel(taps, N: int, K: int) -> np.ndarray:
    """``H T_zp`` built straight from the taps (also accepts a stack of tap vectors)."""
    taps = np.asarray(taps, dtype=complex)
    lead = taps.shape[:-1]
    T = np.zeros(lead + (N, K), dtype=complex)
    cols = np.arange(K)
    for l in range(taps.shape[-1]):
        # row index wraps (circulant) only when K + L > N
        T[..., (cols + l) % N, cols] += taps[..., l, None]
    return T


def build_composite(h, cfg: SystemConfig) -> CompositeChannel:
    taps = h.taps if isinstance(h, ChannelRealization) else np.atleast_1d(np.asarray(h, dtype=complex))
    H = circulant_from_taps(taps, cfg.N).matrix
    B = H @ cfg.dfnt.H @ zero_pad(np.eye(cfg.K), cfg).T
    return CompositeChannel(B, taps, cfg)


def _B(B) -> np.ndarray:
    return B.B if isinstance(B, CompositeChannel) else np.asarray(B, dtype=complex)


def _full_column_rank(B: np.ndarray) -> bool:
    sv = np.linalg.svd(B, compute_uv=False)
    return sv.size > 0 and sv[0] > 0 and sv[-1] > RANK_RTOL * sv[0] and B.shape[0] >= B.shape[1]


def zf(B) -> Equalizer:
    """Moore-Penrose inverse of B; requires full column rank."""
    B = _B(B)
    if not _full_column_rank(B):
        raise SingularChannelError("composite channel is rank deficient; ZF undefined")
    return Equalizer("zf", np.linalg.pinv(B, rcond=RANK_RTOL))


def mmse(B, sigma2: float, Es: float = 1.0) -> Equalizer:
    """B^H (sigma2/Es I_N + B B^H)^-1.

    Evaluated through the equivalent K x K form (B^H B + sigma2/Es I_K)^-1 B^H,
    which stays well conditioned as sigma2/Es -> 0. At sigma2 = 0 the N x N
    bracket is singular whenever K < N; the limit is the pseudo-inverse,
    returned when B has full column rank.
    """
    B = _B(B)
    if sigma2 < 0 or Es <= 0:
        raise ValueError("need sigma2 >= 0 and Es > 0")
    if sigma2 == 0:
        if not _full_column_rank(B):
            raise SingularChannelError("noiseless MMSE with rank-deficient channel")
        return Equalizer("mmse", np.linalg.pinv(B, rcond=RANK_RTOL))
    BH = B.conj().T
    A = BH @ B + (sigma2 / Es) * np.eye(B.shape[1])
    return Equalizer("mmse", np.linalg.solve(A, BH))


def equalize(G, r) -> np.ndarray:
    """s_hat = G r; a 2-D ``r`` is a stack of row blocks."""
    M = G.G if isinstance(G, Equalizer) else np.asarray(G)
    r = np.asarray(r, dtype=complex)
    if r.shape[-1] != M.shape[1]:
        raise DimensionError(f"block length {r.shape[-1]} != equalizer width {M.shape[1]}")
    return r @ M.T


def candidate_symbols(constellation, K: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows of constellation^K in lexicographic order (first symbol most significant)."""
    c = np.asarray(constellation, dtype=complex)
    Q = c.size
    stop = Q ** K if stop is None else stop
    idx = np.arange(start, stop)
    digits = (idx[:, None] // Q ** np.arange(K - 1, -1, -1)[None, :]) % Q
    return c[digits]


def ml_detect(r, B, constellation, cap: int = ML_CAP) -> np.ndarray:
    """argmin over s in constellation^K of ||r - B s||^2, by exhaustive search.

    ``r`` may be one block or a stack of blocks (rows). Ties go to the
    lexicographically first candidate.
    """
    B = _B(B)
    K = B.shape[1]
    Q = len(constellation)
    total = Q ** K
    if total > cap:
        raise CombinatorialBlowupError(
            f"{Q}^{K} = {total} candidates exceeds ML cap {cap}; reduce K"
        )
    r = np.asarray(r, dtype=complex)
    single = r.ndim == 1
    R = np.atleast_2d(r)
    if R.shape[1] != B.shape[0]:
        raise DimensionError(f"block length {R.shape[1]} != channel rows {B.shape[0]}")
    best = np.full(R.shape[0], np.inf)
    best_idx = np.zeros(R.shape[0], dtype=np.int64)
    for start in range(0, total, _ML_CHUNK):
        stop = min(total, start + _ML_CHUNK)
        BS = candidate_symbols(constellation, K, start, stop) @ B.T
        # ||r - Bs||^2 without the candidate-independent ||r||^2 term
        d = np.sum(np.abs(BS) ** 2, axis=1)[None, :] - 2 * (R.conj() @ BS.T).real
        j = np.argmin(d, axis=1)
        dj = d[np.arange(R.shape[0]), j]
        better = dj < best
        best[better] = dj[better]
        best_idx[better] = start + j[better]
    out = np.stack([candidate_symbols(constellation, K, i, i + 1)[0] for i in best_idx])
    return out[0] if single else out


def zf_batch(B) -> np.ndarray:
    """ZF matrices (B^H B)^-1 B^H for a stack of composite channels (M x N x K)."""
    B = np.asarray(B, dtype=complex)
    BH = np.conj(np.swapaxes(B, -1, -2))
    gram = BH @ B
    ev = np.linalg.eigvalsh(gram)
    if np.any(ev[:, 0] <= RANK_RTOL ** 2 * ev[:, -1]):
        raise SingularChannelError("rank-deficient composite channel in batch; ZF undefined")
    return np.linalg.solve(gram, BH)


def mmse_batch(B, sigma2: float, Es: float = 1.0) -> np.ndarray:
    """MMSE matrices for a stack of composite channels; see :func:`mmse`."""
    B = np.asarray(B, dtype=complex)
    if sigma2 == 0:
        return zf_batch(B)
    BH = np.conj(np.swapaxes(B, -1, -2))
    return np.linalg.solve(BH @ B + (sigma2 / Es) * np.eye(B.shape[-1]), BH)


def ml_detect_batch(r, B, constellation, cap: int = ML_CAP) -> np.ndarray:
    """:func:`ml_detect` over a stack of channels: ``r`` is (M, blocks, N), ``B`` is (M, N, K)."""
    B = np.asarray(B, dtype=complex)
    r = np.asarray(r, dtype=complex)
    K = B.shape[-1]
    total = len(constellation) ** K
    if total > cap:
        raise CombinatorialBlowupError(
            f"{len(constellation)}^{K} = {total} candidates exceeds ML cap {cap}; reduce K"
        )
    if total > _ML_CHUNK:
        return np.stack([ml_detect(ri, Bi, constellation, cap) for ri, Bi in zip(r, B)])
    C = candidate_symbols(constellation, K)
    BS = C @ np.swapaxes(B, -1, -2)                                   # (M, cand, N)
    d = np.sum(np.abs(BS) ** 2, axis=-1)[:, None, :] - 2 * (r.conj() @ np.swapaxes(BS, -1, -2)).real
    return C[np.argmin(d, axis=-1)]

"""Discrete Fresnel transform and circulant channel matrices.

Indices in the public helpers (``DfntMatrix.chirp``) are 1-based to match the
usual DFnT notation; array storage is 0-based, so row ``k`` lives at ``k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, InvalidSizeError, TapsExceedBlockError

MAX_SIZE = 4096


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DfntMatrix:
    """N x N DFnT matrix ``Phi`` (unitary and circulant)."""

    size: int
    matrix: np.ndarray

    @property
    def H(self) -> np.ndarray:
        """Conjugate transpose, i.e. the IDFnT matrix."""
        return self.matrix.conj().T

    def chirp(self, k: int) -> np.ndarray:
        """Subchirp ``phi_k``: the k-th row of Phi (1-based) as a vector."""
        if not 1 <= k <= self.size:
            raise IndexError(f"subchirp index {k} outside 1..{self.size}")
        return self.matrix[k - 1]


@dataclass(frozen=True, eq=False)
class CirculantChannel:
    size: int
    taps: np.ndarray
    matrix: np.ndarray

    @property
    def order(self) -> int:
        return len(self.taps) - 1


@lru_cache(maxsize=64)
def _dfnt_entries(N: int) -> np.ndarray:
    m = np.arange(1, N + 1)[:, None]
    n = np.arange(1, N + 1)[None, :]
    d = (m - n).astype(float)
    if N % 2 == 1:
        d = d + 0.5
    # Reduce the quadratic phase mod 2N before scaling to keep it exact for large N.
    num = np.mod(d * d, 2 * N)
    phi = np.exp(-1j * np.pi / 4) * np.exp(1j * np.pi * num / N) / np.sqrt(N)
    return _readonly(phi)


def build_dfnt(N: int, max_size: int = MAX_SIZE) -> DfntMatrix:
    """Build the DFnT matrix of size N.

    Even N uses the ``(m - n)^2`` chirp phase, odd N the ``(m + 1/2 - n)^2``
    phase; both carry the global ``exp(-j pi/4) / sqrt(N)`` factor.
    """
    if int(N) != N or N < 1:
        raise InvalidSizeError(f"DFnT size must be a positive integer, got {N!r}")
    if N > max_size:
        raise InvalidSizeError(f"DFnT size {N} exceeds cap {max_size}")
    return DfntMatrix(int(N), _dfnt_entries(int(N)))


def circulant_from_taps(taps, N: int) -> CirculantChannel:
    """Circulant N x N channel matrix whose first column is the zero-padded taps."""
    h = np.atleast_1d(np.asarray(taps, dtype=complex))
    if h.ndim != 1 or h.size == 0:
        raise DimensionError("taps must be a non-empty 1-D sequence")
    if h.size > N:
        raise TapsExceedBlockError(f"{h.size} taps do not fit in a block of {N}")
    col = np.zeros(N, dtype=complex)
    col[: h.size] = h
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return CirculantChannel(N, _readonly(h.copy()), _readonly(col[idx]))


def _check_len(phi: DfntMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != phi.size:
        raise DimensionError(f"block length {x.shape[-1]} != DFnT size {phi.size}")
    return x


def apply_dfnt(phi: DfntMatrix, x) -> np.ndarray:
    """Return ``Phi @ x``. A 2-D ``x`` is treated as a stack of row blocks."""
    x = _check_len(phi, x)
    return x @ phi.matrix.T


def apply_idfnt(phi: DfntMatrix, x) -> np.ndarray:
    """Return ``Phi^H @ x``. A 2-D ``x`` is treated as a stack of row blocks."""
    x = _check_len(phi, x)
    return x @ phi.matrix.conj()

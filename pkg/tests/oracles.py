"""Independent reference implementations used by the tests."""

import itertools
import math

import numpy as np


def stream_oracle(X, taps, w0, N, cp):
    """Sample-by-sample CP insertion, linear convolution, CFO rotation and CP removal.

    Block 1's CP starts at t = 0; the channel is silent before it.
    """
    tx = []
    for x in X:
        tx.extend(list(x[N - cp:]) + list(x))
    rx = []
    for t in range(len(tx)):
        acc = 0j
        for l, h in enumerate(taps):
            if t - l >= 0:
                acc += h * tx[t - l]
        rx.append(acc * np.exp(1j * w0 * t))
    out = []
    for i in range(len(X)):
        start = i * (N + cp) + cp
        out.append(rx[start:start + N])
    return np.array(out)


def banded_toeplitz(taps, N, K):
    """H T_zp written out entry by entry: [i, j] = h(i - j) for 0 <= i - j <= L."""
    T = np.zeros((N, K), complex)
    for i in range(N):
        for j in range(K):
            if 0 <= i - j < len(taps):
                T[i, j] = taps[i - j]
    return T


def brute_force_ml(r, B, constellation):
    best, arg = np.inf, None
    for cand in itertools.product(constellation, repeat=B.shape[1]):
        s = np.array(cand)
        d = np.linalg.norm(r - B @ s) ** 2
        if d < best:
            best, arg = d, s
    return arg


def qpsk_awgn_ber(snr_db):
    return 0.5 * math.erfc(math.sqrt(10 ** (snr_db / 10) / 2))

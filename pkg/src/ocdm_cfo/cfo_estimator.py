"""Blind CFO estimation from the left null space of the received covariance.

The last N - K - L subchirps (Fresnel indices K+L+1..N, 1-based) are
orthogonal to every CFO-free received block, whatever the channel. The
estimator de-rotates the covariance by a candidate CFO ``w`` and measures how
much energy leaks onto those subchirps:

    J(w) = sum_k  v_k(w)^H R v_k(w),    v_k(w) = D_N(w) conj(phi_k)

``J`` reaches its floor ``sigma2 * (N - K - L)`` only at the true CFO.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NoExcessCpError, NoNullSpaceError
from .fresnel import circulant_from_taps
from .waveform import (
    ChannelRealization,
    RxBlock,
    SystemConfig,
    cfo_diagonal,
    check_cfo,
    wrap_cfo,
    zero_pad,
)

DEFAULT_GRID = 1024
DEFAULT_REFINE_ITERS = 40
_INVPHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Running sample covariance (1/N_b) sum y y^H."""

    matrix: np.ndarray
    block_count: int

    @classmethod
    def empty(cls, N: int) -> "CovarianceEstimate":
        return cls(np.zeros((N, N), dtype=complex), 0)

    @classmethod
    def from_blocks(cls, Y) -> "CovarianceEstimate":
        Y = np.asarray(Y, dtype=complex)
        if Y.ndim != 2 or Y.shape[0] == 0:
            raise DimensionError("expected a non-empty (n_blocks, N) array")
        R = Y.T @ Y.conj() / Y.shape[0]
        return cls(0.5 * (R + R.conj().T), Y.shape[0])


@dataclass(frozen=True, eq=False)
class AnalyticCovariance:
    """Exact covariance ``F F^H + sigma2 I`` with its signal factor ``F`` (N x K)."""

    matrix: np.ndarray
    noiseless: np.ndarray
    factor: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class CfoEstimate:
    w_hat: float
    cost_at_min: float
    grid_size: int
    refined: bool
    method: str = "proposed"


@dataclass(frozen=True, eq=False)
class CostScan:
    grid: np.ndarray
    cost: np.ndarray
    cfg: SystemConfig | None = None

    @property
    def step(self) -> float:
        return 2 * np.pi / len(self.grid)

    def argmin(self) -> float:
        return float(self.grid[int(np.argmin(self.cost))])

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["w", "J"])
        for g, j in zip(self.grid, self.cost):
            w.writerow([repr(float(g)), repr(float(j))])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _matrix(R) -> np.ndarray:
    if isinstance(R, (CovarianceEstimate, AnalyticCovariance)):
        return R.matrix
    return np.asarray(R, dtype=complex)


def accumulate(acc: CovarianceEstimate | None, y) -> CovarianceEstimate:
    """Fold one received block into the running mean."""
    y = y.samples if isinstance(y, RxBlock) else np.asarray(y, dtype=complex)
    if acc is None:
        acc = CovarianceEstimate.empty(y.shape[-1])
    if y.shape != (acc.matrix.shape[0],):
        raise DimensionError(f"block shape {y.shape} does not match covariance {acc.matrix.shape}")
    n = acc.block_count + 1
    R = acc.matrix + (np.outer(y, y.conj()) - acc.matrix) / n
    return CovarianceEstimate(0.5 * (R + R.conj().T), n)


def analytic_covariance(h: ChannelRealization, w0: float, cfg: SystemConfig) -> AnalyticCovariance:
    """D(w0) Phi^H H T_zp (Es I) T_zp^H H^H Phi D(w0)^H + sigma2 I."""
    check_cfo(w0)
    taps = h.taps if isinstance(h, ChannelRealization) else np.asarray(h, dtype=complex)
    H = circulant_from_taps(taps, cfg.N).matrix
    A = cfo_diagonal(w0, cfg.N)[:, None] * (cfg.dfnt.H @ H @ zero_pad(np.eye(cfg.K), cfg).T)
    F = np.sqrt(cfg.Es) * A
    noiseless = F @ F.conj().T
    return AnalyticCovariance(noiseless + cfg.sigma2 * np.eye(cfg.N), noiseless, F, cfg.sigma2)


def null_subchirps(cfg: SystemConfig) -> np.ndarray:
    """Rows phi_k, k = K+L+1..N, of the DFnT matrix."""
    if cfg.N - cfg.K - cfg.L < 1:
        raise NoNullSpaceError(
            f"N - K - L = {cfg.N - cfg.K - cfg.L}: need at least L + 1 = {cfg.L + 1} "
            f"null subchirps, have {cfg.N - cfg.K}"
        )
    return cfg.dfnt.matrix[cfg.K + cfg.L:]


def _candidate_vectors(w: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """V[c, n, k] = exp(j w_c n) conj(phi_k[n]) for the null subchirps k."""
    nulls = null_subchirps(cfg)
    return np.exp(1j * np.outer(w, np.arange(cfg.N)))[:, :, None] * nulls.conj().T[None]


def _costs(R, w, cfg: SystemConfig) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if isinstance(R, AnalyticCovariance):
        # ||F^H v||^2 + sigma2 ||v||^2 avoids the cancellation floor of v^H R v
        if R.matrix.shape != (cfg.N, cfg.N):
            raise DimensionError(f"covariance shape {R.matrix.shape} != ({cfg.N}, {cfg.N})")
        V = _candidate_vectors(w, cfg)
        FhV = np.einsum("nq,cnk->cqk", R.factor.conj(), V)
        return np.sum(np.abs(FhV) ** 2, axis=(1, 2)) + R.sigma2 * np.sum(np.abs(V) ** 2, axis=(1, 2))
    R = _matrix(R)
    if R.shape != (cfg.N, cfg.N):
        raise DimensionError(f"covariance shape {R.shape} != ({cfg.N}, {cfg.N})")
    V = _candidate_vectors(w, cfg)
    J = np.einsum("cnk,cnk->c", V.conj(), np.einsum("nm,cmk->cnk", R, V))
    tol = 1e-10 * max(1.0, float(np.abs(np.trace(R))))
    if np.max(np.abs(J.imag)) > tol:
        raise ArithmeticError("cost has a non-negligible imaginary part; covariance not Hermitian?")
    J = J.real
    if np.min(J) < -tol:
        raise ArithmeticError("negative cost; covariance not positive semidefinite?")
    return np.maximum(J, 0.0)


def cost_function(R, w: float, cfg: SystemConfig) -> float:
    """J(w) for a covariance given as an array or estimate object."""
    return float(_costs(R, w, cfg)[0])


def scan_cost(R, cfg: SystemConfig, N_c: int = DEFAULT_GRID) -> CostScan:
    """Evaluate J on the grid w = -pi + 2 pi m / N_c, m = 0..N_c-1."""
    if N_c < 2:
        raise ValueError("grid needs at least two candidates")
    grid = -np.pi + 2 * np.pi * np.arange(N_c) / N_c
    if not isinstance(R, AnalyticCovariance):
        R = _matrix(R)
    J = np.concatenate([_costs(R, grid[i:i + 4096], cfg) for i in range(0, N_c, 4096)])
    return CostScan(grid, J, cfg)


def _golden_section(f, a: float, b: float, iters: int):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def estimate_cfo(R, cfg: SystemConfig, N_c: int = DEFAULT_GRID,
                 refine_iters: int = DEFAULT_REFINE_ITERS) -> CfoEstimate:
    """Grid search over [-pi, pi) then golden-section refinement around the best cell."""
    if not isinstance(R, AnalyticCovariance):
        R = _matrix(R)
    scan = scan_cost(R, cfg, N_c)
    m = int(np.argmin(scan.cost))
    w_best, j_best = float(scan.grid[m]), float(scan.cost[m])
    if refine_iters > 0:
        step = scan.step
        w_ref, j_ref = _golden_section(
            lambda w: cost_function(R, float(wrap_cfo(w)), cfg),
            w_best - step, w_best + step, refine_iters,
        )
        if j_ref < j_best:
            w_best, j_best = float(wrap_cfo(w_ref)), j_ref
    return CfoEstimate(w_best, j_best, N_c, refine_iters > 0)


def cp_baseline_estimate(stream, cfg: SystemConfig, L_cp: int | None = None) -> CfoEstimate:
    """Delay-N autocorrelation over the ISI-free part of an excess CP.

    CP samples L..L_cp-1 of each block are untouched by the previous block and
    repeat N samples later up to a rotation exp(j w0 N), so the estimate is
    ``angle(sum conj(y[n]) y[n + N]) / N`` and lives in (-pi/N, pi/N]. Larger
    offsets alias.
    """
    L_cp = cfg.cp_len if L_cp is None else L_cp
    if L_cp <= cfg.L:
        raise NoExcessCpError(f"CP length {L_cp} leaves no ISI-free samples for channel order {cfg.L}")
    stream = np.asarray(stream, dtype=complex)
    step = cfg.N + L_cp
    if stream.size % step:
        raise DimensionError(f"stream length {stream.size} not a multiple of N + L_cp = {step}")
    blocks = stream.reshape(-1, step)
    head = blocks[:, cfg.L:L_cp]
    tail = blocks[:, cfg.L + cfg.N:L_cp + cfg.N]
    corr = np.sum(head.conj() * tail)
    return CfoEstimate(float(np.angle(corr)) / cfg.N, 0.0, 0, False, "cp_baseline")


def two_step_estimate(R, stream, cfg: SystemConfig, N_c: int = DEFAULT_GRID,
                      refine_iters: int = DEFAULT_REFINE_ITERS, L_cp: int | None = None) -> CfoEstimate:
    """Null-subchirp estimate for acquisition, then CP correlation on the residual."""
    coarse = estimate_cfo(R, cfg, N_c, refine_iters)
    stream = np.asarray(stream, dtype=complex)
    derotated = stream * np.exp(-1j * coarse.w_hat * np.arange(stream.size))
    fine = cp_baseline_estimate(derotated, cfg, L_cp)
    w = float(wrap_cfo(coarse.w_hat + fine.w_hat))
    return CfoEstimate(w, coarse.cost_at_min, N_c, coarse.refined, "two_step")


@dataclass(frozen=True)
class IdentifiabilityReport:
    applicable: bool
    minima: tuple = field(default_factory=tuple)
    clusters: int = 0
    all_near_truth: bool = False

    @property
    def unique(self) -> bool:
        return self.applicable and self.clusters == 1 and self.all_near_truth


def _circ_dist(a, b):
    return np.abs(wrap_cfo(np.asarray(a) - np.asarray(b)))


def identifiability_report(scan: CostScan, w0: float, threshold: float = 1e-4) -> IdentifiabilityReport:
    """Strict local minima of a scan lying below ``threshold * max(J)``.

    Minima within one grid step of each other form a cluster. The default
    threshold suits grids of a few thousand points; a much coarser grid can
    leave the true minimum above it.
    """
    if scan.cfg is not None and scan.cfg.N - scan.cfg.K - scan.cfg.L < 1:
        return IdentifiabilityReport(applicable=False)
    J = np.asarray(scan.cost)
    strict = (J < np.roll(J, 1)) & (J < np.roll(J, -1)) & (J < threshold * J.max())
    minima = tuple(float(w) for w in scan.grid[strict])
    step = scan.step * (1 + 1e-9)
    clusters = 0
    for i, w in enumerate(minima):
        if i == 0 or _circ_dist(w, minima[i - 1]) > step:
            clusters += 1
    if clusters > 1 and _circ_dist(minima[0], minima[-1]) <= step:
        clusters -= 1
    near = bool(minima) and all(_circ_dist(w, w0) <= step for w in minima)
    return IdentifiabilityReport(True, minima, clusters, near)

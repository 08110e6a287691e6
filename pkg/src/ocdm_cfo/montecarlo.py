"""Seeded Monte Carlo engines for CFO-MSE and BER curves.

Every run draws from its own generator seeded by
``SeedSequence([seed, snr_index, run_index, stream_tag])``, and runs are
grouped into fixed-size batches. Batches may execute in any order or process,
and their per-run values are merged by run index, so results do not depend
on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cfo_estimator import (
    DEFAULT_GRID,
    DEFAULT_REFINE_ITERS,
    CovarianceEstimate,
    cp_baseline_estimate,
    estimate_cfo,
    two_step_estimate,
)
from .equalizers import ML_CAP, ml_detect_batch, mmse_batch, toeplitz_channel, zf_batch
from .errors import (
    CombinatorialBlowupError,
    ConfigurationError,
    DegenerateConfigurationError,
    UndersampledError,
)
from .waveform import (
    SystemConfig,
    assemble_blocks,
    complex_noise,
    demap_qpsk,
    draw_channel,
    map_qpsk,
    propagate_blocks,
    qpsk_constellation,
    strip_cp,
    transmit_stream,
    wrap_cfo,
)

logger = logging.getLogger(__name__)

ESTIMATORS = ("proposed", "cp_baseline", "two_step")
EQUALIZERS = ("zf", "mmse", "ml")
CFO_MODES = ("estimate", "genie")
CSI_MODES = ("static", "per_block")
BATCH = 256
DEFAULT_SNR_DB = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

_TAG_MSE, _TAG_BER, _TAG_BER_ML = 0, 1, 2


@dataclass(frozen=True)
class ExperimentPlan:
    cfg: SystemConfig
    snr_db: tuple = DEFAULT_SNR_DB
    runs: int = 100
    blocks: int = 1000
    cfo_range: tuple = (-np.pi, np.pi)
    estimators: tuple = ("proposed",)
    equalizers: tuple = ("zf", "mmse")
    grid: int = DEFAULT_GRID
    refine_iters: int = DEFAULT_REFINE_ITERS
    seed: int = 0
    cfo_mode: str = "estimate"
    ml_cfg: SystemConfig | None = None
    ml_cap: int = ML_CAP
    csi: str = "static"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "cfo_range", tuple(float(c) for c in self.cfo_range))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "equalizers", tuple(self.equalizers))
        if self.runs < 1 or self.blocks < 1:
            raise ValueError("runs and blocks must be at least 1")
        lo, hi = self.cfo_range
        if not (-np.pi <= lo < hi <= np.pi):
            raise ValueError(f"cfo_range {self.cfo_range} not an interval inside [-pi, pi)")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
        for e in self.equalizers:
            if e not in EQUALIZERS:
                raise ValueError(f"unknown equalizer {e!r}; choose from {EQUALIZERS}")
        if self.cfo_mode not in CFO_MODES:
            raise ValueError(f"cfo_mode must be one of {CFO_MODES}")
        if self.csi not in CSI_MODES:
            raise ValueError(f"csi must be one of {CSI_MODES}")
        if not self.snr_db:
            raise ValueError("empty SNR grid")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snr_db"] = list(self.snr_db)
        d["cfo_range"] = list(self.cfo_range)
        d["estimators"] = list(self.estimators)
        d["equalizers"] = list(self.equalizers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        d["cfg"] = SystemConfig(**d["cfg"])
        if d.get("ml_cfg") is not None:
            d["ml_cfg"] = SystemConfig(**d["ml_cfg"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class CurveResult:
    label: str
    points: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])

    def value_at(self, snr_db: float) -> float:
        for s, v, _ in self.points:
            if s == snr_db:
                return v
        raise KeyError(snr_db)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_db", "value", "std_error"])
        for s, v, e in self.points:
            w.writerow([repr(float(s)), repr(float(v)), repr(float(e))])
        return buf.getvalue()


def run_rng(seed: int, snr_index: int, run_index: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, snr_index, run_index, tag]))


def _batches(runs: int):
    return [(a, min(runs, a + BATCH)) for a in range(0, runs, BATCH)]


def _execute(fn, jobs, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _summarize(label: str, snrs, per_run: list, meta: dict) -> CurveResult:
    pts = []
    for s, vals in zip(snrs, per_run):
        vals = np.asarray(vals, dtype=float)
        se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        pts.append((float(s), float(np.mean(vals)), se))
    return CurveResult(label, tuple(pts), meta)


def _draw_frame(cfg: SystemConfig, blocks: int, rng: np.random.Generator):
    bits = rng.integers(0, 2, size=(blocks, 2 * cfg.K), dtype=np.int8)
    S = map_qpsk(bits, cfg.Es).reshape(blocks, cfg.K)
    return bits, S


# --------------------------------------------------------------------------- MSE


def _check_estimators(plan: ExperimentPlan, cfg: SystemConfig):
    if not cfg.identifiable and any(e in ("proposed", "two_step") for e in plan.estimators):
        raise ConfigurationError(
            f"null-subchirp estimator needs N - K >= L + 1; have {cfg.N - cfg.K} nulls, L = {cfg.L}"
        )
    if cfg.cp_len <= cfg.L and any(e in ("cp_baseline", "two_step") for e in plan.estimators):
        raise ConfigurationError(f"CP-based estimators need cp_len > L; have cp_len = {cfg.cp_len}")


def mse_trial(plan: ExperimentPlan, snr_index: int, run_index: int) -> np.ndarray:
    """Wrapped squared CFO error of each requested estimator for one run."""
    cfg = plan.cfg.with_snr_db(plan.snr_db[snr_index])
    rng = run_rng(plan.seed, snr_index, run_index, _TAG_MSE)
    ch = draw_channel(cfg.L, rng)
    w0 = float(rng.uniform(*plan.cfo_range))
    _, S = _draw_frame(cfg, plan.blocks, rng)
    X = assemble_blocks(S, cfg)
    if any(e != "proposed" for e in plan.estimators):
        stream = transmit_stream(X, ch, w0, cfg, rng)
        Y = strip_cp(stream, cfg)
    else:
        stream = None
        Y = propagate_blocks(X, ch, w0, cfg, rng)
    R = CovarianceEstimate.from_blocks(Y)
    out = []
    for e in plan.estimators:
        if e == "proposed":
            est = estimate_cfo(R, cfg, plan.grid, plan.refine_iters)
        elif e == "cp_baseline":
            est = cp_baseline_estimate(stream, cfg)
        else:
            est = two_step_estimate(R, stream, cfg, plan.grid, plan.refine_iters)
        out.append(float(cfo_error(est.w_hat, w0)) ** 2)
    return np.array(out)


def cfo_error(w_hat, w0):
    """Estimation error wrapped into (-pi, pi]."""
    return -wrap_cfo(-(np.asarray(w_hat) - np.asarray(w0)))


def _mse_batch(plan: ExperimentPlan, snr_index: int, a: int, b: int) -> np.ndarray:
    return np.stack([mse_trial(plan, snr_index, r) for r in range(a, b)])


def run_mse_experiment(plan: ExperimentPlan) -> dict:
    """CFO mean squared error vs SNR, one :class:`CurveResult` per estimator."""
    _check_estimators(plan, plan.cfg)
    jobs = [(plan, si, a, b) for si in range(len(plan.snr_db)) for a, b in _batches(plan.runs)]
    results = _execute(_mse_batch, jobs, plan.workers)
    per_snr = [np.concatenate(results[si * len(_batches(plan.runs)):(si + 1) * len(_batches(plan.runs))])
               for si in range(len(plan.snr_db))]
    out = {}
    for j, e in enumerate(plan.estimators):
        meta = {"metric": "mse", "estimator": e, "plan": plan.digest()}
        out[e] = _summarize(e, plan.snr_db, [v[:, j] for v in per_snr], meta)
    return out


# --------------------------------------------------------------------------- BER


def _ber_groups(plan: ExperimentPlan) -> list:
    """(cfg, equalizers, stream tag) groups; ML may run on its own reduced system."""
    linear = tuple(e for e in plan.equalizers if e != "ml")
    groups = []
    if "ml" in plan.equalizers and plan.ml_cfg is not None:
        if linear:
            groups.append((plan.cfg, linear, _TAG_BER))
        groups.append((plan.ml_cfg, ("ml",), _TAG_BER_ML))
    else:
        groups.append((plan.cfg, plan.equalizers, _TAG_BER))
    for cfg, eqs, _ in groups:
        if "ml" in eqs and 4 ** cfg.K > plan.ml_cap:
            raise ConfigurationError(
                f"ML over QPSK with K={cfg.K} needs 4^{cfg.K} = {4 ** cfg.K} hypotheses "
                f"(cap {plan.ml_cap}); reduce K or give a reduced ML system"
            )
        if plan.cfo_mode == "estimate" and not cfg.identifiable:
            raise ConfigurationError(
                f"CFO estimation needs N - K >= L + 1 (N={cfg.N}, K={cfg.K}, L={cfg.L}); "
                "use cfo_mode 'genie' for this system"
            )
    return groups


def _draw_ber_run(plan, cfg, snr_index, run_index, tag):
    rng = run_rng(plan.seed, snr_index, run_index, tag)
    ch = draw_channel(cfg.L, rng)
    w0 = float(rng.uniform(*plan.cfo_range))
    bits, S = _draw_frame(cfg, plan.blocks, rng)
    noise = complex_noise((plan.blocks, cfg.N), cfg.sigma2, rng)
    return ch.taps, w0, bits, S, noise


def _ber_batch(plan: ExperimentPlan, cfg: SystemConfig, equalizers, snr_index: int, tag: int,
               a: int, b: int) -> np.ndarray:
    """Per-run BER for runs a..b-1 (rows) and each equalizer (columns).

    Random draws are per run; the channel, CFO, equalizer and detection
    algebra is vectorized across the batch.

    With ``csi="static"`` the receiver knows only the channel taps, so a
    residual CFO leaves a common phase that grows with the block index. With
    ``csi="per_block"`` that per-block common phase is part of the receiver's
    channel knowledge and is removed before equalization.
    """
    cfg = cfg.with_snr_db(plan.snr_db[snr_index])
    draws = [_draw_ber_run(plan, cfg, snr_index, r, tag) for r in range(a, b)]
    taps = np.stack([d[0] for d in draws])
    w0 = np.array([d[1] for d in draws])
    bits = np.stack([d[2] for d in draws])
    S = np.stack([d[3] for d in draws])
    noise = np.stack([d[4] for d in draws])

    phi = cfg.dfnt.matrix
    T = toeplitz_channel(taps, cfg.N, cfg.K)          # H T_zp per run
    B = phi.conj().T @ T                               # H Phi^H T_zp
    n = np.arange(cfg.N)
    idx = np.arange(1, plan.blocks + 1)
    rot = np.exp(1j * w0[:, None, None] * ((idx * (cfg.N + cfg.cp_len) - cfg.N)[None, :, None]
                                           + n[None, None, :]))
    Y = rot * (S @ np.swapaxes(B, -1, -2)) + noise
    if plan.cfo_mode == "estimate":
        w_hat = np.array([
            estimate_cfo(CovarianceEstimate.from_blocks(y), cfg, plan.grid, plan.refine_iters).w_hat
            for y in Y
        ])
    else:
        w_hat = w0
    t_block = (idx * (cfg.N + cfg.cp_len) - cfg.N)[None, :, None]
    rot_hat = np.exp(-1j * w_hat[:, None, None] * (t_block + n[None, None, :]))
    r = rot_hat * Y
    if plan.csi == "per_block":
        r = r * np.exp(-1j * (w0 - w_hat)[:, None, None] * t_block)
    out = np.empty((b - a, len(equalizers)))
    nbits = bits[0].size
    for j, e in enumerate(equalizers):
        if e == "zf":
            s_hat = r @ np.swapaxes(zf_batch(B), -1, -2)
        elif e == "mmse":
            s_hat = r @ np.swapaxes(mmse_batch(B, cfg.sigma2, cfg.Es), -1, -2)
        else:
            s_hat = ml_detect_batch(r, B, qpsk_constellation(cfg.Es), plan.ml_cap)
        hard = demap_qpsk(s_hat).reshape(bits.shape)
        out[:, j] = np.count_nonzero((hard != bits).reshape(b - a, -1), axis=1) / nbits
    return out


def ber_trial(plan: ExperimentPlan, cfg: SystemConfig, equalizers, snr_index: int,
              run_index: int, tag: int = _TAG_BER) -> np.ndarray:
    """Bit error rate of each equalizer for a single run."""
    return _ber_batch(plan, cfg, equalizers, snr_index, tag, run_index, run_index + 1)[0]


def run_ber_experiment(plan: ExperimentPlan) -> dict:
    """BER vs SNR, one :class:`CurveResult` per equalizer."""
    try:
        groups = _ber_groups(plan)
    except CombinatorialBlowupError as exc:
        raise ConfigurationError(str(exc)) from exc
    out = {}
    nb = len(_batches(plan.runs))
    for cfg, eqs, tag in groups:
        jobs = [(plan, cfg, eqs, si, tag, a, b)
                for si in range(len(plan.snr_db)) for a, b in _batches(plan.runs)]
        results = _execute(_ber_batch, jobs, plan.workers)
        per_snr = [np.concatenate(results[si * nb:(si + 1) * nb]) for si in range(len(plan.snr_db))]
        for j, e in enumerate(eqs):
            meta = {"metric": "ber", "equalizer": e, "N": cfg.N, "K": cfg.K, "L": cfg.L,
                    "plan": plan.digest()}
            out[e] = _summarize(e, plan.snr_db, [v[:, j] for v in per_snr], meta)
    return {e: out[e] for e in plan.equalizers}


# --------------------------------------------------------------------------- metrics


def _window(curve: CurveResult, window_db):
    lo, hi = window_db
    snr, ber, se = curve.snr_db, curve.values, curve.std_errors
    keep = (snr >= lo) & (snr <= hi) & (ber > 0)
    if np.count_nonzero(keep) < 3:
        raise UndersampledError(
            f"need at least 3 nonzero BER points in {window_db} dB, have {np.count_nonzero(keep)}"
        )
    return snr[keep] / 10.0, ber[keep], se[keep]


def estimate_diversity_slope(curve: CurveResult, window_db=(15.0, 30.0)) -> float:
    """Diversity order: minus the least-squares slope of log10(BER) vs SNR_dB / 10."""
    x, ber, _ = _window(curve, window_db)
    return float(-np.polyfit(x, np.log10(ber), 1)[0])


def diversity_standard_error(curve: CurveResult, window_db=(15.0, 30.0)) -> float:
    """Delta-method standard error of :func:`estimate_diversity_slope`."""
    x, ber, se = _window(curve, window_db)
    c = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    return float(np.sqrt(np.sum((c * se / (ber * np.log(10))) ** 2)))


def spectral_efficiency(N: int, L: int) -> Fraction:
    """(N - L - 1) / (N + L) for L + 1 nulls and a length-L CP."""
    if N <= L + 1:
        raise DegenerateConfigurationError(f"N={N} leaves no data subchirps for L={L}")
    return Fraction(N - L - 1, N + L)


__all__ = [
    "ExperimentPlan", "CurveResult", "run_mse_experiment", "run_ber_experiment",
    "estimate_diversity_slope", "diversity_standard_error", "spectral_efficiency",
    "mse_trial", "ber_trial", "cfo_error", "run_rng",
]

"""Blind full-range CFO estimation for OCDM with consecutive null subchirps."""

from .fresnel import (
    DfntMatrix,
    CirculantChannel,
    build_dfnt,
    circulant_from_taps,
    apply_dfnt,
    apply_idfnt,
)
from .waveform import (
    SystemConfig,
    ChannelRealization,
    TxBlock,
    RxBlock,
    map_qpsk,
    demap_qpsk,
    assemble_block,
    draw_channel,
    propagate_block,
    compensate_cfo,
)
from .cfo_estimator import (
    CovarianceEstimate,
    CfoEstimate,
    CostScan,
    accumulate,
    analytic_covariance,
    cost_function,
    scan_cost,
    estimate_cfo,
    cp_baseline_estimate,
    two_step_estimate,
    identifiability_report,
)
from .equalizers import (
    CompositeChannel,
    Equalizer,
    build_composite,
    zf,
    mmse,
    equalize,
    ml_detect,
)
from .montecarlo import (
    ExperimentPlan,
    CurveResult,
    run_mse_experiment,
    run_ber_experiment,
    estimate_diversity_slope,
    spectral_efficiency,
)
from .errors import OcdmError, ConfigurationError

__version__ = "0.1.0"

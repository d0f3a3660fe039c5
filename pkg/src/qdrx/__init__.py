"""Quantized distributed reception: sign-quantizing receive nodes, fusion-center
ML/ZF receivers, probit-likelihood channel estimation, and the Monte Carlo
harness that measures them."""

from .chanest import (
    ChannelEstimate,
    SignRefinedTraining,
    corollary1_mse,
    lemma2_mse,
    ml_channel_estimate,
    normalized_mse,
    sign_refine_training,
    zf_channel_estimate,
)
from .detection import (
    DetectionResult,
    SignRefinedChannels,
    ml_estimate_relaxed,
    ml_receive,
    sign_refine,
    zf_receive,
)
from .errors import CapacityError, QdrxError, SingularChannelError, SpecValidationError
from .experiments import (
    ExperimentSpec,
    MetricRecord,
    calibrate_sigma_q,
    compare_theory,
    run_lemma1_convergence,
    run_mse_sweep,
    run_ser_sweep,
)
from .model import (
    Constellation,
    QuantizedBlock,
    RealLiftedChannel,
    TrainingBlock,
    draw_channel,
    draw_symbols,
    make_psk,
    make_training,
    quantize,
    transmit_data,
    transmit_training,
)
from .numerics import RandomStream, dlog_phi_cdf, gaussian_pair, log_phi_cdf, phi_cdf

__version__ = "0.1.0"

"""Quantized minimax estimation over Sobolev ellipsoids."""

from .allocation import allocate_bits, reverse_waterfill
from .blocks import BlockSystem, block_slice, build_blocks
from .bounds import (
    achieving_sigma_insufficient,
    insufficient_constant,
    optimal_J,
    pinsker_constant,
    risk_upper_bound,
    solve_variational,
)
from .codec import (
    CodecConfig,
    QuantizedMessage,
    blockwise_james_stein,
    decode,
    distortion_bound,
    encode,
    james_stein_block,
)
from .harness import ExperimentConfig, RiskRecord, emit_csv, parse_csv, run_experiment
from .sequence_model import (
    EllipsoidParams,
    ObservedSequence,
    damped_doppler,
    fourier_coefficients,
    sample_observation,
    trig_basis,
)

__version__ = "0.1.0"

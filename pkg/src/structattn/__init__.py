"""Convolution-structured initialization for transformer attention weights.

Builds per-head (Q, K) weight pairs whose initial softmax attention maps
realize impulse convolution patterns on the token grid, together with
the span-property theory that justifies them, fidelity metrics, a
portable binary weight container, and a CLI.
"""

from ._version import __version__
from .container import read_container, render_attention_pgm, write_container
from .errors import (
    ConfigurationError,
    ContainerCorruptionError,
    ContainerFormatError,
    ContainerValidationError,
    ContractError,
    InfeasibleError,
    SingularMatrixError,
    StructAttnError,
    UndefinedInputError,
    VerificationError,
)
from .estimator import StructuredAttentionInit
from .fidelity import (
    FidelityReport,
    detect_offset,
    evaluate_map,
    map_error,
    peak_accuracy,
    row_entropy,
    write_fidelity_csv,
)
from .initializers import (
    AttentionInit,
    InitHyperparams,
    ModelConfig,
    ModelInit,
    NoiseSpec,
    PosEncoding,
    build_target_map,
    derive_seed,
    factor_target_map,
    init_default,
    init_mimetic,
    init_pos_encoding,
    init_vit,
    layer_norm_rows,
    pseudo_inverse,
    solve_qk,
    synthesize_attention,
)
from .kernels import (
    ConvMatrix,
    GridShape,
    ImpulseOffset,
    Kernel2D,
    all_offsets,
    make_box_kernel,
    make_conv_matrix,
    make_impulse_kernel,
    sample_impulse_bank,
    sample_random_kernel,
)
from .spanned import (
    FilterBank,
    SpanReport,
    check_spanned,
    mixer_block,
    mixer_spatial,
    numerical_rank,
    prop1_oracle,
    stable_rank,
)

__all__ = [
    "__version__",
    # kernels
    "GridShape",
    "ImpulseOffset",
    "Kernel2D",
    "ConvMatrix",
    "all_offsets",
    "make_impulse_kernel",
    "make_box_kernel",
    "sample_random_kernel",
    "sample_impulse_bank",
    "make_conv_matrix",
    # span theory
    "FilterBank",
    "SpanReport",
    "stable_rank",
    "numerical_rank",
    "check_spanned",
    "mixer_spatial",
    "mixer_block",
    "prop1_oracle",
    # initializers
    "PosEncoding",
    "InitHyperparams",
    "AttentionInit",
    "ModelConfig",
    "ModelInit",
    "NoiseSpec",
    "derive_seed",
    "init_pos_encoding",
    "layer_norm_rows",
    "pseudo_inverse",
    "build_target_map",
    "factor_target_map",
    "solve_qk",
    "synthesize_attention",
    "init_vit",
    "init_default",
    "init_mimetic",
    # fidelity
    "FidelityReport",
    "peak_accuracy",
    "detect_offset",
    "row_entropy",
    "map_error",
    "evaluate_map",
    "write_fidelity_csv",
    # container
    "write_container",
    "read_container",
    "render_attention_pgm",
    # estimator
    "StructuredAttentionInit",
    # errors
    "StructAttnError",
    "ConfigurationError",
    "UndefinedInputError",
    "SingularMatrixError",
    "InfeasibleError",
    "ContractError",
    "ContainerFormatError",
    "ContainerCorruptionError",
    "ContainerValidationError",
    "VerificationError",
]

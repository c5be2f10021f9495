"""Low-rank adapter fine-tuning experiments backed by a C++ core."""

from ._rosa import (
    ConfigError,
    FormatError,
    InvalidInputError,
    IoError,
    NumericFailure,
    RankTooLargeError,
    RosaAdapter,
    RosaError,
    ShapeError,
    SingularMatrixError,
    checkpoint_forward,
    irreducible_error,
    lora_error_lower_bound,
    numerical_rank,
    realizable_instance,
    rosa_exact_iterate,
    rrr_optimum,
    run_theorem_suite,
    sample_indices,
    svd,
    train,
    trainable_reduction,
)

__version__ = "0.1.0"

"""Column space estimation for streaming, partially observed low-rank matrices."""

from .core import (
    CoherenceUnreachableError,
    DegenerateGapWarning,
    PartialMatrix,
    RankDeficientError,
    SingularDesignError,
    coherence,
    row_restrict,
    thin_qr,
    top_r_eigvecs,
)
from .data import (
    GroundTruthModel,
    filter_by_missingness,
    gen_column,
    gen_columns,
    gen_ground_truth,
    read_partial_csv,
    write_partial_csv,
    zero_fill_basis,
)
from .estimator import (
    EstimatorConfig,
    column_space_estimate,
    double_column_space_estimate,
    fit_w_block,
    fit_x_block,
    median_ls,
    scaled_pca,
    smooth_qr,
)
from .evaluation import impute, rel_error_masked, sin_theta
from .experiment import ExperimentSpec, MetricsRecord, run_experiment, summarize
from .models import BlockAltMin, ScaledPCA, StreamingAltMin
from .sampling import (
    SamplingBudget,
    SubsetQuality,
    active_subset,
    sigma_star,
    subset_quality,
    uniform_subset,
    uniform_subset_excluding,
)
from .streaming import StreamState, feed_column, stream_init, stream_next_indices, stream_observe

__version__ = "0.1.0"

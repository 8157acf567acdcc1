"""Sparse conditional-dependency graphs for tensor datasets with shared axes.

Each axis of every data tensor gets its own precision matrix under a
Kronecker-sum Gaussian model; estimation needs one eigendecomposition per
axis plus gradient descent over eigenvalues, so the full Kronecker sum never
materializes.  Modalities sharing an axis pool their evidence for it.
"""

from ._threads import get_num_threads, set_num_threads
from .bench import BenchRecord, bench_run
from .errors import ConvergenceError, NotPositiveDefiniteError
from .estimator import (
    AxisSpectrum,
    EstimatorConfig,
    FitResult,
    PriorSpec,
    compute_grams,
    decompose,
    estimate_eigenvalues,
    fit,
    fit_core,
    gradient,
    objective,
    priorize,
    project_gradient,
    recompose,
    restricted_l1_refine,
)
from .kernels import BACKEND
from .metrics import assortativity, aupr, pr_curve
from .preprocess import PreprocessSpec, center, log1p_transform, nonparanormal_gram
from .sparsify import (
    PartitionPlan,
    SparseGraph,
    covariance_partition,
    partitioned_fit,
    threshold_colnorm_top_k,
    threshold_global,
    threshold_top_k_rows,
)
from .synth import (
    GroundTruth,
    brute_force_fit,
    gen_ar1_precision,
    gen_er_precision,
    sample_ks_normal,
)
from .tensors import (
    Axis,
    Dataset,
    GramSet,
    Modality,
    effective_gram,
    gram,
    kron_product,
    kron_sum_dense,
    ks_diag_marginal,
    matricize,
    stridewise_blockwise_trace,
    unmatricize,
)

__version__ = "0.1.0"

"""Kernel dictionary learning with sparsity priors for streamline bundles."""

__version__ = "0.1.0"

from .errors import DataError, NumericalError, TractsparseError
from .model import Labeling, SolverConfig, Streamline, Tractogram, validate_tractogram
from .distances import (
    DEFAULT_ENDPOINT_THRESHOLD_MM,
    DistanceMatrix,
    EndpointGraph,
    build_endpoint_graph,
    cross_distances,
    dist_ep,
    dist_hausdorff,
    dist_mcp,
    graph_laplacian,
    pairwise_distances,
)
from .kernel import (
    KernelMatrix,
    kernel_from_distances,
    nystrom_kernel,
    rbf_kernel,
    select_gamma,
    spectrum_shift,
)
from .solvers import (
    DEFAULT_LAMBDA_L,
    Assignment,
    Dictionary,
    FitResult,
    default_lambda2,
    gksc_fit,
    hard_labels,
    init_dictionary_from_labels,
    kkm_assign,
    kkm_fit,
    ksc_fit,
    mult_update_A,
    nnkomp,
    random_selection_init,
    segment_with_dictionary,
    spectral_init,
)
from .metrics import (
    MetricReport,
    adjusted_rand_index,
    compute_metrics,
    normalized_ari,
    rand_index,
    silhouette,
)
from .synth import PRESETS, BundleSpec, generate
from .io import (
    read_dm,
    read_km,
    read_labels,
    read_sl,
    read_slb,
    write_dm,
    write_dm_csv,
    write_fit_dir,
    write_km,
    write_labels,
    write_sl,
    write_slb,
)
from .atlas import Atlas, SegmentResult, build_atlas, load_atlas, save_atlas, segment_with_atlas

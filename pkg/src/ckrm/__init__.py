"""Convolutional kernel redundancy measurement.

Quantifies how similar the learnt kernels of a convolution layer are to
one another, using a luminance-tolerant variant of structural
similarity, and turns the measured redundancy into width-reduction
suggestions with exact parameter accounting.
"""

__version__ = "0.1.0"

from .errors import ArchiveError, ConstraintViolation, InputError, ReportError
from .redundancy import (
    CkrmResult,
    KernelPairSimilarity,
    MultiRunCkrm,
    OmegaSample,
    aggregate,
    analyze_layer,
    kernel_similarity,
    measure_redundancy,
    sample_omega,
)
from .ssim import (
    PatchPlan,
    PatchStats,
    SimilarityParams,
    big_phi,
    components,
    demo_noise,
    phi,
    psi,
)
from .structure import (
    LayerSpec,
    NetworkStructure,
    SuggestionPlan,
    apply_plan,
    bundled_structure,
    count_params,
    load_structure,
    save_structure,
    suggest,
    validate,
)
from .tensor_io import ConvKernelSet, TensorArchive, TensorRecord, as_conv_kernel, load_archive

__all__ = [
    "ArchiveError",
    "ConstraintViolation",
    "InputError",
    "ReportError",
    "CkrmResult",
    "KernelPairSimilarity",
    "MultiRunCkrm",
    "OmegaSample",
    "aggregate",
    "analyze_layer",
    "kernel_similarity",
    "measure_redundancy",
    "sample_omega",
    "PatchPlan",
    "PatchStats",
    "SimilarityParams",
    "big_phi",
    "components",
    "demo_noise",
    "phi",
    "psi",
    "LayerSpec",
    "NetworkStructure",
    "SuggestionPlan",
    "apply_plan",
    "bundled_structure",
    "count_params",
    "load_structure",
    "save_structure",
    "suggest",
    "validate",
    "ConvKernelSet",
    "TensorArchive",
    "TensorRecord",
    "as_conv_kernel",
    "load_archive",
    "__version__",
]

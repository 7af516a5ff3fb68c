"""Universal perturbations for interpretation maps.

Thin numpy-facing bindings over the C++ core: models, training,
interpretation maps, the universal and per-image attacks, and the
evaluation metrics.
"""

from ._core import (
    Network,
    __version__,
    accuracy,
    completeness_gap,
    fooling_rate,
    gradient_matrix,
    load_idx_dataset,
    load_network,
    make_cnn,
    make_fcn,
    mean_dissimilarity,
    normalized_dissimilarity,
    per_image_fgm,
    per_image_pgd,
    random_universal,
    saliency,
    save_network,
    synthetic_blobs,
    top_singular_direction,
    train,
    uap_classification,
    upi_grad,
    upi_pca,
)

__all__ = [
    "Network",
    "__version__",
    "accuracy",
    "completeness_gap",
    "fooling_rate",
    "gradient_matrix",
    "load_idx_dataset",
    "load_network",
    "make_cnn",
    "make_fcn",
    "mean_dissimilarity",
    "normalized_dissimilarity",
    "per_image_fgm",
    "per_image_pgd",
    "random_universal",
    "saliency",
    "save_network",
    "synthetic_blobs",
    "top_singular_direction",
    "train",
    "uap_classification",
    "upi_grad",
    "upi_pca",
]

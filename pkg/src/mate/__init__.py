"""Factor-count estimation for high-dimensional data with entries missing completely at random."""

__version__ = "0.1.0"

from .datagen import (
    FactorModelSpec,
    FeatureBlocks,
    GammaDiagonal,
    Homogeneous,
    IncompleteMatrix,
    Isotropic,
    SampleBlocks,
    apply_mcar,
    estimate_rates,
    generate_complete,
    ingest_csv,
    standardize,
)
from .edges import DiscreteMeasure, EdgeResult, feature_edge, mp_edge, sample_edge
from .errors import MateError
from .estimators import (
    MateConfig,
    MateResult,
    baseline_m_ed,
    baseline_m_er,
    baseline_m_gr,
    mate_anisotropic,
    mate_isotropic,
)
from .spectra import sample_cov_eigs

__all__ = [
    "DiscreteMeasure",
    "EdgeResult",
    "FactorModelSpec",
    "FeatureBlocks",
    "GammaDiagonal",
    "Homogeneous",
    "IncompleteMatrix",
    "Isotropic",
    "MateConfig",
    "MateError",
    "MateResult",
    "SampleBlocks",
    "apply_mcar",
    "baseline_m_ed",
    "baseline_m_er",
    "baseline_m_gr",
    "estimate_rates",
    "feature_edge",
    "generate_complete",
    "ingest_csv",
    "mate_anisotropic",
    "mate_isotropic",
    "mp_edge",
    "sample_cov_eigs",
    "sample_edge",
    "standardize",
]

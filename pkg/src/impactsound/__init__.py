"""Impact-sounding analytics for concrete slabs.

Spectral features from position-tagged tap recordings, unsupervised defect
clustering (K-means, spectral clustering), PCA maps and rasterized slab maps.
"""

__version__ = "0.1.0"

from .errors import DataError, ImpactSoundError, NumericError
from .signal_io import Dataset, Recording, grid_dims, load_manifest, parse_wav, write_wav
from .spectral import Spectrum, dft_naive, fft, one_sided_spectrum
from .features import FeatureMatrix, build_feature_matrix, enhance, standardize
from .pca import PcaModel, combine_components, fit_pca, pca_filter, transform
from .clustering import ClusterModel, compare_clusterings, kmeans, silhouette, spectral_cluster
from .mapping import GridMap, normalize_map, rasterize, write_map_csv, write_pgm
from .synth import SlabSpec, generate, score_against_truth

__all__ = [
    "ClusterModel", "DataError", "Dataset", "FeatureMatrix", "GridMap", "ImpactSoundError",
    "NumericError", "PcaModel", "Recording", "SlabSpec", "Spectrum", "build_feature_matrix",
    "combine_components", "compare_clusterings", "dft_naive", "enhance", "fft", "fit_pca",
    "generate", "grid_dims", "kmeans", "load_manifest", "normalize_map", "one_sided_spectrum",
    "parse_wav", "pca_filter", "rasterize", "score_against_truth", "silhouette",
    "spectral_cluster", "standardize", "transform", "write_map_csv", "write_pgm", "write_wav",
]

"""Radiomics: transforms, discretization and shape/first-order/GLCM/GLRLM features."""

from .extractor import (DEFAULT_TRANSFORMS, FeatureVector, RadiomicsConfig,
                        extract_radiomics)
from .firstorder import DiscretizationSpec, discretize, first_order_features
from .shape import shape_features
from .texture import (DIRECTIONS, glcm_features, glcm_matrices, glrlm_features,
                      glrlm_matrices)
from .transforms import haar_wavelet_3d, inverse_haar_bands, log_transform

__all__ = [
    "DEFAULT_TRANSFORMS", "DIRECTIONS", "DiscretizationSpec", "FeatureVector",
    "RadiomicsConfig", "discretize", "extract_radiomics", "first_order_features",
    "glcm_features", "glcm_matrices", "glrlm_features", "glrlm_matrices",
    "haar_wavelet_3d", "inverse_haar_bands", "log_transform", "shape_features",
]

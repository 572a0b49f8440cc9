from .extractor import FeatureExtractorSpec, build_feature_extractor
from .metrics import (FeatureStats, feature_stats, frechet_distance,
                      inception_score, psnr, r_fvd)
from .profiler import latent_dim_accounting, profile_token_costs

__all__ = [
    "FeatureExtractorSpec",
    "build_feature_extractor",
    "FeatureStats",
    "feature_stats",
    "frechet_distance",
    "psnr",
    "r_fvd",
    "inception_score",
    "latent_dim_accounting",
    "profile_token_costs",
]

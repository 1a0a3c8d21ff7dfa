//! Low-level (per-epoch signal) and mid-level (dictionary) features.

pub mod low;
pub mod mid;
pub mod transform;

pub use low::{
    actigraphy_features, dominant_freq_features, frame_indices, low_level_features,
    low_level_for_epoch, mean_rr_features, FeatureContext, FrameConfig, LowLevelFeature,
};
pub use mid::{
    assemble_final, bow_encode, bow_encode_rows, final_features, kmeans_fit, zscore_apply,
    zscore_apply_rows, zscore_fit, Dictionary, FinalFeature, KMeansConfig, NormStats,
};
pub use transform::{dct2, idct2, real_cepstrum};

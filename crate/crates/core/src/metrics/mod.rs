//! Masked classification and ranking metrics, feature similarity and cost
//! tables.

mod classification;
mod cost;
mod similarity;

pub use classification::{
    average_precision_scores, confusion, evaluate, pr_auc, precision, recall, roc_auc, roc_auc_scores,
    ConfusionCounts, Evaluation, MaskedPredictions, Rate, Summary,
};
pub use cost::{cost_report, CostReport, CostRow};
pub use similarity::{
    feature_matrix, pairwise_matrix, pearson, ssim, FeatureMatrix, Measure, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};

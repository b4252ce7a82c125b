//! Training objective: focal utility loss plus weighted fairness penalty.

pub mod fairness;
pub mod focal;
pub mod ranking;
pub mod similarity;

pub use fairness::{
    fairness_loss_and_grad, plan_fairness, FairnessConfig, FairnessPlan, PairTriple, PairWeighting,
};
pub use focal::{focal_loss, FocalConfig};
pub use ranking::{ndcg_at_k, rank_by_score, sigmoid, softplus};
pub use similarity::{
    apply_boost, apriori_similarity, boost_matrix, cosine, fit_rescale, learned_similarity,
    pairwise_cosine, pairwise_cosine_backward, RescaleParams, SimilarityMatrix,
};

use crate::error::{Error, Result};

/// Combine the utility and fairness terms: total = utility + gamma * fairness.
/// Non-finite input is a numeric failure, not a silent NaN.
pub fn total_loss(utility: f64, fairness: f64, gamma: f64) -> Result<f64> {
    let total = utility + gamma * fairness;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "total loss is not finite (utility {utility}, fairness {fairness}, gamma {gamma})"
        )));
    }
    Ok(total)
}

//! Rank-aware individual fairness loss over a track pool.
//!
//! Planning freezes everything derived from the current embeddings: the
//! per-anchor candidate pairs (union of apriori and learned top-k), the
//! apriori preference indicators, the swap-delta pair weights, and the
//! boost rescale constants. Evaluation then recomputes loss and gradient
//! from a (possibly updated) learned similarity matrix through those frozen
//! constants, so the analytic gradient is exactly the gradient of the
//! plan-frozen loss and finite-difference checks are well defined.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::objective::ranking::{
    delta_ndcg_weight, pair_cross_entropy, pair_cross_entropy_grad, prob_apriori, rank_by_score,
    rank_discount,
};
use crate::objective::similarity::{apply_boost, boost_matrix, RescaleParams, SimilarityMatrix};

/// How candidate pairs are weighted inside the fairness sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairWeighting {
    /// LambdaRank-style |NDCG@k swap delta| from the learned ranking.
    DeltaNdcg,
    /// Every selected pair counts 1.
    Uniform,
}

/// Fairness loss settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FairnessConfig {
    /// Sharpness of the learned preference sigmoid.
    pub alpha: f64,
    /// Neighborhood size for candidate selection and NDCG truncation.
    pub k_fair: usize,
    /// Add the popularity-gap boost to the learned similarity.
    pub boost: bool,
    /// Boost rescale target interval.
    pub rescale_lo: f64,
    pub rescale_hi: f64,
    pub weighting: PairWeighting,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            alpha: 1.0,
            k_fair: 10,
            boost: false,
            rescale_lo: 1.0,
            rescale_hi: 10.0,
            weighting: PairWeighting::DeltaNdcg,
        }
    }
}

impl FairnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "fairness alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.k_fair == 0 {
            return Err(Error::invalid("k_fair must be >= 1"));
        }
        if !(self.rescale_lo.is_finite() && self.rescale_hi.is_finite())
            || self.rescale_lo >= self.rescale_hi
        {
            return Err(Error::invalid(format!(
                "invalid rescale range [{}, {}]",
                self.rescale_lo, self.rescale_hi
            )));
        }
        Ok(())
    }
}

/// One anchored comparison: anchor prefers u over v (or not) apriori.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTriple {
    pub anchor: usize,
    pub u: usize,
    pub v: usize,
    pub p_g: f64,
    pub weight: f64,
}

/// Frozen evaluation plan for the fairness loss over one pool.
#[derive(Clone, Debug)]
pub struct FairnessPlan {
    pub alpha: f64,
    pub n: usize,
    /// Affine map applied to learned similarities (identity when not boosting).
    pub rescale: RescaleParams,
    /// Popularity-gap matrix added after the rescale, when boosting.
    pub boost: Option<Array2<f64>>,
    pub triples: Vec<PairTriple>,
}

fn top_k(row: &[f64], exclude: usize, k: usize) -> Vec<usize> {
    let mut scored: Vec<usize> = (0..row.len()).filter(|&j| j != exclude).collect();
    scored.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    scored.truncate(k);
    scored
}

/// Build the frozen plan for `anchors` (pool indices) from the apriori and
/// learned similarity matrices. `bins` supplies per-pool-member popularity
/// bins and is required when boosting.
pub fn plan_fairness(
    cfg: &FairnessConfig,
    s_g: &SimilarityMatrix,
    s_z: &SimilarityMatrix,
    bins: Option<&[u8]>,
    anchors: &[usize],
) -> Result<FairnessPlan> {
    cfg.validate()?;
    let n = s_g.values.nrows();
    if s_z.values.nrows() != n {
        return Err(Error::invalid("apriori/learned pool size mismatch"));
    }
    if n < 3 {
        return Err(Error::invalid(format!(
            "fairness pool needs at least 3 tracks, got {n}"
        )));
    }
    if anchors.is_empty() {
        return Err(Error::invalid("fairness plan needs at least one anchor"));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::invalid(format!("anchor index {bad} out of pool")));
    }

    let (effective, rescale, boost) = if cfg.boost {
        let bins = bins.ok_or_else(|| Error::invalid("boost requires popularity bins"))?;
        if bins.len() != n {
            return Err(Error::invalid("popularity bins length mismatch"));
        }
        let b = boost_matrix(bins);
        let (eff, rescale) = apply_boost(&s_z.values, &b, cfg.rescale_lo, cfg.rescale_hi)?;
        (eff, rescale, Some(b))
    } else {
        (
            s_z.values.clone(),
            RescaleParams { scale: 1.0, offset: 0.0, degenerate: false },
            None,
        )
    };

    let mut triples = Vec::new();
    for &i in anchors {
        let g_row: Vec<f64> = s_g.values.row(i).to_vec();
        let z_row: Vec<f64> = effective.row(i).to_vec();
        let apriori_top = top_k(&g_row, i, cfg.k_fair);
        let learned_top = top_k(&z_row, i, cfg.k_fair);

        let mut union: Vec<usize> = apriori_top.iter().chain(learned_top.iter()).copied().collect();
        union.sort_unstable();
        union.dedup();

        // Everything below is frozen: lambda-style weights treat the current
        // ranking as constant.
        let (positions, idcg) = match cfg.weighting {
            PairWeighting::DeltaNdcg => {
                let candidates: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let scores: Vec<f64> = candidates.iter().map(|&j| z_row[j]).collect();
                let order = rank_by_score(&scores);
                let mut position = vec![0usize; n];
                for (rank0, &oi) in order.iter().enumerate() {
                    position[candidates[oi]] = rank0 + 1;
                }
                let relevant = apriori_top.len().min(cfg.k_fair);
                let idcg: f64 = (1..=relevant.min(cfg.k_fair))
                    .map(|r| rank_discount(r, cfg.k_fair))
                    .sum();
                (Some(position), idcg)
            }
            PairWeighting::Uniform => (None, 0.0),
        };
        let is_relevant = |j: usize| apriori_top.contains(&j);

        for &u in &union {
            for &v in &union {
                if u == v {
                    continue;
                }
                let weight = match cfg.weighting {
                    PairWeighting::Uniform => 1.0,
                    PairWeighting::DeltaNdcg => {
                        let pos = positions.as_ref().unwrap();
                        delta_ndcg_weight(
                            pos[u],
                            pos[v],
                            is_relevant(u) as u8 as f64,
                            is_relevant(v) as u8 as f64,
                            cfg.k_fair,
                            idcg,
                        )
                    }
                };
                triples.push(PairTriple {
                    anchor: i,
                    u,
                    v,
                    p_g: prob_apriori(g_row[u], g_row[v]),
                    weight,
                });
            }
        }
    }

    Ok(FairnessPlan { alpha: cfg.alpha, n, rescale, boost, triples })
}

/// Evaluate the frozen plan on a learned similarity matrix.
///
/// Returns the raw (unnormalized) loss sum and d(loss)/d(S_Z) with gradient
/// mass on the anchor-row entries that the loss reads.
pub fn fairness_loss_and_grad(
    plan: &FairnessPlan,
    s_z_values: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if s_z_values.dim() != (plan.n, plan.n) {
        return Err(Error::invalid("similarity matrix shape mismatch with plan"));
    }
    let eff = |i: usize, j: usize| -> f64 {
        let base = plan.rescale.apply(s_z_values[[i, j]]);
        match &plan.boost {
            Some(b) => base + b[[i, j]],
            None => base,
        }
    };
    let mut loss = 0.0;
    let mut grad = Array2::zeros((plan.n, plan.n));
    for t in &plan.triples {
        if t.weight == 0.0 {
            continue;
        }
        let x = plan.alpha * (eff(t.anchor, t.u) - eff(t.anchor, t.v));
        loss += t.weight * pair_cross_entropy(t.p_g, x);
        let g = t.weight * pair_cross_entropy_grad(t.p_g, x) * plan.alpha * plan.rescale.scale;
        grad[[t.anchor, t.u]] += g;
        grad[[t.anchor, t.v]] -= g;
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("fairness loss is not finite".to_string()));
    }
    Ok((loss, grad))
}

//! Pairwise ranking primitives: comparison probabilities, cross-entropy,
//! truncated NDCG, and the swap-delta pair weight.
//!
//! Everything here works in logit space with numerically stable sigmoid and
//! softplus so large similarity gaps never produce NaN or infinite loss.

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus: ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Apriori preference of u over v from anchor i's perspective: 1 when the
/// apriori similarity strictly favors u, else 0 (ties count as not-preferred).
pub fn prob_apriori(s_iu: f64, s_iv: f64) -> f64 {
    if s_iu > s_iv {
        1.0
    } else {
        0.0
    }
}

/// Learned preference probability sigma(alpha * (s_iu - s_iv)).
pub fn prob_learned(alpha: f64, s_iu: f64, s_iv: f64) -> f64 {
    sigmoid(alpha * (s_iu - s_iv))
}

/// Cross-entropy between the apriori indicator and the learned probability,
/// expressed through softplus of the logit x = alpha * (s_iu - s_iv):
/// p_g * softplus(-x) + (1 - p_g) * softplus(x).
pub fn pair_cross_entropy(p_g: f64, x: f64) -> f64 {
    p_g * softplus(-x) + (1.0 - p_g) * softplus(x)
}

/// d/dx of `pair_cross_entropy`: sigma(x) - p_g.
pub fn pair_cross_entropy_grad(p_g: f64, x: f64) -> f64 {
    sigmoid(x) - p_g
}

/// Log-discount for 1-based rank position p, truncated at k.
pub fn rank_discount(position: usize, k: usize) -> f64 {
    if position == 0 || position > k {
        0.0
    } else {
        1.0 / ((position as f64) + 1.0).log2()
    }
}

/// NDCG@k of `gains` listed in ranked order, against the ideal ordering of
/// `ideal_gains`. Zero ideal mass yields 0.
pub fn ndcg_at_k(gains: &[f64], ideal_gains: &[f64], k: usize) -> f64 {
    let dcg: f64 = gains
        .iter()
        .enumerate()
        .map(|(i, g)| g * rank_discount(i + 1, k))
        .sum();
    let mut ideal: Vec<f64> = ideal_gains.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg: f64 = ideal
        .iter()
        .enumerate()
        .map(|(i, g)| g * rank_discount(i + 1, k))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Rank candidate indices by score descending, ties by index ascending.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// |NDCG@k change| from swapping the items at 1-based positions `pos_u` and
/// `pos_v` of a binary-relevance ranking with relevances `rel_u`, `rel_v`
/// and ideal mass `idcg`.
pub fn delta_ndcg_weight(
    pos_u: usize,
    pos_v: usize,
    rel_u: f64,
    rel_v: f64,
    k: usize,
    idcg: f64,
) -> f64 {
    if idcg == 0.0 {
        return 0.0;
    }
    (rel_u - rel_v).abs() * (rank_discount(pos_u, k) - rank_discount(pos_v, k)).abs() / idcg
}

//! Cosine similarity matrices, rescaling, and the popularity boost.
//!
//! Two similarity spaces drive the fairness loss: the apriori space (cosine
//! over scaled sonic features, fixed) and the learned space (cosine over
//! embeddings). The boost variant min-max rescales the learned matrix into
//! [lo, hi] and adds a popularity-gap penalty B[i][j] = |bin_i - bin_j|,
//! which raises the apparent similarity of cross-popularity pairs so the
//! ranking loss works harder on them.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::data::features::TrackFeatureTable;
use crate::data::graph::TrackId;
use crate::error::{Error, Result};

/// Cosine similarity; zero-norm inputs yield 0 by convention.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Symmetric pairwise-cosine matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    /// Rows whose vector had zero norm (their off-diagonal entries are 0).
    pub zero_rows: usize,
}

/// Pairwise cosine over the rows of `rows`. The diagonal is pinned to 1;
/// zero-norm rows produce 0 similarity against everything and are counted.
pub fn pairwise_cosine(rows: ArrayView2<f64>) -> SimilarityMatrix {
    let n = rows.nrows();
    let norms: Vec<f64> = (0..n).map(|i| rows.row(i).dot(&rows.row(i)).sqrt()).collect();
    let zero_rows = norms.iter().filter(|&&v| v == 0.0).count();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                rows.row(i).dot(&rows.row(j)) / (norms[i] * norms[j])
            };
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    SimilarityMatrix { values, zero_rows }
}

/// Apriori similarity of a pool: cosine over scaled sonic features only.
pub fn apriori_similarity(features: &TrackFeatureTable, pool: &[TrackId]) -> SimilarityMatrix {
    let sonic = features.scaled_sonic();
    let mut rows = Array2::zeros((pool.len(), sonic.ncols()));
    for (r, t) in pool.iter().enumerate() {
        rows.row_mut(r).assign(&sonic.row(t.index()));
    }
    pairwise_cosine(rows.view())
}

/// Learned similarity of a pool: cosine over embedding rows.
pub fn learned_similarity(z_pool: ArrayView2<f64>) -> SimilarityMatrix {
    pairwise_cosine(z_pool)
}

/// Affine map frozen from one matrix's off-diagonal range.
///
/// `transformed = scale * s + offset`. A degenerate range (all off-diagonal
/// entries equal, or a 1-element pool) maps everything to the interval
/// midpoint with zero scale, so no gradient flows through the rescale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleParams {
    pub scale: f64,
    pub offset: f64,
    pub degenerate: bool,
}

impl RescaleParams {
    pub fn apply(&self, s: f64) -> f64 {
        self.scale * s + self.offset
    }
}

/// Fit the min-max rescale of off-diagonal entries onto [lo, hi].
pub fn fit_rescale(values: &Array2<f64>, lo: f64, hi: f64) -> Result<RescaleParams> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::invalid(format!(
            "invalid rescale range [{lo}, {hi}]"
        )));
    }
    let n = values.nrows();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                min = min.min(values[[i, j]]);
                max = max.max(values[[i, j]]);
            }
        }
    }
    if !min.is_finite() || max - min == 0.0 {
        return Ok(RescaleParams {
            scale: 0.0,
            offset: (lo + hi) / 2.0,
            degenerate: true,
        });
    }
    let scale = (hi - lo) / (max - min);
    Ok(RescaleParams {
        scale,
        offset: lo - min * scale,
        degenerate: false,
    })
}

/// Popularity-gap boost: B[i][j] = |bin_i - bin_j| over the pool.
pub fn boost_matrix(bins: &[u8]) -> Array2<f64> {
    let n = bins.len();
    let mut b = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = (bins[i] as i16 - bins[j] as i16).abs() as f64;
        }
    }
    b
}

/// Boosted similarity: rescale the learned matrix into [lo, hi] (constants
/// frozen from the input) and add the boost elementwise.
pub fn apply_boost(
    s_z: &Array2<f64>,
    boost: &Array2<f64>,
    lo: f64,
    hi: f64,
) -> Result<(Array2<f64>, RescaleParams)> {
    if s_z.dim() != boost.dim() {
        return Err(Error::invalid("boost matrix shape mismatch"));
    }
    let rescale = fit_rescale(s_z, lo, hi)?;
    let mut out = s_z.mapv(|v| rescale.apply(v));
    out += boost;
    Ok((out, rescale))
}

/// Backpropagate a gradient on cosine-matrix entries to the input rows.
///
/// Zero-norm rows have constant (zero) similarity, so they receive no
/// gradient; diagonal entries are pinned constants and are skipped.
pub fn pairwise_cosine_backward(
    rows: ArrayView2<f64>,
    values: &Array2<f64>,
    grad_s: &Array2<f64>,
) -> Array2<f64> {
    let n = rows.nrows();
    let d = rows.ncols();
    let norms: Vec<f64> = (0..n).map(|i| rows.row(i).dot(&rows.row(i)).sqrt()).collect();
    let mut grad = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            let g = grad_s[[i, j]];
            if i == j || g == 0.0 || norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let c = values[[i, j]];
            let inv = 1.0 / (norms[i] * norms[j]);
            for k in 0..d {
                grad[[i, k]] += g * (rows[[j, k]] * inv - c * rows[[i, k]] / (norms[i] * norms[i]));
                grad[[j, k]] += g * (rows[[i, k]] * inv - c * rows[[j, k]] / (norms[j] * norms[j]));
            }
        }
    }
    grad
}

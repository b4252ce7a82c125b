//! Two-layer neighborhood-aggregation encoder with hand-written backprop.
//!
//! Layer l computes h_t = relu(W_l [h_t_prev ; n_t] + b_l) where n_t is the
//! importance-weighted sum of the neighbors' previous-layer states (zero for
//! isolated tracks), and the output is z_t = W_out h_t with no bias. Forward
//! runs on an arbitrary subset of tracks by expanding a one-hop frontier for
//! the intermediate layer only; backward consumes the cached activations and
//! refuses caches from an older parameter revision.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use std::collections::{BTreeSet, HashMap};

use crate::data::graph::TrackId;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::NeighborTable;
use rand::Rng;

/// Encoder dimensions: input feature width, hidden width, embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.hidden == 0 || self.d_out == 0 {
            return Err(Error::invalid("encoder dimensions must all be >= 1"));
        }
        Ok(())
    }
}

/// Trainable parameters. The revision counter advances on every mutation so
/// a forward cache can be tied to the exact parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_out: Array2<f64>,
    revision: u64,
}

fn xavier(rows: usize, cols: usize, seed: u64, layer: u64) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = rng::stream(seed, rng::tag::INIT, layer);
    let mut w = Array2::zeros((rows, cols));
    for v in w.iter_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    w
}

/// Xavier-uniform weights (one stream per layer), zero biases.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    cfg.validate()?;
    Ok(EncoderParams {
        w1: xavier(cfg.hidden, 2 * cfg.d_in, seed, 0),
        b1: Array1::zeros(cfg.hidden),
        w2: xavier(cfg.hidden, 2 * cfg.hidden, seed, 1),
        b2: Array1::zeros(cfg.hidden),
        w_out: xavier(cfg.d_out, cfg.hidden, seed, 2),
        revision: 0,
    })
}

impl EncoderParams {
    /// Assemble parameters from raw weight arrays, validating shape
    /// consistency. The revision starts at 0.
    pub fn from_weights(
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
        w_out: Array2<f64>,
    ) -> Result<Self> {
        let hidden = w1.nrows();
        if hidden == 0 || w1.ncols() == 0 || w1.ncols() % 2 != 0 {
            return Err(Error::invalid("first-layer weight shape is invalid"));
        }
        if b1.len() != hidden
            || w2.dim() != (hidden, 2 * hidden)
            || b2.len() != hidden
            || w_out.ncols() != hidden
            || w_out.nrows() == 0
        {
            return Err(Error::invalid("encoder weight shapes are inconsistent"));
        }
        Ok(EncoderParams { w1, b1, w2, b2, w_out, revision: 0 })
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            d_in: self.w1.ncols() / 2,
            hidden: self.w1.nrows(),
            d_out: self.w_out.nrows(),
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_out.len()
    }

    /// Concatenate all parameters: w1, b1, w2, b2, w_out (row-major).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.extend(self.b2.iter());
        flat.extend(self.w_out.iter());
        flat
    }

    /// Overwrite all parameters from a flat vector and advance the revision.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut it = flat.iter();
        for v in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .chain(self.w_out.iter_mut())
        {
            *v = *it.next().unwrap();
        }
        self.revision += 1;
        Ok(())
    }
}

/// Gradients with the same shapes as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_out: Array2<f64>,
}

impl ParamGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat =
            Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_out.len());
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.extend(self.b2.iter());
        flat.extend(self.w_out.iter());
        flat
    }
}

/// Activations saved by `forward` for the matching `backward` call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    revision: u64,
    /// Requested tracks, output row order.
    tracks: Vec<TrackId>,
    /// Frontier (requested tracks plus their neighbors), ascending by id.
    set1: Vec<TrackId>,
    cat1: Array2<f64>,
    a1: Array2<f64>,
    /// Per-output-row neighbor scatter targets: (row in set1, weight).
    agg2: Vec<Vec<(usize, f64)>>,
    /// Row in set1 of each requested track.
    self2: Vec<usize>,
    cat2: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
}

impl ForwardCache {
    /// ReLU on/off pattern of every preactivation, layer 1 then layer 2.
    /// Finite-difference checks compare patterns across perturbations to
    /// reject steps that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.a1.iter().chain(self.a2.iter()).map(|&a| a > 0.0).collect()
    }

    /// Smallest |preactivation|, a proxy for distance to the nearest kink.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.a1
            .iter()
            .chain(self.a2.iter())
            .fold(f64::INFINITY, |m, &a| m.min(a.abs()))
    }
}

fn relu_mask(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Embed `tracks` given input features `x` (one row per catalog track) and
/// the walk neighborhoods. Returns one embedding row per requested track
/// plus the cache for `backward`.
pub fn forward(
    params: &EncoderParams,
    x: ArrayView2<f64>,
    table: &NeighborTable,
    tracks: &[TrackId],
) -> Result<(Array2<f64>, ForwardCache)> {
    let cfg = params.config();
    if x.ncols() != cfg.d_in {
        return Err(Error::invalid(format!(
            "input features have width {}, encoder expects {}",
            x.ncols(),
            cfg.d_in
        )));
    }
    if table.len() != x.nrows() {
        return Err(Error::invalid("neighbor table does not cover the catalog"));
    }
    if tracks.is_empty() {
        return Err(Error::invalid("forward needs at least one track"));
    }
    if let Some(&t) = tracks.iter().find(|t| t.index() >= x.nrows()) {
        return Err(Error::invalid(format!("track {t} out of catalog")));
    }

    // Frontier for the intermediate layer: requested tracks and anyone they
    // aggregate from. Sorted order makes set1 independent of request order.
    let mut frontier: BTreeSet<u32> = tracks.iter().map(|t| t.0).collect();
    for &t in tracks {
        for &(u, _) in &table.get(t).neighbors {
            frontier.insert(u.0);
        }
    }
    let set1: Vec<TrackId> = frontier.into_iter().map(TrackId).collect();
    let pos1: HashMap<u32, usize> = set1.iter().enumerate().map(|(i, t)| (t.0, i)).collect();

    let mut cat1 = Array2::zeros((set1.len(), 2 * cfg.d_in));
    for (r, &t) in set1.iter().enumerate() {
        for c in 0..cfg.d_in {
            cat1[[r, c]] = x[[t.index(), c]];
        }
        for &(u, w) in &table.get(t).neighbors {
            for c in 0..cfg.d_in {
                cat1[[r, cfg.d_in + c]] += w * x[[u.index(), c]];
            }
        }
    }
    let a1 = cat1.dot(&params.w1.t()) + &params.b1;
    let h1 = a1.mapv(|v| v.max(0.0));

    let mut cat2 = Array2::zeros((tracks.len(), 2 * cfg.hidden));
    let mut agg2 = Vec::with_capacity(tracks.len());
    let mut self2 = Vec::with_capacity(tracks.len());
    for (r, &t) in tracks.iter().enumerate() {
        let sr = pos1[&t.0];
        self2.push(sr);
        for c in 0..cfg.hidden {
            cat2[[r, c]] = h1[[sr, c]];
        }
        let mut scatter = Vec::new();
        for &(u, w) in &table.get(t).neighbors {
            let ur = pos1[&u.0];
            scatter.push((ur, w));
            for c in 0..cfg.hidden {
                cat2[[r, cfg.hidden + c]] += w * h1[[ur, c]];
            }
        }
        agg2.push(scatter);
    }
    let a2 = cat2.dot(&params.w2.t()) + &params.b2;
    let h2 = a2.mapv(|v| v.max(0.0));
    let z = h2.dot(&params.w_out.t());

    Ok((
        z,
        ForwardCache {
            revision: params.revision,
            tracks: tracks.to_vec(),
            set1,
            cat1,
            a1,
            agg2,
            self2,
            cat2,
            a2,
            h2,
        },
    ))
}

/// Parameter gradients of a scalar loss given d(loss)/d(z). The cache must
/// come from a forward pass at the current parameter revision.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_z: &Array2<f64>,
) -> Result<ParamGrads> {
    if cache.revision != params.revision {
        return Err(Error::invalid(format!(
            "stale forward cache: parameters at revision {}, cache from {}",
            params.revision, cache.revision
        )));
    }
    let cfg = params.config();
    if grad_z.dim() != (cache.tracks.len(), cfg.d_out) {
        return Err(Error::invalid("embedding gradient shape mismatch"));
    }

    let g_w_out = grad_z.t().dot(&cache.h2);
    let g_h2 = grad_z.dot(&params.w_out);
    let g_a2 = &g_h2 * &relu_mask(&cache.a2);
    let g_w2 = g_a2.t().dot(&cache.cat2);
    let g_b2 = g_a2.sum_axis(Axis(0));

    let g_cat2 = g_a2.dot(&params.w2);
    let mut g_h1 = Array2::zeros((cache.set1.len(), cfg.hidden));
    for r in 0..cache.tracks.len() {
        let sr = cache.self2[r];
        for c in 0..cfg.hidden {
            g_h1[[sr, c]] += g_cat2[[r, c]];
        }
        for &(ur, w) in &cache.agg2[r] {
            for c in 0..cfg.hidden {
                g_h1[[ur, c]] += w * g_cat2[[r, cfg.hidden + c]];
            }
        }
    }
    let g_a1 = &g_h1 * &relu_mask(&cache.a1);
    let g_w1 = g_a1.t().dot(&cache.cat1);
    let g_b1 = g_a1.sum_axis(Axis(0));

    Ok(ParamGrads { w1: g_w1, b1: g_b1, w2: g_w2, b2: g_b2, w_out: g_w_out })
}

/// Relative error with an absolute floor, for finite-difference comparisons.
pub fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-4)
}

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

/// Central-difference check of `analytic` at `flat`, over `indices`.
///
/// `eval` returns the scalar loss and the ReLU pattern of the forward pass;
/// coordinates whose perturbation flips any ReLU (a kink crossing, where the
/// loss is not differentiable) are skipped rather than failed.
pub fn finite_difference_check<F>(
    flat: &[f64],
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
    mut eval: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<bool>)>,
{
    if analytic.len() != flat.len() {
        return Err(Error::invalid("analytic gradient length mismatch"));
    }
    let (_, base_pattern) = eval(flat)?;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut max_rel_err = 0.0f64;
    let mut work = flat.to_vec();
    for &i in indices {
        if i >= flat.len() {
            return Err(Error::invalid(format!("check index {i} out of range")));
        }
        work[i] = flat[i] + eps;
        let (lp, pp) = eval(&work)?;
        work[i] = flat[i] - eps;
        let (lm, pm) = eval(&work)?;
        work[i] = flat[i];
        if pp != base_pattern || pm != base_pattern {
            skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * eps);
        max_rel_err = max_rel_err.max(relative_error(fd, analytic[i]));
        checked += 1;
    }
    Ok(GradCheckReport { checked, skipped, max_rel_err })
}

//! Two-stage training loop: utility-only warmup, then utility plus the
//! gamma-weighted fairness penalty, with SGD/Adam, JSON checkpoints, and a
//! per-epoch CSV log.
//!
//! Steps are numbered globally across both stages and every sampling stream
//! is derived from (seed, purpose, step), so a stage-2 run with gamma 0 is
//! bit-identical to simply continuing stage 1. A non-finite loss or update
//! aborts the run before the bad step mutates the parameters, optionally
//! writing a rescue checkpoint of the last finite state.

use ndarray::{Array1, Array2};
use serde_json::json;
use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use crate::data::features::TrackFeatureTable;
use crate::data::graph::{InteractionGraph, TrackId};
use crate::data::split::SplitAssignment;
use crate::encoder::{self, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::objective::{
    apriori_similarity, fairness_loss_and_grad, learned_similarity, pairwise_cosine_backward,
    plan_fairness, total_loss, FairnessConfig, FocalConfig,
};
use crate::objective::focal::focal_loss;
use crate::output;
use crate::popularity::{assign_bins, count_appearances, PopularityIndex};
use crate::rng;
use crate::sampler::{
    compute_neighbor_table, sample_fairness_pool, sample_negatives, sample_positive_pairs,
    NeighborTable, TrainGraph, WalkConfig,
};

/// Parameter update rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Optimizer::Adam { beta1, beta2, eps } = *self {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::invalid(format!(
                    "invalid adam parameters ({beta1}, {beta2}, {eps})"
                )));
            }
        }
        Ok(())
    }
}

/// Optimizer accumulators (Adam moments; unused by SGD).
#[derive(Clone, Debug)]
pub struct OptState {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptState {
    fn new(n: usize) -> Self {
        OptState { t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One optimizer step in place. lr = 0 leaves `flat` bitwise unchanged.
pub fn apply_update(
    opt: &Optimizer,
    lr: f64,
    state: &mut OptState,
    flat: &mut [f64],
    grad: &[f64],
) {
    match *opt {
        Optimizer::Sgd => {
            for (p, g) in flat.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            for i in 0..flat.len() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                flat[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Full training schedule and model shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub hidden: usize,
    pub d_out: usize,
    pub use_name_emb: bool,
    pub use_image_emb: bool,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub steps_per_epoch: usize,
    /// Positive pairs per step.
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Fairness weight applied in stage 2.
    pub gamma: f64,
    pub focal: FocalConfig,
    pub fairness: FairnessConfig,
    /// Fairness candidate pool per step (anchors plus sampled filler).
    pub pool_size: usize,
    pub walks: WalkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            hidden: 64,
            d_out: 64,
            use_name_emb: false,
            use_image_emb: false,
            stage1_epochs: 20,
            stage2_epochs: 20,
            steps_per_epoch: 10,
            batch_size: 32,
            negatives_per_positive: 4,
            lr: 0.01,
            optimizer: Optimizer::adam_default(),
            gamma: 1.0,
            focal: FocalConfig::default(),
            fairness: FairnessConfig::default(),
            pool_size: 128,
            walks: WalkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.hidden == 0 || self.d_out == 0 {
            return Err(Error::invalid("encoder dimensions must be >= 1"));
        }
        if self.steps_per_epoch == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return Err(Error::invalid("steps, batch size, and negatives must be >= 1"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.pool_size < 3 {
            return Err(Error::invalid("fairness pool size must be >= 3"));
        }
        self.optimizer.validate()?;
        self.focal.validate()?;
        self.fairness.validate()?;
        self.walks.validate()
    }
}

/// Per-epoch loss record; epochs are numbered globally across stages.
#[derive(Clone, Copy, Debug)]
pub struct EpochRow {
    pub epoch: usize,
    pub stage: u8,
    pub utility_loss: f64,
    pub fairness_loss: f64,
    pub total_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,stage,utility_loss,fairness_loss,total_loss,wall_time_s";

pub fn write_train_log(log: &TrainLog, path: &Path) -> Result<()> {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in &log.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.stage, r.utility_loss, r.fairness_loss, r.total_loss, r.wall_time_s
        ));
    }
    output::atomic_write(path, out.as_bytes())
}

pub const CHECKPOINT_VERSION: u64 = 1;

fn mat_json(m: &Array2<f64>) -> serde_json::Value {
    json!(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<Vec<f64>>>())
}

/// Write a versioned JSON checkpoint: dims, seed, all weights, config echo.
pub fn save_checkpoint(
    params: &EncoderParams,
    seed: u64,
    config: &serde_json::Value,
    path: &Path,
) -> Result<()> {
    let cfg = params.config();
    let doc = json!({
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "dims": { "d_in": cfg.d_in, "hidden": cfg.hidden, "d_out": cfg.d_out },
        "weights": {
            "w1": mat_json(&params.w1),
            "b1": params.b1.to_vec(),
            "w2": mat_json(&params.w2),
            "b2": params.b2.to_vec(),
            "w_out": mat_json(&params.w_out),
        },
        "config": config,
    });
    output::write_json(path, &doc)
}

/// A loaded checkpoint: fresh-revision parameters plus the stored metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn parse_vec(weights: &serde_json::Value, key: &str) -> Result<Array1<f64>> {
    let rows = weights
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::invalid(format!("checkpoint weights missing {key}")))?;
    let mut out = Vec::with_capacity(rows.len());
    for v in rows {
        out.push(
            v.as_f64()
                .ok_or_else(|| Error::invalid(format!("non-numeric entry in {key}")))?,
        );
    }
    Ok(Array1::from_vec(out))
}

fn parse_mat(weights: &serde_json::Value, key: &str) -> Result<Array2<f64>> {
    let rows = weights
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::invalid(format!("checkpoint weights missing {key}")))?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("empty weight matrix {key}")));
    }
    let ncols = rows[0].as_array().map(|r| r.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(rows.len() * ncols);
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| Error::invalid(format!("ragged weight matrix {key}")))?;
        if row.len() != ncols {
            return Err(Error::invalid(format!("ragged weight matrix {key}")));
        }
        for v in row {
            flat.push(
                v.as_f64()
                    .ok_or_else(|| Error::invalid(format!("non-numeric entry in {key}")))?,
            );
        }
    }
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::invalid(format!("bad shape for {key}: {e}")))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let version = doc
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::invalid("checkpoint has no version field"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let seed = doc
        .get("seed")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::invalid("checkpoint has no seed field"))?;
    let weights = doc
        .get("weights")
        .ok_or_else(|| Error::invalid("checkpoint has no weights"))?;
    let params = EncoderParams::from_weights(
        parse_mat(weights, "w1")?,
        parse_vec(weights, "b1")?,
        parse_mat(weights, "w2")?,
        parse_vec(weights, "b2")?,
        parse_mat(weights, "w_out")?,
    )?;
    let dims = doc
        .get("dims")
        .ok_or_else(|| Error::invalid("checkpoint has no dims"))?;
    let expect = |k: &str| dims.get(k).and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let got = params.config();
    if (expect("d_in"), expect("hidden"), expect("d_out")) != (got.d_in, got.hidden, got.d_out) {
        return Err(Error::invalid("checkpoint dims do not match its weights"));
    }
    let config = doc.get("config").cloned().unwrap_or(serde_json::Value::Null);
    Ok(Checkpoint { params, seed, config })
}

/// Mutable training state: parameters, optimizer moments, global counters.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: EncoderParams,
    opt: OptState,
    next_step: u64,
    next_epoch: usize,
}

/// Immutable training context: graph views, walk table, features, bins.
pub struct Trainer<'a> {
    features: &'a TrackFeatureTable,
    cfg: TrainConfig,
    view: TrainGraph,
    table: NeighborTable,
    x: Array2<f64>,
    popularity: PopularityIndex,
}

impl<'a> Trainer<'a> {
    pub fn new(
        graph: &'a InteractionGraph,
        features: &'a TrackFeatureTable,
        splits: &SplitAssignment,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let view = TrainGraph::new(graph, splits);
        let table = compute_neighbor_table(&view, &cfg.walks, cfg.seed)?;
        let x = features.input_matrix(cfg.use_name_emb, cfg.use_image_emb)?;
        let popularity = assign_bins(&count_appearances(graph, splits))?;
        Ok(Trainer { features, cfg, view, table, x, popularity })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn neighbor_table(&self) -> &NeighborTable {
        &self.table
    }

    pub fn popularity(&self) -> &PopularityIndex {
        &self.popularity
    }

    pub fn init_state(&self) -> Result<TrainState> {
        let params = encoder::init_params(
            &EncoderConfig { d_in: self.x.ncols(), hidden: self.cfg.hidden, d_out: self.cfg.d_out },
            self.cfg.seed,
        )?;
        let n = params.n_params();
        Ok(TrainState { params, opt: OptState::new(n), next_step: 0, next_epoch: 0 })
    }

    /// One optimizer step. Returns (utility, fairness, total) losses. The
    /// parameters are only mutated once every quantity is known finite.
    fn step(&self, state: &mut TrainState, gamma: f64) -> Result<(f64, f64, f64)> {
        let step = state.next_step;
        let d_out = self.cfg.d_out;

        let pairs = sample_positive_pairs(
            &self.view,
            self.cfg.batch_size,
            rng::stream_seed(self.cfg.seed, rng::tag::PAIRS, step),
        )?;
        let neg_seed = rng::stream_seed(self.cfg.seed, rng::tag::NEGATIVES, step);
        let mut negatives = Vec::with_capacity(pairs.len());
        for &(a, _) in &pairs {
            negatives.push(sample_negatives(
                &self.view,
                a,
                self.cfg.negatives_per_positive,
                neg_seed,
            )?);
        }

        let mut anchors: Vec<TrackId> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        anchors.sort_unstable();
        anchors.dedup();
        let pool = if gamma > 0.0 {
            Some(sample_fairness_pool(
                self.view.n_tracks(),
                &anchors,
                self.cfg.pool_size,
                rng::stream_seed(self.cfg.seed, rng::tag::POOL, step),
            )?)
        } else {
            None
        };

        let mut union: BTreeSet<TrackId> = BTreeSet::new();
        for &(a, b) in &pairs {
            union.insert(a);
            union.insert(b);
        }
        for ns in &negatives {
            union.extend(ns.iter().copied());
        }
        if let Some(pool) = &pool {
            union.extend(pool.iter().copied());
        }
        let tracks: Vec<TrackId> = union.into_iter().collect();
        let row_of = |t: TrackId| tracks.binary_search(&t).unwrap();

        let (z, cache) = encoder::forward(&state.params, self.x.view(), &self.table, &tracks)?;

        // Utility term: dot-product logits for positives and negatives.
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        let mut endpoints = Vec::new();
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let (ra, rb) = (row_of(a), row_of(b));
            logits.push(z.row(ra).dot(&z.row(rb)));
            labels.push(true);
            endpoints.push((ra, rb));
            for &n in &negatives[k] {
                let rn = row_of(n);
                logits.push(z.row(ra).dot(&z.row(rn)));
                labels.push(false);
                endpoints.push((ra, rn));
            }
        }
        let (utility, logit_grads) = focal_loss(&self.cfg.focal, &logits, &labels)?;

        let mut grad_z = Array2::zeros(z.dim());
        for (&(ra, rb), &g) in endpoints.iter().zip(&logit_grads) {
            for c in 0..d_out {
                grad_z[[ra, c]] += g * z[[rb, c]];
                grad_z[[rb, c]] += g * z[[ra, c]];
            }
        }

        // Fairness term over the sampled pool, anchored at the batch tracks.
        let mut fairness = 0.0;
        if let Some(pool) = &pool {
            let pool_rows: Vec<usize> = pool.iter().map(|&t| row_of(t)).collect();
            let mut z_pool = Array2::zeros((pool.len(), d_out));
            for (r, &zr) in pool_rows.iter().enumerate() {
                z_pool.row_mut(r).assign(&z.row(zr));
            }
            let s_g = apriori_similarity(self.features, pool);
            let s_z = learned_similarity(z_pool.view());
            let bins: Vec<u8> = pool.iter().map(|&t| self.popularity.bin(t)).collect();
            let anchor_idx: Vec<usize> = anchors
                .iter()
                .map(|a| pool.binary_search(a).expect("anchor in pool"))
                .collect();
            let plan = plan_fairness(
                &self.cfg.fairness,
                &s_g,
                &s_z,
                self.cfg.fairness.boost.then_some(&bins[..]),
                &anchor_idx,
            )?;
            let (fl, grad_s) = fairness_loss_and_grad(&plan, &s_z.values)?;
            fairness = fl;
            let scaled = grad_s.mapv(|v| v * gamma);
            let gz_pool = pairwise_cosine_backward(z_pool.view(), &s_z.values, &scaled);
            for (r, &zr) in pool_rows.iter().enumerate() {
                for c in 0..d_out {
                    grad_z[[zr, c]] += gz_pool[[r, c]];
                }
            }
        }

        let total = total_loss(utility, fairness, gamma)?;

        let grads = encoder::backward(&state.params, &cache, &grad_z)?;
        let mut flat = state.params.to_flat();
        apply_update(&self.cfg.optimizer, self.cfg.lr, &mut state.opt, &mut flat, &grads.to_flat());
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameters became non-finite during step {step}"
            )));
        }
        state.params.assign_from_flat(&flat)?;
        state.next_step += 1;
        Ok((utility, fairness, total))
    }

    /// Run `epochs` epochs at the given fairness weight, appending to `log`.
    /// On divergence the last finite parameters go to `rescue` (if set) and
    /// the numeric error propagates.
    pub fn run_stage(
        &self,
        state: &mut TrainState,
        epochs: usize,
        gamma: f64,
        stage: u8,
        log: &mut TrainLog,
        rescue: Option<&Path>,
    ) -> Result<()> {
        for _ in 0..epochs {
            let started = Instant::now();
            let mut sums = (0.0, 0.0, 0.0);
            for _ in 0..self.cfg.steps_per_epoch {
                match self.step(state, gamma) {
                    Ok((u, f, t)) => {
                        sums.0 += u;
                        sums.1 += f;
                        sums.2 += t;
                    }
                    Err(e) => {
                        if matches!(e, Error::Numeric(_)) {
                            if let Some(path) = rescue {
                                save_checkpoint(
                                    &state.params,
                                    self.cfg.seed,
                                    &json!({ "rescued_at_step": state.next_step }),
                                    path,
                                )?;
                            }
                        }
                        return Err(e);
                    }
                }
            }
            state.next_epoch += 1;
            let n = self.cfg.steps_per_epoch as f64;
            log.rows.push(EpochRow {
                epoch: state.next_epoch,
                stage,
                utility_loss: sums.0 / n,
                fairness_loss: sums.1 / n,
                total_loss: sums.2 / n,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
        Ok(())
    }

    /// Full-catalog embedding matrix under the given parameters.
    pub fn embeddings(&self, params: &EncoderParams) -> Result<Array2<f64>> {
        let tracks: Vec<TrackId> = (0..self.view.n_tracks() as u32).map(TrackId).collect();
        Ok(encoder::forward(params, self.x.view(), &self.table, &tracks)?.0)
    }
}

/// Final model, full-catalog embeddings, and the loss log.
#[derive(Debug)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub embeddings: Array2<f64>,
    pub log: TrainLog,
}

/// Run both stages from scratch: stage 1 utility-only, stage 2 with the
/// configured gamma.
pub fn train(
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
    cfg: &TrainConfig,
    rescue: Option<&Path>,
) -> Result<TrainOutput> {
    let trainer = Trainer::new(graph, features, splits, cfg.clone())?;
    let mut state = trainer.init_state()?;
    let mut log = TrainLog::default();
    trainer.run_stage(&mut state, cfg.stage1_epochs, 0.0, 1, &mut log, rescue)?;
    trainer.run_stage(&mut state, cfg.stage2_epochs, cfg.gamma, 2, &mut log, rescue)?;
    let embeddings = trainer.embeddings(&state.params)?;
    Ok(TrainOutput { params: state.params, embeddings, log })
}

//! Resolved run configuration: every tunable of the pipeline under one flat
//! key space. Values resolve as defaults, then the `key = value` config
//! file, then `--set` pairs, then dedicated flags; unknown keys are
//! rejected. The full resolved table is echoed into every artifact.

use serde::{Deserialize, Serialize};
use std::path::Path;

use longtail::data::split::SplitLabel;
use longtail::data::synth::SynthSpec;
use longtail::objective::{FairnessConfig, FocalConfig, PairWeighting};
use longtail::sampler::WalkConfig;
use longtail::trainer::{Optimizer, TrainConfig};
use longtail::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub interactions: String,
    pub features: String,
    /// Split file path; empty means derive splits from the seed.
    pub splits: String,
    pub name_emb: String,
    pub image_emb: String,
    pub seed: u64,
    pub peek_k: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub lt_fraction: f64,
    /// Recommendation list depth.
    pub k: usize,
    pub eval_split: String,
    // synthetic data
    pub synth_playlists: usize,
    pub synth_tracks: usize,
    pub synth_artists: usize,
    pub synth_skew: f64,
    pub synth_clusters: usize,
    pub synth_min_len: usize,
    pub synth_max_len: usize,
    pub synth_cluster_bias: f64,
    // encoder
    pub hidden: usize,
    pub d_out: usize,
    pub use_name_emb: bool,
    pub use_image_emb: bool,
    // training
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub lr: f64,
    pub optimizer: String,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub gamma: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    // fairness
    pub fairness_alpha: f64,
    pub k_fair: usize,
    pub boost: bool,
    pub rescale_lo: f64,
    pub rescale_hi: f64,
    pub pair_weighting: String,
    pub pool_size: usize,
    // neighborhood sampling
    pub walks: usize,
    pub walk_len: usize,
    pub walk_neighbors: usize,
    // experiments
    pub n_top: usize,
    pub artist_neighbors: usize,
    pub sweep_gammas: Vec<f64>,
    pub sweep_split: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            interactions: "interactions.csv".into(),
            features: "features.csv".into(),
            splits: String::new(),
            name_emb: String::new(),
            image_emb: String::new(),
            seed: 7,
            peek_k: 5,
            train_frac: 0.8,
            valid_frac: 0.1,
            test_frac: 0.1,
            lt_fraction: 0.2,
            k: 100,
            eval_split: "test".into(),
            synth_playlists: 50,
            synth_tracks: 300,
            synth_artists: 40,
            synth_skew: 0.8,
            synth_clusters: 6,
            synth_min_len: 8,
            synth_max_len: 16,
            synth_cluster_bias: 0.8,
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
            optimizer: "adam".into(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            gamma: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.5,
            fairness_alpha: 1.0,
            k_fair: 10,
            boost: false,
            rescale_lo: 1.0,
            rescale_hi: 10.0,
            pair_weighting: "delta_ndcg".into(),
            pool_size: 128,
            walks: 200,
            walk_len: 2,
            walk_neighbors: 20,
            n_top: 20,
            artist_neighbors: 100,
            sweep_gammas: vec![0.0, 0.25, 0.5, 1.0],
            sweep_split: "valid".into(),
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::invalid(format!(
            "config key `{key}`: expected true or false, got `{other}`"
        ))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|part| parse_as::<f64>(key, part))
        .collect()
}

impl RunConfig {
    /// Set one key from its textual form. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "interactions" => self.interactions = value.trim().to_string(),
            "features" => self.features = value.trim().to_string(),
            "splits" => self.splits = value.trim().to_string(),
            "name_emb" => self.name_emb = value.trim().to_string(),
            "image_emb" => self.image_emb = value.trim().to_string(),
            "seed" => self.seed = parse_as(key, value)?,
            "peek_k" => self.peek_k = parse_as(key, value)?,
            "train_frac" => self.train_frac = parse_as(key, value)?,
            "valid_frac" => self.valid_frac = parse_as(key, value)?,
            "test_frac" => self.test_frac = parse_as(key, value)?,
            "lt_fraction" => self.lt_fraction = parse_as(key, value)?,
            "k" => self.k = parse_as(key, value)?,
            "eval_split" => self.eval_split = value.trim().to_string(),
            "synth_playlists" => self.synth_playlists = parse_as(key, value)?,
            "synth_tracks" => self.synth_tracks = parse_as(key, value)?,
            "synth_artists" => self.synth_artists = parse_as(key, value)?,
            "synth_skew" => self.synth_skew = parse_as(key, value)?,
            "synth_clusters" => self.synth_clusters = parse_as(key, value)?,
            "synth_min_len" => self.synth_min_len = parse_as(key, value)?,
            "synth_max_len" => self.synth_max_len = parse_as(key, value)?,
            "synth_cluster_bias" => self.synth_cluster_bias = parse_as(key, value)?,
            "hidden" => self.hidden = parse_as(key, value)?,
            "d_out" => self.d_out = parse_as(key, value)?,
            "use_name_emb" => self.use_name_emb = parse_bool(key, value)?,
            "use_image_emb" => self.use_image_emb = parse_bool(key, value)?,
            "stage1_epochs" => self.stage1_epochs = parse_as(key, value)?,
            "stage2_epochs" => self.stage2_epochs = parse_as(key, value)?,
            "steps_per_epoch" => self.steps_per_epoch = parse_as(key, value)?,
            "batch_size" => self.batch_size = parse_as(key, value)?,
            "negatives_per_positive" => self.negatives_per_positive = parse_as(key, value)?,
            "lr" => self.lr = parse_as(key, value)?,
            "optimizer" => self.optimizer = value.trim().to_string(),
            "adam_beta1" => self.adam_beta1 = parse_as(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse_as(key, value)?,
            "adam_eps" => self.adam_eps = parse_as(key, value)?,
            "gamma" => self.gamma = parse_as(key, value)?,
            "focal_gamma" => self.focal_gamma = parse_as(key, value)?,
            "focal_alpha" => self.focal_alpha = parse_as(key, value)?,
            "fairness_alpha" => self.fairness_alpha = parse_as(key, value)?,
            "k_fair" => self.k_fair = parse_as(key, value)?,
            "boost" => self.boost = parse_bool(key, value)?,
            "rescale_lo" => self.rescale_lo = parse_as(key, value)?,
            "rescale_hi" => self.rescale_hi = parse_as(key, value)?,
            "pair_weighting" => self.pair_weighting = value.trim().to_string(),
            "pool_size" => self.pool_size = parse_as(key, value)?,
            "walks" => self.walks = parse_as(key, value)?,
            "walk_len" => self.walk_len = parse_as(key, value)?,
            "walk_neighbors" => self.walk_neighbors = parse_as(key, value)?,
            "n_top" => self.n_top = parse_as(key, value)?,
            "artist_neighbors" => self.artist_neighbors = parse_as(key, value)?,
            "sweep_gammas" => self.sweep_gammas = parse_list(key, value)?,
            "sweep_split" => self.sweep_split = value.trim().to_string(),
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a flat `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read config {}", path.display()), e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Apply `KEY=VALUE` override pairs from the command line.
    pub fn apply_sets(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// The full resolved table as a JSON value with sorted keys.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain struct serializes")
    }

    /// Rebuild a config from the echo stored in a checkpoint or report.
    pub fn from_value(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone())
            .map_err(|e| Error::invalid(format!("bad config echo: {e}")))
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            playlists: self.synth_playlists,
            tracks: self.synth_tracks,
            artists: self.synth_artists,
            skew: self.synth_skew,
            clusters: self.synth_clusters,
            min_len: self.synth_min_len,
            max_len: self.synth_max_len,
            cluster_bias: self.synth_cluster_bias,
        }
    }

    pub fn optimizer(&self) -> Result<Optimizer> {
        match self.optimizer.as_str() {
            "adam" => Ok(Optimizer::Adam {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            }),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::invalid(format!(
                "optimizer must be `adam` or `sgd`, got `{other}`"
            ))),
        }
    }

    pub fn pair_weighting(&self) -> Result<PairWeighting> {
        match self.pair_weighting.as_str() {
            "delta_ndcg" => Ok(PairWeighting::DeltaNdcg),
            "uniform" => Ok(PairWeighting::Uniform),
            other => Err(Error::invalid(format!(
                "pair_weighting must be `delta_ndcg` or `uniform`, got `{other}`"
            ))),
        }
    }

    pub fn split_label(&self, name: &str) -> Result<SplitLabel> {
        SplitLabel::parse(name)
            .ok_or_else(|| Error::invalid(format!("unknown split `{name}`")))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.seed,
            hidden: self.hidden,
            d_out: self.d_out,
            use_name_emb: self.use_name_emb,
            use_image_emb: self.use_image_emb,
            stage1_epochs: self.stage1_epochs,
            stage2_epochs: self.stage2_epochs,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            negatives_per_positive: self.negatives_per_positive,
            lr: self.lr,
            optimizer: self.optimizer()?,
            gamma: self.gamma,
            focal: FocalConfig { gamma: self.focal_gamma, alpha: self.focal_alpha },
            fairness: FairnessConfig {
                alpha: self.fairness_alpha,
                k_fair: self.k_fair,
                boost: self.boost,
                rescale_lo: self.rescale_lo,
                rescale_hi: self.rescale_hi,
                weighting: self.pair_weighting()?,
            },
            pool_size: self.pool_size,
            walks: WalkConfig {
                walks: self.walks,
                walk_len: self.walk_len,
                neighbors: self.walk_neighbors,
            },
        })
    }
}

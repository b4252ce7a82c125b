//! Pipeline front end: data inspection, synthetic corpora, training,
//! retrieval, evaluation, and the bias experiments, all behind one binary.
//! Exit codes: 0 success, 1 validation/config error, 2 runtime error.

mod config;
mod selftest;

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};

use longtail::data::features::{load_dense_block, TrackFeatureTable, IMAGE_EMB_DIM, NAME_EMB_DIM};
use longtail::data::graph::InteractionGraph;
use longtail::data::split::{split_peek_holdout, split_playlists, SplitAssignment};
use longtail::data::synth::generate_synthetic;
use longtail::evaluator::evaluate_all;
use longtail::experiments::{
    artist_neighbor_popularity, artist_track_counts, counterfactual_centroid, gamma_sweep,
    top_bin_artists, visibility_by_bin, write_sweep_csv, write_visibility_csv, CentroidReport,
    CounterfactualSpec,
};
use longtail::output;
use longtail::popularity::{assign_bins, count_appearances, PopularityIndex};
use longtail::recommender::{
    artist_embedding, features_baseline, load_run, mostpop_baseline, recommend_all, write_run,
};
use longtail::trainer::{load_checkpoint, save_checkpoint, train, write_train_log, Trainer};
use longtail::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "longtail", version, about = "Graph-based playlist continuation with long-tail controls")]
struct Cli {
    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set lr=0.05 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Summarize an interactions file.
    Stats {
        #[arg(long)]
        interactions: Option<String>,
    },
    /// Generate a synthetic interactions + features corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        playlists: Option<usize>,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        artists: Option<usize>,
        #[arg(long)]
        skew: Option<f64>,
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Report popularity bins over the training split.
    Bins {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        splits: Option<String>,
    },
    /// Train embeddings; writes checkpoint.json, train_log.csv, splits.csv.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        boost: Option<bool>,
    },
    /// Rank the catalog for every playlist in an evaluation split.
    Recommend {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// embedding | features | mostpop
        #[arg(long, default_value = "embedding")]
        method: String,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score a run file against its holdouts.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        lt_fraction: Option<f64>,
    },
    /// Duplicate head tracks, retrain, and measure clone displacement.
    CfSim {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        n_top: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mean popularity of top-bin artists' embedding neighborhoods.
    ArtistSim {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        neighbors: Option<usize>,
    },
    /// Trade-off table over a gamma grid from one shared stage-1 state.
    Sweep {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        splits: Option<String>,
        /// Comma-separated grid, e.g. 0,0.5,1
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Per-popularity-bin share of recommended items in a run file.
    Visibility {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        interactions: Option<String>,
        #[arg(long)]
        splits: Option<String>,
    },
    /// Run the built-in gradient and oracle checks.
    Selftest,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{e}");
                    std::process::exit(1);
                }
            }
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Resolve the config stack: defaults, then file, then --set pairs.
/// Dedicated subcommand flags are layered on top by each handler.
fn resolve(config: &Option<PathBuf>, sets: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        cfg.apply_file(path)?;
    }
    cfg.apply_sets(sets)?;
    Ok(cfg)
}

fn set_if<T: ToString>(cfg: &mut RunConfig, key: &str, flag: Option<T>) -> Result<()> {
    if let Some(v) = flag {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn load_graph(cfg: &RunConfig) -> Result<InteractionGraph> {
    InteractionGraph::load_interactions(Path::new(&cfg.interactions))
}

fn load_features_with_blocks(
    cfg: &RunConfig,
    graph: &InteractionGraph,
) -> Result<TrackFeatureTable> {
    let mut features = TrackFeatureTable::load_features(Path::new(&cfg.features), graph)?;
    if !cfg.name_emb.is_empty() {
        features.set_name_emb(load_dense_block(Path::new(&cfg.name_emb), graph, NAME_EMB_DIM)?)?;
    }
    if !cfg.image_emb.is_empty() {
        features
            .set_image_emb(load_dense_block(Path::new(&cfg.image_emb), graph, IMAGE_EMB_DIM)?)?;
    }
    Ok(features)
}

/// Load the split file when one is configured, otherwise derive the split
/// deterministically from the seed. Peek/holdout sets are derived either way.
fn resolve_splits(cfg: &RunConfig, graph: &InteractionGraph) -> Result<SplitAssignment> {
    let mut splits = if cfg.splits.is_empty() {
        split_playlists(graph, (cfg.train_frac, cfg.valid_frac, cfg.test_frac), cfg.seed)?
    } else {
        SplitAssignment::load_splits(Path::new(&cfg.splits), graph)?
    };
    split_peek_holdout(graph, &mut splits, cfg.peek_k)?;
    Ok(splits)
}

fn popularity(graph: &InteractionGraph, splits: &SplitAssignment) -> Result<PopularityIndex> {
    assign_bins(&count_appearances(graph, splits))
}

/// Rebuild the trained encoder's catalog embeddings from a checkpoint using
/// the config echo stored inside it.
fn embeddings_from_checkpoint(
    path: &Path,
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
) -> Result<(ndarray::Array2<f64>, RunConfig)> {
    let ck = load_checkpoint(path)?;
    let ck_cfg = RunConfig::from_value(&ck.config)?;
    let trainer = Trainer::new(graph, features, splits, ck_cfg.train_config()?)?;
    let z = trainer.embeddings(&ck.params)?;
    Ok((z, ck_cfg))
}

fn run(cli: Cli) -> Result<()> {
    let base = resolve(&cli.config, &cli.set)?;
    match cli.cmd {
        Cmd::Stats { interactions } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            let graph = load_graph(&cfg)?;
            print!("{}", output::to_json_string(&graph.stats())?);
            Ok(())
        }
        Cmd::Synth { out, seed, playlists, tracks, artists, skew, clusters } => {
            let mut cfg = base;
            set_if(&mut cfg, "seed", seed)?;
            set_if(&mut cfg, "synth_playlists", playlists)?;
            set_if(&mut cfg, "synth_tracks", tracks)?;
            set_if(&mut cfg, "synth_artists", artists)?;
            set_if(&mut cfg, "synth_skew", skew)?;
            set_if(&mut cfg, "synth_clusters", clusters)?;
            let data = generate_synthetic(&cfg.synth_spec(), cfg.seed)?;
            data.graph.write_interactions(&out.join("interactions.csv"))?;
            data.features.write_features(&out.join("features.csv"), &data.graph)?;
            output::write_json(
                &out.join("synth.json"),
                &json!({"config": cfg.to_value(), "stats": data.graph.stats()}),
            )?;
            println!(
                "wrote {} playlists, {} tracks to {}",
                data.graph.n_playlists(),
                data.graph.n_tracks(),
                out.display()
            );
            Ok(())
        }
        Cmd::Bins { out, interactions, splits } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "splits", splits)?;
            let graph = load_graph(&cfg)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let index = popularity(&graph, &assignment)?;
            let breakdown = index.breakdown();
            let mut by_bin = serde_json::Map::new();
            for row in &breakdown.bins {
                by_bin.insert(
                    row.bin.to_string(),
                    json!({"tracks": row.tracks, "interaction_share": row.interaction_share}),
                );
            }
            output::write_json(
                &out.join("bins.json"),
                &json!({"bins": by_bin, "config": cfg.to_value()}),
            )?;
            let mut csv = String::from("bin,tracks,interaction_share\n");
            for row in &breakdown.bins {
                csv.push_str(&format!("{},{},{}\n", row.bin, row.tracks, row.interaction_share));
            }
            output::atomic_write(&out.join("bins.csv"), csv.as_bytes())?;
            println!("wrote bin breakdown to {}", out.display());
            Ok(())
        }
        Cmd::Train { out, interactions, features, splits, seed, gamma, boost } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "seed", seed)?;
            set_if(&mut cfg, "gamma", gamma)?;
            set_if(&mut cfg, "boost", boost)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            assignment.write_splits(&out.join("splits.csv"), &graph)?;
            let rescue = out.join("rescue.json");
            let result = train(&graph, &feats, &assignment, &cfg.train_config()?, Some(&rescue))?;
            save_checkpoint(&result.params, cfg.seed, &cfg.to_value(), &out.join("checkpoint.json"))?;
            write_train_log(&result.log, &out.join("train_log.csv"))?;
            let last = result.log.rows.last();
            println!(
                "trained {} epochs; final total loss {}; checkpoint at {}",
                result.log.rows.len(),
                last.map(|r| r.total_loss.to_string()).unwrap_or_else(|| "n/a".into()),
                out.join("checkpoint.json").display()
            );
            Ok(())
        }
        Cmd::Recommend { out, interactions, features, splits, checkpoint, method, split, k } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "eval_split", split)?;
            set_if(&mut cfg, "k", k)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let label = cfg.split_label(&cfg.eval_split)?;
            let run = match method.as_str() {
                "embedding" => {
                    let path = checkpoint.ok_or_else(|| {
                        Error::invalid("--checkpoint is required for method `embedding`")
                    })?;
                    let (z, _) = embeddings_from_checkpoint(&path, &graph, &feats, &assignment)?;
                    recommend_all(z.view(), &assignment, label, cfg.k, "embedding")?
                }
                "features" => {
                    let z = features_baseline(&feats, cfg.use_name_emb, cfg.use_image_emb)?;
                    recommend_all(z.view(), &assignment, label, cfg.k, "features")?
                }
                "mostpop" => {
                    let index = popularity(&graph, &assignment)?;
                    mostpop_baseline(&index, &assignment, label, cfg.k)?
                }
                other => {
                    return Err(Error::invalid(format!(
                        "method must be embedding, features, or mostpop, got `{other}`"
                    )))
                }
            };
            write_run(&run, &graph, &out.join("run.csv"))?;
            println!("wrote {} lists to {}", run.lists.len(), out.join("run.csv").display());
            Ok(())
        }
        Cmd::Evaluate { out, run, interactions, features, splits, lt_fraction } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "lt_fraction", lt_fraction)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let method = run
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let loaded = load_run(&run, &graph, &method)?;
            let index = popularity(&graph, &assignment)?;
            let long_tail = index.long_tail_set(cfg.lt_fraction)?;
            let mut echo = cfg.to_value();
            echo["method"] = json!(loaded.method);
            echo["run_k"] = json!(loaded.k);
            let report = evaluate_all(&loaded, &graph, &feats, &assignment, &long_tail, echo)?;
            output::atomic_write(&out.join("report.json"), report.to_json(&graph)?.as_bytes())?;
            println!(
                "recall {} ndcg {} artist_recall {} flow {} diversity {} pct_lt {} lt_coverage {} artist_coverage {}",
                report.recall,
                report.ndcg,
                report.artist_recall,
                report.flow,
                report.diversity,
                report.pct_lt,
                report.lt_coverage,
                report.artist_coverage
            );
            Ok(())
        }
        Cmd::CfSim { out, interactions, features, splits, n_top, gamma, seed } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "n_top", n_top)?;
            set_if(&mut cfg, "gamma", gamma)?;
            set_if(&mut cfg, "seed", seed)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let spec = CounterfactualSpec { n_top: cfg.n_top, seed: cfg.seed };

            let arm = |gamma: f64| -> Result<CentroidReport> {
                let mut train_cfg = cfg.train_config()?;
                train_cfg.gamma = gamma;
                counterfactual_centroid(&graph, &feats, &assignment, &train_cfg, &spec)
            };
            let baseline = arm(0.0)?;
            let fair = arm(cfg.gamma)?;

            let arm_json = |r: &CentroidReport, gamma: f64| {
                json!({
                    "gamma": gamma,
                    "distance": r.distance,
                    "explained": r.explained,
                    "rank_deficient": r.rank_deficient,
                })
            };
            output::write_json(
                &out.join("cf_sim.json"),
                &json!({
                    "baseline": arm_json(&baseline, 0.0),
                    "fair": arm_json(&fair, cfg.gamma),
                    "config": cfg.to_value(),
                }),
            )?;
            let mut csv = String::from("arm,track_id,group,x,y\n");
            let mut dump = |arm_name: &str, r: &CentroidReport| {
                for (i, &t) in r.originals.iter().chain(&r.duplicates).enumerate() {
                    let group = if i < r.originals.len() { "og" } else { "cf" };
                    csv.push_str(&format!(
                        "{arm_name},{},{group},{},{}\n",
                        // clone ids exceed the input catalog; print raw index
                        t.index(),
                        r.coords[[i, 0]],
                        r.coords[[i, 1]]
                    ));
                }
            };
            dump("baseline", &baseline);
            dump("fair", &fair);
            output::atomic_write(&out.join("cf_coords.csv"), csv.as_bytes())?;
            println!(
                "centroid distance: gamma 0 {} vs gamma {} {}",
                baseline.distance, cfg.gamma, fair.distance
            );
            Ok(())
        }
        Cmd::ArtistSim { out, checkpoint, interactions, features, splits, neighbors } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "artist_neighbors", neighbors)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let (z, _) = embeddings_from_checkpoint(&checkpoint, &graph, &feats, &assignment)?;
            let z_artists = artist_embedding(z.view(), &graph);
            let track_counts = count_appearances(&graph, &assignment);
            let artist_index = assign_bins(&artist_track_counts(&graph, &track_counts))?;
            let anchors = top_bin_artists(artist_index.bins());
            let report = artist_neighbor_popularity(
                z_artists.view(),
                artist_index.bins(),
                &anchors,
                cfg.artist_neighbors,
            )?;
            let mut per_anchor = serde_json::Map::new();
            for (&a, &v) in report.anchors.iter().zip(&report.per_anchor) {
                per_anchor.insert(graph.artist_name(a).to_string(), json!(v));
            }
            output::write_json(
                &out.join("artist_sim.json"),
                &json!({
                    "mean_neighbor_popularity": report.mean,
                    "per_anchor": per_anchor,
                    "config": cfg.to_value(),
                }),
            )?;
            let mut csv = String::from("artist,mean_neighbor_bin\n");
            for (&a, &v) in report.anchors.iter().zip(&report.per_anchor) {
                csv.push_str(&format!("{},{}\n", graph.artist_name(a), v));
            }
            output::atomic_write(&out.join("artist_sim.csv"), csv.as_bytes())?;
            println!("mean neighbor popularity {}", report.mean);
            Ok(())
        }
        Cmd::Sweep { out, interactions, features, splits, gammas, split, k } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "features", features)?;
            set_if(&mut cfg, "splits", splits)?;
            set_if(&mut cfg, "sweep_gammas", gammas)?;
            set_if(&mut cfg, "sweep_split", split)?;
            set_if(&mut cfg, "k", k)?;
            let graph = load_graph(&cfg)?;
            let feats = load_features_with_blocks(&cfg, &graph)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let label = cfg.split_label(&cfg.sweep_split)?;
            let points = gamma_sweep(
                &graph,
                &feats,
                &assignment,
                &cfg.train_config()?,
                &cfg.sweep_gammas,
                label,
                cfg.k,
                cfg.lt_fraction,
            )?;
            write_sweep_csv(&points, &out.join("sweep.csv"))?;
            let rows: Vec<serde_json::Value> = points
                .iter()
                .map(|p| {
                    json!({
                        "gamma": p.gamma,
                        "recall": p.report.recall,
                        "ndcg": p.report.ndcg,
                        "artist_recall": p.report.artist_recall,
                        "flow": p.report.flow,
                        "diversity": p.report.diversity,
                        "pct_lt": p.report.pct_lt,
                        "lt_coverage": p.report.lt_coverage,
                        "artist_coverage": p.report.artist_coverage,
                    })
                })
                .collect();
            output::write_json(
                &out.join("sweep.json"),
                &json!({"points": rows, "config": cfg.to_value()}),
            )?;
            println!("swept {} gamma values into {}", points.len(), out.display());
            Ok(())
        }
        Cmd::Visibility { out, run, interactions, splits } => {
            let mut cfg = base;
            set_if(&mut cfg, "interactions", interactions)?;
            set_if(&mut cfg, "splits", splits)?;
            let graph = load_graph(&cfg)?;
            let assignment = resolve_splits(&cfg, &graph)?;
            let method = run
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let loaded = load_run(&run, &graph, &method)?;
            let index = popularity(&graph, &assignment)?;
            let shares = visibility_by_bin(&loaded, &index)?;
            output::write_json(
                &out.join("visibility.json"),
                &json!({"shares": shares, "config": cfg.to_value()}),
            )?;
            write_visibility_csv(&shares, &out.join("visibility.csv"))?;
            println!("wrote visibility shares to {}", out.display());
            Ok(())
        }
        Cmd::Selftest => selftest::run_all(),
    }
}

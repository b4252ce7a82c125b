//! Analysis protocols on top of the pipeline: counterfactual track
//! duplication with PCA centroid distances, artist-neighborhood popularity,
//! the gamma trade-off sweep, and per-bin visibility shares.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde_json::json;
use std::path::Path;

use crate::data::features::TrackFeatureTable;
use crate::data::graph::{ArtistId, InteractionGraph, TrackId};
use crate::data::split::{SplitAssignment, SplitLabel};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_all, EvalReport};
use crate::objective::cosine;
use crate::popularity::{assign_bins, count_appearances, PopularityIndex, N_BINS};
use crate::recommender::{recommend_all, RecommendationRun};
use crate::rng::{stream, tag};
use crate::trainer::{train, TrainConfig, TrainLog, Trainer};
use crate::output;

/// How many head tracks to duplicate and which stream seeds the playlist
/// draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CounterfactualSpec {
    pub n_top: usize,
    pub seed: u64,
}

/// Catalog augmented with one degree-1 clone per head track.
#[derive(Clone, Debug)]
pub struct CounterfactualData {
    pub graph: InteractionGraph,
    pub features: TrackFeatureTable,
    pub originals: Vec<TrackId>,
    pub duplicates: Vec<TrackId>,
}

/// Clone the `n_top` most popular tracks with bit-identical feature rows and
/// the same artist, attaching each clone to one uniformly drawn training
/// playlist. Clones therefore re-enter the popularity index with count 1,
/// bin 0.
pub fn counterfactual_duplicate(
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    index: &PopularityIndex,
    splits: &SplitAssignment,
    spec: &CounterfactualSpec,
) -> Result<CounterfactualData> {
    if spec.n_top == 0 {
        return Err(Error::invalid("n_top must be at least 1"));
    }
    if spec.n_top > graph.n_tracks() {
        return Err(Error::invalid(format!(
            "cannot duplicate {} tracks out of {}",
            spec.n_top,
            graph.n_tracks()
        )));
    }
    let train_playlists = splits.playlists_in(SplitLabel::Train);
    if train_playlists.is_empty() {
        return Err(Error::invalid("no training playlists to attach duplicates to"));
    }

    let originals: Vec<TrackId> = index.popularity_order().into_iter().take(spec.n_top).collect();
    let mut aug_graph = graph.clone();
    let mut aug_features = features.clone();
    let mut duplicates = Vec::with_capacity(spec.n_top);
    for (i, &orig) in originals.iter().enumerate() {
        // suffix until free, in case the catalog already uses such a name
        let base = format!("{}+cf", graph.track_name(orig));
        let mut name = base.clone();
        let mut attempt = 2u32;
        while aug_graph.track_by_name(&name).is_some() {
            name = format!("{base}{attempt}");
            attempt += 1;
        }
        let dup = aug_graph.add_track(name, graph.artist_of(orig))?;
        aug_features.duplicate_row(orig);
        let mut rng = stream(spec.seed, tag::COUNTERFACTUAL, i as u64);
        let p = train_playlists[rng.gen_range(0..train_playlists.len())];
        aug_graph.append_edge(p, dup)?;
        duplicates.push(dup);
    }
    Ok(CounterfactualData { graph: aug_graph, features: aug_features, originals, duplicates })
}

/// Two-component PCA of one point set.
#[derive(Clone, Debug)]
pub struct Pca2d {
    /// n x 2 projections of the mean-centered points.
    pub coords: Array2<f64>,
    /// 2 x d orthonormal axes; signs match `coords`.
    pub axes: Array2<f64>,
    /// Top-2 covariance eigenvalues; zeroed where rank deficient.
    pub explained: [f64; 2],
    /// True when the data carried fewer than two directions of variance.
    pub rank_deficient: bool,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: eigenvalues plus
/// matching eigenvectors as columns. Quadratic convergence, no rank or
/// eigenvalue-gap assumptions.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v: Array2<f64> = Array2::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let off = |a: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[[i, j]] * a[[i, j]];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..100 {
        if off(&a) <= 1e-14 * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), v)
}

/// Project points onto their top-2 principal components. Components are
/// ordered by explained variance; each score column's largest-magnitude
/// entry is made positive so the output is orientation-deterministic.
/// Spread below ~1e-6 of the data scale counts as numerically absent.
pub fn pca_2d(points: ArrayView2<f64>) -> Result<Pca2d> {
    let (n, d) = points.dim();
    if n < 3 {
        return Err(Error::invalid(format!("pca needs at least 3 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("pca needs at least 2 dimensions, got {d}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("pca input must be finite"));
    }

    let mean = points.mean_axis(ndarray::Axis(0)).expect("n >= 3");
    let centered = &points - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (eigs, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigs[b].partial_cmp(&eigs[a]).unwrap().then(a.cmp(&b)));
    let lam1 = eigs[order[0]].max(0.0);
    let lam2 = eigs[order[1]].max(0.0);

    let input_scale = points.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let floor = 1e-12 * input_scale * input_scale;

    let mut coords = Array2::zeros((n, 2));
    let mut axes = Array2::zeros((2, d));
    let mut explained = [0.0, 0.0];
    let mut rank_deficient = false;
    let keep = if lam1 <= floor {
        rank_deficient = true;
        0
    } else if lam2 <= floor.max(1e-12 * lam1) {
        rank_deficient = true;
        1
    } else {
        2
    };
    for c in 0..keep {
        let axis = vecs.column(order[c]);
        let scores = centered.dot(&axis);
        axes.row_mut(c).assign(&axis);
        coords.column_mut(c).assign(&scores);
        explained[c] = if c == 0 { lam1 } else { lam2 };
    }

    for c in 0..2 {
        let col = coords.column(c);
        let mut best = 0usize;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            coords.column_mut(c).mapv_inplace(|x| -x);
            axes.row_mut(c).mapv_inplace(|x| -x);
        }
    }

    Ok(Pca2d { coords, axes, explained, rank_deficient })
}

/// Euclidean distance between the mean points of the two labeled groups.
pub fn centroid_distance(coords: ArrayView2<f64>, labels: &[bool]) -> Result<f64> {
    if labels.len() != coords.nrows() {
        return Err(Error::invalid(format!(
            "got {} labels for {} points",
            labels.len(),
            coords.nrows()
        )));
    }
    let mut sums = [Array1::<f64>::zeros(coords.ncols()), Array1::zeros(coords.ncols())];
    let mut counts = [0usize; 2];
    for (row, &flag) in coords.outer_iter().zip(labels) {
        let g = flag as usize;
        sums[g] += &row;
        counts[g] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::invalid("both groups need at least one point"));
    }
    let a = &sums[0] / counts[0] as f64;
    let b = &sums[1] / counts[1] as f64;
    Ok((&a - &b).iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Counterfactual experiment result for one training run: PCA plane over the
/// original and duplicated head tracks, and the distance between the two
/// group centroids.
#[derive(Clone, Debug)]
pub struct CentroidReport {
    pub distance: f64,
    /// 2*n_top x 2 PCA coordinates: originals first, then duplicates.
    pub coords: Array2<f64>,
    pub originals: Vec<TrackId>,
    pub duplicates: Vec<TrackId>,
    pub explained: [f64; 2],
    pub rank_deficient: bool,
}

/// Duplicate the head, retrain on the augmented catalog, and measure how far
/// apart the original and clone embeddings land in PCA space.
pub fn counterfactual_centroid(
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
    cfg: &TrainConfig,
    spec: &CounterfactualSpec,
) -> Result<CentroidReport> {
    let index = assign_bins(&count_appearances(graph, splits))?;
    let aug = counterfactual_duplicate(graph, features, &index, splits, spec)?;
    let out = train(&aug.graph, &aug.features, splits, cfg, None)?;

    let n_top = aug.originals.len();
    let mut points = Array2::zeros((2 * n_top, out.embeddings.ncols()));
    for (r, &t) in aug.originals.iter().chain(&aug.duplicates).enumerate() {
        points.row_mut(r).assign(&out.embeddings.row(t.index()));
    }
    let pca = pca_2d(points.view())?;
    let labels: Vec<bool> = (0..2 * n_top).map(|r| r >= n_top).collect();
    let distance = centroid_distance(pca.coords.view(), &labels)?;
    Ok(CentroidReport {
        distance,
        coords: pca.coords,
        originals: aug.originals,
        duplicates: aug.duplicates,
        explained: pca.explained,
        rank_deficient: pca.rank_deficient,
    })
}

/// Artist-level appearance counts: the summed training counts of each
/// artist's tracks.
pub fn artist_track_counts(graph: &InteractionGraph, track_counts: &[u32]) -> Vec<u32> {
    let mut sums = vec![0u64; graph.n_artists()];
    for t in graph.track_ids() {
        sums[graph.artist_of(t).index()] += u64::from(track_counts[t.index()]);
    }
    sums.into_iter().map(|s| u32::try_from(s).unwrap_or(u32::MAX)).collect()
}

/// Artists sitting in the most popular occupied bin.
pub fn top_bin_artists(bins: &[u8]) -> Vec<ArtistId> {
    let top = bins.iter().copied().max().unwrap_or(0);
    bins.iter()
        .enumerate()
        .filter(|(_, &b)| b == top)
        .map(|(i, _)| ArtistId(i as u32))
        .collect()
}

/// Mean popularity of each anchor artist's embedding neighborhood.
#[derive(Clone, Debug, PartialEq)]
pub struct ArtistNeighborReport {
    pub anchors: Vec<ArtistId>,
    /// Mean neighbor bin per anchor, same order as `anchors`.
    pub per_anchor: Vec<f64>,
    pub mean: f64,
}

/// For every anchor, rank all other artists by embedding cosine (ties by
/// ascending id), keep the closest `n`, and average their popularity bins.
pub fn artist_neighbor_popularity(
    z_artists: ArrayView2<f64>,
    artist_bins: &[u8],
    anchors: &[ArtistId],
    n: usize,
) -> Result<ArtistNeighborReport> {
    let total = z_artists.nrows();
    if artist_bins.len() != total {
        return Err(Error::invalid(format!(
            "got {} bins for {} artist embeddings",
            artist_bins.len(),
            total
        )));
    }
    if anchors.is_empty() {
        return Err(Error::invalid("no anchor artists"));
    }
    if n == 0 {
        return Err(Error::invalid("neighborhood size must be at least 1"));
    }
    if total < 2 {
        return Err(Error::invalid("need at least two artists"));
    }
    if let Some(&a) = anchors.iter().find(|a| a.index() >= total) {
        return Err(Error::invalid(format!("anchor artist {a} out of range")));
    }

    let mut per_anchor = Vec::with_capacity(anchors.len());
    for &anchor in anchors {
        let zi = z_artists.row(anchor.index());
        let mut scored: Vec<(usize, f64)> = (0..total)
            .filter(|&j| j != anchor.index())
            .map(|j| (j, cosine(zi, z_artists.row(j))))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.truncate(n);
        let mean_bin = scored.iter().map(|&(j, _)| artist_bins[j] as f64).sum::<f64>()
            / scored.len() as f64;
        per_anchor.push(mean_bin);
    }
    let mean = per_anchor.iter().sum::<f64>() / per_anchor.len() as f64;
    Ok(ArtistNeighborReport { anchors: anchors.to_vec(), per_anchor, mean })
}

/// One evaluated trade-off point of the gamma sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub gamma: f64,
    pub report: EvalReport,
}

/// Train stage 1 once, then branch one stage-2 run per gamma from the shared
/// state (optimizer moments included), evaluating each branch on `label`.
/// Output order echoes the input grid.
pub fn gamma_sweep(
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
    cfg: &TrainConfig,
    gammas: &[f64],
    label: SplitLabel,
    k: usize,
    lt_fraction: f64,
) -> Result<Vec<SweepPoint>> {
    if gammas.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if let Some(&g) = gammas.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(Error::invalid(format!("gamma must be finite and >= 0, got {g}")));
    }
    let trainer = Trainer::new(graph, features, splits, cfg.clone())?;
    let long_tail = trainer.popularity().long_tail_set(lt_fraction)?;
    let mut shared = trainer.init_state()?;
    let mut stage1_log = TrainLog::default();
    trainer.run_stage(&mut shared, cfg.stage1_epochs, 0.0, 1, &mut stage1_log, None)?;

    let mut points = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut state = shared.clone();
        let mut log = stage1_log.clone();
        trainer.run_stage(&mut state, cfg.stage2_epochs, gamma, 2, &mut log, None)?;
        let z = trainer.embeddings(&state.params)?;
        let run = recommend_all(z.view(), splits, label, k, &format!("gamma-{gamma}"))?;
        let config = json!({
            "gamma": gamma,
            "k": k,
            "lt_fraction": lt_fraction,
            "seed": cfg.seed,
            "split": label.as_str(),
        });
        let report = evaluate_all(&run, graph, features, splits, &long_tail, config)?;
        points.push(SweepPoint { gamma, report });
    }
    Ok(points)
}

pub const SWEEP_HEADER: &str =
    "gamma,recall,ndcg,artist_recall,flow,diversity,pct_lt,lt_coverage,artist_coverage";

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        let r = &p.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.gamma,
            r.recall,
            r.ndcg,
            r.artist_recall,
            r.flow,
            r.diversity,
            r.pct_lt,
            r.lt_coverage,
            r.artist_coverage
        ));
    }
    output::atomic_write(path, out.as_bytes())
}

/// Share of all recommended slots landing in each popularity bin. Shares are
/// indexed by bin and sum to 1.
pub fn visibility_by_bin(run: &RecommendationRun, index: &PopularityIndex) -> Result<Vec<f64>> {
    if run.lists.is_empty() {
        return Err(Error::invalid("cannot measure visibility of an empty run"));
    }
    let bins = index.bins();
    let mut counts = vec![0u64; N_BINS];
    let mut total = 0u64;
    for list in &run.lists {
        for item in &list.items {
            let t = item.track;
            if t.index() >= bins.len() {
                return Err(Error::invalid(format!("recommended track {t} out of catalog")));
            }
            counts[bins[t.index()] as usize] += 1;
            total += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

pub const VISIBILITY_HEADER: &str = "bin,share";

pub fn write_visibility_csv(shares: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from(VISIBILITY_HEADER);
    out.push('\n');
    for (bin, share) in shares.iter().enumerate() {
        out.push_str(&format!("{bin},{share}\n"));
    }
    output::atomic_write(path, out.as_bytes())
}

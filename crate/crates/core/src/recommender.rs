//! Playlist embeddings, cosine top-k retrieval, and the Features / MostPop
//! baselines, plus the run file CSV.
//!
//! A cold-start playlist is embedded as the mean of its peek-track rows; the
//! catalog is then ranked by cosine score with the peek tracks excluded.
//! MostPop ignores embeddings entirely and serves the same count-ranked list
//! to everyone, backfilling the slots its exclusions free up.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use crate::data::features::TrackFeatureTable;
use crate::data::graph::{ArtistId, InteractionGraph, PlaylistId, TrackId};
use crate::data::split::{SplitAssignment, SplitLabel};
use crate::error::{Error, Result};
use crate::objective::cosine;
use crate::output;
use crate::popularity::PopularityIndex;

/// One scored recommendation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecItem {
    pub track: TrackId,
    pub score: f64,
}

/// Ranked list for one evaluated playlist.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaylistRecs {
    pub playlist: PlaylistId,
    pub items: Vec<RecItem>,
}

/// A full recommendation pass over an evaluation split.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationRun {
    pub method: String,
    pub k: usize,
    pub lists: Vec<PlaylistRecs>,
}

/// Mean of the peek-track embedding rows. Rows are summed in ascending
/// track-id order so any peek permutation yields the identical vector.
pub fn playlist_embedding(z: ArrayView2<f64>, peek: &[TrackId]) -> Result<Array1<f64>> {
    if peek.is_empty() {
        return Err(Error::invalid("playlist embedding needs at least one peek track"));
    }
    if let Some(&t) = peek.iter().find(|t| t.index() >= z.nrows()) {
        return Err(Error::invalid(format!("peek track {t} out of catalog")));
    }
    let mut order: Vec<TrackId> = peek.to_vec();
    order.sort_unstable();
    let mut acc = Array1::zeros(z.ncols());
    for t in order {
        acc += &z.row(t.index());
    }
    Ok(acc / peek.len() as f64)
}

/// Rank the catalog by cosine score against `emb`, drop `exclude`, and keep
/// the best k (score descending, ties by track id ascending).
pub fn recommend_topk(
    z: ArrayView2<f64>,
    emb: ArrayView1<f64>,
    k: usize,
    exclude: &HashSet<TrackId>,
) -> Result<Vec<RecItem>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut items: Vec<RecItem> = (0..z.nrows() as u32)
        .map(TrackId)
        .filter(|t| !exclude.contains(t))
        .map(|t| RecItem { track: t, score: cosine(emb, z.row(t.index())) })
        .collect();
    let better = |a: &RecItem, b: &RecItem| {
        b.score.partial_cmp(&a.score).unwrap().then(a.track.cmp(&b.track))
    };
    // Partial selection keeps retrieval O(n + k log k) on big catalogs.
    let k = k.min(items.len());
    if k > 0 && k < items.len() {
        items.select_nth_unstable_by(k - 1, better);
        items.truncate(k);
    }
    items.sort_by(better);
    Ok(items)
}

/// Embed and rank every evaluated playlist of `label` from its peek tracks.
pub fn recommend_all(
    z: ArrayView2<f64>,
    splits: &SplitAssignment,
    label: SplitLabel,
    k: usize,
    method: &str,
) -> Result<RecommendationRun> {
    let playlists = splits.eval_playlists(label);
    if playlists.is_empty() {
        return Err(Error::invalid(format!("no evaluable playlists in the {} split", label.as_str())));
    }
    let mut lists = Vec::with_capacity(playlists.len());
    for p in playlists {
        let eval = splits.eval_sets(p).expect("eval_playlists returned it");
        let emb = playlist_embedding(z, &eval.peek)?;
        let exclude: HashSet<TrackId> = eval.peek.iter().copied().collect();
        lists.push(PlaylistRecs { playlist: p, items: recommend_topk(z, emb.view(), k, &exclude)? });
    }
    Ok(RecommendationRun { method: method.to_string(), k, lists })
}

/// Features baseline: the raw model-input matrix serves as the embedding.
pub fn features_baseline(
    features: &TrackFeatureTable,
    use_name_emb: bool,
    use_image_emb: bool,
) -> Result<Array2<f64>> {
    features.input_matrix(use_name_emb, use_image_emb)
}

/// MostPop baseline: one count-ranked list for everyone, with per-playlist
/// peek exclusions backfilled from rank k+1 onward. Scores are the counts.
pub fn mostpop_baseline(
    index: &PopularityIndex,
    splits: &SplitAssignment,
    label: SplitLabel,
    k: usize,
) -> Result<RecommendationRun> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let playlists = splits.eval_playlists(label);
    if playlists.is_empty() {
        return Err(Error::invalid(format!("no evaluable playlists in the {} split", label.as_str())));
    }
    let base = index.popularity_order();
    let mut lists = Vec::with_capacity(playlists.len());
    for p in playlists {
        let eval = splits.eval_sets(p).expect("eval_playlists returned it");
        let exclude: HashSet<TrackId> = eval.peek.iter().copied().collect();
        let items: Vec<RecItem> = base
            .iter()
            .filter(|t| !exclude.contains(t))
            .take(k)
            .map(|&t| RecItem { track: t, score: index.count(t) as f64 })
            .collect();
        lists.push(PlaylistRecs { playlist: p, items });
    }
    Ok(RecommendationRun { method: "mostpop".to_string(), k, lists })
}

/// Mean embedding of each artist's tracks (every artist has at least one).
pub fn artist_embedding(z: ArrayView2<f64>, graph: &InteractionGraph) -> Array2<f64> {
    let mut acc = Array2::zeros((graph.n_artists(), z.ncols()));
    let mut counts = vec![0usize; graph.n_artists()];
    for t in graph.track_ids() {
        let a = graph.artist_of(t);
        counts[a.index()] += 1;
        let mut row = acc.row_mut(a.index());
        row += &z.row(t.index());
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            let mut row = acc.row_mut(i);
            row /= c as f64;
        }
    }
    acc
}

/// Artists that appear anywhere in a run's lists.
pub fn recommended_artists(run: &RecommendationRun, graph: &InteractionGraph) -> HashSet<ArtistId> {
    run.lists
        .iter()
        .flat_map(|l| l.items.iter().map(|i| graph.artist_of(i.track)))
        .collect()
}

pub const RUN_HEADER: &str = "playlist_id,rank,track_id,score";

/// Write a run as CSV with external ids and 1-based ranks.
pub fn write_run(run: &RecommendationRun, graph: &InteractionGraph, path: &Path) -> Result<()> {
    let mut out = String::from(RUN_HEADER);
    out.push('\n');
    for list in &run.lists {
        for (rank, item) in list.items.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                graph.playlist_name(list.playlist),
                rank + 1,
                graph.track_name(item.track),
                item.score
            ));
        }
    }
    output::atomic_write(path, out.as_bytes())
}

/// Read a run file back, resolving external ids against the graph. Lists
/// follow file order; ranks must be contiguous from 1 within each playlist.
pub fn load_run(path: &Path, graph: &InteractionGraph, method: &str) -> Result<RecommendationRun> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let reader = std::io::BufReader::new(file);
    let mut lists: Vec<PlaylistRecs> = Vec::new();
    let mut k = 0usize;
    let malformed = |line: u64, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let lineno = i as u64 + 1;
        if i == 0 {
            if line.trim_end() != RUN_HEADER {
                return Err(malformed(1, format!("expected header '{RUN_HEADER}'")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let playlist = graph
            .playlist_by_name(fields[0])
            .ok_or_else(|| malformed(lineno, format!("unknown playlist '{}'", fields[0])))?;
        let rank: usize = fields[1]
            .parse()
            .map_err(|_| malformed(lineno, format!("bad rank '{}'", fields[1])))?;
        let track = graph
            .track_by_name(fields[2])
            .ok_or_else(|| malformed(lineno, format!("unknown track '{}'", fields[2])))?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| malformed(lineno, format!("bad score '{}'", fields[3])))?;
        let push_new = match lists.last() {
            Some(l) if l.playlist == playlist => false,
            _ => true,
        };
        if push_new {
            if rank != 1 {
                return Err(malformed(lineno, "playlist block must start at rank 1".to_string()));
            }
            lists.push(PlaylistRecs { playlist, items: Vec::new() });
        }
        let list = lists.last_mut().unwrap();
        if rank != list.items.len() + 1 {
            return Err(malformed(lineno, format!("rank {rank} out of order")));
        }
        list.items.push(RecItem { track, score });
        k = k.max(rank);
    }
    if lists.is_empty() {
        return Err(malformed(1, "run file has no rows".to_string()));
    }
    Ok(RecommendationRun { method: method.to_string(), k, lists })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split::{split_peek_holdout, split_playlists};
    use crate::data::synth::{generate_synthetic, SynthSpec};
    use crate::popularity::{assign_bins, count_appearances};
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn playlist_embedding_is_the_peek_mean() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
        let one = playlist_embedding(z.view(), &[TrackId(2)]).unwrap();
        assert_eq!(one, array![2.0, 2.0]);
        let two = playlist_embedding(z.view(), &[TrackId(0), TrackId(1)]).unwrap();
        assert_eq!(two, array![0.5, 0.5]);
        let fwd = playlist_embedding(z.view(), &[TrackId(0), TrackId(2), TrackId(1)]).unwrap();
        let rev = playlist_embedding(z.view(), &[TrackId(1), TrackId(0), TrackId(2)]).unwrap();
        assert_eq!(fwd, rev);
        assert!(playlist_embedding(z.view(), &[]).is_err());
    }

    #[test]
    fn topk_matches_exhaustive_sort_oracle() {
        let mut rng = crate::rng::stream(3, crate::rng::tag::SELFTEST, 21);
        let n = 50;
        let d = 4;
        let mut z = Array2::zeros((n, d));
        for v in z.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let emb: Array1<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exclude: HashSet<TrackId> = [TrackId(4), TrackId(17)].into_iter().collect();
        let got = recommend_topk(z.view(), emb.view(), 10, &exclude).unwrap();

        // Oracle: score everything, full sort, filter, truncate.
        let mut oracle: Vec<(TrackId, f64)> = (0..n as u32)
            .map(TrackId)
            .filter(|t| !exclude.contains(t))
            .map(|t| (t, cosine(emb.view(), z.row(t.index()))))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        oracle.truncate(10);
        let got_pairs: Vec<(TrackId, f64)> = got.iter().map(|i| (i.track, i.score)).collect();
        assert_eq!(got_pairs, oracle);
        // Scores are non-increasing.
        assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn exact_match_ranks_first_unless_excluded() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]];
        let emb = array![0.0, 2.0];
        let top = recommend_topk(z.view(), emb.view(), 3, &HashSet::new()).unwrap();
        assert_eq!(top[0].track, TrackId(1));
        assert!((top[0].score - 1.0).abs() < 1e-12);
        let excl: HashSet<TrackId> = [TrackId(1)].into_iter().collect();
        let top = recommend_topk(z.view(), emb.view(), 3, &excl).unwrap();
        assert_ne!(top[0].track, TrackId(1));
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn k_beyond_catalog_is_clamped() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let emb = array![1.0, 1.0];
        let top = recommend_topk(z.view(), emb.view(), 10, &HashSet::new()).unwrap();
        assert_eq!(top.len(), 2);
    }

    fn synth_setup() -> (crate::data::synth::SynthData, SplitAssignment) {
        let spec = SynthSpec {
            playlists: 14,
            tracks: 25,
            artists: 8,
            skew: 1.0,
            clusters: 3,
            min_len: 4,
            max_len: 8,
            cluster_bias: 0.7,
        };
        let data = generate_synthetic(&spec, 31).unwrap();
        let mut splits = split_playlists(&data.graph, (0.6, 0.2, 0.2), 31).unwrap();
        split_peek_holdout(&data.graph, &mut splits, 2).unwrap();
        (data, splits)
    }

    #[test]
    fn mostpop_serves_one_backfilled_list() {
        let (data, splits) = synth_setup();
        let index = assign_bins(&count_appearances(&data.graph, &splits)).unwrap();
        let run = mostpop_baseline(&index, &splits, SplitLabel::Test, 5).unwrap();
        let base = index.popularity_order();
        for list in &run.lists {
            let peek: HashSet<TrackId> =
                splits.eval_sets(list.playlist).unwrap().peek.iter().copied().collect();
            assert_eq!(list.items.len(), 5);
            // The list is the base order with peek entries squeezed out.
            let expect: Vec<TrackId> =
                base.iter().filter(|t| !peek.contains(t)).take(5).copied().collect();
            let got: Vec<TrackId> = list.items.iter().map(|i| i.track).collect();
            assert_eq!(got, expect);
            assert!(got.iter().all(|t| !peek.contains(t)));
            assert!(list.items.windows(2).all(|w| w[0].score >= w[1].score));
        }
        // k = 1 serves the global max-count track (or next, if peeked).
        let run1 = mostpop_baseline(&index, &splits, SplitLabel::Test, 1).unwrap();
        for list in &run1.lists {
            let peek: HashSet<TrackId> =
                splits.eval_sets(list.playlist).unwrap().peek.iter().copied().collect();
            let want = *base.iter().find(|t| !peek.contains(t)).unwrap();
            assert_eq!(list.items[0].track, want);
        }
    }

    #[test]
    fn artist_embedding_averages_track_rows() {
        let (data, _) = synth_setup();
        let n = data.graph.n_tracks();
        let mut z = Array2::zeros((n, 3));
        for (i, mut row) in z.outer_iter_mut().enumerate() {
            row[0] = i as f64;
            row[1] = 1.0;
            row[2] = -(i as f64);
        }
        let az = artist_embedding(z.view(), &data.graph);
        for a in 0..data.graph.n_artists() as u32 {
            let tracks: Vec<TrackId> = data
                .graph
                .track_ids()
                .filter(|&t| data.graph.artist_of(t) == ArtistId(a))
                .collect();
            if tracks.is_empty() {
                continue;
            }
            let want =
                tracks.iter().map(|t| t.index() as f64).sum::<f64>() / tracks.len() as f64;
            assert!((az[[a as usize, 0]] - want).abs() < 1e-12);
            assert!((az[[a as usize, 1]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn run_csv_round_trips() {
        let (data, splits) = synth_setup();
        let mut rng = crate::rng::stream(5, crate::rng::tag::SELFTEST, 30);
        let mut z = Array2::zeros((data.graph.n_tracks(), 4));
        for v in z.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let run = recommend_all(z.view(), &splits, SplitLabel::Test, 7, "pinsage").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_run(&run, &data.graph, &path).unwrap();
        let loaded = load_run(&path, &data.graph, "pinsage").unwrap();
        assert_eq!(loaded, run);
        // Peek exclusion holds everywhere.
        for list in &run.lists {
            let peek: HashSet<TrackId> =
                splits.eval_sets(list.playlist).unwrap().peek.iter().copied().collect();
            assert!(list.items.iter().all(|i| !peek.contains(&i.track)));
        }
    }

    #[test]
    fn malformed_run_files_are_rejected() {
        let (data, _) = synth_setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "nope\n").unwrap();
        assert!(load_run(&path, &data.graph, "x").is_err());
        std::fs::write(&path, format!("{RUN_HEADER}\np0,2,t0,0.5\n")).unwrap();
        assert!(load_run(&path, &data.graph, "x").is_err());
        std::fs::write(&path, format!("{RUN_HEADER}\np0,1,not_a_track,0.5\n")).unwrap();
        assert!(load_run(&path, &data.graph, "x").is_err());
    }
}

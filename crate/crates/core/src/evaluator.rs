//! Offline evaluation of a recommendation run: accuracy (recall, NDCG,
//! artist recall), list coherence (sound homogeneity, artist diversity),
//! popularity-bias exposure (%LT, long-tail and artist coverage), a paired
//! Wilcoxon signed-rank test over per-playlist vectors, and a min-max
//! model-selection score across runs.

use rayon::prelude::*;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::HashSet;

use crate::data::features::TrackFeatureTable;
use crate::data::graph::{ArtistId, InteractionGraph, PlaylistId, TrackId};
use crate::data::split::SplitAssignment;
use crate::error::{Error, Result};
use crate::objective::{cosine, ndcg_at_k};
use crate::popularity::LongTailSet;
use crate::recommender::{PlaylistRecs, RecommendationRun};

/// Per-playlist metric vectors, ordered by ascending playlist id. Retained so
/// runs can be compared with a paired significance test.
#[derive(Clone, Debug, PartialEq)]
pub struct PerPlaylist {
    pub playlists: Vec<PlaylistId>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub artist_recall: Vec<f64>,
    pub flow: Vec<f64>,
    pub diversity: Vec<f64>,
    pub pct_lt: Vec<f64>,
}

/// Aggregate metrics for one run. Scalars are means of the per-playlist
/// vectors except the two coverage metrics, which are catalog-level set
/// ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub recall: f64,
    pub ndcg: f64,
    pub artist_recall: f64,
    pub flow: f64,
    pub diversity: f64,
    pub pct_lt: f64,
    pub lt_coverage: f64,
    pub artist_coverage: f64,
    pub per_playlist: PerPlaylist,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn as_value(&self, graph: &InteractionGraph) -> serde_json::Value {
        let names: Vec<&str> =
            self.per_playlist.playlists.iter().map(|&p| graph.playlist_name(p)).collect();
        json!({
            "recall": self.recall,
            "ndcg": self.ndcg,
            "artist_recall": self.artist_recall,
            "flow": self.flow,
            "diversity": self.diversity,
            "pct_lt": self.pct_lt,
            "lt_coverage": self.lt_coverage,
            "artist_coverage": self.artist_coverage,
            "per_playlist": {
                "playlists": names,
                "recall": self.per_playlist.recall,
                "ndcg": self.per_playlist.ndcg,
                "artist_recall": self.per_playlist.artist_recall,
                "flow": self.per_playlist.flow,
                "diversity": self.per_playlist.diversity,
                "pct_lt": self.per_playlist.pct_lt,
            },
            "config": self.config,
        })
    }

    pub fn to_json(&self, graph: &InteractionGraph) -> Result<String> {
        crate::output::to_json_string(&self.as_value(graph))
    }
}

struct PlaylistScores {
    playlist: PlaylistId,
    recall: f64,
    ndcg: f64,
    artist_recall: f64,
    flow: f64,
    diversity: f64,
    pct_lt: f64,
}

fn score_playlist(
    list: &PlaylistRecs,
    k: usize,
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
    long_tail: &LongTailSet,
) -> Result<PlaylistScores> {
    let p = list.playlist;
    let sets = splits
        .eval_sets(p)
        .ok_or_else(|| Error::invalid(format!("playlist {p} has no evaluation holdout")))?;
    if list.items.is_empty() {
        return Err(Error::invalid(format!("empty recommendation list for playlist {p}")));
    }
    if let Some(item) = list.items.iter().find(|item| item.track.index() >= graph.n_tracks()) {
        return Err(Error::invalid(format!("recommended track {} out of catalog", item.track)));
    }

    let holdout: HashSet<TrackId> = sets.holdout.iter().copied().collect();
    let hits = list.items.iter().filter(|item| holdout.contains(&item.track)).count();
    let recall = hits as f64 / holdout.len() as f64;

    let gains: Vec<f64> = list
        .items
        .iter()
        .map(|item| if holdout.contains(&item.track) { 1.0 } else { 0.0 })
        .collect();
    let ideal = vec![1.0; holdout.len()];
    let ndcg = ndcg_at_k(&gains, &ideal, k);

    let held_artists: HashSet<ArtistId> = sets.holdout.iter().map(|&t| graph.artist_of(t)).collect();
    let rec_artists: HashSet<ArtistId> =
        list.items.iter().map(|item| graph.artist_of(item.track)).collect();
    let artist_hits = held_artists.intersection(&rec_artists).count();
    let artist_recall = artist_hits as f64 / held_artists.len() as f64;

    let n = list.items.len();
    let flow = if n < 2 {
        0.0
    } else {
        let rows: Vec<_> =
            list.items.iter().map(|item| features.scaled_sonic_row(item.track)).collect();
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += cosine(rows[i].view(), rows[j].view());
            }
        }
        acc / (n * (n - 1) / 2) as f64
    };

    let diversity = rec_artists.len() as f64 / n as f64;
    let lt_hits = list.items.iter().filter(|item| long_tail.contains(item.track)).count();
    let pct_lt = lt_hits as f64 / n as f64;

    Ok(PlaylistScores { playlist: p, recall, ndcg, artist_recall, flow, diversity, pct_lt })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Compute every metric for `run` in one pass. Playlists are processed in
/// parallel; vectors and aggregates are ordered by ascending playlist id so
/// the report is independent of scheduling.
pub fn evaluate_all(
    run: &RecommendationRun,
    graph: &InteractionGraph,
    features: &TrackFeatureTable,
    splits: &SplitAssignment,
    long_tail: &LongTailSet,
    config: serde_json::Value,
) -> Result<EvalReport> {
    if run.lists.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty run"));
    }
    if long_tail.is_empty() {
        return Err(Error::invalid("long-tail set is empty"));
    }
    let mut order: Vec<&PlaylistRecs> = run.lists.iter().collect();
    order.sort_by_key(|list| list.playlist);
    if order.windows(2).any(|w| w[0].playlist == w[1].playlist) {
        return Err(Error::invalid("run contains duplicate playlists"));
    }

    let scored: Vec<PlaylistScores> = order
        .par_iter()
        .map(|list| score_playlist(list, run.k, graph, features, splits, long_tail))
        .collect::<Result<_>>()?;

    let mut lt_seen: HashSet<TrackId> = HashSet::new();
    let mut artists_seen: HashSet<ArtistId> = HashSet::new();
    for list in &order {
        for item in &list.items {
            if long_tail.contains(item.track) {
                lt_seen.insert(item.track);
            }
            artists_seen.insert(graph.artist_of(item.track));
        }
    }

    let per_playlist = PerPlaylist {
        playlists: scored.iter().map(|s| s.playlist).collect(),
        recall: scored.iter().map(|s| s.recall).collect(),
        ndcg: scored.iter().map(|s| s.ndcg).collect(),
        artist_recall: scored.iter().map(|s| s.artist_recall).collect(),
        flow: scored.iter().map(|s| s.flow).collect(),
        diversity: scored.iter().map(|s| s.diversity).collect(),
        pct_lt: scored.iter().map(|s| s.pct_lt).collect(),
    };

    Ok(EvalReport {
        recall: mean(&per_playlist.recall),
        ndcg: mean(&per_playlist.ndcg),
        artist_recall: mean(&per_playlist.artist_recall),
        flow: mean(&per_playlist.flow),
        diversity: mean(&per_playlist.diversity),
        pct_lt: mean(&per_playlist.pct_lt),
        lt_coverage: lt_seen.len() as f64 / long_tail.len() as f64,
        artist_coverage: artists_seen.len() as f64 / graph.n_artists() as f64,
        per_playlist,
        config,
    })
}

/// Outcome of the paired two-sided Wilcoxon signed-rank test.
#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-) over the signed ranks of nonzero differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Count of nonzero differences actually ranked.
    pub n_used: usize,
    /// True when every difference was zero; p is 1.0 by convention.
    pub all_zero: bool,
    /// True when the p-value came from exact sign-pattern enumeration.
    pub exact: bool,
}

/// Average ranks (1-based) of `values` ascending, ties sharing their mean
/// rank. Returns the ranks plus the size of each tie group.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut groups = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let shared = (i + j + 2) as f64 / 2.0;
        for &slot in &idx[i..=j] {
            ranks[slot] = shared;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    (ranks, groups)
}

/// Two-sided Wilcoxon signed-rank test on paired vectors. Zero differences
/// are dropped; at least 6 nonzero differences are required unless all are
/// zero (then p = 1.0 with `all_zero` set). Exact enumeration of all sign
/// patterns is used for n <= 12, otherwise a normal approximation with
/// continuity and tie corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("paired test needs at least one pair"));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("paired test inputs must be finite"));
        }
        let d = x - y;
        if d != 0.0 {
            diffs.push(d);
        }
    }
    if diffs.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_used: 0,
            all_zero: true,
            exact: true,
        });
    }
    let n = diffs.len();
    if n < 6 {
        return Err(Error::invalid(format!(
            "paired test needs at least 6 nonzero differences, got {n}"
        )));
    }

    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, groups) = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = n as f64 * (n as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);
    let expected = total / 2.0;

    let (p_value, exact) = if n <= 12 {
        // Enumerate every sign assignment; p is the share whose W+ deviates
        // from the null mean at least as far as observed.
        let observed = (w_plus - expected).abs();
        let mut count = 0u64;
        for mask in 0u64..(1u64 << n) {
            let mut w = 0.0;
            for (bit, r) in ranks.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    w += r;
                }
            }
            if (w - expected).abs() >= observed - 1e-9 {
                count += 1;
            }
        }
        (count as f64 / (1u64 << n) as f64, true)
    } else {
        let nf = n as f64;
        let tie_term: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            return Err(Error::Numeric("signed-rank variance is not positive".into()));
        }
        // continuity correction: shift W+ half a step toward the mean
        let centered = w_plus - expected;
        let adjusted = if centered > 0.0 {
            centered - 0.5
        } else if centered < 0.0 {
            centered + 0.5
        } else {
            0.0
        };
        let z = adjusted / var.sqrt();
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
        let p = 2.0 * (1.0 - normal.cdf(z.abs()));
        (p.min(1.0), false)
    };

    Ok(WilcoxonResult { statistic, p_value, n_used: n, all_zero: false, exact })
}

/// Min-max model-selection score per run over five metrics: recall, NDCG,
/// artist recall, %LT, and long-tail coverage. A metric with no spread
/// contributes 0.5 to every run.
pub fn model_selection_score(reports: &[EvalReport]) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::invalid("model selection needs at least one report"));
    }
    let columns: Vec<Vec<f64>> = vec![
        reports.iter().map(|r| r.recall).collect(),
        reports.iter().map(|r| r.ndcg).collect(),
        reports.iter().map(|r| r.artist_recall).collect(),
        reports.iter().map(|r| r.pct_lt).collect(),
        reports.iter().map(|r| r.lt_coverage).collect(),
    ];
    let mut scores = vec![0.0; reports.len()];
    for col in &columns {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, &v) in scores.iter_mut().zip(col) {
            *s += if hi == lo { 0.5 } else { (v - lo) / (hi - lo) };
        }
    }
    for s in &mut scores {
        *s /= columns.len() as f64;
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split::{split_peek_holdout, split_playlists, SplitLabel};
    use crate::data::synth::{generate_synthetic, SynthSpec};
    use crate::popularity::{assign_bins, count_appearances, PopularityIndex};
    use crate::recommender::RecItem;

    fn fixture() -> (crate::data::synth::SynthData, SplitAssignment, PopularityIndex) {
        let spec = SynthSpec {
            playlists: 12,
            tracks: 40,
            artists: 8,
            skew: 0.8,
            clusters: 3,
            min_len: 6,
            max_len: 10,
            cluster_bias: 0.8,
        };
        let data = generate_synthetic(&spec, 11).unwrap();
        let mut splits = split_playlists(&data.graph, (0.6, 0.2, 0.2), 11).unwrap();
        split_peek_holdout(&data.graph, &mut splits, 3).unwrap();
        let counts = count_appearances(&data.graph, &splits);
        let index = assign_bins(&counts).unwrap();
        (data, splits, index)
    }

    /// Deterministic synthetic run: stride-13 track picks, distinct per list.
    fn stride_run(splits: &SplitAssignment, n_tracks: usize, k: usize) -> RecommendationRun {
        let lists = splits
            .eval_playlists(SplitLabel::Test)
            .into_iter()
            .map(|p| PlaylistRecs {
                playlist: p,
                items: (0..k as u32)
                    .map(|i| RecItem {
                        track: TrackId((p.0 * 7 + i * 13) % n_tracks as u32),
                        score: 1.0 / (i + 1) as f64,
                    })
                    .collect(),
            })
            .collect();
        RecommendationRun { method: "stride".into(), k, lists }
    }

    #[test]
    fn perfect_run_maxes_accuracy_metrics() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        let lists = splits
            .eval_playlists(SplitLabel::Test)
            .into_iter()
            .map(|p| {
                let sets = splits.eval_sets(p).unwrap();
                PlaylistRecs {
                    playlist: p,
                    items: sets
                        .holdout
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| RecItem { track: t, score: 1.0 / (i + 1) as f64 })
                        .collect(),
                }
            })
            .collect();
        let run = RecommendationRun { method: "oracle".into(), k: 10, lists };
        let report =
            evaluate_all(&run, &data.graph, &data.features, &splits, &lt, json!({})).unwrap();
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.ndcg, 1.0);
        assert_eq!(report.artist_recall, 1.0);
    }

    #[test]
    fn single_hit_at_rank_two_has_closed_form_ndcg() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        // one evaluated playlist, |G| = 1: miss at rank 1, the hit at rank 2
        let p = splits.eval_playlists(SplitLabel::Test)[0];
        let sets = splits.eval_sets(p).unwrap();
        let target = sets.holdout[0];
        let decoy = (0..data.graph.n_tracks() as u32)
            .map(TrackId)
            .find(|t| !sets.holdout.contains(t))
            .unwrap();
        let run = RecommendationRun {
            method: "hand".into(),
            k: 10,
            lists: vec![PlaylistRecs {
                playlist: p,
                items: vec![
                    RecItem { track: decoy, score: 2.0 },
                    RecItem { track: target, score: 1.0 },
                ],
            }],
        };
        let report =
            evaluate_all(&run, &data.graph, &data.features, &splits, &lt, json!({})).unwrap();
        let manual_holdout_size = sets.holdout.len() as f64;
        assert_eq!(report.recall, 1.0 / manual_holdout_size);
        if sets.holdout.len() == 1 {
            assert_eq!(report.ndcg, 0.6309297535714574);
        } else {
            // rank-2 discount over an ideal that fills the top ranks
            let idcg: f64 =
                (1..=sets.holdout.len().min(10)).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
            assert!((report.ndcg - (1.0 / 3f64.log2()) / idcg).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_matches_three_pair_hand_computation() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        let p = splits.eval_playlists(SplitLabel::Test)[0];
        let picks = [TrackId(0), TrackId(1), TrackId(2)];
        let run = RecommendationRun {
            method: "hand".into(),
            k: 3,
            lists: vec![PlaylistRecs {
                playlist: p,
                items: picks
                    .iter()
                    .map(|&t| RecItem { track: t, score: 1.0 })
                    .collect(),
            }],
        };
        let report =
            evaluate_all(&run, &data.graph, &data.features, &splits, &lt, json!({})).unwrap();
        let rows: Vec<_> = picks.iter().map(|&t| data.features.scaled_sonic_row(t)).collect();
        let hand = (cosine(rows[0].view(), rows[1].view())
            + cosine(rows[0].view(), rows[2].view())
            + cosine(rows[1].view(), rows[2].view()))
            / 3.0;
        assert!((report.flow - hand).abs() < 1e-12);
    }

    #[test]
    fn naive_oracles_agree_on_fixture() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        let run = stride_run(&splits, data.graph.n_tracks(), 8);
        let report =
            evaluate_all(&run, &data.graph, &data.features, &splits, &lt, json!({})).unwrap();

        // independent naive pass, sets and explicit loops throughout
        let graph = &data.graph;
        let mut recalls = Vec::new();
        let mut ndcgs = Vec::new();
        let mut artist_recalls = Vec::new();
        let mut flows = Vec::new();
        let mut diversities = Vec::new();
        let mut pct_lts = Vec::new();
        let mut lt_distinct: HashSet<TrackId> = HashSet::new();
        let mut artist_distinct: HashSet<ArtistId> = HashSet::new();
        let mut lists = run.lists.clone();
        lists.sort_by_key(|l| l.playlist);
        for list in &lists {
            let holdout = &splits.eval_sets(list.playlist).unwrap().holdout;
            let recs: Vec<TrackId> = list.items.iter().map(|it| it.track).collect();

            let mut hit = 0usize;
            for g in holdout {
                if recs.contains(g) {
                    hit += 1;
                }
            }
            recalls.push(hit as f64 / holdout.len() as f64);

            let mut dcg = 0.0;
            for (pos, t) in recs.iter().enumerate() {
                if pos < run.k && holdout.contains(t) {
                    dcg += 1.0 / ((pos + 2) as f64).log2();
                }
            }
            let mut idcg = 0.0;
            for r in 1..=holdout.len().min(run.k) {
                idcg += 1.0 / ((r + 1) as f64).log2();
            }
            ndcgs.push(if idcg > 0.0 { dcg / idcg } else { 0.0 });

            let ga: HashSet<ArtistId> = holdout.iter().map(|&t| graph.artist_of(t)).collect();
            let ra: HashSet<ArtistId> = recs.iter().map(|&t| graph.artist_of(t)).collect();
            artist_recalls.push(ga.iter().filter(|a| ra.contains(a)).count() as f64 / ga.len() as f64);

            let mut acc = 0.0;
            let mut pairs = 0usize;
            for i in 0..recs.len() {
                for j in 0..recs.len() {
                    if i < j {
                        let a = data.features.scaled_sonic_row(recs[i]);
                        let b = data.features.scaled_sonic_row(recs[j]);
                        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                        acc += if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
                        pairs += 1;
                    }
                }
            }
            flows.push(if pairs == 0 { 0.0 } else { acc / pairs as f64 });

            diversities.push(ra.len() as f64 / recs.len() as f64);
            let mut in_lt = 0usize;
            for &t in &recs {
                if lt.contains(t) {
                    in_lt += 1;
                    lt_distinct.insert(t);
                }
                artist_distinct.insert(graph.artist_of(t));
            }
            pct_lts.push(in_lt as f64 / recs.len() as f64);
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((report.recall - avg(&recalls)).abs() < 1e-12);
        assert!((report.ndcg - avg(&ndcgs)).abs() < 1e-12);
        assert!((report.artist_recall - avg(&artist_recalls)).abs() < 1e-12);
        assert!((report.flow - avg(&flows)).abs() < 1e-12);
        assert!((report.diversity - avg(&diversities)).abs() < 1e-12);
        assert!((report.pct_lt - avg(&pct_lts)).abs() < 1e-12);
        assert!((report.lt_coverage - lt_distinct.len() as f64 / lt.len() as f64).abs() < 1e-12);
        assert!(
            (report.artist_coverage - artist_distinct.len() as f64 / graph.n_artists() as f64)
                .abs()
                < 1e-12
        );
        assert_eq!(report.per_playlist.recall, recalls);
        assert_eq!(report.per_playlist.playlists.len(), lists.len());
    }

    #[test]
    fn metrics_stay_within_unit_interval() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        for k in [1, 5, 8] {
            let run = stride_run(&splits, data.graph.n_tracks(), k);
            let r =
                evaluate_all(&run, &data.graph, &data.features, &splits, &lt, json!({})).unwrap();
            for v in [
                r.recall,
                r.ndcg,
                r.artist_recall,
                r.flow,
                r.diversity,
                r.pct_lt,
                r.lt_coverage,
                r.artist_coverage,
            ] {
                assert!((0.0..=1.0).contains(&v), "metric {v} escaped [0,1] at k={k}");
            }
        }
    }

    #[test]
    fn report_json_has_exact_keys_and_round_trips_bytes() {
        let (data, splits, index) = fixture();
        let lt = index.long_tail_set(0.2).unwrap();
        let run = stride_run(&splits, data.graph.n_tracks(), 4);
        let cfg = json!({"seed": 11, "k": 4});
        let a = evaluate_all(&run, &data.graph, &data.features, &splits, &lt, cfg.clone())
            .unwrap()
            .to_json(&data.graph)
            .unwrap();
        let b = evaluate_all(&run, &data.graph, &data.features, &splits, &lt, cfg)
            .unwrap()
            .to_json(&data.graph)
            .unwrap();
        assert_eq!(a, b, "same inputs must serialize identically");
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec![
                "artist_coverage",
                "artist_recall",
                "config",
                "diversity",
                "flow",
                "lt_coverage",
                "ndcg",
                "pct_lt",
                "per_playlist",
                "recall",
            ]
        );
        assert_eq!(v["config"]["seed"], json!(11));
    }

    #[test]
    fn wilcoxon_identical_vectors_flag_all_zero() {
        let a = vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert!(r.all_zero);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_used, 0);
    }

    #[test]
    fn wilcoxon_eight_positive_diffs_matches_enumeration() {
        // untied |d|, all positive: only the two extreme sign patterns are as
        // deviant as observed, so p = 2 / 2^8
        let a: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let b = vec![0.0; 8];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 2.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn wilcoxon_exact_handles_tied_ranks() {
        // |d| = [1,1,2,2,3,3] mixes signs; oracle enumerates from scratch
        let a = vec![1.0, 2.0, 5.0, 1.0, 4.0, 9.0];
        let b = vec![2.0, 1.0, 3.0, 3.0, 1.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(r.exact);

        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let rank_of = |v: f64| {
            let lo = sorted.iter().filter(|&&s| s < v).count();
            let eq = sorted.iter().filter(|&&s| s == v).count();
            (lo + 1..=lo + eq).sum::<usize>() as f64 / eq as f64
        };
        let w_plus: f64 = diffs.iter().filter(|d| **d > 0.0).map(|d| rank_of(d.abs())).sum();
        let expected = 6.0 * 7.0 / 4.0;
        let mut hits = 0;
        for mask in 0u32..64 {
            let w: f64 = diffs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, d)| rank_of(d.abs()))
                .sum();
            if (w - expected).abs() >= (w_plus - expected).abs() - 1e-9 {
                hits += 1;
            }
        }
        assert!((r.p_value - hits as f64 / 64.0).abs() < 1e-12);
        assert_eq!(r.n_used, 6);
    }

    #[test]
    fn wilcoxon_two_sided_is_swap_symmetric() {
        let a = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let b = vec![2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
        let fwd = wilcoxon_signed_rank(&a, &b).unwrap();
        let rev = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(fwd.p_value, rev.p_value);
        assert_eq!(fwd.statistic, rev.statistic);

        // approximate branch too
        let long_a: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
        let long_b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.53).cos()).collect();
        let fwd = wilcoxon_signed_rank(&long_a, &long_b).unwrap();
        let rev = wilcoxon_signed_rank(&long_b, &long_a).unwrap();
        assert!(!fwd.exact);
        assert_eq!(fwd.p_value, rev.p_value);
    }

    #[test]
    fn wilcoxon_normal_approximation_tracks_exact_enumeration() {
        // n = 13 sits just past the exact cutoff; enumerate 2^13 patterns
        // here and demand the approximation lands close
        let a: Vec<f64> = (0..13).map(|i| (i as f64 * 0.91).sin() * 2.0).collect();
        let b: Vec<f64> = (0..13).map(|i| (i as f64 * 0.17).cos()).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);

        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let (ranks, _) = average_ranks(&abs);
        let w_plus: f64 =
            diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let expected = 13.0 * 14.0 / 4.0;
        let mut hits = 0u64;
        for mask in 0u64..(1 << 13) {
            let w: f64 = ranks
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, r)| r)
                .sum();
            if (w - expected).abs() >= (w_plus - expected).abs() - 1e-9 {
                hits += 1;
            }
        }
        let exact_p = hits as f64 / (1u64 << 13) as f64;
        assert!(
            (r.p_value - exact_p).abs() < 0.05,
            "approx {} vs exact {exact_p}",
            r.p_value
        );
    }

    #[test]
    fn wilcoxon_rejects_bad_inputs() {
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0]).is_err());
        assert!(wilcoxon_signed_rank(&[], &[]).is_err());
        // five nonzero differences is below the floor
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![0.0; 5];
        assert!(wilcoxon_signed_rank(&a, &b).is_err());
        assert!(wilcoxon_signed_rank(&[f64::NAN; 6], &[0.0; 6]).is_err());
    }

    fn report_with(recall: f64, ndcg: f64, ar: f64, pct: f64, ltc: f64) -> EvalReport {
        EvalReport {
            recall,
            ndcg,
            artist_recall: ar,
            flow: 0.0,
            diversity: 0.0,
            pct_lt: pct,
            lt_coverage: ltc,
            artist_coverage: 0.0,
            per_playlist: PerPlaylist {
                playlists: vec![],
                recall: vec![],
                ndcg: vec![],
                artist_recall: vec![],
                flow: vec![],
                diversity: vec![],
                pct_lt: vec![],
            },
            config: json!({}),
        }
    }

    #[test]
    fn model_selection_degenerate_and_dominating_runs() {
        let single = model_selection_score(&[report_with(0.3, 0.2, 0.5, 0.1, 0.4)]).unwrap();
        assert_eq!(single, vec![0.5]);

        let reports = vec![
            report_with(0.9, 0.8, 0.9, 0.5, 0.6),
            report_with(0.1, 0.2, 0.3, 0.1, 0.2),
        ];
        let scores = model_selection_score(&reports).unwrap();
        assert_eq!(scores[0], 1.0);
        assert_eq!(scores[1], 0.0);
    }

    #[test]
    fn model_selection_matches_hand_minmax_on_three_runs() {
        let reports = vec![
            report_with(0.10, 0.30, 0.50, 0.20, 0.40),
            report_with(0.20, 0.30, 0.20, 0.60, 0.10),
            report_with(0.40, 0.60, 0.40, 0.40, 0.40),
        ];
        let scores = model_selection_score(&reports).unwrap();
        // hand min-max per column, ndcg col spread 0.3..0.6, recall 0.1..0.4,
        // artist recall 0.2..0.5, pct 0.2..0.6, ltc spread 0.1..0.4
        let hand0 = (0.0 + 0.0 + 1.0 + 0.0 + 1.0) / 5.0;
        let hand1 = ((0.1 / 0.3) + 0.0 + 0.0 + 1.0 + 0.0) / 5.0;
        let hand2 = (1.0 + 1.0 + (0.2 / 0.3) + 0.5 + 1.0) / 5.0;
        assert!((scores[0] - hand0).abs() < 1e-12);
        assert!((scores[1] - hand1).abs() < 1e-12);
        assert!((scores[2] - hand2).abs() < 1e-12);
    }
}

//! Playlist-level data splits and peek/holdout partitions.
//!
//! Splitting happens at the playlist level: a validation or test playlist is
//! entirely unseen during training. For evaluation, each held-out playlist
//! exposes its first `peek_k` tracks (by position) as the query and hides
//! the remainder as ground truth.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::graph::{InteractionGraph, PlaylistId, TrackId};
use crate::error::{Error, Result};
use crate::rng;

pub const SPLITS_HEADER: &str = "playlist_id,split";

/// Which partition a playlist belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SplitLabel {
    Train,
    Valid,
    Test,
}

impl SplitLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Train => "train",
            SplitLabel::Valid => "valid",
            SplitLabel::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitLabel::Train),
            "valid" => Some(SplitLabel::Valid),
            "test" => Some(SplitLabel::Test),
            _ => None,
        }
    }
}

/// Peek (visible) and holdout (ground-truth) tracks of one eval playlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeekHoldout {
    pub peek: Vec<TrackId>,
    pub holdout: Vec<TrackId>,
}

/// Assignment of every playlist to a split, plus eval partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    labels: Vec<SplitLabel>,
    peek_k: Option<usize>,
    eval: BTreeMap<u32, PeekHoldout>,
    excluded: Vec<PlaylistId>,
}

impl SplitAssignment {
    pub fn label(&self, p: PlaylistId) -> SplitLabel {
        self.labels[p.index()]
    }

    pub fn is_train(&self, p: PlaylistId) -> bool {
        self.labels[p.index()] == SplitLabel::Train
    }

    /// Playlists of one split, ascending by id.
    pub fn playlists_in(&self, label: SplitLabel) -> Vec<PlaylistId> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| PlaylistId(i as u32))
            .collect()
    }

    /// Peek/holdout partition of an eval playlist, if it was not excluded.
    pub fn eval_sets(&self, p: PlaylistId) -> Option<&PeekHoldout> {
        self.eval.get(&p.0)
    }

    /// Eval playlists of one split that have a peek/holdout partition.
    pub fn eval_playlists(&self, label: SplitLabel) -> Vec<PlaylistId> {
        self.eval
            .keys()
            .map(|&i| PlaylistId(i))
            .filter(|&p| self.labels[p.index()] == label)
            .collect()
    }

    /// Playlists dropped from evaluation for having fewer than two tracks.
    pub fn excluded(&self) -> &[PlaylistId] {
        &self.excluded
    }

    pub fn peek_k(&self) -> Option<usize> {
        self.peek_k
    }

    /// Write `playlist_id,split` rows in dense playlist order.
    pub fn write_splits(&self, path: &Path, graph: &InteractionGraph) -> Result<()> {
        let mut out = String::new();
        out.push_str(SPLITS_HEADER);
        out.push('\n');
        for p in graph.playlist_ids() {
            out.push_str(&format!(
                "{},{}\n",
                graph.playlist_name(p),
                self.label(p).as_str()
            ));
        }
        crate::output::atomic_write(path, out.as_bytes())
    }

    /// Load split labels; peek/holdout must be re-derived afterwards.
    pub fn load_splits(path: &Path, graph: &InteractionGraph) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));
        {
            let headers = reader
                .headers()
                .map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let joined = headers.iter().collect::<Vec<_>>().join(",");
            if joined != SPLITS_HEADER {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("expected header `{SPLITS_HEADER}`"),
                });
            }
        }
        let mut labels = vec![None; graph.n_playlists()];
        for record in reader.records() {
            let record = record.map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            };
            if record.len() != 2 {
                return Err(malformed(format!("expected 2 fields, found {}", record.len())));
            }
            let p = graph
                .playlist_by_name(&record[0])
                .ok_or_else(|| malformed(format!("unknown playlist id `{}`", &record[0])))?;
            let label = SplitLabel::parse(&record[1])
                .ok_or_else(|| malformed(format!("unknown split label `{}`", &record[1])))?;
            if labels[p.index()].replace(label).is_some() {
                return Err(malformed(format!("duplicate row for playlist `{}`", &record[0])));
            }
        }
        let labels: Vec<SplitLabel> = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    Error::invalid(format!(
                        "split file misses playlist `{}`",
                        graph.playlist_name(PlaylistId(i as u32))
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(SplitAssignment {
            labels,
            peek_k: None,
            eval: BTreeMap::new(),
            excluded: Vec::new(),
        })
    }
}

/// Largest-remainder apportionment of `n` playlists to three fractions.
fn apportion(n: usize, fractions: (f64, f64, f64)) -> [usize; 3] {
    let fs = [fractions.0, fractions.1, fractions.2];
    let exact: Vec<f64> = fs.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: usize = n - sizes.iter().sum::<usize>();
    // Distribute remainders by largest fractional part; ties favor the
    // earlier split (train, then valid, then test).
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Randomly assign playlists to train/valid/test with the given fractions.
pub fn split_playlists(
    graph: &InteractionGraph,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let (ft, fv, fs) = fractions;
    if !(ft.is_finite() && fv.is_finite() && fs.is_finite()) || ft < 0.0 || fv < 0.0 || fs < 0.0 {
        return Err(Error::invalid("split fractions must be non-negative finite numbers"));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions sum to {}, expected 1 within 1e-9",
            ft + fv + fs
        )));
    }
    let n = graph.n_playlists();
    let sizes = apportion(n, fractions);
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid(format!(
            "split sizes {:?} leave at least one split empty (|P| = {n})",
            sizes
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, rng::tag::SPLIT, 0);
    ids.shuffle(&mut rng);
    let mut labels = vec![SplitLabel::Train; n];
    for &i in ids.iter().take(sizes[0]) {
        labels[i] = SplitLabel::Train;
    }
    for &i in ids.iter().skip(sizes[0]).take(sizes[1]) {
        labels[i] = SplitLabel::Valid;
    }
    for &i in ids.iter().skip(sizes[0] + sizes[1]).take(sizes[2]) {
        labels[i] = SplitLabel::Test;
    }
    Ok(SplitAssignment {
        labels,
        peek_k: None,
        eval: BTreeMap::new(),
        excluded: Vec::new(),
    })
}

/// Derive peek/holdout partitions for every valid/test playlist.
///
/// The first `min(peek_k, len - 1)` tracks by position are visible; the rest
/// are ground truth. Playlists with fewer than two tracks cannot yield a
/// non-empty holdout and are excluded (reported via `excluded()`).
pub fn split_peek_holdout(
    graph: &InteractionGraph,
    assignment: &mut SplitAssignment,
    peek_k: usize,
) -> Result<()> {
    if peek_k == 0 {
        return Err(Error::invalid("peek_k must be at least 1"));
    }
    assignment.peek_k = Some(peek_k);
    assignment.eval.clear();
    assignment.excluded.clear();
    for p in graph.playlist_ids() {
        if assignment.label(p) == SplitLabel::Train {
            continue;
        }
        let tracks = graph.playlist_tracks(p);
        if tracks.len() < 2 {
            assignment.excluded.push(p);
            continue;
        }
        let k = peek_k.min(tracks.len() - 1);
        assignment.eval.insert(
            p.0,
            PeekHoldout {
                peek: tracks[..k].to_vec(),
                holdout: tracks[k..].to_vec(),
            },
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::graph::GraphBuilder;

    fn graph_with_playlists(lens: &[usize]) -> InteractionGraph {
        let mut b = GraphBuilder::new();
        let mut t = 0;
        for (p, &len) in lens.iter().enumerate() {
            for pos in 0..len {
                b.add(&format!("p{p}"), &format!("t{t}"), &format!("a{}", t % 3), pos as u32)
                    .unwrap();
                t += 1;
            }
        }
        b.finish().unwrap()
    }

    #[test]
    fn ten_playlists_split_8_1_1() {
        let g = graph_with_playlists(&[3; 10]);
        let s = split_playlists(&g, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(s.playlists_in(SplitLabel::Train).len(), 8);
        assert_eq!(s.playlists_in(SplitLabel::Valid).len(), 1);
        assert_eq!(s.playlists_in(SplitLabel::Test).len(), 1);
    }

    #[test]
    fn split_is_deterministic_per_seed_and_varies_across_seeds() {
        let g = graph_with_playlists(&[2; 40]);
        let a = split_playlists(&g, (0.8, 0.1, 0.1), 1).unwrap();
        let b = split_playlists(&g, (0.8, 0.1, 0.1), 1).unwrap();
        let c = split_playlists(&g, (0.8, 0.1, 0.1), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fraction_sum_is_rejected() {
        let g = graph_with_playlists(&[2; 10]);
        let err = split_playlists(&g, (0.8, 0.1, 0.2), 0).unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn empty_split_is_rejected() {
        let g = graph_with_playlists(&[2; 5]);
        // 5 playlists at 2% validation leaves the valid split empty.
        let err = split_playlists(&g, (0.93, 0.02, 0.05), 0).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn peek_holdout_uses_position_order_and_caps_at_len_minus_one() {
        let g = graph_with_playlists(&[6, 2, 3]);
        let mut s = split_playlists(&g, (0.4, 0.3, 0.3), 11).unwrap();
        split_peek_holdout(&g, &mut s, 4).unwrap();
        for label in [SplitLabel::Valid, SplitLabel::Test] {
            for p in s.eval_playlists(label) {
                let ph = s.eval_sets(p).unwrap();
                let tracks = g.playlist_tracks(p);
                let k = 4usize.min(tracks.len() - 1);
                assert_eq!(ph.peek, tracks[..k].to_vec());
                assert_eq!(ph.holdout, tracks[k..].to_vec());
                assert!(!ph.holdout.is_empty());
            }
        }
    }

    #[test]
    fn short_playlists_are_excluded_with_count() {
        let g = graph_with_playlists(&[1, 1, 1, 1, 5, 5]);
        // Force the two 5-track playlists into train by scanning seeds; we
        // only need at least one 1-track playlist in an eval split.
        let mut s = split_playlists(&g, (0.34, 0.33, 0.33), 3).unwrap();
        split_peek_holdout(&g, &mut s, 2).unwrap();
        let eval_count = s.eval_playlists(SplitLabel::Valid).len()
            + s.eval_playlists(SplitLabel::Test).len();
        assert_eq!(eval_count + s.excluded().len(), 4);
        assert!(!s.excluded().is_empty());
    }

    #[test]
    fn splits_csv_round_trips_labels() {
        let g = graph_with_playlists(&[2; 12]);
        let s = split_playlists(&g, (0.5, 0.25, 0.25), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.csv");
        s.write_splits(&path, &g).unwrap();
        let loaded = SplitAssignment::load_splits(&path, &g).unwrap();
        for p in g.playlist_ids() {
            assert_eq!(s.label(p), loaded.label(p));
        }
    }

    #[test]
    fn apportion_handles_uneven_remainders() {
        assert_eq!(apportion(10, (0.8, 0.1, 0.1)), [8, 1, 1]);
        assert_eq!(apportion(7, (0.6, 0.2, 0.2)), [4, 2, 1]);
        let s = apportion(7, (0.6, 0.2, 0.2));
        assert_eq!(s.iter().sum::<usize>(), 7);
    }
}

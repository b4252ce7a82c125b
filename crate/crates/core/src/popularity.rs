//! Track popularity: appearance counts, logarithmic bins, long-tail set.
//!
//! Appearance counts are taken over training playlists only, so popularity
//! never leaks information from held-out playlists. Counts are compressed
//! with a base-10 logarithm and divided into 10 equal-width bins over
//! [0, log10(max count)]: bin 0 holds the rarest tracks (counts 0 and 1),
//! bin 9 the most popular ones.

use serde::Serialize;

use crate::data::graph::{InteractionGraph, TrackId};
use crate::data::split::SplitAssignment;
use crate::error::{Error, Result};

pub const N_BINS: usize = 10;

/// Number of training playlists each track appears in.
pub fn count_appearances(graph: &InteractionGraph, split: &SplitAssignment) -> Vec<u32> {
    let mut counts = vec![0u32; graph.n_tracks()];
    for p in graph.playlist_ids() {
        if !split.is_train(p) {
            continue;
        }
        for t in graph.playlist_tracks(p) {
            counts[t.index()] += 1;
        }
    }
    counts
}

/// Popularity bin for one count given the catalog maximum.
///
/// Equal-width bins over the log10 range; the top edge clamps into bin 9 so
/// the maximal count always lands there. When the maximum count is 1 the
/// log range collapses and every track sits in bin 0.
pub fn bin_for_count(count: u32, log_max: f64) -> u8 {
    if count <= 1 || log_max <= 0.0 {
        return 0;
    }
    let raw = (N_BINS as f64 * (count as f64).log10() / log_max).floor();
    raw.clamp(0.0, (N_BINS - 1) as f64) as u8
}

/// Per-track popularity counts and bins.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityIndex {
    counts: Vec<u32>,
    bins: Vec<u8>,
    log_max: f64,
}

/// Assign every track to a popularity bin. Errors if no track has a
/// positive count (no training signal at all).
pub fn assign_bins(counts: &[u32]) -> Result<PopularityIndex> {
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::invalid(
            "all appearance counts are zero; popularity bins are undefined",
        ));
    }
    let log_max = (max as f64).log10();
    let bins = counts.iter().map(|&c| bin_for_count(c, log_max)).collect();
    Ok(PopularityIndex {
        counts: counts.to_vec(),
        bins,
        log_max,
    })
}

/// Tracks outside the most-popular head, as a membership mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTailSet {
    in_tail: Vec<bool>,
    tail_count: usize,
}

impl LongTailSet {
    pub fn contains(&self, t: TrackId) -> bool {
        self.in_tail[t.index()]
    }

    pub fn len(&self) -> usize {
        self.tail_count
    }

    pub fn is_empty(&self) -> bool {
        self.tail_count == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = TrackId> + '_ {
        self.in_tail
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| TrackId(i as u32))
    }
}

/// Breakdown of the catalog by bin, for reporting and plot data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinBreakdown {
    pub bins: Vec<BinRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinRow {
    pub bin: u8,
    pub tracks: usize,
    pub interaction_share: f64,
}

impl PopularityIndex {
    pub fn n_tracks(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, t: TrackId) -> u32 {
        self.counts[t.index()]
    }

    pub fn bin(&self, t: TrackId) -> u8 {
        self.bins[t.index()]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn bins(&self) -> &[u8] {
        &self.bins
    }

    /// Catalog order by decreasing popularity; count ties break by id.
    pub fn popularity_order(&self) -> Vec<TrackId> {
        let mut ids: Vec<TrackId> = (0..self.counts.len() as u32).map(TrackId).collect();
        ids.sort_by(|a, b| {
            self.counts[b.index()]
                .cmp(&self.counts[a.index()])
                .then(a.0.cmp(&b.0))
        });
        ids
    }

    /// Complement of the top `top_fraction` of tracks by count.
    pub fn long_tail_set(&self, top_fraction: f64) -> Result<LongTailSet> {
        if !top_fraction.is_finite() || top_fraction <= 0.0 || top_fraction >= 1.0 {
            return Err(Error::invalid(format!(
                "long-tail top fraction {top_fraction} must lie strictly between 0 and 1"
            )));
        }
        let n = self.counts.len();
        let head = (top_fraction * n as f64).ceil() as usize;
        let order = self.popularity_order();
        let mut in_tail = vec![true; n];
        for t in order.iter().take(head) {
            in_tail[t.index()] = false;
        }
        let tail_count = n - head.min(n);
        Ok(LongTailSet {
            in_tail,
            tail_count,
        })
    }

    /// Tracks-per-bin and interaction share per bin; shares sum to 1.
    pub fn breakdown(&self) -> BinBreakdown {
        let mut tracks = [0usize; N_BINS];
        let mut interactions = [0u64; N_BINS];
        for (i, &b) in self.bins.iter().enumerate() {
            tracks[b as usize] += 1;
            interactions[b as usize] += self.counts[i] as u64;
        }
        let total: u64 = interactions.iter().sum();
        let bins = (0..N_BINS)
            .map(|b| BinRow {
                bin: b as u8,
                tracks: tracks[b],
                interaction_share: interactions[b] as f64 / total as f64,
            })
            .collect();
        BinBreakdown { bins }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::graph::{GraphBuilder, PlaylistId};
    use crate::data::split::split_playlists;
    use rand::Rng;

    /// Independent formulation of the binning rule, kept deliberately close
    /// to the closed form: clamp(floor(10 * log10(a) / log10(a_max)), 0, 9).
    fn oracle_bin(count: u32, max: u32) -> u8 {
        if count <= 1 || max <= 1 {
            return 0;
        }
        let v = 10.0 * (count as f64).log10() / (max as f64).log10();
        (v.floor().clamp(0.0, 9.0)) as u8
    }

    #[test]
    fn frozen_example_counts_map_to_expected_bins() {
        let counts = [1u32, 3, 10, 31, 100, 316, 1000];
        let idx = assign_bins(&counts).unwrap();
        assert_eq!(idx.bins(), &[0, 1, 3, 4, 6, 8, 9]);
    }

    #[test]
    fn bins_match_oracle_on_random_count_vectors() {
        let mut rng = crate::rng::stream(99, crate::rng::tag::SELFTEST, 0);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let counts: Vec<u32> = (0..n).map(|_| rng.gen_range(0..5000)).collect();
            if counts.iter().all(|&c| c == 0) {
                continue;
            }
            let max = *counts.iter().max().unwrap();
            let idx = assign_bins(&counts).unwrap();
            for (i, &c) in counts.iter().enumerate() {
                assert_eq!(
                    idx.bins()[i],
                    oracle_bin(c, max),
                    "count {c} with max {max}"
                );
            }
        }
    }

    #[test]
    fn bins_are_monotone_in_count() {
        let counts: Vec<u32> = (0..2000).collect();
        let idx = assign_bins(&counts).unwrap();
        let mut last = 0u8;
        for i in 0..counts.len() {
            assert!(idx.bins()[i] >= last);
            last = idx.bins()[i];
        }
    }

    #[test]
    fn degenerate_extremes() {
        // Counts 0 and 1 always map to bin 0; the max count to bin 9.
        let idx = assign_bins(&[0, 1, 7, 900]).unwrap();
        assert_eq!(idx.bin(TrackId(0)), 0);
        assert_eq!(idx.bin(TrackId(1)), 0);
        assert_eq!(idx.bin(TrackId(3)), 9);
        // Constant counts: every track ties the max, so all land in bin 9.
        let idx = assign_bins(&[5, 5, 5]).unwrap();
        assert_eq!(idx.bins(), &[9, 9, 9]);
        // Max count 1 collapses the log range; everything is bin 0.
        let idx = assign_bins(&[1, 1, 0]).unwrap();
        assert_eq!(idx.bins(), &[0, 0, 0]);
        // No signal at all is an error.
        assert!(assign_bins(&[0, 0]).is_err());
    }

    #[test]
    fn counts_use_train_playlists_only() {
        let mut b = GraphBuilder::new();
        // Ten playlists all containing t0; t1 only in the last two.
        for p in 0..10 {
            b.add(&format!("p{p}"), "t0", "a0", 0).unwrap();
            if p >= 8 {
                b.add(&format!("p{p}"), "t1", "a1", 1).unwrap();
            }
        }
        let g = b.finish().unwrap();
        let split = split_playlists(&g, (0.8, 0.1, 0.1), 4).unwrap();
        let counts = count_appearances(&g, &split);
        let train_with_t1 = (8..10)
            .filter(|&p| split.is_train(PlaylistId(p)))
            .count() as u32;
        assert_eq!(counts[0], 8);
        assert_eq!(counts[1], train_with_t1);
    }

    #[test]
    fn long_tail_excludes_top_fraction_with_id_tiebreak() {
        // Ten tracks, counts descending for the first two, then ties.
        let counts = [50u32, 40, 7, 7, 7, 7, 7, 7, 7, 7];
        let idx = assign_bins(&counts).unwrap();
        let lt = idx.long_tail_set(0.2).unwrap();
        assert_eq!(lt.len(), 8);
        assert!(!lt.contains(TrackId(0)));
        assert!(!lt.contains(TrackId(1)));
        for t in 2..10 {
            assert!(lt.contains(TrackId(t)));
        }
        // With ties at the boundary, the lower id enters the head.
        let idx = assign_bins(&[9, 9, 9, 1, 1]).unwrap();
        let lt = idx.long_tail_set(0.2).unwrap();
        assert!(!lt.contains(TrackId(0)));
        assert!(lt.contains(TrackId(1)));
        // Fraction near 1 leaves an empty tail.
        let lt = idx.long_tail_set(0.999).unwrap();
        assert!(lt.is_empty());
        assert!(idx.long_tail_set(0.0).is_err());
        assert!(idx.long_tail_set(1.0).is_err());
    }

    #[test]
    fn breakdown_shares_sum_to_one() {
        let mut rng = crate::rng::stream(5, crate::rng::tag::SELFTEST, 1);
        let counts: Vec<u32> = (0..500).map(|_| rng.gen_range(0..3000)).collect();
        let idx = assign_bins(&counts).unwrap();
        let report = idx.breakdown();
        assert_eq!(report.bins.len(), N_BINS);
        let share: f64 = report.bins.iter().map(|r| r.interaction_share).sum();
        assert!((share - 1.0).abs() < 1e-9, "shares sum to {share}");
        let tracks: usize = report.bins.iter().map(|r| r.tracks).sum();
        assert_eq!(tracks, 500);
    }

    #[test]
    fn single_track_breakdown_occupies_one_bin() {
        let idx = assign_bins(&[12]).unwrap();
        let report = idx.breakdown();
        let occupied: Vec<&BinRow> = report.bins.iter().filter(|r| r.tracks > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].bin, 9);
        assert!((occupied[0].interaction_share - 1.0).abs() < 1e-12);
    }
}

//! Synthetic dataset generation for experiments and tests.
//!
//! The generator produces a playlist-track graph whose track appearance
//! counts follow a power law, plus a feature table whose sonic vectors are
//! coherent within genre clusters. Every configured track appears at least
//! once: each track is first dealt to one playlist, then playlists are
//! filled to their target length by popularity-weighted draws. Playlists
//! have a home cluster and prefer tracks from it, so co-occurrence and
//! feature similarity are correlated.

use rand::Rng;

use crate::data::features::{TrackFeatureTable, GENRE_DIM, SONIC_DIM};
use crate::data::graph::{GraphBuilder, InteractionGraph};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of the synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub playlists: usize,
    pub tracks: usize,
    pub artists: usize,
    /// Power-law exponent for track selection; 0 means uniform.
    pub skew: f64,
    /// Number of genre clusters; must not exceed the track count.
    pub clusters: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a draw is restricted to the playlist's home cluster.
    pub cluster_bias: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            playlists: 50,
            tracks: 300,
            artists: 60,
            skew: 1.0,
            clusters: 6,
            min_len: 10,
            max_len: 20,
            cluster_bias: 0.8,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.playlists == 0 || self.tracks == 0 || self.artists == 0 || self.clusters == 0 {
            return Err(Error::invalid("playlists, tracks, artists, clusters must be positive"));
        }
        if self.tracks < self.clusters {
            return Err(Error::invalid(format!(
                "track count {} is smaller than cluster count {}",
                self.tracks, self.clusters
            )));
        }
        if self.artists > self.tracks {
            return Err(Error::invalid(format!(
                "artist count {} exceeds track count {}",
                self.artists, self.tracks
            )));
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return Err(Error::invalid(format!(
                "invalid playlist length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.max_len > self.tracks {
            return Err(Error::invalid(format!(
                "max playlist length {} exceeds track count {}",
                self.max_len, self.tracks
            )));
        }
        if !self.skew.is_finite() || self.skew < 0.0 {
            return Err(Error::invalid("skew must be a non-negative finite number"));
        }
        if !(0.0..=1.0).contains(&self.cluster_bias) {
            return Err(Error::invalid("cluster_bias must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generated graph plus matching feature table.
#[derive(Debug)]
pub struct SynthData {
    pub graph: InteractionGraph,
    pub features: TrackFeatureTable,
}

/// Cumulative weight table for O(log n) weighted sampling.
struct Cdf {
    items: Vec<usize>,
    cum: Vec<f64>,
}

impl Cdf {
    fn new(items: Vec<usize>, weights: &[f64]) -> Self {
        let mut cum = Vec::with_capacity(items.len());
        let mut acc = 0.0;
        for &i in &items {
            acc += weights[i];
            cum.push(acc);
        }
        Cdf { items, cum }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cum.last().expect("non-empty cdf");
        let u = rng.gen_range(0.0..total);
        let idx = self.cum.partition_point(|&c| c <= u);
        self.items[idx.min(self.items.len() - 1)]
    }
}

/// Generate a synthetic dataset; identical seeds yield identical bytes.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = rng::stream(seed, rng::tag::SYNTH, 0);
    let n_t = spec.tracks;
    let n_p = spec.playlists;
    let n_c = spec.clusters;

    let cluster_of: Vec<usize> = (0..n_t).map(|t| t % n_c).collect();
    let home_of: Vec<usize> = (0..n_p).map(|p| p % n_c).collect();

    // Selection weights over generation indices; index 0 is the head.
    let weights: Vec<f64> = (0..n_t).map(|t| 1.0 / ((t + 1) as f64).powf(spec.skew)).collect();
    let global_cdf = Cdf::new((0..n_t).collect(), &weights);
    let cluster_cdfs: Vec<Cdf> = (0..n_c)
        .map(|c| {
            let members: Vec<usize> = (0..n_t).filter(|&t| cluster_of[t] == c).collect();
            Cdf::new(members, &weights)
        })
        .collect();
    let home_playlists: Vec<Vec<usize>> = (0..n_c)
        .map(|c| (0..n_p).filter(|&p| home_of[p] == c).collect())
        .collect();

    let lengths: Vec<usize> = (0..n_p)
        .map(|_| rng.gen_range(spec.min_len..=spec.max_len))
        .collect();

    // Coverage deal: every track lands in exactly one playlist, preferring
    // playlists whose home matches the track's cluster.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_p];
    for t in 0..n_t {
        let candidates = &home_playlists[cluster_of[t]];
        let p = if !candidates.is_empty() && rng.gen_range(0.0..1.0) < spec.cluster_bias {
            candidates[rng.gen_range(0..candidates.len())]
        } else {
            rng.gen_range(0..n_p)
        };
        members[p].push(t);
    }

    // Fill playlists to their target length with popularity-weighted draws.
    for p in 0..n_p {
        let mut present: Vec<bool> = vec![false; n_t];
        for &t in &members[p] {
            present[t] = true;
        }
        let mut attempts = 0usize;
        while members[p].len() < lengths[p] {
            let use_home = rng.gen_range(0.0..1.0) < spec.cluster_bias;
            let t = if use_home && attempts < 64 * lengths[p] {
                cluster_cdfs[home_of[p]].sample(&mut rng)
            } else {
                global_cdf.sample(&mut rng)
            };
            attempts += 1;
            if !present[t] {
                present[t] = true;
                members[p].push(t);
            }
            if attempts > 4096 * lengths[p] {
                // Deterministic fallback when rejection stalls: take the
                // lowest-index absent track.
                if let Some(t) = (0..n_t).find(|&t| !present[t]) {
                    present[t] = true;
                    members[p].push(t);
                } else {
                    break;
                }
            }
        }
    }

    // Sonic cluster centers plus per-track jitter on the integer bin grid.
    let centers: Vec<[u8; SONIC_DIM]> = (0..n_c)
        .map(|_| {
            let mut c = [0u8; SONIC_DIM];
            for v in &mut c {
                *v = rng.gen_range(0..=9);
            }
            c
        })
        .collect();
    let mut sonic_rows: Vec<[u8; SONIC_DIM]> = Vec::with_capacity(n_t);
    let mut genre_rows: Vec<[u8; GENRE_DIM]> = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let c = cluster_of[t];
        let mut row = centers[c];
        for v in &mut row {
            let u = rng.gen_range(0.0..1.0);
            let delta: i8 = if u < 0.2 {
                -1
            } else if u < 0.4 {
                1
            } else {
                0
            };
            *v = (*v as i8 + delta).clamp(0, 9) as u8;
        }
        sonic_rows.push(row);
        let mut g = [0u8; GENRE_DIM];
        g[c % GENRE_DIM] = 1;
        genre_rows.push(g);
    }

    let mut builder = GraphBuilder::new();
    for p in 0..n_p {
        for (pos, &t) in members[p].iter().enumerate() {
            builder
                .add(
                    &format!("p{p}"),
                    &format!("t{t}"),
                    &format!("a{}", t % spec.artists),
                    pos as u32,
                )
                .map_err(Error::Invalid)?;
        }
    }
    let graph = builder.finish().map_err(Error::Invalid)?;

    // Reorder feature rows from generation index to dense id.
    let mut sonic = Vec::with_capacity(n_t);
    let mut genre = Vec::with_capacity(n_t);
    for t in graph.track_ids() {
        let name = graph.track_name(t);
        let gen: usize = name[1..]
            .parse()
            .expect("generated track names are t<index>");
        sonic.push(sonic_rows[gen]);
        genre.push(genre_rows[gen]);
    }
    let features = TrackFeatureTable::from_rows(sonic, genre)?;

    Ok(SynthData { graph, features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::graph::TrackId;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            playlists: 40,
            tracks: 200,
            artists: 40,
            skew: 0.0,
            clusters: 5,
            min_len: 10,
            max_len: 20,
            cluster_bias: 0.8,
        }
    }

    fn appearance_counts(g: &InteractionGraph) -> Vec<usize> {
        (0..g.n_tracks())
            .map(|t| g.track_playlists(TrackId(t as u32)).len())
            .collect()
    }

    #[test]
    fn every_entity_appears_and_counts_match_spec() {
        let spec = small_spec();
        let data = generate_synthetic(&spec, 3).unwrap();
        assert_eq!(data.graph.n_playlists(), spec.playlists);
        assert_eq!(data.graph.n_tracks(), spec.tracks);
        assert_eq!(data.graph.n_artists(), spec.artists);
        assert_eq!(data.features.n_tracks(), spec.tracks);
        assert!(appearance_counts(&data.graph).iter().all(|&c| c >= 1));
    }

    #[test]
    fn zero_skew_counts_are_uniform_within_multinomial_bounds() {
        let spec = small_spec();
        let data = generate_synthetic(&spec, 11).unwrap();
        let counts = appearance_counts(&data.graph);
        let total: usize = counts.iter().sum();
        let n = counts.len() as f64;
        let mean = total as f64 / n;
        // Each count is one coverage deal plus ~Binomial(extra, 1/T) fills.
        let extra = total as f64 - n;
        let sigma = (extra * (1.0 / n) * (1.0 - 1.0 / n)).sqrt();
        let mut over_3s = 0usize;
        for &c in &counts {
            let z = ((c as f64 - mean) / sigma).abs();
            assert!(z < 4.5, "count {c} deviates {z:.2} sigma from mean {mean:.2}");
            if z > 3.0 {
                over_3s += 1;
            }
        }
        // At most ~0.3% of tracks should sit outside 3 sigma; allow 2%.
        assert!(over_3s as f64 <= 0.02 * n, "{over_3s} tracks outside 3 sigma");
    }

    #[test]
    fn positive_skew_concentrates_mass_in_the_top_decile() {
        let mut spec = small_spec();
        spec.skew = 1.2;
        let data = generate_synthetic(&spec, 5).unwrap();
        let mut counts = appearance_counts(&data.graph);
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let total: usize = counts.iter().sum();
        let decile = counts.len() / 10;
        let top: usize = counts[..decile].iter().sum();
        let share = top as f64 / total as f64;
        // Uniform selection would put ~10% of mass in the top decile; the
        // analytic share for exponent 1.2 is ~0.5 before coverage deals.
        assert!(share > 0.25, "top-decile share {share:.3} not skewed");
    }

    #[test]
    fn clusters_are_sonically_coherent() {
        let spec = small_spec();
        let data = generate_synthetic(&spec, 7).unwrap();
        let sonic = data.features.scaled_sonic();
        let cluster = |t: usize| {
            let name = data.graph.track_name(TrackId(t as u32));
            name[1..].parse::<usize>().unwrap() % spec.clusters
        };
        let cos = |a: usize, b: usize| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for j in 0..SONIC_DIM {
                dot += sonic[[a, j]] * sonic[[b, j]];
                na += sonic[[a, j]] * sonic[[a, j]];
                nb += sonic[[b, j]] * sonic[[b, j]];
            }
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na.sqrt() * nb.sqrt())
            }
        };
        let (mut within, mut wn, mut cross, mut cn) = (0.0, 0usize, 0.0, 0usize);
        for a in 0..spec.tracks {
            for b in (a + 1)..spec.tracks {
                let c = cos(a, b);
                if cluster(a) == cluster(b) {
                    within += c;
                    wn += 1;
                } else {
                    cross += c;
                    cn += 1;
                }
            }
        }
        let within = within / wn as f64;
        let cross = cross / cn as f64;
        assert!(
            within > cross,
            "within-cluster cosine {within:.3} not above cross-cluster {cross:.3}"
        );
    }

    #[test]
    fn same_seed_reproduces_identical_bytes() {
        let spec = SynthSpec::default();
        let a = generate_synthetic(&spec, 42).unwrap();
        let b = generate_synthetic(&spec, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (ia, fa) = (dir.path().join("ia.csv"), dir.path().join("fa.csv"));
        let (ib, fb) = (dir.path().join("ib.csv"), dir.path().join("fb.csv"));
        a.graph.write_interactions(&ia).unwrap();
        a.features.write_features(&fa, &a.graph).unwrap();
        b.graph.write_interactions(&ib).unwrap();
        b.features.write_features(&fb, &b.graph).unwrap();
        assert_eq!(std::fs::read(&ia).unwrap(), std::fs::read(&ib).unwrap());
        assert_eq!(std::fs::read(&fa).unwrap(), std::fs::read(&fb).unwrap());
        let c = generate_synthetic(&spec, 43).unwrap();
        assert_ne!(
            {
                let p = dir.path().join("ic.csv");
                c.graph.write_interactions(&p).unwrap();
                std::fs::read(&p).unwrap()
            },
            std::fs::read(&ia).unwrap()
        );
    }

    #[test]
    fn fewer_tracks_than_clusters_is_rejected() {
        let spec = SynthSpec {
            tracks: 4,
            clusters: 6,
            artists: 2,
            min_len: 2,
            max_len: 3,
            ..SynthSpec::default()
        };
        let err = generate_synthetic(&spec, 0).unwrap_err();
        assert!(err.to_string().contains("smaller than cluster count"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
}

//! Built-in sanity battery. Each check re-derives its expected answer with an
//! independent formulation (brute-force enumeration, closed-form constants,
//! finite differences) rather than calling the code path under test twice.

use ndarray::{Array1, Array2};
use rand::Rng;

use longtail::data::split::{split_peek_holdout, split_playlists, SplitLabel};
use longtail::data::synth::{generate_synthetic, SynthSpec};
use longtail::encoder::{self, finite_difference_check, EncoderConfig};
use longtail::evaluator::{evaluate_all, wilcoxon_signed_rank};
use longtail::experiments::pca_2d;
use longtail::objective::{
    fairness_loss_and_grad, ndcg_at_k, pairwise_cosine, plan_fairness, FairnessConfig,
    PairWeighting,
};
use longtail::popularity::assign_bins;
use longtail::recommender::{RecItem, PlaylistRecs, RecommendationRun};
use longtail::rng::{stream, tag};
use longtail::sampler::{compute_neighbor_table, TrainGraph, WalkConfig};
use longtail::{Error, Result};

const SELFTEST_SEED: u64 = 0xded5;

pub fn run_all() -> Result<()> {
    let checks: [(&str, fn() -> Result<()>); 6] = [
        ("encoder_gradient", check_encoder_gradient),
        ("fairness_oracle", check_fairness_oracle),
        ("binning_oracle", check_binning_oracle),
        ("metric_identities", check_metric_identities),
        ("wilcoxon_exact", check_wilcoxon_exact),
        ("pca_planted_plane", check_pca_planted_plane),
    ];
    let mut failures = 0usize;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        return Err(Error::Numeric(format!("{failures} selftest check(s) failed")));
    }
    println!("selftest passed");
    Ok(())
}

fn fail(name: &str, detail: String) -> Error {
    Error::Numeric(format!("{name}: {detail}"))
}

/// Central-difference check of the encoder backward pass under a fixed linear
/// readout of the embeddings. The readout weights are constants, so the whole
/// gradient signal flows through the two aggregation layers.
fn check_encoder_gradient() -> Result<()> {
    let spec = SynthSpec {
        playlists: 10,
        tracks: 24,
        artists: 6,
        skew: 0.8,
        clusters: 3,
        min_len: 4,
        max_len: 8,
        cluster_bias: 0.8,
    };
    let data = generate_synthetic(&spec, SELFTEST_SEED)?;
    let mut splits = split_playlists(&data.graph, (0.8, 0.1, 0.1), SELFTEST_SEED)?;
    split_peek_holdout(&data.graph, &mut splits, 2)?;
    let view = TrainGraph::new(&data.graph, &splits);
    let walks = WalkConfig { walks: 40, walk_len: 2, neighbors: 5 };
    let table = compute_neighbor_table(&view, &walks, SELFTEST_SEED)?;
    let x = data.features.input_matrix(false, false)?;

    let cfg = EncoderConfig { d_in: x.ncols(), hidden: 6, d_out: 4 };
    let params = encoder::init_params(&cfg, SELFTEST_SEED)?;
    let tracks: Vec<_> = (0..data.graph.n_tracks() as u32)
        .map(longtail::data::graph::TrackId)
        .collect();

    let mut rng = stream(SELFTEST_SEED, tag::SELFTEST, 0);
    let readout =
        Array2::from_shape_fn((tracks.len(), cfg.d_out), |_| rng.gen_range(-1.0..1.0));

    let (_, cache) = encoder::forward(&params, x.view(), &table, &tracks)?;
    let grads = encoder::backward(&params, &cache, &readout)?;
    let flat = params.to_flat();
    let analytic = grads.to_flat();

    // Check a deterministic stride of coordinates across all weight blocks.
    let indices: Vec<usize> = (0..flat.len()).step_by(7).collect();
    let mut probe = params.clone();
    let report = finite_difference_check(&flat, &analytic, &indices, 1e-5, |w| {
        probe.assign_from_flat(w)?;
        let (z, cache) = encoder::forward(&probe, x.view(), &table, &tracks)?;
        let loss = (&z * &readout).sum();
        Ok((loss, cache.relu_pattern()))
    })?;
    if report.checked == 0 {
        return Err(fail("encoder_gradient", "no coordinates survived kink filtering".into()));
    }
    if report.max_rel_err >= 1e-5 {
        return Err(fail(
            "encoder_gradient",
            format!("max relative error {} over {} coords", report.max_rel_err, report.checked),
        ));
    }
    Ok(())
}

fn softplus_ref(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Brute-force enumeration of the rank cross-entropy over a pool small enough
/// that the candidate union is every non-anchor index.
fn check_fairness_oracle() -> Result<()> {
    let n = 8;
    let d = 5;
    let mut rng = stream(SELFTEST_SEED, tag::SELFTEST, 1);
    let feats = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    let embeds = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    let s_g = pairwise_cosine(feats.view());
    let s_z = pairwise_cosine(embeds.view());

    let cfg = FairnessConfig {
        alpha: 1.0,
        k_fair: n,
        boost: false,
        rescale_lo: 1.0,
        rescale_hi: 10.0,
        weighting: PairWeighting::Uniform,
    };
    let anchors: Vec<usize> = (0..n).collect();
    let plan = plan_fairness(&cfg, &s_g, &s_z, None, &anchors)?;
    let (loss, _) = fairness_loss_and_grad(&plan, &s_z.values)?;

    let mut oracle = 0.0;
    for i in 0..n {
        for u in 0..n {
            for v in 0..n {
                if u == i || v == i || u == v {
                    continue;
                }
                let p_g = if s_g.values[[i, u]] > s_g.values[[i, v]] { 1.0 } else { 0.0 };
                let x = s_z.values[[i, u]] - s_z.values[[i, v]];
                oracle += p_g * softplus_ref(-x) + (1.0 - p_g) * softplus_ref(x);
            }
        }
    }
    if (loss - oracle).abs() > 1e-9 {
        return Err(fail(
            "fairness_oracle",
            format!("loss {loss} differs from enumeration {oracle}"),
        ));
    }
    Ok(())
}

/// Log-decile binning against the closed-form definition, plus monotonicity.
fn check_binning_oracle() -> Result<()> {
    let mut rng = stream(SELFTEST_SEED, tag::SELFTEST, 2);
    for case in 0..200 {
        let len = rng.gen_range(2..40);
        let mut counts: Vec<u32> = (0..len).map(|_| rng.gen_range(0..10_000)).collect();
        if counts.iter().all(|&c| c == 0) {
            counts[0] = rng.gen_range(1..10_000);
        }
        let index = assign_bins(&counts)?;
        let max = *counts.iter().max().unwrap() as f64;
        for (t, &c) in counts.iter().enumerate() {
            let expect = if c <= 1 || max <= 1.0 {
                0u8
            } else {
                let raw = (10.0 * (c as f64).log10() / max.log10()).floor();
                raw.clamp(0.0, 9.0) as u8
            };
            let got = index.bins()[t];
            if got != expect {
                return Err(fail(
                    "binning_oracle",
                    format!("case {case}: count {c} of max {max} binned {got}, expected {expect}"),
                ));
            }
        }
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by_key(|&t| counts[t]);
        for w in order.windows(2) {
            if index.bins()[w[0]] > index.bins()[w[1]] {
                return Err(fail("binning_oracle", format!("case {case}: bins not monotone")));
            }
        }
    }
    Ok(())
}

/// A run that returns exactly each playlist's holdout must score perfectly,
/// and the single-hit-at-rank-2 NDCG closed form must hold.
fn check_metric_identities() -> Result<()> {
    let single_hit = ndcg_at_k(&[0.0, 1.0], &[1.0], 10);
    let closed_form = 1.0 / 3f64.log2();
    if (single_hit - closed_form).abs() > 1e-15 {
        return Err(fail(
            "metric_identities",
            format!("single-hit ndcg {single_hit} != 1/log2(3) = {closed_form}"),
        ));
    }

    let spec = SynthSpec {
        playlists: 12,
        tracks: 36,
        artists: 8,
        skew: 0.8,
        clusters: 3,
        min_len: 6,
        max_len: 10,
        cluster_bias: 0.8,
    };
    let data = generate_synthetic(&spec, SELFTEST_SEED)?;
    let mut splits = split_playlists(&data.graph, (0.6, 0.2, 0.2), SELFTEST_SEED)?;
    split_peek_holdout(&data.graph, &mut splits, 2)?;
    let counts = longtail::popularity::count_appearances(&data.graph, &splits);
    let long_tail = assign_bins(&counts)?.long_tail_set(0.2)?;

    let lists: Vec<PlaylistRecs> = splits
        .eval_playlists(SplitLabel::Test)
        .iter()
        .map(|&p| {
            let holdout = &splits.eval_sets(p).unwrap().holdout;
            let items = holdout
                .iter()
                .enumerate()
                .map(|(r, &t)| RecItem { track: t, score: -(r as f64) })
                .collect();
            PlaylistRecs { playlist: p, items }
        })
        .collect();
    let k = lists.iter().map(|l| l.items.len()).max().unwrap();
    let run = RecommendationRun { method: "oracle".into(), k, lists };
    let report = evaluate_all(
        &run,
        &data.graph,
        &data.features,
        &splits,
        &long_tail,
        serde_json::json!({}),
    )?;
    if report.recall != 1.0 || report.ndcg != 1.0 || report.artist_recall != 1.0 {
        return Err(fail(
            "metric_identities",
            format!(
                "holdout-echo run scored recall {} ndcg {} artist_recall {}, expected 1.0 each",
                report.recall, report.ndcg, report.artist_recall
            ),
        ));
    }
    Ok(())
}

/// n = 8 strictly positive differences: the exact two-sided p-value is the
/// probability mass at the extremes, 2/2^8. Swapping the samples must not
/// change it.
fn check_wilcoxon_exact() -> Result<()> {
    let b: Vec<f64> = (0..8).map(|i| i as f64).collect();
    let a: Vec<f64> = b.iter().map(|x| x + 1.5).collect();
    let fwd = wilcoxon_signed_rank(&a, &b)?;
    let rev = wilcoxon_signed_rank(&b, &a)?;
    if !fwd.exact {
        return Err(fail("wilcoxon_exact", "n = 8 did not take the exact branch".into()));
    }
    let expect = 2.0 / 256.0;
    if (fwd.p_value - expect).abs() > 1e-12 {
        return Err(fail(
            "wilcoxon_exact",
            format!("p {} differs from closed form {expect}", fwd.p_value),
        ));
    }
    if (fwd.p_value - rev.p_value).abs() > 1e-12 || fwd.statistic != rev.statistic {
        return Err(fail("wilcoxon_exact", "statistic is not symmetric under sample swap".into()));
    }
    Ok(())
}

/// Points planted exactly on a 2-plane in 6 dimensions must be reconstructed
/// by the two principal axes to round-off.
fn check_pca_planted_plane() -> Result<()> {
    let d = 6;
    let n = 40;
    let mut rng = stream(SELFTEST_SEED, tag::SELFTEST, 3);
    let u = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
    let mut v = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0));
    let uu = u.dot(&u);
    v = &v - &(&u * (u.dot(&v) / uu));
    let mut points = Array2::zeros((n, d));
    for i in 0..n {
        let a = rng.gen_range(-2.0..2.0);
        let b = rng.gen_range(-2.0..2.0);
        let row = &u * a + &v * b;
        points.row_mut(i).assign(&(&row + 0.5));
    }

    let pca = pca_2d(points.view())?;
    let mean = points.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &points - &mean.broadcast((n, d)).unwrap();
    let recon = pca.coords.dot(&pca.axes);
    let residual = (&centered - &recon).iter().fold(0f64, |m, &r| m.max(r.abs()));
    if residual >= 1e-8 {
        return Err(fail("pca_planted_plane", format!("max residual {residual}")));
    }

    // All variance lives in the plane, so the two explained values must sum
    // to the total variance.
    let total: f64 = centered.iter().map(|&c| c * c).sum::<f64>() / (n as f64 - 1.0);
    let explained = pca.explained[0] + pca.explained[1];
    if (explained - total).abs() > 1e-9 * total.max(1.0) {
        return Err(fail(
            "pca_planted_plane",
            format!("explained {explained} vs total variance {total}"),
        ));
    }
    if pca.rank_deficient {
        return Err(fail("pca_planted_plane", "full-rank plane flagged rank deficient".into()));
    }
    Ok(())
}

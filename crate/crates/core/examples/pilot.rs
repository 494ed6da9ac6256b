//! Pilot run over the standard benchmark: trains the embedding net on the
//! training query sequences, runs the BoW baseline, and prints the
//! recall/failure/localization tables the acceptance criteria are built on.
//! Dev tool; expect several minutes of CPU.
//!
//! Usage: pilot [epochs] [lr] [n_styles] [w1-w2-w3-w4] [embed_dim] [loc]

use groundtex::benchmark::{benchmark_k, build_benchmark, BenchmarkConfig};
use groundtex::bow::{
    bow_embed, bow_retrieve, build_vocabulary, detect_and_describe, BowHistogram, DetectorConfig,
    VocabConfig,
};
use groundtex::embedding::EmbeddingRecord;
use groundtex::embednet::{
    embed, mean_abs_residual, train_siamese, validation_split, EmbedNetConfig, EmbeddingNet,
    ImageStore, TrainConfig,
};
use groundtex::evalloc::{
    compute_recall_report, localization_campaign, CampaignConfig, RansacConfig, RetrievalSource,
};
use groundtex::index::{brute_force_topk, RetrievalResult};
use groundtex::pairs::{build_training_pairs, enumerate_overlaps, PairConfig};
use groundtex::synth::MapSet;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn embed_records(
    net: &EmbeddingNet<f32>,
    images: &[groundtex::synth::GroundImage],
) -> Vec<EmbeddingRecord> {
    images
        .iter()
        .map(|img| EmbeddingRecord::new(img.id.clone(), embed(net, &img.pixels).unwrap()).unwrap())
        .collect()
}

fn retrieve_all(
    refs: &[EmbeddingRecord],
    queries: &[EmbeddingRecord],
    k: usize,
) -> Vec<RetrievalResult> {
    queries
        .iter()
        .map(|q| brute_force_topk(refs, &q.image_id, &q.vector, k).unwrap())
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let n_styles: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(6);
    let widths: Vec<usize> = args
        .get(4)
        .map(|s| s.split('-').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![12, 24, 48, 48]);
    let embed_dim: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
    let do_localization = args.iter().any(|s| s == "loc");

    let mut bench_cfg = BenchmarkConfig::default();
    bench_cfg.styles.truncate(n_styles);
    println!("building benchmark ({n_styles} styles)...");
    let t0 = Instant::now();
    let sets = build_benchmark(&bench_cfg).unwrap();
    println!("  {:.1} s", t0.elapsed().as_secs_f64());

    // Pairs from the training query sequences.
    let mut all_pairs = Vec::new();
    for set in &sets {
        let pairs = build_training_pairs(
            &set.train,
            &PairConfig {
                augment_factor: 2,
                seed: 1000 + set.style as u64,
                ..PairConfig::default()
            },
        )
        .unwrap();
        println!("  {}: {} pairs", set.style.name(), pairs.len());
        all_pairs.extend(pairs);
    }
    let mut rng = StdRng::seed_from_u64(99);
    for i in (1..all_pairs.len()).rev() {
        let j = rng.gen_range(0..=i);
        all_pairs.swap(i, j);
    }
    println!("pairs total: {}", all_pairs.len());

    let train_maps: Vec<&MapSet> = sets.iter().map(|s| &s.train).collect();
    let store = ImageStore::from_mapsets(train_maps.iter().copied());

    let net_cfg = EmbedNetConfig {
        conv_widths: widths,
        embed_dim,
        ..EmbedNetConfig::default()
    };
    let train_cfg = TrainConfig {
        learning_rate: lr,
        epochs,
        seed: 5,
        ..TrainConfig::default()
    };
    println!(
        "training {:?} embed {embed_dim} for {epochs} epochs at lr {lr}...",
        net_cfg.conv_widths
    );
    let t0 = Instant::now();
    let report = train_siamese::<f32>(&all_pairs, &store, &net_cfg, &train_cfg).unwrap();
    println!(
        "  {:.1} s; train loss {:?}",
        t0.elapsed().as_secs_f64(),
        report
            .train_loss
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    println!(
        "  val loss {:?} (best epoch {})",
        report
            .val_loss
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        report.best_epoch
    );

    let (_, val_idx) = validation_split(&all_pairs, train_cfg.seed, train_cfg.validation_fraction);
    let val_pairs: Vec<_> = val_idx.iter().map(|&i| all_pairs[i].clone()).collect();
    let residual = mean_abs_residual(&report.net, &val_pairs, &store).unwrap();
    println!(
        "  held-out mean |d-(1-o)| = {residual:.4} over {} pairs",
        val_pairs.len()
    );
    let (mut dpos, mut npos, mut dneg, mut nneg) = (0.0, 0, 0.0, 0);
    for p in &val_pairs {
        let q = store.get(&p.query_id).unwrap();
        let r = store.get(&p.ref_id).unwrap();
        let d = groundtex::embednet::pair_distance(
            &embed(&report.net, q).unwrap(),
            &embed(&report.net, r).unwrap(),
        )
        .unwrap();
        if p.overlap > 0.0 {
            dpos += d as f64;
            npos += 1;
        } else {
            dneg += d as f64;
            nneg += 1;
        }
    }
    println!(
        "  val mean d: positives {:.3} ({npos}), negatives {:.3} ({nneg})",
        dpos / npos.max(1) as f64,
        dneg / nneg.max(1) as f64
    );

    let untrained: EmbeddingNet<f32> = EmbeddingNet::init(&net_cfg, train_cfg.seed).unwrap();

    let mut agg: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    let mut agg80: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    let mut agg_fail: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut agg_bands: std::collections::BTreeMap<&str, (usize, usize, usize, usize)> =
        Default::default();
    let mut low_band_wins = 0usize;

    for set in &sets {
        let ms = &set.eval;
        let k = benchmark_k(ms.references.len());
        let labels = enumerate_overlaps(ms, 0.0).unwrap();

        let mut rows: Vec<(&str, Vec<RetrievalResult>)> = Vec::new();
        for (name, net) in [("dml", &report.net), ("untrained", &untrained)] {
            let refs = embed_records(net, &ms.references);
            let queries = embed_records(net, &ms.queries);
            rows.push((name, retrieve_all(&refs, &queries, k)));
        }

        let vocab = build_vocabulary(
            ms,
            &VocabConfig {
                vocab_size: 1024,
                features_per_image: 100,
                seed: 7,
                ..VocabConfig::default()
            },
        )
        .unwrap();
        let detector = DetectorConfig::default();
        let ref_hists: Vec<BowHistogram> = ms
            .references
            .iter()
            .map(|img| {
                let f = detect_and_describe(&img.pixels, 100, &detector);
                bow_embed(&img.id, &f, &vocab).unwrap()
            })
            .collect();
        let bow_results: Vec<RetrievalResult> = ms
            .queries
            .iter()
            .map(|img| {
                let f = detect_and_describe(&img.pixels, 100, &detector);
                let h = bow_embed(&img.id, &f, &vocab).unwrap();
                bow_retrieve(&h, &ref_hists, k).unwrap()
            })
            .collect();
        rows.push(("bow", bow_results));

        let mut rng = StdRng::seed_from_u64(123);
        let random_results: Vec<RetrievalResult> = ms
            .queries
            .iter()
            .map(|q| {
                let mut ids: Vec<usize> = (0..ms.references.len()).collect();
                for i in (1..ids.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    ids.swap(i, j);
                }
                RetrievalResult {
                    query_id: q.id.clone(),
                    ranked: ids
                        .iter()
                        .take(k)
                        .map(|&i| (ms.references[i].id.clone(), 0.0))
                        .collect(),
                    k,
                }
            })
            .collect();
        rows.push(("random", random_results));

        print!("{:8} k={k:3}", set.style.name());
        let mut low_dml = 0;
        let mut low_bow = 0;
        for (name, results) in &rows {
            let rep = compute_recall_report(results, &labels, k).unwrap();
            let r0 = rep.entries[0].recall;
            let r80 = rep.entries[4].recall;
            print!("  {name}: R0 {r0:.3} R80 {r80:.2} f{}", rep.failure_count);
            agg.entry(name).or_default().push(r0);
            agg80.entry(name).or_default().push(r80);
            *agg_fail.entry(name).or_default() += rep.failure_count;
            let e = agg_bands.entry(name).or_default();
            e.0 += rep.band_low.correct;
            e.1 += rep.band_low.available;
            e.2 += rep.band_high.correct;
            e.3 += rep.band_high.available;
            if *name == "dml" {
                low_dml = rep.band_low.correct;
            }
            if *name == "bow" {
                low_bow = rep.band_low.correct;
            }
        }
        if low_dml > low_bow {
            low_band_wins += 1;
        }
        println!("  low {low_dml} vs {low_bow}");

        if do_localization {
            let k_cfg = CampaignConfig {
                k,
                max_features: 100,
                ransac: RansacConfig {
                    iterations: 1000,
                    ..RansacConfig::default()
                },
                ..CampaignConfig::default()
            };
            let none = localization_campaign(ms, RetrievalSource::None, None, &k_cfg).unwrap();
            for (name, results) in rows.iter().filter(|(n, _)| *n == "dml" || *n == "bow") {
                let subset =
                    localization_campaign(ms, RetrievalSource::TopK, Some(results), &k_cfg)
                        .unwrap();
                println!(
                    "    loc {name}: success {:.3} (match {:.2}s) vs none {:.3} ({:.2}s)",
                    subset.success_rate, subset.matching_seconds, none.success_rate, none.matching_seconds,
                );
            }
        }
    }

    println!("\naggregate over styles:");
    for (name, vals) in &agg {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mean80 = agg80[name].iter().sum::<f64>() / agg80[name].len() as f64;
        println!(
            "  {name:10} R0 {mean:.3}  R80 {mean80:.3}  failures {}",
            agg_fail[name]
        );
    }
    for (name, (lc, la, hc, ha)) in &agg_bands {
        println!("  bands {name:10} low {lc}/{la}  high {hc}/{ha}");
    }
    println!("  dml low-band wins: {low_band_wins}/{}", sets.len());
}

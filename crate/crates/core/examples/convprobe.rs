//! Convergence probe: train on one benchmark style, report residual curves.
use groundtex::benchmark::*;
use groundtex::embednet::*;
use groundtex::pairs::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let styles: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2);

    let mut cfg = BenchmarkConfig::default();
    cfg.styles.truncate(styles);
    let sets = build_benchmark(&cfg).unwrap();
    let mut pairs = Vec::new();
    for set in &sets {
        pairs.extend(build_training_pairs(&set.train, &PairConfig {
            augment_factor: 2, seed: 1000 + set.style as u64, ..PairConfig::default()
        }).unwrap());
    }
    let mut rng = StdRng::seed_from_u64(99);
    for i in (1..pairs.len()).rev() { let j = rng.gen_range(0..=i); pairs.swap(i, j); }
    let maps: Vec<_> = sets.iter().map(|s| &s.train).collect();
    let store = ImageStore::from_mapsets(maps.into_iter());
    let net_cfg = EmbedNetConfig { conv_widths: vec![12,24,48,48], ..EmbedNetConfig::default() };
    let train_cfg = TrainConfig { learning_rate: lr, batch_size: batch, epochs, patience: 10, seed: 5, ..TrainConfig::default() };
    let t = std::time::Instant::now();
    let rep = train_siamese::<f32>(&pairs, &store, &net_cfg, &train_cfg).unwrap();
    println!("pairs {} time {:.0}s", pairs.len(), t.elapsed().as_secs_f64());
    println!("train: {:?}", rep.train_loss.iter().map(|v| (v*1e3).round()/1e3).collect::<Vec<_>>());
    println!("val:   {:?}", rep.val_loss.iter().map(|v| (v*1e3).round()/1e3).collect::<Vec<_>>());
    let (_, vi) = validation_split(&pairs, 5, 0.1);
    let vp: Vec<_> = vi.iter().map(|&i| pairs[i].clone()).collect();
    println!("held-out |resid| {:.4}", mean_abs_residual(&rep.net, &vp, &store).unwrap());
}

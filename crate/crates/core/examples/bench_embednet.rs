use groundtex::embednet::*;
use groundtex::raster::Raster;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    let cfg = EmbedNetConfig::default();
    let net: EmbeddingNet<f32> = EmbeddingNet::init(&cfg, 1).unwrap();
    println!("param count: {}", net.parameter_count());
    let mut rng = StdRng::seed_from_u64(2);
    let mk = |rng: &mut StdRng| {
        let data: Vec<u8> = (0..128 * 96).map(|_| rng.gen()).collect();
        normalize_input::<f32>(&Raster::from_vec(128, 96, data).unwrap())
    };
    let batch: Vec<PairInput<f32>> = (0..64)
        .map(|_| PairInput { query: mk(&mut rng), reference: mk(&mut rng), overlap: 0.4 })
        .collect();
    // warmup
    let _ = pair_batch_backward(&net, &batch);
    let t = Instant::now();
    let iters = 5;
    for _ in 0..iters {
        let (l, _) = pair_batch_backward(&net, &batch);
        std::hint::black_box(l);
    }
    let dt = t.elapsed().as_secs_f64() / iters as f64;
    println!("batch of 64 pairs fwd+bwd: {:.3} s  ({:.1} pairs/s)", dt, 64.0 / dt);
    println!("epoch of 2880 pairs: {:.1} s; 30 epochs: {:.1} min", 2880.0 / (64.0 / dt), 2880.0 / (64.0 / dt) * 30.0 / 60.0);
}

//! Per-style feature density probe (dev tool).
use groundtex::bow::{detect_and_describe, DetectorConfig};
use groundtex::synth::*;
use groundtex::geometry::Pose2D;

fn main() {
    let det = DetectorConfig::default();
    for style in TextureStyle::ALL {
        let canvas = generate_canvas(&CanvasConfig {
            style, extent_m: (0.8, 0.7), resolution: 600.0, seed: 7,
            ..CanvasConfig::default()
        }).unwrap();
        let mut counts = Vec::new();
        for i in 0..6 {
            let pose = Pose2D::new(0.2 + 0.08 * i as f64, 0.25 + 0.02 * i as f64, 0.3 * i as f64).unwrap();
            let patch = render_patch(&canvas, &pose, 0.2, 0.15, (128, 96)).unwrap();
            counts.push(detect_and_describe(&patch, 10_000, &det).len());
        }
        println!("{:8} std {:5.1} feats/patch {:?}", style.name(), canvas.pixels.std_dev(), counts);
    }
}

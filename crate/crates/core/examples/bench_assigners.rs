use std::time::Instant;
use rfla::prelude::*;
use rfla::analysis::{positives_per_interval, Parallelism, TrialConfig};
use rfla::baselines::{CenterSamplingAssigner, MaxIouAssigner};

fn main() {
    let pyramid = PyramidSpec::approx_fpn(800, 800).unwrap();
    let points = build_grid(&pyramid).unwrap();
    println!("points: {}", points.len());
    let anchors = generate_anchors(&pyramid, &AnchorSpec::default()).unwrap();
    println!("anchors: {}", anchors.len());
    let cfg = TrialConfig { seed: 1, n_trials: 500, ..TrialConfig::default() };

    let t = Instant::now();
    let rfla_a = RflaAssigner::new(points.clone(), HlaConfig::default());
    let h = positives_per_interval(&rfla_a, &cfg, Parallelism::Sequential).unwrap();
    println!("rfla 500 trials: {:?} (total pos {})", t.elapsed(), h.total_positives);

    let t = Instant::now();
    let center = CenterSamplingAssigner::new(points.clone(), ScaleRanges::doubling(5, 32.0).unwrap()).unwrap();
    let h = positives_per_interval(&center, &cfg, Parallelism::Sequential).unwrap();
    println!("center 500 trials: {:?} (total pos {})", t.elapsed(), h.total_positives);

    let t = Instant::now();
    let miou = MaxIouAssigner::new(anchors, MaxIouConfig::default());
    let h = positives_per_interval(&miou, &cfg, Parallelism::Sequential).unwrap();
    println!("maxiou 500 trials: {:?} (total pos {})", t.elapsed(), h.total_positives);
}

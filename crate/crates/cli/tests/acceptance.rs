//! Acceptance suite: the verification gates of this artifact, one test
//! per gate. Each runs the full check at its stated tolerance and the
//! harness prints one pass/fail line per gate.
//!
//! Heavy gates hold a global lock so wall-clock budgets are measured
//! without interference from sibling tests.

use std::fs;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfla::analysis::{positives_per_interval, Parallelism, TrialConfig, IMBALANCE_EPS};
use rfla::baselines::{
    generate_anchors, AnchorSpec, CenterSamplingAssigner, MaxIouAssigner, MaxIouConfig,
    ScaleRanges,
};
use rfla::prelude::*;
use rfla::targets::{centerness_star, LtrbTarget};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

const REL_TOL_ORACLE: f64 = 1e-9;
const REL_TOL_SCALING: f64 = 1e-9;
const ABS_TOL_EXPANSION: f64 = 1e-12;
const ABS_TOL_WORKED: f64 = 1e-12;
const ABS_TOL_CENTERNESS: f64 = 1e-9;
const MAXIOU_TINY_CEILING: f64 = 0.05;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn kld_matrix_oracle(ne: &Gaussian2D, ng: &Gaussian2D) -> f64 {
    let sigma_e = Matrix2::new(ne.var_x(), 0.0, 0.0, ne.var_y());
    let sigma_g = Matrix2::new(ng.var_x(), 0.0, 0.0, ng.var_y());
    let inv_g = sigma_g.try_inverse().expect("positive-definite");
    let trace = (inv_g * sigma_e).trace();
    let d = Vector2::new(ng.mu_x() - ne.mu_x(), ng.mu_y() - ne.mu_y());
    let quad = (d.transpose() * inv_g * d)[(0, 0)];
    let log_det = (sigma_g.determinant() / sigma_e.determinant()).ln();
    0.5 * (trace + quad + log_det - 2.0)
}

fn random_erf(rng: &mut impl Rng) -> Gaussian2D {
    let er = 0.5 + rng.gen::<f64>() * 127.5;
    Gaussian2D::isotropic(rng.gen::<f64>() * 1024.0, rng.gen::<f64>() * 1024.0, er).unwrap()
}

fn random_gt_box(rng: &mut impl Rng) -> BBox {
    BBox::new(
        rng.gen::<f64>() * 1024.0,
        rng.gen::<f64>() * 1024.0,
        1.0 + rng.gen::<f64>() * 511.0,
        1.0 + rng.gen::<f64>() * 511.0,
    )
    .unwrap()
}

#[test]
fn acceptance_01_kld_oracle_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2001);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let ne = random_erf(&mut rng);
        let ng = gt_gaussian(random_gt_box(&mut rng));
        let fast = kld(&ne, &ng);
        let oracle = kld_matrix_oracle(&ne, &ng).max(0.0);
        worst = worst.max(rel_err(fast, oracle));
    }
    let elapsed = start.elapsed();
    assert!(worst < REL_TOL_ORACLE, "worst relative error {worst:e}");
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("gate 1 kld oracle equivalence: PASS (worst rel err {worst:.3e}, {elapsed:?})");
}

#[test]
fn acceptance_02_wasserstein_properties() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);

    // Hand-expanded four-term sum.
    for _ in 0..100_000 {
        let px = rng.gen::<f64>() * 1024.0;
        let py = rng.gen::<f64>() * 1024.0;
        let er = 0.5 + rng.gen::<f64>() * 127.5;
        let gt = random_gt_box(&mut rng);
        let got = wasserstein2_sq(&Gaussian2D::isotropic(px, py, er).unwrap(), &gt_gaussian(gt));
        let expanded = (px - gt.cx()).powi(2)
            + (py - gt.cy()).powi(2)
            + (er - gt.w() / 2.0).powi(2)
            + (er - gt.h() / 2.0).powi(2);
        assert!(
            (got - expanded).abs() <= ABS_TOL_EXPANSION * expanded.max(1.0),
            "{got} vs {expanded}"
        );
    }

    // Quadratic scaling under a joint rescale.
    for _ in 0..1_000 {
        let ne = random_erf(&mut rng);
        let ng = gt_gaussian(random_gt_box(&mut rng));
        let s = 0.1 + rng.gen::<f64>() * 9.9;
        let base = wasserstein2_sq(&ne, &ng);
        let scaled = wasserstein2_sq(&ne.scale_all(s).unwrap(), &ng.scale_all(s).unwrap());
        assert!(rel_err(scaled, s * s * base) < REL_TOL_SCALING);
    }

    // Triangle inequality of the root on random triples.
    for _ in 0..10_000 {
        let a = random_erf(&mut rng);
        let b = gt_gaussian(random_gt_box(&mut rng));
        let c = gt_gaussian(random_gt_box(&mut rng));
        let dab = wasserstein2_sq(&a, &b).sqrt();
        let dbc = wasserstein2_sq(&b, &c).sqrt();
        let dac = wasserstein2_sq(&a, &c).sqrt();
        assert!(dac <= dab + dbc + 1e-9 * (1.0 + dac));
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("gate 2 wasserstein properties: PASS ({elapsed:?})");
}

#[test]
fn acceptance_03_kld_scale_invariance() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2003);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let ne = random_erf(&mut rng);
        let ng = gt_gaussian(random_gt_box(&mut rng));
        let s = 0.1 + rng.gen::<f64>() * 9.9;
        let base = kld(&ne, &ng);
        let scaled = kld(&ne.scale_all(s).unwrap(), &ng.scale_all(s).unwrap());
        worst = worst.max(rel_err(base, scaled));
    }
    assert!(worst < REL_TOL_SCALING, "worst relative error {worst:e}");
    println!("gate 3 kld scale invariance: PASS (worst rel err {worst:.3e})");
}

#[test]
fn acceptance_04_worked_values() {
    let erf = Gaussian2D::isotropic(0.0, 0.0, 8.0).unwrap();
    let gt = gt_gaussian(BBox::new(8.0, 0.0, 16.0, 16.0).unwrap());
    assert!((kld(&erf, &gt) - 0.5).abs() < ABS_TOL_WORKED);
    assert!((wasserstein2_sq(&erf, &gt) - 64.0).abs() < ABS_TOL_WORKED);
    assert!((rfd(0.5).unwrap() - 2.0 / 3.0).abs() < ABS_TOL_WORKED);
    println!("gate 4 worked values: PASS");
}

/// Literal reimplementation of the two-stage strategy for the constructed
/// instance: long-form divergence, full sorts, explicit mask merge.
fn brute_force_two_stage(
    points: &[(f64, f64, f64)],
    gts: &[(f64, f64, f64, f64)],
    k: usize,
    beta: f64,
) -> Vec<Option<(usize, u8)>> {
    let long_kld = |px: f64, py: f64, er: f64, g: &(f64, f64, f64, f64)| -> f64 {
        let (cx, cy, w, h) = *g;
        2.0 * er * er / (w * w)
            + 2.0 * er * er / (h * h)
            + 2.0 * (px - cx).powi(2) / (w * w)
            + 2.0 * (py - cy).powi(2) / (h * h)
            + (w / (2.0 * er)).ln()
            + (h / (2.0 * er)).ln()
            - 1.0
    };
    let area = |g: &(f64, f64, f64, f64)| g.2 * g.3;
    let select = |k: usize, radius_scale: f64| -> Vec<Option<usize>> {
        let mut claim: Vec<Option<usize>> = vec![None; points.len()];
        for (j, g) in gts.iter().enumerate() {
            let mut scored: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(i, &(px, py, er))| {
                    (1.0 / (1.0 + long_kld(px, py, er * radius_scale, g).max(0.0)), i)
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, i) in scored.iter().take(k) {
                claim[i] = match claim[i] {
                    None => Some(j),
                    Some(held) => {
                        if (area(g), j) < (area(&gts[held]), held) {
                            Some(j)
                        } else {
                            Some(held)
                        }
                    }
                };
            }
        }
        claim
    };

    let r1 = select(k, 1.0);
    let r2 = select(1, beta);
    // r = r1 * m + r2 * (1 - m)
    r1.iter()
        .zip(&r2)
        .map(|(stage1, stage2)| match (stage1, stage2) {
            (Some(j), _) => Some((*j, 1)),
            (None, Some(j)) => Some((*j, 2)),
            (None, None) => None,
        })
        .collect()
}

#[test]
fn acceptance_05_hla_cardinality_and_coverage() {
    let _guard = serial();
    let start = Instant::now();

    // Cardinality: a lone gt takes exactly min(k, n) positives.
    let grid: Vec<FeaturePoint> = (0..64)
        .map(|i| {
            FeaturePoint::new(
                0,
                (i % 8) as f64 * 8.0 + 4.0,
                (i / 8) as f64 * 8.0 + 4.0,
                12.0,
                i,
            )
            .unwrap()
        })
        .collect();
    let lone = [BBox::new(30.0, 26.0, 14.0, 10.0).unwrap()];
    for k in [1usize, 3, 5] {
        let cfg = HlaConfig::new(k, 0.9, MetricKind::Kld).unwrap();
        assert_eq!(hla_assign(&grid, &lone, &cfg).positive_count(0) as usize, k);
    }
    let two_points = &grid[..2];
    let cfg3 = HlaConfig::default();
    assert_eq!(hla_assign(two_points, &lone, &cfg3).positive_count(0), 2);

    // Constructed two-overlapping-gt instance: the smaller gt steals all
    // three stage-1 winners of the larger one, which then recovers
    // exactly one supplement on the coarser level. Cross-checked against
    // the literal brute-force reimplementation.
    let raw_points = [
        (100.0, 100.0, 8.0),
        (102.0, 100.0, 8.0),
        (100.0, 102.0, 8.0),
        (100.0, 100.0, 16.0),
        (300.0, 300.0, 8.0),
        (400.0, 400.0, 8.0),
    ];
    let points: Vec<FeaturePoint> = raw_points
        .iter()
        .enumerate()
        .map(|(i, &(px, py, er))| {
            FeaturePoint::new(usize::from(er > 8.0), px, py, er, i).unwrap()
        })
        .collect();
    let raw_gts = [(100.0, 100.0, 22.5, 22.5), (100.0, 100.0, 16.0, 16.0)];
    let gts: Vec<BBox> = raw_gts
        .iter()
        .map(|&(cx, cy, w, h)| BBox::new(cx, cy, w, h).unwrap())
        .collect();
    let result = hla_assign(&points, &gts, &cfg3);
    let expected = brute_force_two_stage(&raw_points, &raw_gts, 3, 0.9);
    for (i, want) in expected.iter().enumerate() {
        match (want, &result.labels()[i]) {
            (None, Label::Background) => {}
            (Some((j, s)), Label::Positive { gt, stage, .. }) => {
                assert_eq!(j, gt, "point {i}");
                assert_eq!(*s, stage.index(), "point {i}");
            }
            other => panic!("point {i}: mismatch {other:?}"),
        }
    }
    assert_eq!(result.positive_count(1), 3, "smaller gt keeps its top-k");
    assert_eq!(result.positive_count(0), 1, "larger gt recovers a supplement");
    assert!(gts.iter().enumerate().all(|(j, _)| result.positive_count(j) >= 1));

    // Randomized multi-gt instances with distinct, well-separated
    // centers and #points >= #gts + k: nobody ends up empty.
    let mut points = Vec::new();
    for (level, (stride, er)) in [(16.0, 16.0), (32.0, 32.0)].iter().enumerate() {
        let n = (512.0 / stride) as usize;
        for j in 0..n {
            for i in 0..n {
                let id = points.len();
                points.push(
                    FeaturePoint::new(
                        level,
                        (i as f64 + 0.5) * stride,
                        (j as f64 + 0.5) * stride,
                        *er,
                        id,
                    )
                    .unwrap(),
                );
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2005);
    for instance in 0..1_000 {
        let n_gts = 2 + (instance % 7);
        let mut slots: Vec<usize> = (0..64).collect();
        let gts: Vec<BBox> = (0..n_gts)
            .map(|_| {
                let pick = rng.gen_range(0..slots.len());
                let slot = slots.swap_remove(pick);
                BBox::new(
                    (slot % 8) as f64 * 64.0 + 32.0 + rng.gen::<f64>() * 24.0 - 12.0,
                    (slot / 8) as f64 * 64.0 + 32.0 + rng.gen::<f64>() * 24.0 - 12.0,
                    1.0 + rng.gen::<f64>() * 99.0,
                    1.0 + rng.gen::<f64>() * 99.0,
                )
                .unwrap()
            })
            .collect();
        assert!(points.len() >= gts.len() + 3);
        let r = hla_assign(&points, &gts, &cfg3);
        for j in 0..gts.len() {
            assert!(
                r.positive_count(j) >= 1,
                "instance {instance}: gt {j} starved ({:?})",
                gts[j]
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("gate 5 hla cardinality and coverage: PASS ({elapsed:?})");
}

#[test]
fn acceptance_06_scale_sample_imbalance_study() {
    let _guard = serial();
    let start = Instant::now();

    let pyramid = PyramidSpec::approx_fpn(800, 800).unwrap();
    let strides: Vec<u64> = pyramid.levels.iter().map(|l| l.stride).collect();
    assert_eq!(strides, vec![4, 8, 16, 32, 64]);
    let points = build_grid(&pyramid).unwrap();
    let trial = TrialConfig {
        seed: 20220926,
        n_trials: 10_000,
        scale_lo: 0.0,
        scale_hi: 64.0,
        n_intervals: 16,
        image_w: 800,
        image_h: 800,
        ..TrialConfig::default()
    };

    let rfla_assigner = RflaAssigner::new(points.clone(), HlaConfig::default());
    let center = CenterSamplingAssigner::new(points, ScaleRanges::doubling(5, 32.0).unwrap())
        .unwrap();
    let anchors = generate_anchors(&pyramid, &AnchorSpec::default()).unwrap();
    let maxiou = MaxIouAssigner::new(anchors, MaxIouConfig::default());

    let h_rfla = positives_per_interval(&rfla_assigner, &trial, Parallelism::Sequential).unwrap();
    let h_center = positives_per_interval(&center, &trial, Parallelism::Sequential).unwrap();
    let h_maxiou = positives_per_interval(&maxiou, &trial, Parallelism::Sequential).unwrap();
    let elapsed = start.elapsed();

    // (a) the threshold assigner starves everything below 8 px.
    for s in h_maxiou.intervals.iter().filter(|s| s.scale_hi <= 8.0) {
        assert!(
            s.mean_positives < MAXIOU_TINY_CEILING,
            "interval ({}, {}] mean {}",
            s.scale_lo,
            s.scale_hi,
            s.mean_positives
        );
    }
    // (b) the receptive-field assigner covers every interval.
    for s in &h_rfla.intervals {
        assert!(s.n_gts > 0);
        assert!(
            s.mean_positives >= 1.0,
            "interval ({}, {}] mean {}",
            s.scale_lo,
            s.scale_hi,
            s.mean_positives
        );
    }
    // (c) strict imbalance ordering.
    let imb = |h: &rfla::analysis::IntervalHistogram| h.summary().imbalance;
    let (i_rfla, i_center, i_maxiou) = (imb(&h_rfla), imb(&h_center), imb(&h_maxiou));
    assert!(
        i_rfla < i_center && i_center < i_maxiou,
        "imbalance ordering violated: {i_rfla} vs {i_center} vs {i_maxiou}"
    );
    assert!(i_rfla >= 1.0 && IMBALANCE_EPS > 0.0);

    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "gate 6 imbalance study: PASS (imbalance {i_rfla:.2} < {i_center:.2} < {i_maxiou:.2}, {elapsed:?})"
    );
}

fn bin_path() -> &'static str {
    env!("CARGO_BIN_EXE_rfla")
}

fn sweep_config(dir: &std::path::Path) -> std::path::PathBuf {
    let config = r#"{
  "pyramid": {
    "image_w": 256, "image_h": 256,
    "levels": [{"stride": 8, "er": 16.0}, {"stride": 16, "er": 32.0}]
  },
  "assigner": {"kind": "rfla", "k": 3, "beta": 0.9, "metric": "kld"},
  "trial": {"seed": 77, "n_trials": 200}
}"#;
    let path = dir.join("sweep.json");
    fs::write(&path, config).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin_path()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "rfla {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn acceptance_07_sweep_schema_and_reproducibility() {
    let _guard = serial();
    let tmp = tempfile::tempdir().unwrap();
    let config = sweep_config(tmp.path());
    let config = config.to_str().unwrap();

    let grids = [("beta", "0.95,0.9,0.85,0.8"), ("k", "1,2,3,4")];
    for (param, grid) in grids {
        let out_a = tmp.path().join(format!("{param}_a"));
        let out_b = tmp.path().join(format!("{param}_b"));
        for out in [&out_a, &out_b] {
            run_ok(&[
                "sweep",
                "--config",
                config,
                "--out",
                out.to_str().unwrap(),
                "--param",
                param,
                "--grid",
                grid,
            ]);
        }
        let csv_a = fs::read(out_a.join("sweep.csv")).unwrap();
        let csv_b = fs::read(out_b.join("sweep.csv")).unwrap();
        assert_eq!(csv_a, csv_b, "{param} sweep must be byte-identical");

        let text = String::from_utf8(csv_a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "param,value,mean_pos_overall,min_interval_mean,max_interval_mean,imbalance"
        );
        assert_eq!(lines.len(), 5, "header plus four rows");
        for (line, want) in lines[1..].iter().zip(grid.split(',')) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 6);
            assert_eq!(fields[0], param);
            assert_eq!(fields[1].parse::<f64>().unwrap(), want.parse::<f64>().unwrap());
            for v in &fields[2..] {
                assert!(v.parse::<f64>().unwrap().is_finite());
            }
        }
    }
    println!("gate 7 sweep schema and reproducibility: PASS");
}

#[test]
fn acceptance_08_centerness() {
    let c = 0.01;
    let cases = [
        (LtrbTarget { l: 10.0, t: 10.0, r: 10.0, b: 10.0 }, 1.001),
        (
            LtrbTarget { l: -2.0, t: 4.0, r: 10.0, b: 4.0 },
            ((0.01 / 10.0) * (4.01 / 4.0f64)).sqrt(),
        ),
        (LtrbTarget { l: 0.0, t: 0.0, r: 8.0, b: 8.0 }, 0.00125),
    ];
    for (tgt, want) in cases {
        let got = centerness_star(&tgt, c).unwrap();
        assert!(
            (got - want).abs() < ABS_TOL_CENTERNESS,
            "{tgt:?}: {got} vs {want}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2008);
    for _ in 0..100_000 {
        let tgt = LtrbTarget {
            l: rng.gen::<f64>() * 200.0 - 100.0,
            t: rng.gen::<f64>() * 200.0 - 100.0,
            r: rng.gen::<f64>() * 100.0 + 1e-6,
            b: rng.gen::<f64>() * 100.0 + 1e-6,
        };
        let v = centerness_star(&tgt, c).unwrap();
        assert!(v.is_finite() && v > 0.0, "{tgt:?} gave {v}");
    }
    println!("gate 8 centerness: PASS");
}

#[test]
fn acceptance_09_end_to_end_determinism() {
    let _guard = serial();
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{
  "pyramid": {
    "image_w": 256, "image_h": 256,
    "levels": [{"stride": 8, "er": 16.0}, {"stride": 16, "er": 32.0}]
  },
  "assigner": {"kind": "rfla"},
  "analyze_assigners": [
    {"kind": "rfla"},
    {"kind": "center", "doubling_base": 32.0},
    {"kind": "maxiou"}
  ],
  "trial": {"seed": 11, "n_trials": 400}
}"#;
    let config_path = tmp.path().join("analyze.json");
    fs::write(&config_path, config).unwrap();
    let config = config_path.to_str().unwrap();

    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&["analyze", "--config", config, "--out", out.to_str().unwrap()]);
    }
    for file in ["histogram.csv", "histogram.svg"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} must be byte-identical across reruns");
        assert!(!a.is_empty());
    }

    // Parallel and single-worker histogram aggregation agree bit-exactly.
    let pyramid = PyramidSpec::new(
        256,
        256,
        vec![
            rfla::receptive_field::PyramidLevelSpec::new(
                8,
                rfla::receptive_field::ErfSource::ExplicitRadius(16.0),
            )
            .unwrap(),
            rfla::receptive_field::PyramidLevelSpec::new(
                16,
                rfla::receptive_field::ErfSource::ExplicitRadius(32.0),
            )
            .unwrap(),
        ],
    )
    .unwrap();
    let points = build_grid(&pyramid).unwrap();
    let assigner = RflaAssigner::new(points, HlaConfig::default());
    let trial = TrialConfig {
        seed: 11,
        n_trials: 400,
        image_w: 256,
        image_h: 256,
        gts_per_trial: 2,
        ..TrialConfig::default()
    };
    let serial_run = positives_per_interval(&assigner, &trial, Parallelism::Sequential).unwrap();
    let parallel_run = positives_per_interval(&assigner, &trial, Parallelism::Rayon).unwrap();
    assert_eq!(serial_run, parallel_run);

    println!("gate 9 end-to-end determinism: PASS");
}

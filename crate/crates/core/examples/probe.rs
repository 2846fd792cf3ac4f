use std::time::Instant;

use updens_core::benchmark::*;
use updens_core::estimators::{EstimatorConfig, EstimatorKind};
use updens_core::rng::RngStream;
use updens_core::surrogate::LmConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(80);
    let starts: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_240_001);

    let config = ExperimentConfig {
        repetitions: 10,
        reference_size: 100_000,
        cache_dir: Some("/tmp/refcache".into()),
        estimator: EstimatorConfig {
            lm: LmConfig {
                max_iterations: iters,
                starts,
                ..Default::default()
            },
            ..Default::default()
        },
        ..Default::default()
    };

    let total = Instant::now();

    let t = Instant::now();
    let m4 = run_experiment(
        TestFunctionId::M4,
        0.1,
        &EstimatorKind::ALL,
        &config,
        seed,
    )
    .unwrap();
    println!("m4 sigma=0.1 all estimators: {:?}", t.elapsed());
    for c in &m4.cells {
        println!("  {}: median {:.3} iqr {:.3}  values {:?}", c.estimator, c.median_l1, c.iqr_l1,
            c.l1_values.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
    }

    let t = Instant::now();
    let m4_high = run_experiment(TestFunctionId::M4, 0.5, &[EstimatorKind::Est2], &config, seed).unwrap();
    println!("m4 sigma=0.5 est2: {:?} median {:.3}", t.elapsed(), m4_high.cells[0].median_l1);

    let t = Instant::now();
    let m1_low = run_experiment(TestFunctionId::M1, 0.1, &[EstimatorKind::Est2], &config, seed).unwrap();
    println!("m1 sigma=0.1 est2: {:?} median {:.3}", t.elapsed(), m1_low.cells[0].median_l1);

    let t = Instant::now();
    let m1_high = run_experiment(TestFunctionId::M1, 0.5, &[EstimatorKind::Est2], &config, seed).unwrap();
    println!("m1 sigma=0.5 est2: {:?} median {:.3}", t.elapsed(), m1_high.cells[0].median_l1);

    println!("\nTOTAL: {:?}", total.elapsed());
    let est4 = m4.cell(TestFunctionId::M4, 0.1, EstimatorKind::Est4).unwrap();
    let est3 = m4.cell(TestFunctionId::M4, 0.1, EstimatorKind::Est3).unwrap();
    let est2_m4 = m4.cell(TestFunctionId::M4, 0.1, EstimatorKind::Est2).unwrap();
    println!("criterion: est4 {:.3} in [0.078, 0.378]? {}", est4.median_l1, (est4.median_l1 - 0.228).abs() <= 0.15);
    println!("criterion: est3 {:.3} > est4 {:.3}? {}", est3.median_l1, est4.median_l1, est3.median_l1 > est4.median_l1);
    println!("criterion: m1 est2 sigma 0.5 {:.3} in [0.488, 0.888]? {}", m1_high.cells[0].median_l1, (m1_high.cells[0].median_l1 - 0.688).abs() <= 0.20);
    println!("criterion: m1 est2 monotone {:.3} < {:.3}? {}", m1_low.cells[0].median_l1, m1_high.cells[0].median_l1, m1_low.cells[0].median_l1 < m1_high.cells[0].median_l1);
    println!("trend m4 est2: {:.3} < {:.3}? {}", est2_m4.median_l1, m4_high.cells[0].median_l1, est2_m4.median_l1 < m4_high.cells[0].median_l1);
}

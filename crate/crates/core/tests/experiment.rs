use sketchknn::experiment::{run_cell, run_delta_sweep, run_experiment, ExperimentConfig, Method, Split, SyntheticChoice};
use sketchknn::data::{gen_planted_linear, SyntheticSpec};
use sketchknn::{PredictOptions, SketchKind};

fn planted(n: usize, p: usize, q: usize) -> ExperimentConfig {
    ExperimentConfig {
        synthetic: Some(SyntheticChoice::Planted),
        n,
        p,
        q,
        ..ExperimentConfig::default()
    }
}

#[test]
fn sketched_fit_is_faster_than_exact() {
    // 8192 training rows after the default 20% test split
    let ds = gen_planted_linear(&SyntheticSpec::planted(10_240, 256, 8, 0.5, 42)).unwrap().dataset;
    let split = Split::new(&ds, 0.2, 42).unwrap();
    assert_eq!(split.x_train.rows(), 8192);
    let best = |method, m| {
        (0..3)
            .map(|_| run_cell("t", &split, method, m, 1, PredictOptions::default()).unwrap().metrics.fit_seconds)
            .fold(f64::INFINITY, f64::min)
    };
    let exact = best(Method::Exact, None);
    for kind in [SketchKind::Gaussian, SketchKind::WalshHadamard] {
        let t = best(Method::Sketch(kind), Some(256));
        assert!(t < exact, "{kind:?}: {t:.3}s vs exact {exact:.3}s");
    }
}

#[test]
fn identical_configs_give_identical_metrics() {
    let cfg = ExperimentConfig {
        m_grid: vec![32, 64],
        seeds: vec![3, 4],
        k: 4,
        ..planted(600, 12, 4)
    };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.records.len(), 2 + 3 * 2 * 2);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.metrics.hamming_loss, x.metrics.example_f1), (y.metrics.hamming_loss, y.metrics.example_f1));
        assert_eq!((&x.method, x.m, x.seed), (&y.method, y.m, y.seed));
    }
}

#[test]
fn parallel_cells_match_sequential_metrics() {
    let cfg = ExperimentConfig {
        m_grid: vec![32],
        seeds: vec![1, 2],
        ..planted(500, 8, 3)
    };
    let seq = run_experiment(&cfg).unwrap();
    let par = run_experiment(&ExperimentConfig {
        parallel_cells: true,
        ..cfg
    })
    .unwrap();
    for (x, y) in seq.records.iter().zip(&par.records) {
        assert_eq!(x.metrics.hamming_loss, y.metrics.hamming_loss);
        assert!(y.warnings.iter().any(|w| w.contains("not comparable")));
    }
}

#[test]
fn delta_medians_fall_along_the_grid() {
    let cfg = ExperimentConfig {
        method: vec![Method::Sketch(SketchKind::Rademacher)],
        m_grid: vec![64, 128, 256, 512],
        seeds: (0..9).collect(),
        ..planted(1024, 32, 4)
    };
    let sweep = run_delta_sweep(&cfg).unwrap();
    let medians: Vec<f64> = sweep.summary.iter().map(|s| s.median_delta.unwrap()).collect();
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    assert!(sweep.reports.iter().all(|r| r.f_star == sweep.f_star));
}

#[test]
fn zero_residual_data_is_flagged_not_failed() {
    // the label equals feature 0, so the exact fit has zero residual
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.txt");
    let mut text = String::from("64 2 1\n");
    for i in 0..64 {
        let on = i % 2;
        if on == 1 {
            text.push_str(&format!("0 0:1 1:{i}\n"));
        } else {
            text.push_str(&format!(" 1:{i}\n"));
        }
    }
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig {
        data: Some(path),
        method: vec![Method::Sketch(SketchKind::WalshHadamard)],
        m_grid: vec![8],
        ..ExperimentConfig::default()
    };
    let sweep = run_delta_sweep(&cfg).unwrap();
    assert!(sweep.zero_residual);
    assert!(sweep.failures.is_empty());
    assert_eq!(sweep.reports[0].delta_emp, None);
    assert_eq!(sweep.within, vec![None]);
}

//! End-to-end behaviour of the level, power and census drivers.

use stnmmd::QuantileMethod;
use stnmmd_sim::data::Family;
use stnmmd_sim::harness::{
    binomial_ci, empirical_level, empirical_power, simulate, t_selection_census,
    ExperimentConfig, PipelineEvaluator, RunOptions, Truncation,
};
use stnmmd_sim::mnist::MnistStore;
use stnmmd_sim::output::write_table_csv;

fn jobs(n: usize) -> RunOptions<'static> {
    RunOptions {
        jobs: Some(n),
        mnist: None,
    }
}

#[test]
fn tables_do_not_depend_on_worker_count() {
    let mut cfg = ExperimentConfig::new(2024, 24, 40, 3);
    cfg.n_total = vec![20, 40];
    cfg.truncation = vec![Truncation::Fixed(1), Truncation::Auto];
    cfg.methods = vec![QuantileMethod::Chi2, QuantileMethod::Practical];
    let eval = PipelineEvaluator::new(&cfg).unwrap();
    let one = simulate(&cfg, cfg.level_cells(), &eval, jobs(1)).unwrap();
    let four = simulate(&cfg, cfg.level_cells(), &eval, jobs(4)).unwrap();
    assert_eq!(format!("{:?}", one.records), format!("{:?}", four.records));

    let csv = |sim: &stnmmd_sim::harness::Simulation| {
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &cfg, &sim.table(false)).unwrap();
        buf
    };
    assert_eq!(csv(&one), csv(&four));
}

#[test]
fn power_against_the_null_reproduces_the_level_table() {
    let mut cfg = ExperimentConfig::new(5, 40, 30, 2);
    cfg.truncation = vec![Truncation::Fixed(2)];
    cfg.methods = vec![QuantileMethod::Chi2];
    cfg.alternatives = vec![Family::GaussianIso];
    let level = empirical_level(&cfg, jobs(2)).unwrap();
    let power = empirical_power(&cfg, jobs(3)).unwrap();
    assert_eq!(level, power);
}

#[test]
fn practical_level_stays_below_the_interval_bound() {
    let mut cfg = ExperimentConfig::new(31, 2000, 100, 2);
    cfg.truncation = vec![Truncation::Fixed(3)];
    let table = empirical_level(&cfg, RunOptions::default()).unwrap();
    let row = &table.rows[0];
    let bound = 0.05 + binomial_ci(0.05, 2000).0;
    assert!(row.rate <= bound, "level {} > {bound}", row.rate);
    assert_eq!(row.rate, row.rejections as f64 / 2000.0);
}

#[test]
fn power_grows_with_the_shift() {
    let mut cfg = ExperimentConfig::new(77, 200, 200, 2);
    cfg.truncation = vec![Truncation::Fixed(2)];
    cfg.methods = vec![QuantileMethod::Chi2, QuantileMethod::Practical];
    cfg.alternatives = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&s| Family::GaussianMeanShift { shift: vec![s] })
        .collect();
    let table = empirical_power(&cfg, RunOptions::default()).unwrap();
    for method in cfg.methods.clone() {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.method == method).collect();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            let slack = w[0].ci_half_width + w[1].ci_half_width;
            assert!(w[1].rate + slack >= w[0].rate, "{method:?}: {} then {}", w[0].rate, w[1].rate);
        }
        assert!(rows[3].rate >= 0.9);
    }
    for (c, p) in table
        .rows
        .iter()
        .filter(|r| r.method == QuantileMethod::Chi2)
        .zip(table.rows.iter().filter(|r| r.method == QuantileMethod::Practical))
    {
        assert!(p.rejections <= c.rejections);
    }
}

#[test]
fn strong_shift_is_detected_by_both_quantiles() {
    let mut cfg = ExperimentConfig::new(8, 500, 1000, 2);
    cfg.truncation = vec![Truncation::Fixed(2)];
    cfg.methods = vec![QuantileMethod::Chi2, QuantileMethod::Practical];
    cfg.alternatives = vec![Family::GaussianMeanShift { shift: vec![2.0] }];
    let table = empirical_power(&cfg, RunOptions::default()).unwrap();
    assert!(table.rows.iter().all(|r| r.rate >= 0.9));
    assert!(table.rows[1].rate <= table.rows[0].rate);
}

#[test]
fn census_of_repeated_points_is_all_zero() {
    // a one-image store makes every draw the same point
    let store = MnistStore::new(vec![vec![0.5; 49]], vec![7]).unwrap();
    let mut cfg = ExperimentConfig::new(3, 25, 20, 49);
    cfg.null = Family::MnistSubset { digits: vec![7] };
    let options = RunOptions {
        jobs: Some(1),
        mnist: Some(&store),
    };
    let census = t_selection_census(&cfg, options).unwrap();
    assert_eq!(census[0].histogram.get(&0), Some(&25));
    assert_eq!(census[0].failures, 0);
    cfg.methods = vec![QuantileMethod::Chi2, QuantileMethod::Practical];
    let level = empirical_level(&cfg, options).unwrap();
    assert!(level.rows.iter().all(|r| r.rejections == 0 && r.failures == 0));
    assert!(empirical_level(&cfg, RunOptions::default()).is_err());
}

#[test]
fn census_histograms_partition_the_repetitions() {
    let mut cfg = ExperimentConfig::new(9, 60, 100, 2);
    cfg.d = vec![2, 20];
    let census = t_selection_census(&cfg, RunOptions::default()).unwrap();
    assert_eq!(census.len(), 2);
    for c in &census {
        assert_eq!(c.histogram.values().sum::<u64>(), 60);
    }
}

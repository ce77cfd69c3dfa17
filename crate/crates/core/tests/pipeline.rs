use std::io::Write;

use poolbounds::clustering::{choose_m, complete_linkage_cluster, studentize, CovariateMatrix};
use poolbounds::estimator::{estimate_bounds, Dataset, PStar, Target};
use poolbounds::io::{run_bounds, RunConfig};
use poolbounds::popweights::{Order, RefPropensity};
use poolbounds::simulate::{draw_replication, run_replication, CovariateKind, DgpSpec, StudySpec, Variant};

fn write_replication(variant: Variant, n: usize, rep: u64) -> (tempfile::NamedTempFile, Vec<f64>, Vec<f64>, Vec<bool>) {
    let sample = draw_replication(&DgpSpec { variant, covariate: CovariateKind::Continuous, n, seed: 3 }, rep).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "outcome,treated,x").unwrap();
    for i in 0..n {
        writeln!(file, "{},{},{}", sample.y[i], sample.d[i] as u8, sample.x[i]).unwrap();
    }
    file.flush().unwrap();
    (file, sample.x, sample.y, sample.d)
}

#[test]
fn csv_pipeline_matches_library_calls() {
    let (file, x, y, d) = write_replication(Variant::B, 400, 0);
    let mut cfg = RunConfig::new(file.path(), "outcome", "treated", &["x"]);
    cfg.order = Order::Finite(2);
    let (report, _) = run_bounds(&cfg).unwrap();

    let m = choose_m(400, 10.0).unwrap();
    let labels = complete_linkage_cluster(&studentize(&CovariateMatrix::from_column(&x).unwrap()), m).unwrap().labels;
    let data = Dataset::new(y, d, labels, 0.0, 1.0).unwrap();
    let p_star = PStar::Constant(RefPropensity::new(0.5).unwrap());
    for target in Target::ALL {
        let direct = estimate_bounds(&data, target, &p_star, Order::Finite(2)).unwrap();
        let r = report.result(target).unwrap();
        assert_eq!((r.lower, r.upper), (direct.lower, direct.upper), "{target}");
        assert!(
            r.confidence.ci_union.covers(&poolbounds::inference::Interval::new(r.lower, r.upper)) || r.lower > r.upper
        );
    }
}

#[test]
fn first_order_att_width_is_outcome_range() {
    let (file, ..) = write_replication(Variant::A, 300, 5);
    let mut cfg = RunConfig::new(file.path(), "outcome", "treated", &["x"]);
    cfg.order = Order::Finite(1);
    cfg.targets = vec![Target::Att];
    let (report, _) = run_bounds(&cfg).unwrap();
    let att = report.result(Target::Att).unwrap();
    assert!((att.upper - att.lower - 1.0).abs() < 1e-12);
}

#[test]
fn study_replication_agrees_with_csv_run() {
    let mut spec = StudySpec::new(Variant::A, CovariateKind::Continuous);
    spec.n = 300;
    spec.seed = 3;
    spec.orders = vec![Order::Finite(3)];
    let outcome = run_replication(&spec, 2).unwrap();

    let (file, ..) = write_replication(Variant::A, 300, 2);
    let mut cfg = RunConfig::new(file.path(), "outcome", "treated", &["x"]);
    cfg.targets = vec![Target::Att];
    let (report, _) = run_bounds(&cfg).unwrap();
    let att = report.result(Target::Att).unwrap();
    assert_eq!(outcome.orders[0].lower, att.lower);
    assert_eq!(outcome.orders[0].upper, att.upper);
    assert_eq!(outcome.orders[0].ci, att.confidence);
}

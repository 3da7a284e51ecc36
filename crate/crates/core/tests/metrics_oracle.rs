mod common;

use chartjudge::metrics::{self, MetricError};
use common::oracle;

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn library_matches_brute_force_on_random_fixtures() {
    for seed in 0..200 {
        let f = oracle::fixture(seed);
        assert!(close(metrics::judgment_accuracy(&f.prefs).unwrap(), oracle::accuracy(&f.prefs)), "seed {seed}");
        assert!(close(
            metrics::instruction_following_accuracy(&f.scores).unwrap(),
            oracle::accuracy(&f.scores)
        ));
        assert!(close(metrics::error_distance(&f.scores).unwrap(), oracle::error_distance(&f.scores)));
        assert!(close(
            metrics::position_bias_rate(&f.ab, &f.ba).unwrap(),
            oracle::position_bias(&f.ab, &f.ba)
        ));
        match (metrics::length_bias_rate(&f.lengths), oracle::length_bias(&f.lengths)) {
            (Ok(x), Some(y)) => assert!(close(x, y), "seed {seed}"),
            (Err(MetricError::EmptyInput), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
        assert!(close(metrics::format_adherence_rate(&f.adherence).unwrap(), oracle::adherence(&f.adherence)));
        match (metrics::spearman_rho(&f.rank_a, &f.rank_b), oracle::spearman(&f.rank_a, &f.rank_b)) {
            (Ok(x), Some(y)) => assert!(close(x, y), "seed {seed}: {x} vs {y}"),
            (Err(MetricError::DegenerateInput | MetricError::TooShort), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn rates_ignore_record_order() {
    for seed in 0..50 {
        let f = oracle::fixture(seed);
        let mut prefs = f.prefs.clone();
        prefs.reverse();
        assert!(close(
            metrics::judgment_accuracy(&prefs).unwrap(),
            metrics::judgment_accuracy(&f.prefs).unwrap()
        ));
        let mut lengths = f.lengths.clone();
        lengths.reverse();
        assert_eq!(metrics::length_bias_rate(&lengths), metrics::length_bias_rate(&f.lengths));
    }
}

#[test]
fn parsed_error_distance_is_at_most_four() {
    for seed in 0..200 {
        let f = oracle::fixture(seed);
        let parsed: Vec<_> = f.scores.iter().filter(|(p, _)| p.is_some()).cloned().collect();
        if let Ok(d) = metrics::error_distance(&parsed) {
            assert!(d <= 4.0);
        }
    }
}

//! Property-based tests for the library invariants, driven by proptest.

use phenopt::cluster::{relational_kmeans, ClusterModel, ClusteringConfig};
use phenopt::cropmodel::{
    lhs_sample, toy_yield, PhenotypeBounds, YieldMatrix, TRAIT_COUNT,
};
use phenopt::dissim::{cosine_normalize, dtw_distance, DissimKind, DissimilarityMatrix};
use phenopt::moo::{crowding_distance, pareto_filter, ObjectivePoint};
use phenopt::reconstruct::{
    compute_residuals, cvar, expectation, quantile, reconstruct_sample, ResidualMethod,
};

use phenopt::climate::{ClimateSeries, DayRecord};
use proptest::prelude::*;

fn day_record() -> impl Strategy<Value = DayRecord> {
    (
        -5.0..25.0f64,
        0.0..15.0f64,
        0.0..30.0f64,
        0.0..8.0f64,
        0.0..20.0f64,
    )
        .prop_map(|(tmin, diurnal, rad, etp, rain)| DayRecord {
            tmin,
            tmax: tmin + diurnal,
            rad,
            etp,
            rain,
        })
}

fn climate_series() -> impl Strategy<Value = ClimateSeries> {
    proptest::collection::vec(day_record(), 40..120)
        .prop_map(|days| ClimateSeries::new("p", days).unwrap())
}

fn phenotype_array() -> impl Strategy<Value = [f64; TRAIT_COUNT]> {
    let b = PhenotypeBounds::default();
    let mut ranges = [0.0..1.0f64, 0.0..1.0, 0.0..1.0, 0.0..1.0, 0.0..1.0, 0.0..1.0,
        0.0..1.0, 0.0..1.0];
    for (i, r) in ranges.iter_mut().enumerate() {
        *r = b.lower[i]..b.upper[i];
    }
    ranges
}

fn dissim_matrix(max_n: usize) -> impl Strategy<Value = DissimilarityMatrix> {
    (3..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.0..5.0f64, n * (n - 1) / 2).prop_map(move |upper| {
            let labels: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
            let mut it = upper.into_iter();
            DissimilarityMatrix::from_fn(labels, DissimKind::Combined, |_, _| {
                Ok(it.next().unwrap())
            })
            .unwrap()
        })
    })
}

fn two_class_model() -> ClusterModel {
    ClusterModel {
        beta: vec![vec![0.0; 6]; 2],
        assignment: vec![0, 0, 0, 1, 1, 1],
        class_sizes: vec![3, 3],
        representatives: vec![0, 3],
        energy: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    // clustering prototypes stay on the probability simplex
    #[test]
    fn prototypes_stay_on_simplex(delta in dissim_matrix(8), k in 1usize..4, seed in 0u64..1000) {
        let k = k.min(delta.n());
        let model = relational_kmeans(&delta, &ClusteringConfig {
            k,
            iterations: 60,
            restarts: 2,
            seed,
            ..ClusteringConfig::default()
        }).unwrap();
        for row in &model.beta {
            prop_assert!(row.iter().all(|&b| b >= 0.0));
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "simplex sum {sum}");
        }
        prop_assert!(model.class_sizes.iter().all(|&s| s > 0));
    }

    // cvar is below both the quantile and the mean, and reaches the mean at alpha = 1
    #[test]
    fn cvar_below_quantile_and_mean(
        values in proptest::collection::vec(-10.0..10.0f64, 1..40),
        raw_weights in proptest::collection::vec(0.01..3.0f64, 40),
        alpha in 0.01..1.0f64,
    ) {
        let weights = &raw_weights[..values.len()];
        let c = cvar(&values, weights, alpha).unwrap();
        prop_assert!(c <= quantile(&values, weights, alpha).unwrap() + 1e-9);
        prop_assert!(c <= expectation(&values, weights).unwrap() + 1e-9);
        let full = cvar(&values, weights, 1.0).unwrap();
        prop_assert!((full - expectation(&values, weights).unwrap()).abs() < 1e-9);
    }

    // the Pareto archive is mutually non-dominated and loses no non-dominated point
    #[test]
    fn archive_non_domination(
        objectives in proptest::collection::vec((0.0..5.0f64, 0.0..5.0f64), 1..30),
        seed in 0u64..500,
    ) {
        let bounds = PhenotypeBounds::default();
        let phenotypes = lhs_sample(&bounds, objectives.len(), seed).unwrap();
        let points: Vec<ObjectivePoint> = objectives
            .iter()
            .zip(phenotypes)
            .map(|(&(e, cvar), x)| ObjectivePoint { phenotype: x, e, cvar, sims_used: 0 })
            .collect();
        let archive = pareto_filter(&points);
        prop_assert!(archive.is_mutually_non_dominated());
        for p in &points {
            let covered = archive.members.iter().any(|q| {
                q.dominates(p) || q.phenotype == p.phenotype
            });
            prop_assert!(covered, "point ({}, {}) dropped without a dominator", p.e, p.cvar);
        }
        // crowding distances are defined and nonnegative for the whole front
        let crowding = crowding_distance(&archive.members);
        prop_assert!(crowding.iter().all(|d| *d >= 0.0));
    }

    // more rain never lowers the toy yield
    #[test]
    fn rain_is_monotone(series in climate_series(), x in phenotype_array(), extra in 0.0..6.0f64) {
        let x = phenopt::cropmodel::Phenotype::from_array(x);
        let base = toy_yield(&x, &series);
        let mut wetter = series.clone();
        for d in &mut wetter.days {
            d.rain += extra;
        }
        let more = toy_yield(&x, &wetter);
        prop_assert!(more >= base - 1e-12, "rain +{extra} dropped yield {base} -> {more}");
    }

    // rescaled reconstruction commutes with a global rescaling of the yields
    #[test]
    fn rescaled_reconstruction_scale_covariant(
        rows in proptest::collection::vec(proptest::collection::vec(0.5..6.0f64, 6), 1..4),
        rep in proptest::collection::vec(0.5..6.0f64, 2),
        lambda in 0.1..5.0f64,
    ) {
        let model = two_class_model();
        let ids: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let scaled_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * lambda).collect())
            .collect();
        let ym = YieldMatrix::from_rows(rows, ids.clone()).unwrap();
        let ym_scaled = YieldMatrix::from_rows(scaled_rows, ids).unwrap();
        let t1 = match compute_residuals(&ym, &model, ResidualMethod::Rescaled) {
            Ok(t) => t,
            Err(_) => return Ok(()), // fully degenerate draw
        };
        let t2 = compute_residuals(&ym_scaled, &model, ResidualMethod::Rescaled).unwrap();
        let rep_scaled: Vec<f64> = rep.iter().map(|v| v * lambda).collect();
        let a = reconstruct_sample(&rep, &t1).unwrap();
        let b = reconstruct_sample(&rep_scaled, &t2).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            prop_assert!((x * lambda - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    // DTW: symmetric, nonnegative, non-increasing in the window width
    #[test]
    fn dtw_basic_properties(
        a in proptest::collection::vec(-10.0..10.0f64, 2..30),
        b_raw in proptest::collection::vec(-10.0..10.0f64, 30),
        window in 0usize..8,
    ) {
        let b = &b_raw[..a.len()];
        let d = dtw_distance(&a, b, window).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(d == dtw_distance(b, &a, window).unwrap());
        let wider = dtw_distance(&a, b, window + 1).unwrap();
        prop_assert!(wider <= d + 1e-12);
        prop_assert!(dtw_distance(&a, &a, window).unwrap() == 0.0);
    }

    // cosine preprocessing lands in [0, 4] with a zero diagonal
    #[test]
    fn cosine_output_range(delta in dissim_matrix(9)) {
        let out = cosine_normalize(&delta).unwrap();
        for i in 0..out.n() {
            prop_assert!(out.get(i, i) == 0.0);
            for j in 0..out.n() {
                let v = out.get(i, j);
                prop_assert!((0.0..=4.0).contains(&v), "value {v} outside [0, 4]");
                prop_assert!(v == out.get(j, i));
            }
        }
    }
}

//! Non-parametric reconstruction of the full yield distribution from
//! subset evaluations, plus expectation, quantile and CVaR estimators.
//!
//! The reconstructed distribution is a mixture over classes: each class
//! contributes its representative yield shifted by residual profiles
//! learned on a phenotype basis. The naive method stores plain averaged
//! residuals; the rescaled method normalizes residuals by the weighted
//! spread of each basis phenotype's representative yields and rescales by
//! the query's own spread, which preserves shape information across
//! phenotypes of different amplitude.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::cropmodel::YieldMatrix;
use crate::error::{Error, Result};
use crate::EPS_NUM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMethod {
    Naive,
    Rescaled,
}

/// Residual profile of one class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassResiduals {
    /// Column index of the representative element.
    pub representative: usize,
    /// Column indices of the class members, ascending; residuals align.
    pub members: Vec<usize>,
    /// Basis-averaged residuals per member.
    pub naive: Vec<f64>,
    /// Basis-averaged normalized residuals, present for the rescaled method.
    pub rescaled: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualTable {
    pub method: ResidualMethod,
    pub classes: Vec<ClassResiduals>,
    pub class_sizes: Vec<usize>,
    pub n_total: usize,
    /// Per-basis-phenotype scales used during construction (rescaled only).
    pub basis_scales: Option<Vec<f64>>,
    /// Basis rows skipped because their scale was degenerate.
    pub skipped_basis: Vec<usize>,
}

impl ResidualTable {
    pub fn k(&self) -> usize {
        self.classes.len()
    }
}

/// Weighted standard deviation of the representative yields, weights
/// proportional to class sizes. 1-homogeneous in the yields.
pub fn representative_spread(rep_yields: &[f64], class_sizes: &[usize]) -> f64 {
    let n: usize = class_sizes.iter().sum();
    let nf = n as f64;
    let mean: f64 = rep_yields
        .iter()
        .zip(class_sizes.iter())
        .map(|(&y, &s)| s as f64 * y)
        .sum::<f64>()
        / nf;
    let var: f64 = rep_yields
        .iter()
        .zip(class_sizes.iter())
        .map(|(&y, &s)| s as f64 * (y - mean) * (y - mean))
        .sum::<f64>()
        / nf;
    var.sqrt()
}

/// Builds the residual table from the basis yield matrix and a cluster
/// model. Rows of `yields` are basis phenotypes, columns cover the whole
/// climate set in cluster-model element order.
pub fn compute_residuals(
    yields: &YieldMatrix,
    model: &ClusterModel,
    method: ResidualMethod,
) -> Result<ResidualTable> {
    let basis_size = yields.n_rows();
    if basis_size == 0 {
        return Err(Error::Reconstruct("empty phenotype basis".into()));
    }
    if yields.n_cols() != model.n() {
        return Err(Error::Reconstruct(format!(
            "yield matrix has {} columns but the cluster model covers {} elements",
            yields.n_cols(),
            model.n()
        )));
    }

    let (scales, kept, skipped) = match method {
        ResidualMethod::Naive => (None, Vec::new(), Vec::new()),
        ResidualMethod::Rescaled => {
            let scales: Vec<f64> = (0..basis_size)
                .map(|i| {
                    let rep_yields: Vec<f64> = model
                        .representatives
                        .iter()
                        .map(|&r| yields.get(i, r))
                        .collect();
                    representative_spread(&rep_yields, &model.class_sizes)
                })
                .collect();
            let kept: Vec<usize> = (0..basis_size).filter(|&i| scales[i] > EPS_NUM).collect();
            let skipped: Vec<usize> =
                (0..basis_size).filter(|&i| scales[i] <= EPS_NUM).collect();
            if kept.is_empty() {
                return Err(Error::Reconstruct(
                    "all basis phenotypes have degenerate representative spread".into(),
                ));
            }
            (Some(scales), kept, skipped)
        }
    };

    let mut classes = Vec::with_capacity(model.k());
    for k in 0..model.k() {
        let members = model.class_members(k);
        let rep = model.representatives[k];
        let naive: Vec<f64> = members
            .iter()
            .map(|&j| {
                (0..basis_size)
                    .map(|i| yields.get(i, j) - yields.get(i, rep))
                    .sum::<f64>()
                    / basis_size as f64
            })
            .collect();
        let rescaled = scales.as_ref().map(|scales| {
            members
                .iter()
                .map(|&j| {
                    kept.iter()
                        .map(|&i| (yields.get(i, j) - yields.get(i, rep)) / scales[i])
                        .sum::<f64>()
                        / kept.len() as f64
                })
                .collect()
        });
        classes.push(ClassResiduals {
            representative: rep,
            members,
            naive,
            rescaled,
        });
    }
    Ok(ResidualTable {
        method,
        classes,
        class_sizes: model.class_sizes.clone(),
        n_total: model.n(),
        basis_scales: scales,
        skipped_basis: skipped,
    })
}

/// One reconstructed atom: a yield value and the class it came from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub class: usize,
}

/// Equal-weight N-atom estimate of one phenotype's yield distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructedYield {
    pub atoms: Vec<Atom>,
    /// Atoms clamped up to zero because reconstruction went negative.
    pub clamped: usize,
    /// True when the rescaled method fell back to naive residuals because
    /// the query's representative spread was degenerate.
    pub fell_back_to_naive: bool,
}

impl ReconstructedYield {
    pub fn values(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.value).collect()
    }

    pub fn atom_weight(&self) -> f64 {
        1.0 / self.atoms.len() as f64
    }
}

/// Deterministically enumerates the full mixture: one atom per class
/// member, shifted by its residual. `rep_yields[k]` is the query's yield at
/// the representative of class k.
pub fn reconstruct_sample(
    rep_yields: &[f64],
    table: &ResidualTable,
) -> Result<ReconstructedYield> {
    if rep_yields.len() != table.k() {
        return Err(Error::Reconstruct(format!(
            "{} representative yields for {} classes",
            rep_yields.len(),
            table.k()
        )));
    }
    let (use_rescaled, query_scale) = match table.method {
        ResidualMethod::Naive => (false, 0.0),
        ResidualMethod::Rescaled => {
            let scale = representative_spread(rep_yields, &table.class_sizes);
            (scale > EPS_NUM, scale)
        }
    };
    let fell_back = table.method == ResidualMethod::Rescaled && !use_rescaled;

    let mut atoms = Vec::with_capacity(table.n_total);
    let mut clamped = 0usize;
    for (k, class) in table.classes.iter().enumerate() {
        for j in 0..class.members.len() {
            let value = if use_rescaled {
                rep_yields[k] + query_scale * class.rescaled.as_ref().unwrap()[j]
            } else {
                rep_yields[k] + class.naive[j]
            };
            let value = if value < 0.0 {
                clamped += 1;
                0.0
            } else {
                value
            };
            atoms.push(Atom { value, class: k });
        }
    }
    Ok(ReconstructedYield {
        atoms,
        clamped,
        fell_back_to_naive: fell_back,
    })
}

fn check_sample(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Reconstruct("empty or mismatched weighted sample".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Reconstruct("weights must be nonnegative with positive sum".into()));
    }
    Ok(total)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Reconstruct(format!("alpha = {alpha} outside (0, 1]")));
    }
    Ok(())
}

/// Weighted mean.
pub fn expectation(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total = check_sample(values, weights)?;
    Ok(values
        .iter()
        .zip(weights.iter())
        .map(|(&v, &w)| v * w)
        .sum::<f64>()
        / total)
}

/// Lower empirical quantile: the smallest value whose cumulative weight
/// reaches alpha.
pub fn quantile(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    let total = check_sample(values, weights)?;
    check_alpha(alpha)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let target = alpha * total;
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= target - 1e-12 * total {
            return Ok(values[i]);
        }
    }
    Ok(values[order[values.len() - 1]])
}

/// Lower-tail conditional mean. Equal weights: mean of the ceil(alpha N)
/// smallest values. General weights: weighted mean of the lower alpha mass
/// with fractional inclusion of the boundary atom.
pub fn cvar(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    let total = check_sample(values, weights)?;
    check_alpha(alpha)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let first = weights[0];
    let equal_weights = weights.iter().all(|&w| (w - first).abs() <= 1e-12 * first.abs());
    if equal_weights {
        let m = ((alpha * values.len() as f64).ceil() as usize).clamp(1, values.len());
        let sum: f64 = order[..m].iter().map(|&i| values[i]).sum();
        return Ok(sum / m as f64);
    }

    let target = alpha * total;
    let mut mass = 0.0;
    let mut acc = 0.0;
    for &i in &order {
        let take = weights[i].min(target - mass);
        acc += take * values[i];
        mass += take;
        if mass >= target - 1e-12 * total {
            break;
        }
    }
    Ok(acc / target)
}

pub fn expectation_eq(values: &[f64]) -> Result<f64> {
    expectation(values, &vec![1.0; values.len()])
}

pub fn cvar_eq(values: &[f64], alpha: f64) -> Result<f64> {
    cvar(values, &vec![1.0; values.len()], alpha)
}

/// Gaussian parametric comparison estimator: fits a class-size-weighted
/// normal to the representative yields and evaluates E and CVaR
/// analytically. Evaluation-report use only.
pub fn gaussian_estimate(
    rep_yields: &[f64],
    class_sizes: &[usize],
    alpha: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if rep_yields.len() != class_sizes.len() || rep_yields.is_empty() {
        return Err(Error::Reconstruct("representative yields and sizes mismatch".into()));
    }
    let n: usize = class_sizes.iter().sum();
    let nf = n as f64;
    let mean: f64 = rep_yields
        .iter()
        .zip(class_sizes.iter())
        .map(|(&y, &s)| s as f64 * y)
        .sum::<f64>()
        / nf;
    let sd = representative_spread(rep_yields, class_sizes);
    if sd <= EPS_NUM {
        return Ok((mean, mean));
    }
    if alpha >= 1.0 {
        return Ok((mean, mean));
    }
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = std_normal.inverse_cdf(alpha);
    let cvar = mean - sd * std_normal.pdf(z) / alpha;
    Ok((mean, cvar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterModel;
    use approx::assert_abs_diff_eq;

    fn model_2x2() -> ClusterModel {
        // 4 elements, classes {0,1} and {2,3}, representatives 0 and 2
        ClusterModel {
            beta: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
            assignment: vec![0, 0, 1, 1],
            class_sizes: vec![2, 2],
            representatives: vec![0, 2],
            energy: 0.0,
        }
    }

    fn yields(rows: Vec<Vec<f64>>) -> YieldMatrix {
        let n = rows[0].len();
        YieldMatrix::from_rows(rows, (0..n).map(|i| format!("c{i}")).collect()).unwrap()
    }

    #[test]
    fn naive_residuals_single_basis() {
        let y = yields(vec![vec![3.0, 5.0, 1.0, 4.0]]);
        let table = compute_residuals(&y, &model_2x2(), ResidualMethod::Naive).unwrap();
        assert_eq!(table.classes[0].naive, vec![0.0, 2.0]);
        assert_eq!(table.classes[1].naive, vec![0.0, 3.0]);
    }

    #[test]
    fn naive_residuals_hand_example() {
        // 2-element class with basis rows (1,3) and (2,6), representative first
        let model = ClusterModel {
            beta: vec![vec![1.0, 0.0]],
            assignment: vec![0, 0],
            class_sizes: vec![2],
            representatives: vec![0],
            energy: 0.0,
        };
        let y = yields(vec![vec![1.0, 3.0], vec![2.0, 6.0]]);
        let table = compute_residuals(&y, &model, ResidualMethod::Naive).unwrap();
        assert_eq!(table.classes[0].naive, vec![0.0, 3.0]);
    }

    #[test]
    fn representative_residual_is_zero() {
        let y = yields(vec![vec![3.0, 5.0, 1.0, 4.0], vec![2.0, 7.0, 3.0, 3.5]]);
        for method in [ResidualMethod::Naive, ResidualMethod::Rescaled] {
            let table = compute_residuals(&y, &model_2x2(), method).unwrap();
            for class in &table.classes {
                let rep_pos = class
                    .members
                    .iter()
                    .position(|&m| m == class.representative)
                    .unwrap();
                assert_eq!(class.naive[rep_pos], 0.0);
                if let Some(r) = &class.rescaled {
                    assert_eq!(r[rep_pos], 0.0);
                }
            }
        }
    }

    #[test]
    fn exactness_identity_single_basis_query() {
        // basis {x} alone; querying x reproduces the full sample exactly
        let full = vec![3.0, 5.0, 1.0, 4.0];
        let y = yields(vec![full.clone()]);
        let model = model_2x2();
        for method in [ResidualMethod::Naive, ResidualMethod::Rescaled] {
            let table = compute_residuals(&y, &model, method).unwrap();
            let rep_yields: Vec<f64> =
                model.representatives.iter().map(|&r| full[r]).collect();
            let rec = reconstruct_sample(&rep_yields, &table).unwrap();
            let mut got = rec.values();
            got.sort_by(f64::total_cmp);
            let mut want = full.clone();
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(want.iter()) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
            assert!(!rec.fell_back_to_naive);
        }
    }

    #[test]
    fn zero_residuals_repeat_representative_values() {
        let y = yields(vec![vec![2.0, 2.0, 5.0, 5.0]]);
        let table = compute_residuals(&y, &model_2x2(), ResidualMethod::Naive).unwrap();
        let rec = reconstruct_sample(&[2.0, 5.0], &table).unwrap();
        let vals = rec.values();
        assert_eq!(vals.iter().filter(|&&v| v == 2.0).count(), 2);
        assert_eq!(vals.iter().filter(|&&v| v == 5.0).count(), 2);
    }

    #[test]
    fn direct_naive_construction() {
        let table = ResidualTable {
            method: ResidualMethod::Naive,
            classes: vec![ClassResiduals {
                representative: 0,
                members: vec![0, 1, 2],
                naive: vec![-1.0, 0.0, 1.0],
                rescaled: None,
            }],
            class_sizes: vec![3],
            n_total: 3,
            basis_scales: None,
            skipped_basis: vec![],
        };
        let rec = reconstruct_sample(&[2.0], &table).unwrap();
        let mut vals = rec.values();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert_eq!(rec.atom_weight(), 1.0 / 3.0);
    }

    #[test]
    fn negative_atoms_are_clamped_and_counted() {
        let table = ResidualTable {
            method: ResidualMethod::Naive,
            classes: vec![ClassResiduals {
                representative: 0,
                members: vec![0, 1],
                naive: vec![0.0, -5.0],
                rescaled: None,
            }],
            class_sizes: vec![2],
            n_total: 2,
            basis_scales: None,
            skipped_basis: vec![],
        };
        let rec = reconstruct_sample(&[1.0], &table).unwrap();
        assert_eq!(rec.clamped, 1);
        assert!(rec.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rescaled_degenerate_query_falls_back() {
        let y = yields(vec![vec![3.0, 5.0, 1.0, 4.0]]);
        let table = compute_residuals(&y, &model_2x2(), ResidualMethod::Rescaled).unwrap();
        let rec = reconstruct_sample(&[2.0, 2.0], &table).unwrap();
        assert!(rec.fell_back_to_naive);
    }

    #[test]
    fn rescaled_rejects_all_degenerate_basis() {
        let y = yields(vec![vec![2.0, 3.0, 2.0, 5.0]]); // reps 0 and 2 both yield 2
        assert!(compute_residuals(&y, &model_2x2(), ResidualMethod::Rescaled).is_err());
    }

    #[test]
    fn rescaled_is_scale_covariant() {
        let y = yields(vec![vec![3.0, 5.0, 1.0, 4.0], vec![2.0, 7.0, 3.0, 3.5]]);
        let model = model_2x2();
        let lambda = 3.7;
        let table = compute_residuals(&y, &model, ResidualMethod::Rescaled).unwrap();
        let scaled_rows: Vec<Vec<f64>> =
            (0..2).map(|i| y.row(i).iter().map(|v| v * lambda).collect()).collect();
        let table_scaled =
            compute_residuals(&yields(scaled_rows), &model, ResidualMethod::Rescaled)
                .unwrap();
        let rep = [4.0, 1.5];
        let rep_scaled = [4.0 * lambda, 1.5 * lambda];
        let a = reconstruct_sample(&rep, &table).unwrap();
        let b = reconstruct_sample(&rep_scaled, &table_scaled).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert_abs_diff_eq!(x * lambda, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn expectation_examples() {
        let ten: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(expectation_eq(&ten).unwrap(), 5.5);
        assert_eq!(expectation_eq(&[7.25]).unwrap(), 7.25);
        // mixture weights 3/4 and 1/4 with values 1 and 5 -> 2
        assert_eq!(expectation(&[1.0, 5.0], &[3.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn quantile_examples() {
        let ten: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let w = vec![1.0; 10];
        assert_eq!(quantile(&ten, &w, 0.2).unwrap(), 2.0);
        assert_eq!(quantile(&ten, &w, 1.0).unwrap(), 10.0);
        assert_eq!(quantile(&[4.0; 5], &[1.0; 5], 0.3).unwrap(), 4.0);
        assert!(quantile(&ten, &w, 0.0).is_err());
        assert!(quantile(&ten, &w, 1.5).is_err());
    }

    #[test]
    fn cvar_examples() {
        let ten: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(cvar_eq(&ten, 0.2).unwrap(), 1.5);
        assert_abs_diff_eq!(
            cvar_eq(&ten, 1.0).unwrap(),
            expectation_eq(&ten).unwrap(),
            epsilon = 1e-12
        );
        assert_eq!(cvar_eq(&[3.0; 7], 0.4).unwrap(), 3.0);
    }

    #[test]
    fn cvar_fractional_boundary_with_general_weights() {
        // mass 0.5 target: full first atom (0.3) plus 0.2 of the second
        let v = [1.0, 2.0, 3.0];
        let w = [0.3, 0.4, 0.3];
        let got = cvar(&v, &w, 0.5).unwrap();
        assert_abs_diff_eq!(got, (0.3 * 1.0 + 0.2 * 2.0) / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cvar_below_quantile_and_expectation() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..10.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let alpha = rng.gen_range(0.05..1.0);
            let c = cvar(&v, &w, alpha).unwrap();
            assert!(c <= quantile(&v, &w, alpha).unwrap() + 1e-9);
            assert!(c <= expectation(&v, &w).unwrap() + 1e-9);
        }
    }

    #[test]
    fn cvar_non_decreasing_in_alpha() {
        let v = [5.0, 1.0, 9.0, 3.0, 7.0, 2.0];
        let w = [1.0; 6];
        let mut last = f64::NEG_INFINITY;
        for i in 1..=20 {
            let c = cvar(&v, &w, i as f64 / 20.0).unwrap();
            assert!(c >= last - 1e-12);
            last = c;
        }
    }

    #[test]
    fn gaussian_estimator_degenerate_and_alpha_one() {
        let (e, c) = gaussian_estimate(&[4.0, 4.0], &[3, 2], 0.2).unwrap();
        assert_eq!((e, c), (4.0, 4.0));
        let (e, c) = gaussian_estimate(&[1.0, 5.0], &[1, 1], 1.0).unwrap();
        assert_eq!(e, 3.0);
        assert_eq!(c, 3.0);
    }

    #[test]
    fn gaussian_estimator_tail_below_mean() {
        let (e, c) = gaussian_estimate(&[2.0, 4.0, 6.0], &[2, 3, 1], 0.2).unwrap();
        assert!(c < e);
    }

    #[test]
    fn residual_table_json_round_trip() {
        let y = yields(vec![vec![3.0, 5.0, 1.0, 4.0], vec![2.0, 7.0, 3.0, 3.5]]);
        let table = compute_residuals(&y, &model_2x2(), ResidualMethod::Rescaled).unwrap();
        let text = serde_json::to_string(&table).unwrap();
        let back: ResidualTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back.k(), 2);
        assert_eq!(back.classes[0].naive, table.classes[0].naive);
    }
}

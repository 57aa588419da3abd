//! Relational (dissimilarity-only) k-means with restarts, plus medoid
//! representative selection.
//!
//! The algorithm never forms centroids in data space: each class prototype
//! is a simplex weight vector over the elements, trained by stochastic
//! online assignment/representation steps. Centroid-to-element cost is
//! `beta_k' D_i - 1/2 beta_k' D beta_k`.
//!
//! For permutation equivariance, elements are internally reordered by a
//! canonical permutation-invariant key (row sum, then the sorted row) before
//! any random draw; relabeling the input series therefore relabels the
//! output partition consistently.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dissim::DissimilarityMatrix;
use crate::error::{Error, Result};
use crate::derive_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    /// Number of classes.
    pub k: usize,
    /// Online iterations per restart.
    pub iterations: usize,
    /// Independent restarts; the lowest-energy run wins.
    pub restarts: usize,
    /// Initial learning rate of the decaying step r(t) = eps0 / (1 + c0 t / K).
    pub eps0: f64,
    /// Decay constant of r(t).
    pub c0: f64,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k: 10,
            iterations: 500,
            restarts: 10,
            eps0: 0.5,
            c0: 1.0,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::Cluster(format!(
                "K = {} outside [1, N = {}]",
                self.k, n
            )));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::Cluster("iterations and restarts must be positive".into()));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return Err(Error::Cluster(format!("eps0 = {} outside (0, 1]", self.eps0)));
        }
        if !(self.c0 > 0.0) {
            return Err(Error::Cluster(format!("c0 = {} must be positive", self.c0)));
        }
        Ok(())
    }
}

/// Result of relational k-means: soft prototypes, hard partition, medoid
/// representatives and the final energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    /// K rows of N nonnegative weights, each summing to 1.
    pub beta: Vec<Vec<f64>>,
    /// Class index per element.
    pub assignment: Vec<usize>,
    pub class_sizes: Vec<usize>,
    /// One medoid index per class, each belonging to its class.
    pub representatives: Vec<usize>,
    pub energy: f64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Element indices of class k, ascending.
    pub fn class_members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == k).then_some(i))
            .collect()
    }
}

fn cost(beta_k: &[f64], delta: &DissimilarityMatrix, quad_k: f64, i: usize) -> f64 {
    let h: f64 = beta_k
        .iter()
        .zip(delta.row(i).iter())
        .map(|(&b, &d)| b * d)
        .sum();
    h - 0.5 * quad_k
}

fn quad(beta_k: &[f64], delta: &DissimilarityMatrix) -> f64 {
    let n = delta.n();
    let mut acc = 0.0;
    for i in 0..n {
        if beta_k[i] == 0.0 {
            continue;
        }
        acc += beta_k[i]
            * beta_k[i + 1..]
                .iter()
                .zip(delta.row(i)[i + 1..].iter())
                .map(|(&b, &d)| b * d)
                .sum::<f64>();
    }
    2.0 * acc
}

fn argmin_cost(
    beta: &[Vec<f64>],
    quads: &[f64],
    delta: &DissimilarityMatrix,
    i: usize,
) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (k, (b, &g)) in beta.iter().zip(quads.iter()).enumerate() {
        let c = cost(b, delta, g, i);
        if c < best_cost {
            best_cost = c;
            best = k;
        }
    }
    best
}

#[cfg(debug_assertions)]
fn debug_check_simplex(row: &[f64]) {
    let sum: f64 = row.iter().sum();
    debug_assert!(
        row.iter().all(|&b| b >= 0.0) && (sum - 1.0).abs() < 1e-9,
        "beta row left the simplex (sum {sum})"
    );
}

struct RestartOutcome {
    beta: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    energy: f64,
}

fn run_restart(
    delta: &DissimilarityMatrix,
    cfg: &ClusteringConfig,
    seed: u64,
) -> Result<RestartOutcome> {
    let n = delta.n();
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // random simplex rows (normalized exponentials)
    let mut beta: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut row: Vec<f64> = (0..n)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let sum: f64 = row.iter().sum();
            for b in &mut row {
                *b /= sum;
            }
            row
        })
        .collect();
    let mut quads: Vec<f64> = beta.iter().map(|b| quad(b, delta)).collect();

    for t in 1..=cfg.iterations {
        let i = rng.gen_range(0..n);
        let j = argmin_cost(&beta, &quads, delta, i);
        let rate = cfg.eps0 / (1.0 + cfg.c0 * t as f64 / k as f64);
        // incremental update of the quadratic term before moving beta_j:
        // quad((1-r) b + r e_i) = (1-r)^2 quad(b) + 2 r (1-r) b'D_i
        let h: f64 = beta[j]
            .iter()
            .zip(delta.row(i).iter())
            .map(|(&b, &d)| b * d)
            .sum();
        quads[j] = (1.0 - rate) * (1.0 - rate) * quads[j] + 2.0 * rate * (1.0 - rate) * h;
        for (idx, b) in beta[j].iter_mut().enumerate() {
            *b *= 1.0 - rate;
            if idx == i {
                *b += rate;
            }
        }
        #[cfg(debug_assertions)]
        debug_check_simplex(&beta[j]);
    }

    // exact quads before the synchronous assignment pass
    for (q, b) in quads.iter_mut().zip(beta.iter()) {
        *q = quad(b, delta);
    }
    let mut assignment: Vec<usize> =
        (0..n).map(|i| argmin_cost(&beta, &quads, delta, i)).collect();

    // repair empty classes: reseed their prototype to the indicator of the
    // element worst-fitted by its current prototype, then reassign
    for _ in 0..2 * k {
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let worst = (0..n)
            .max_by(|&a, &b| {
                let ca = cost(&beta[assignment[a]], delta, quads[assignment[a]], a);
                let cb = cost(&beta[assignment[b]], delta, quads[assignment[b]], b);
                ca.total_cmp(&cb).then(b.cmp(&a))
            })
            .unwrap();
        let mut row = vec![0.0; n];
        row[worst] = 1.0;
        beta[empty] = row;
        quads[empty] = 0.0;
        assignment = (0..n).map(|i| argmin_cost(&beta, &quads, delta, i)).collect();
        // fully degenerate ties can keep the class empty; pin the reseed element
        if !assignment.contains(&empty) {
            assignment[worst] = empty;
        }
    }
    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::Cluster("empty class after repair".into()));
    }

    let energy: f64 = (0..n)
        .map(|i| cost(&beta[assignment[i]], delta, quads[assignment[i]], i))
        .sum();
    Ok(RestartOutcome {
        beta,
        assignment,
        energy,
    })
}

/// Canonical element order: sort by (row sum, sorted row values), with the
/// original index as a final tie-break. The key is invariant under
/// relabeling, so structurally distinct elements get the same rank whatever
/// order they arrive in.
fn canonical_order(delta: &DissimilarityMatrix) -> Vec<usize> {
    let n = delta.n();
    let keys: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut row = delta.row(i).to_vec();
            let sum = row.iter().sum();
            row.sort_by(f64::total_cmp);
            (sum, row)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then_with(|| {
                for (x, y) in keys[a].1.iter().zip(keys[b].1.iter()) {
                    let c = x.total_cmp(y);
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            })
            .then(a.cmp(&b))
    });
    order
}

/// Runs `cfg.restarts` independent seeded restarts of the online relational
/// k-means and returns the lowest-energy model, with medoid representatives
/// attached.
pub fn relational_kmeans(
    delta: &DissimilarityMatrix,
    cfg: &ClusteringConfig,
) -> Result<ClusterModel> {
    let n = delta.n();
    cfg.validate(n)?;

    let order = canonical_order(delta);
    let work = delta.permuted(&order)?;

    let mut best: Option<RestartOutcome> = None;
    for restart in 0..cfg.restarts {
        let outcome = run_restart(&work, cfg, derive_seed(cfg.seed, &[restart as u64]))?;
        let better = match &best {
            None => true,
            Some(b) => outcome.energy < b.energy,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.unwrap();

    // map back to original element order: work element p is original order[p]
    let mut assignment = vec![0usize; n];
    let mut beta = vec![vec![0.0; n]; cfg.k];
    for p in 0..n {
        assignment[order[p]] = best.assignment[p];
        for k in 0..cfg.k {
            beta[k][order[p]] = best.beta[k][p];
        }
    }
    let mut class_sizes = vec![0usize; cfg.k];
    for &a in &assignment {
        class_sizes[a] += 1;
    }
    let representatives = select_representatives(delta, &assignment, cfg.k)?;
    Ok(ClusterModel {
        beta,
        assignment,
        class_sizes,
        representatives,
        energy: best.energy,
    })
}

/// Medoid of each class: the member minimizing its within-class
/// dissimilarity row sum. Ties are broken by the same permutation-invariant
/// canonical key used for element ordering (ties between structurally
/// identical elements fall back to lowest index), so representative
/// selection commutes with relabeling.
pub fn select_representatives(
    delta: &DissimilarityMatrix,
    assignment: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if assignment.len() != delta.n() {
        return Err(Error::Cluster("assignment length mismatch".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        if a >= k {
            return Err(Error::Cluster(format!("class index {a} out of range")));
        }
        members[a].push(i);
    }
    let order = canonical_order(delta);
    let mut rank = vec![0usize; delta.n()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut reps = Vec::with_capacity(k);
    for (class, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::Cluster(format!("class {class} is empty")));
        }
        let rep = m
            .iter()
            .copied()
            .min_by(|&a, &b| {
                delta
                    .row_sum_over(a, m)
                    .total_cmp(&delta.row_sum_over(b, m))
                    .then(rank[a].cmp(&rank[b]))
            })
            .unwrap();
        reps.push(rep);
    }
    Ok(reps)
}

/// Energy of a hard partition with uniform prototypes: for each class,
/// half the mean pairwise dissimilarity times the class size. Used by tests
/// as the exhaustive-search objective.
pub fn partition_energy(delta: &DissimilarityMatrix, assignment: &[usize], k: usize) -> f64 {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        members[a].push(i);
    }
    members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let total: f64 = m
                .iter()
                .map(|&i| delta.row_sum_over(i, m))
                .sum();
            total / (2.0 * m.len() as f64)
        })
        .sum()
}

//! Bi-objective (expectation, CVaR) maximization: evaluators, Pareto
//! archive with crowding distance, the MOPSO-CD metaheuristic, the
//! two-step orchestrator and baselines, with exact budget accounting.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::climate::ClimateSet;
use crate::cluster::{relational_kmeans, ClusteringConfig};
use crate::cropmodel::{
    lhs_sample, yield_matrix, Phenotype, PhenotypeBounds, YieldSimulator, TRAIT_COUNT,
};
use crate::dissim::{combined_dissim, DissimWeights, DtwConfig};
use crate::error::{Error, Result};
use crate::reconstruct::{
    compute_residuals, cvar_eq, expectation_eq, reconstruct_sample, ResidualMethod,
    ResidualTable,
};
use crate::derive_seed;

/// One evaluated phenotype with its two objective values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub phenotype: Phenotype,
    pub e: f64,
    pub cvar: f64,
    pub sims_used: u64,
}

impl ObjectivePoint {
    pub fn objectives(&self) -> (f64, f64) {
        (self.e, self.cvar)
    }

    /// a dominates b iff a is >= in both objectives and > in one.
    pub fn dominates(&self, other: &ObjectivePoint) -> bool {
        self.e >= other.e
            && self.cvar >= other.cvar
            && (self.e > other.e || self.cvar > other.cvar)
    }
}

/// Evaluates a phenotype against the full climate set: N simulations,
/// empirical mean and lower-tail CVaR.
pub fn evaluate_full(
    sim: &dyn YieldSimulator,
    x: &Phenotype,
    climate: &ClimateSet,
    alpha: f64,
) -> Result<ObjectivePoint> {
    let yields: Vec<f64> = climate
        .series()
        .iter()
        .map(|c| sim.simulate(x, c))
        .collect::<Result<_>>()?;
    let e = expectation_eq(&yields)?;
    let cvar = cvar_eq(&yields, alpha)?;
    debug_assert!(cvar <= e + 1e-12);
    Ok(ObjectivePoint {
        phenotype: *x,
        e,
        cvar,
        sims_used: climate.len() as u64,
    })
}

/// Evaluates a phenotype with K representative simulations plus mixture
/// reconstruction.
pub fn evaluate_reconstructed(
    sim: &dyn YieldSimulator,
    x: &Phenotype,
    representatives: &ClimateSet,
    table: &ResidualTable,
    alpha: f64,
) -> Result<ObjectivePoint> {
    if representatives.len() != table.k() {
        return Err(Error::Reconstruct(format!(
            "{} representative series for {} classes",
            representatives.len(),
            table.k()
        )));
    }
    let rep_yields: Vec<f64> = representatives
        .series()
        .iter()
        .map(|c| sim.simulate(x, c))
        .collect::<Result<_>>()?;
    let rec = reconstruct_sample(&rep_yields, table)?;
    let values = rec.values();
    let e = expectation_eq(&values)?;
    let cvar = cvar_eq(&values, alpha)?;
    debug_assert!(cvar <= e + 1e-12);
    Ok(ObjectivePoint {
        phenotype: *x,
        e,
        cvar,
        sims_used: table.k() as u64,
    })
}

/// A phenotype's objective function; both baselines and the subset
/// pipeline sit behind this.
pub trait BiObjectiveEvaluator {
    fn evaluate(&self, x: &Phenotype) -> Result<ObjectivePoint>;
}

pub struct FullEvaluator<'a> {
    pub sim: &'a dyn YieldSimulator,
    pub climate: &'a ClimateSet,
    pub alpha: f64,
}

impl BiObjectiveEvaluator for FullEvaluator<'_> {
    fn evaluate(&self, x: &Phenotype) -> Result<ObjectivePoint> {
        evaluate_full(self.sim, x, self.climate, self.alpha)
    }
}

pub struct ReconstructedEvaluator<'a> {
    pub sim: &'a dyn YieldSimulator,
    pub representatives: &'a ClimateSet,
    pub table: &'a ResidualTable,
    pub alpha: f64,
}

impl BiObjectiveEvaluator for ReconstructedEvaluator<'_> {
    fn evaluate(&self, x: &Phenotype) -> Result<ObjectivePoint> {
        evaluate_reconstructed(self.sim, x, self.representatives, self.table, self.alpha)
    }
}

/// Mutually non-dominated points, sorted by expectation descending, capped
/// at `capacity` by crowding-distance pruning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub members: Vec<ObjectivePoint>,
    pub capacity: usize,
}

impl ParetoArchive {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objective_pairs(&self) -> Vec<(f64, f64)> {
        self.members.iter().map(|m| m.objectives()).collect()
    }

    pub fn phenotypes(&self) -> Vec<Phenotype> {
        self.members.iter().map(|m| m.phenotype).collect()
    }

    pub fn is_mutually_non_dominated(&self) -> bool {
        for (i, a) in self.members.iter().enumerate() {
            for b in self.members.iter().skip(i + 1) {
                if a.dominates(b) || b.dominates(a) {
                    return false;
                }
            }
        }
        true
    }

    fn prune_to_capacity(&mut self) {
        while self.members.len() > self.capacity {
            let crowding = crowding_distance(&self.members);
            let worst = (0..self.members.len())
                .min_by(|&a, &b| crowding[a].total_cmp(&crowding[b]).then(b.cmp(&a)))
                .unwrap();
            self.members.remove(worst);
        }
    }
}

/// Maximal mutually non-dominated subset, duplicates (by phenotype)
/// removed, sorted by expectation descending.
pub fn pareto_filter(points: &[ObjectivePoint]) -> ParetoArchive {
    let mut kept: Vec<ObjectivePoint> = Vec::new();
    for p in points {
        if kept
            .iter()
            .any(|q| q.dominates(p) || q.phenotype == p.phenotype)
        {
            continue;
        }
        kept.retain(|q| !p.dominates(q));
        kept.push(*p);
    }
    kept.sort_by(|a, b| b.e.total_cmp(&a.e).then(a.cvar.total_cmp(&b.cvar)));
    let capacity = kept.len().max(1);
    ParetoArchive {
        members: kept,
        capacity,
    }
}

/// Standard bi-objective crowding distance: boundary members infinite,
/// interior members the sum over objectives of range-normalized neighbor
/// gaps.
pub fn crowding_distance(front: &[ObjectivePoint]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for objective in 0..2 {
        let value = |p: &ObjectivePoint| if objective == 0 { p.e } else { p.cvar };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(&front[a]).total_cmp(&value(&front[b])));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = value(&front[order[n - 1]]) - value(&front[order[0]]);
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = value(&front[order[w + 1]]) - value(&front[order[w - 1]]);
            if dist[order[w]].is_finite() {
                dist[order[w]] += gap / range;
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Swarm size q.
    pub pop_size: usize,
    /// Generations T; total evaluations are (T + 1) * q.
    pub iterations: usize,
    pub seed: u64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Initial per-particle mutation probability; decays as (1 - t/T)^p.
    pub mutation_rate: f64,
    pub mutation_decay: f64,
    /// Archive capacity; defaults to 2 * pop_size when absent.
    pub archive_capacity: Option<usize>,
    /// CVaR level.
    pub alpha: f64,
}

impl OptimizerConfig {
    pub fn with_budget(iterations: usize, pop_size: usize, seed: u64, alpha: f64) -> Self {
        OptimizerConfig {
            pop_size,
            iterations,
            seed,
            alpha,
            ..OptimizerConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::Config("pop_size must be at least 2".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.inertia) {
            return Err(Error::Config("inertia must lie in [0, 1)".into()));
        }
        if self.cognitive < 0.0 || self.social < 0.0 {
            return Err(Error::Config("c1 and c2 must be nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn capacity(&self) -> usize {
        self.archive_capacity.unwrap_or(2 * self.pop_size)
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            pop_size: 10,
            iterations: 50,
            seed: 0,
            inertia: 0.4,
            cognitive: 1.0,
            social: 1.0,
            mutation_rate: 0.5,
            mutation_decay: 1.5,
            archive_capacity: None,
            alpha: 0.2,
        }
    }
}

/// Exact simulator-call accounting for one strategy run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetReport {
    pub strategy: String,
    pub total: u64,
    pub breakdown: Vec<(String, u64)>,
}

impl BudgetReport {
    fn new(strategy: impl Into<String>, breakdown: Vec<(String, u64)>) -> Self {
        let total = breakdown.iter().map(|(_, v)| v).sum();
        BudgetReport {
            strategy: strategy.into(),
            total,
            breakdown,
        }
    }
}

/// Multi-objective particle swarm with crowding-distance archive.
///
/// Per-particle random streams are derived from (seed, generation,
/// particle), so the outcome does not depend on evaluation order. Returns
/// the final archive and the number of objective evaluations, which is
/// always (iterations + 1) * pop_size.
pub fn mopso_cd(
    evaluator: &dyn BiObjectiveEvaluator,
    bounds: &PhenotypeBounds,
    cfg: &OptimizerConfig,
) -> Result<(ParetoArchive, u64)> {
    cfg.validate()?;
    let q = cfg.pop_size;
    let total_gens = cfg.iterations;

    let mut positions: Vec<[f64; TRAIT_COUNT]> =
        lhs_sample(bounds, q, derive_seed(cfg.seed, &[0]))?
            .into_iter()
            .map(|p| p.to_array())
            .collect();
    let mut velocities = vec![[0.0; TRAIT_COUNT]; q];

    let mut evaluations: u64 = 0;
    let mut pbest: Vec<ObjectivePoint> = Vec::with_capacity(q);
    for pos in &positions {
        pbest.push(evaluator.evaluate(&Phenotype::from_array(*pos))?);
        evaluations += 1;
    }

    let mut archive = pareto_filter(&pbest);
    archive.capacity = cfg.capacity();
    archive.prune_to_capacity();

    for t in 1..=total_gens {
        // leaders come from the most isolated half of the archive
        let crowding = crowding_distance(&archive.members);
        let mut by_crowding: Vec<usize> = (0..archive.len()).collect();
        by_crowding.sort_by(|&a, &b| crowding[b].total_cmp(&crowding[a]).then(a.cmp(&b)));
        let top_half = &by_crowding[..archive.len().div_ceil(2)];

        let mutation_prob = cfg.mutation_rate
            * (1.0 - t as f64 / total_gens as f64).powf(cfg.mutation_decay);

        let mut generation = Vec::with_capacity(q);
        for i in 0..q {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, t as u64, i as u64]));
            let leader =
                archive.members[top_half[rng.gen_range(0..top_half.len())]].phenotype;
            let leader = leader.to_array();
            let best = pbest[i].phenotype.to_array();
            for d in 0..TRAIT_COUNT {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                velocities[i][d] = cfg.inertia * velocities[i][d]
                    + cfg.cognitive * r1 * (best[d] - positions[i][d])
                    + cfg.social * r2 * (leader[d] - positions[i][d]);
                positions[i][d] += velocities[i][d];
            }
            bounds.clip(&mut positions[i]);
            if rng.gen::<f64>() < mutation_prob {
                let d = rng.gen_range(0..TRAIT_COUNT);
                positions[i][d] = rng.gen_range(bounds.lower[d]..bounds.upper[d]);
            }

            let point = evaluator.evaluate(&Phenotype::from_array(positions[i]))?;
            evaluations += 1;
            // replace pbest when dominated; coin-flip when incomparable
            if point.dominates(&pbest[i])
                || (!pbest[i].dominates(&point) && rng.gen::<bool>())
            {
                pbest[i] = point;
            }
            generation.push(point);
        }

        let mut pool = archive.members.clone();
        pool.extend(generation);
        let mut updated = pareto_filter(&pool);
        updated.capacity = cfg.capacity();
        updated.prune_to_capacity();
        archive = updated;
        debug_assert!(archive.is_mutually_non_dominated());
    }

    debug_assert_eq!(evaluations, (total_gens as u64 + 1) * q as u64);
    Ok((archive, evaluations))
}

/// LHS random-search baseline: n full evaluations, Pareto-filtered.
pub fn random_search(
    sim: &dyn YieldSimulator,
    climate: &ClimateSet,
    bounds: &PhenotypeBounds,
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<(ParetoArchive, BudgetReport)> {
    if n == 0 {
        return Err(Error::Config("random search needs at least one point".into()));
    }
    let points: Vec<ObjectivePoint> = lhs_sample(bounds, n, seed)?
        .iter()
        .map(|x| evaluate_full(sim, x, climate, alpha))
        .collect::<Result<_>>()?;
    let archive = pareto_filter(&points);
    let report = BudgetReport::new(
        "random",
        vec![("full evaluations".into(), (n * climate.len()) as u64)],
    );
    Ok((archive, report))
}

/// Full-set MOPSO-CD baseline: every objective evaluation runs all N
/// simulations.
pub fn naive_mopso(
    sim: &dyn YieldSimulator,
    climate: &ClimateSet,
    bounds: &PhenotypeBounds,
    cfg: &OptimizerConfig,
) -> Result<(ParetoArchive, BudgetReport)> {
    let evaluator = FullEvaluator {
        sim,
        climate,
        alpha: cfg.alpha,
    };
    let (archive, evals) = mopso_cd(&evaluator, bounds, cfg)?;
    let report = BudgetReport::new(
        "naive",
        vec![(
            "optimizer evaluations".into(),
            evals * climate.len() as u64,
        )],
    );
    Ok((archive, report))
}

/// Configuration of the subset-selection pipeline inside the two-step
/// strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStepConfig {
    /// Phenotype basis size l.
    pub basis_size: usize,
    pub cluster: ClusteringConfig,
    pub dtw: DtwConfig,
    pub weights: DissimWeights,
    pub method: ResidualMethod,
}

impl Default for TwoStepConfig {
    fn default() -> Self {
        TwoStepConfig {
            basis_size: 10,
            cluster: ClusteringConfig::default(),
            dtw: DtwConfig::default(),
            weights: DissimWeights::default(),
            method: ResidualMethod::Rescaled,
        }
    }
}

/// Exactly `l` phenotypes spread along the front by the expectation
/// coordinate; repeats the extremes when the front is smaller than l.
fn basis_from_front(archive: &ParetoArchive, l: usize) -> Vec<Phenotype> {
    let mut by_e: Vec<&ObjectivePoint> = archive.members.iter().collect();
    by_e.sort_by(|a, b| a.e.total_cmp(&b.e));
    let m = by_e.len();
    if m >= l {
        if l == 1 {
            return vec![by_e[0].phenotype];
        }
        (0..l)
            .map(|i| {
                let pos = (i as f64 * (m - 1) as f64 / (l - 1) as f64).round() as usize;
                by_e[pos].phenotype
            })
            .collect()
    } else {
        let mut out: Vec<Phenotype> = by_e.iter().map(|p| p.phenotype).collect();
        let mut take_low = true;
        while out.len() < l {
            out.push(if take_low {
                by_e[0].phenotype
            } else {
                by_e[m - 1].phenotype
            });
            take_low = !take_low;
        }
        out
    }
}

/// The two-step strategy: cluster once, optimize on reconstructed
/// objectives, rebuild the residual basis from the interim Pareto set,
/// optimize again. Total budget is 2 l N + 2 (T + 1) q K.
pub fn two_step(
    sim: &dyn YieldSimulator,
    climate: &ClimateSet,
    bounds: &PhenotypeBounds,
    pipeline: &TwoStepConfig,
    cfg: &OptimizerConfig,
) -> Result<(ParetoArchive, BudgetReport)> {
    cfg.validate()?;
    let n = climate.len() as u64;
    let l = pipeline.basis_size;
    let seed = cfg.seed;

    // (a) basis and its full yield matrix
    let basis = lhs_sample(bounds, l, derive_seed(seed, &[1]))?;
    let basis_yields = yield_matrix(sim, &basis, climate)?;

    // (b) dissimilarities and clustering
    let delta = combined_dissim(climate, &basis_yields, &pipeline.dtw, &pipeline.weights)?;
    let mut cluster_cfg = pipeline.cluster.clone();
    cluster_cfg.seed = derive_seed(seed, &[2]);
    let model = relational_kmeans(&delta, &cluster_cfg)?;
    let representatives = climate.subset(&model.representatives)?;

    // (c, d) residuals and first optimization run
    let table = compute_residuals(&basis_yields, &model, pipeline.method)?;
    let mut run_cfg = cfg.clone();
    run_cfg.seed = derive_seed(seed, &[3]);
    let evaluator = ReconstructedEvaluator {
        sim,
        representatives: &representatives,
        table: &table,
        alpha: cfg.alpha,
    };
    let (interim, evals_run1) = mopso_cd(&evaluator, bounds, &run_cfg)?;

    // (e, f) refreshed basis from the interim front, new residuals
    let basis2 = basis_from_front(&interim, l);
    let basis2_yields = yield_matrix(sim, &basis2, climate)?;
    let table2 = compute_residuals(&basis2_yields, &model, pipeline.method)?;

    // (g) second optimization run
    let mut run2_cfg = cfg.clone();
    run2_cfg.seed = derive_seed(seed, &[4]);
    let evaluator2 = ReconstructedEvaluator {
        sim,
        representatives: &representatives,
        table: &table2,
        alpha: cfg.alpha,
    };
    let (archive, evals_run2) = mopso_cd(&evaluator2, bounds, &run2_cfg)?;

    let k = model.k() as u64;
    let report = BudgetReport::new(
        "two-step",
        vec![
            ("basis evaluations run 1".into(), l as u64 * n),
            ("optimizer evaluations run 1".into(), evals_run1 * k),
            ("basis evaluations run 2".into(), l as u64 * n),
            ("optimizer evaluations run 2".into(), evals_run2 * k),
        ],
    );
    Ok((archive, report))
}

/// The four reference computational budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetPreset {
    VerySmall,
    Small,
    Medium,
    Large,
}

impl BudgetPreset {
    pub const ALL: [BudgetPreset; 4] = [
        BudgetPreset::VerySmall,
        BudgetPreset::Small,
        BudgetPreset::Medium,
        BudgetPreset::Large,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BudgetPreset::VerySmall => "very-small",
            BudgetPreset::Small => "small",
            BudgetPreset::Medium => "medium",
            BudgetPreset::Large => "large",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "very-small" => Ok(BudgetPreset::VerySmall),
            "small" => Ok(BudgetPreset::Small),
            "medium" => Ok(BudgetPreset::Medium),
            "large" => Ok(BudgetPreset::Large),
            other => Err(Error::Config(format!("unknown budget preset {other:?}"))),
        }
    }

    /// LHS sample size of the random-search baseline.
    pub fn random_sample_size(self) -> usize {
        match self {
            BudgetPreset::VerySmall => 60,
            BudgetPreset::Small => 125,
            BudgetPreset::Medium => 500,
            BudgetPreset::Large => 2000,
        }
    }

    /// (iterations, pop size) of the full-set optimizer.
    pub fn naive_params(self) -> (usize, usize) {
        match self {
            BudgetPreset::VerySmall => (12, 5),
            BudgetPreset::Small => (25, 5),
            BudgetPreset::Medium => (50, 10),
            BudgetPreset::Large => (100, 20),
        }
    }

    /// (iterations, pop size) of each of the two optimizer runs.
    pub fn two_step_params(self) -> (usize, usize) {
        match self {
            BudgetPreset::VerySmall => (42, 9),
            BudgetPreset::Small => (71, 14),
            BudgetPreset::Medium => (152, 30),
            BudgetPreset::Large => (308, 61),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Naive,
    TwoStep,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Naive, Strategy::TwoStep];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Naive => "naive",
            Strategy::TwoStep => "two-step",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "random" => Ok(Strategy::Random),
            "naive" => Ok(Strategy::Naive),
            "two-step" => Ok(Strategy::TwoStep),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Closed-form simulator-call count of a (strategy, preset) cell.
pub fn budget_total(
    strategy: Strategy,
    preset: BudgetPreset,
    n_climate: u64,
    k: u64,
    basis_size: u64,
) -> u64 {
    match strategy {
        Strategy::Random => preset.random_sample_size() as u64 * n_climate,
        Strategy::Naive => {
            let (t, q) = preset.naive_params();
            (t as u64 + 1) * q as u64 * n_climate
        }
        Strategy::TwoStep => {
            let (t, q) = preset.two_step_params();
            2 * basis_size * n_climate + 2 * (t as u64 + 1) * q as u64 * k
        }
    }
}

//! End-to-end experiment orchestration: runs every (strategy, budget,
//! replication) cell on a shared climate set, re-scores the resulting
//! archives with full evaluation, compares them against a long-run
//! reference front and writes deterministic CSV/JSON reports.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::climate::{generate_climate, load_climate, ClimateSet, GeneratorConfig};
use crate::cropmodel::{
    write_phenotypes, Phenotype, PhenotypeBounds, ToyCropModel, TRAIT_NAMES,
};
use crate::error::{Error, Result};
use crate::indicators::{
    default_weight_vectors, epsilon_indicator, hypervolume, r2_indicator, Front,
};
use crate::moo::{
    budget_total, evaluate_full, mopso_cd, naive_mopso, pareto_filter, random_search,
    two_step, BudgetPreset, BudgetReport, FullEvaluator, ObjectivePoint, OptimizerConfig,
    ParetoArchive, Strategy, TwoStepConfig,
};
use crate::derive_seed;

/// Where the experiment's climate set comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClimateSource {
    File {
        path: PathBuf,
        season_length: usize,
    },
    Generate {
        config: GeneratorConfig,
    },
}

fn default_replications() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.2
}

fn default_reference_factor() -> u64 {
    20
}

/// Full description of one comparison experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub climate: ClimateSource,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<BudgetPreset>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Subset pipeline settings (basis size l, clustering K, DTW windows,
    /// combination weights, residual method) used by the two-step strategy.
    #[serde(default)]
    pub pipeline: TwoStepConfig,
    #[serde(default)]
    pub bounds: PhenotypeBounds,
    /// Reference-front budget as a multiple of the largest compared budget.
    #[serde(default = "default_reference_factor")]
    pub reference_budget_factor: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.strategies.is_empty() || self.budgets.is_empty() {
            return Err(Error::Config("need at least one strategy and one budget".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if self.reference_budget_factor == 0 {
            return Err(Error::Config("reference_budget_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_climate(&self, seed: u64) -> Result<ClimateSet> {
        match &self.climate {
            ClimateSource::File {
                path,
                season_length,
            } => load_climate(path, *season_length),
            ClimateSource::Generate { config } => generate_climate(config, seed),
        }
    }
}

/// One completed (strategy, budget, replication) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub preset: BudgetPreset,
    pub replication: usize,
    pub archive_file: String,
    pub archive_sha256: String,
    pub budget: BudgetReport,
    pub expected_budget: u64,
    pub hypervolume: f64,
    pub epsilon: f64,
    pub r2: f64,
}

/// One cell that failed; other cells proceed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellError {
    pub strategy: Strategy,
    pub preset: BudgetPreset,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub n_climate: usize,
    pub reference_front_file: String,
    pub reference_evaluations: u64,
    pub hypervolume_reference_point: (f64, f64),
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellError>,
}

/// (q1, median, q3) by linear interpolation on the sorted sample.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    Some((at(0.25), at(0.5), at(0.75)))
}

/// Archive CSV: one row per member, phenotype traits then objectives.
pub fn write_archive_csv(
    archive: &ParetoArchive,
    writer: &mut impl std::io::Write,
) -> Result<()> {
    writeln!(writer, "{},e,cvar", TRAIT_NAMES.join(","))?;
    for m in &archive.members {
        let traits: Vec<String> = m
            .phenotype
            .to_array()
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(writer, "{},{},{}", traits.join(","), m.e, m.cvar)?;
    }
    Ok(())
}

/// Reads an archive CSV back as objective pairs (phenotypes included).
pub fn read_archive_csv(path: impl AsRef<Path>) -> Result<Vec<ObjectivePoint>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    {
        let got: Vec<&str> = reader.headers()?.iter().collect();
        let want: Vec<&str> = TRAIT_NAMES.iter().copied().chain(["e", "cvar"]).collect();
        if got != want {
            return Err(Error::Config(format!(
                "bad archive CSV header {:?}, expected {:?}",
                got, want
            )));
        }
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cell = |i: usize| -> Result<f64> {
            record
                .get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Config("non-numeric archive CSV cell".into()))
        };
        let mut v = [0.0; 8];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = cell(i)?;
        }
        out.push(ObjectivePoint {
            phenotype: Phenotype::from_array(v),
            e: cell(8)?,
            cvar: cell(9)?,
            sims_used: 0,
        });
    }
    Ok(out)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn run_strategy(
    strategy: Strategy,
    preset: BudgetPreset,
    climate: &ClimateSet,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(ParetoArchive, BudgetReport)> {
    let sim = ToyCropModel::new(cfg.bounds.clone());
    match strategy {
        Strategy::Random => random_search(
            &sim,
            climate,
            &cfg.bounds,
            preset.random_sample_size(),
            cfg.alpha,
            seed,
        ),
        Strategy::Naive => {
            let (t, q) = preset.naive_params();
            let opt = OptimizerConfig::with_budget(t, q, seed, cfg.alpha);
            naive_mopso(&sim, climate, &cfg.bounds, &opt)
        }
        Strategy::TwoStep => {
            let (t, q) = preset.two_step_params();
            let opt = OptimizerConfig::with_budget(t, q, seed, cfg.alpha);
            two_step(&sim, climate, &cfg.bounds, &cfg.pipeline, &opt)
        }
    }
}

/// Re-scores archive phenotypes with full evaluation and re-filters, so
/// every strategy is compared on the same honest objective values.
fn rescore_full(
    archive: &ParetoArchive,
    climate: &ClimateSet,
    bounds: &PhenotypeBounds,
    alpha: f64,
) -> Result<ParetoArchive> {
    let sim = ToyCropModel::new(bounds.clone());
    let rescored: Vec<ObjectivePoint> = archive
        .phenotypes()
        .iter()
        .map(|x| evaluate_full(&sim, x, climate, alpha))
        .collect::<Result<_>>()?;
    Ok(pareto_filter(&rescored))
}

/// Long full-evaluation MOPSO-CD run standing in for an exact front; its
/// budget is `factor` times the largest compared budget. Approximate by
/// construction.
fn reference_front(
    climate: &ClimateSet,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(ParetoArchive, u64)> {
    let n = climate.len() as u64;
    let k = cfg.pipeline.cluster.k as u64;
    let l = cfg.pipeline.basis_size as u64;
    let largest = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.budgets.iter().map(move |&b| budget_total(s, b, n, k, l)))
        .max()
        .unwrap();
    let evaluations = (cfg.reference_budget_factor * largest / n).max(40);
    let q = 20usize;
    let iterations = (evaluations as usize / q).max(2) - 1;
    let sim = ToyCropModel::new(cfg.bounds.clone());
    let evaluator = FullEvaluator {
        sim: &sim,
        climate,
        alpha: cfg.alpha,
    };
    let opt = OptimizerConfig {
        pop_size: q,
        iterations,
        seed,
        alpha: cfg.alpha,
        archive_capacity: Some(100),
        ..OptimizerConfig::default()
    };
    let (archive, evals) = mopso_cd(&evaluator, &cfg.bounds, &opt)?;
    Ok((archive, evals * n))
}

/// Hypervolume reference point: componentwise worst over all fronts, pushed
/// out by a 1% margin of the observed range so every point strictly
/// dominates it.
fn hypervolume_reference(fronts: &[&ParetoArchive]) -> (f64, f64) {
    let mut worst = (f64::INFINITY, f64::INFINITY);
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for f in fronts {
        for m in &f.members {
            worst.0 = worst.0.min(m.e);
            worst.1 = worst.1.min(m.cvar);
            best.0 = best.0.max(m.e);
            best.1 = best.1.max(m.cvar);
        }
    }
    let margin = |w: f64, b: f64| w - (0.01 * (b - w)).max(1e-9);
    (margin(worst.0, best.0), margin(worst.1, best.1))
}

fn ideal_point(fronts: &[&ParetoArchive]) -> (f64, f64) {
    let mut ideal = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for f in fronts {
        for m in &f.members {
            ideal.0 = ideal.0.max(m.e);
            ideal.1 = ideal.1.max(m.cvar);
        }
    }
    ideal
}

/// Runs the full experiment grid and writes all report files into
/// `out_dir`. Everything is a pure function of (config, master seed).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    master_seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let archives_dir = out_dir.join("archives");
    std::fs::create_dir_all(&archives_dir)?;

    let climate = cfg.resolve_climate(derive_seed(master_seed, &[0]))?;

    let (reference, reference_evaluations) =
        reference_front(&climate, cfg, derive_seed(master_seed, &[1]))?;
    let reference_file = out_dir.join("reference_front.csv");
    {
        let mut buf = Vec::new();
        write_archive_csv(&reference, &mut buf)?;
        std::fs::write(&reference_file, buf)?;
    }

    // run every cell first; indicators need the pooled worst/best values
    struct RawCell {
        strategy: Strategy,
        preset: BudgetPreset,
        replication: usize,
        rescored: ParetoArchive,
        budget: BudgetReport,
        expected_budget: u64,
        archive_file: String,
        archive_sha256: String,
    }
    let mut raw: Vec<RawCell> = Vec::new();
    let mut failures: Vec<CellError> = Vec::new();

    let n = climate.len() as u64;
    let k = cfg.pipeline.cluster.k as u64;
    let l = cfg.pipeline.basis_size as u64;
    for (si, &strategy) in cfg.strategies.iter().enumerate() {
        for (bi, &preset) in cfg.budgets.iter().enumerate() {
            for rep in 0..cfg.replications {
                let seed =
                    derive_seed(master_seed, &[2, si as u64, bi as u64, rep as u64]);
                let cell = (|| -> Result<RawCell> {
                    let (archive, budget) =
                        run_strategy(strategy, preset, &climate, cfg, seed)?;
                    let rescored =
                        rescore_full(&archive, &climate, &cfg.bounds, cfg.alpha)?;
                    let file_name =
                        format!("{}-{}-rep{:02}.csv", strategy.name(), preset.name(), rep);
                    let path = archives_dir.join(&file_name);
                    let mut buf = Vec::new();
                    write_archive_csv(&rescored, &mut buf)?;
                    std::fs::write(&path, buf)?;
                    Ok(RawCell {
                        strategy,
                        preset,
                        replication: rep,
                        rescored,
                        budget,
                        expected_budget: budget_total(strategy, preset, n, k, l),
                        archive_sha256: sha256_file(&path)?,
                        archive_file: format!("archives/{file_name}"),
                    })
                })();
                match cell {
                    Ok(c) => raw.push(c),
                    Err(e) => failures.push(CellError {
                        strategy,
                        preset,
                        replication: rep,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }

    // indicator scaffolding shared by every cell
    let mut all_fronts: Vec<&ParetoArchive> = raw.iter().map(|c| &c.rescored).collect();
    all_fronts.push(&reference);
    let hv_ref = hypervolume_reference(&all_fronts);
    let ideal = ideal_point(&all_fronts);
    let weight_vectors = default_weight_vectors();
    let reference_front_obj = Front::new(&reference.objective_pairs())?;

    let mut cells = Vec::with_capacity(raw.len());
    for c in raw {
        let front = Front::new(&c.rescored.objective_pairs())?;
        cells.push(CellResult {
            strategy: c.strategy,
            preset: c.preset,
            replication: c.replication,
            archive_file: c.archive_file,
            archive_sha256: c.archive_sha256,
            hypervolume: hypervolume(&front, hv_ref)?,
            epsilon: epsilon_indicator(&front, &reference_front_obj),
            r2: r2_indicator(&front, &weight_vectors, ideal)?,
            budget: c.budget,
            expected_budget: c.expected_budget,
        });
    }

    let report = ExperimentReport {
        master_seed,
        n_climate: climate.len(),
        reference_front_file: "reference_front.csv".into(),
        reference_evaluations,
        hypervolume_reference_point: hv_ref,
        cells,
        failures,
    };
    write_report_files(&report, out_dir)?;
    Ok(report)
}

fn write_report_files(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    // budget audit, JSON
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;

    // per-run indicator table, CSV
    let mut ind = Vec::new();
    writeln!(
        ind,
        "strategy,preset,replication,archive,sha256,simulations,expected_simulations,hypervolume,epsilon,r2"
    )?;
    for c in &report.cells {
        writeln!(
            ind,
            "{},{},{},{},{},{},{},{},{},{}",
            c.strategy.name(),
            c.preset.name(),
            c.replication,
            c.archive_file,
            c.archive_sha256,
            c.budget.total,
            c.expected_budget,
            c.hypervolume,
            c.epsilon,
            c.r2
        )?;
    }
    for f in &report.failures {
        writeln!(
            ind,
            "{},{},{},FAILED: {},,,,,,",
            f.strategy.name(),
            f.preset.name(),
            f.replication,
            f.message.replace(',', ";")
        )?;
    }
    std::fs::write(out_dir.join("indicators.csv"), ind)?;

    // per-cell medians and quartiles, CSV
    let mut summary = Vec::new();
    writeln!(summary, "strategy,preset,metric,q1,median,q3,runs")?;
    for &strategy in Strategy::ALL.iter() {
        for &preset in BudgetPreset::ALL.iter() {
            let cell: Vec<&CellResult> = report
                .cells
                .iter()
                .filter(|c| c.strategy == strategy && c.preset == preset)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let metrics: [(&str, Vec<f64>); 3] = [
                ("hypervolume", cell.iter().map(|c| c.hypervolume).collect()),
                ("epsilon", cell.iter().map(|c| c.epsilon).collect()),
                ("r2", cell.iter().map(|c| c.r2).collect()),
            ];
            for (name, values) in metrics {
                let (q1, med, q3) = quartiles(&values).unwrap();
                writeln!(
                    summary,
                    "{},{},{},{},{},{},{}",
                    strategy.name(),
                    preset.name(),
                    name,
                    q1,
                    med,
                    q3,
                    values.len()
                )?;
            }
        }
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}

/// Writes the default experiment configuration with every constant
/// explicit, as shipped in `experiment.example.json`.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        climate: ClimateSource::Generate {
            config: GeneratorConfig::default_five_sites(),
        },
        strategies: Strategy::ALL.to_vec(),
        budgets: BudgetPreset::ALL.to_vec(),
        replications: 10,
        alpha: 0.2,
        pipeline: TwoStepConfig::default(),
        bounds: PhenotypeBounds::default(),
        reference_budget_factor: 20,
    }
}

/// Convenience used by the CLI `simulate` round trip in tests.
pub fn write_phenotype_file(
    phenotypes: &[Phenotype],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_phenotypes(phenotypes, &mut buf)?;
    std::fs::write(path.as_ref(), buf)?;
    Ok(())
}

//! Command-line front end: climate generation, yield simulation,
//! dissimilarities, clustering, reconstruction, optimization, front
//! evaluation and full experiment runs.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use phenopt::climate::{generate_climate, load_climate, write_climate_file, GeneratorConfig};
use phenopt::cluster::{relational_kmeans, ClusteringConfig};
use phenopt::cropmodel::{
    load_phenotypes, yield_matrix, PhenotypeBounds, ToyCropModel, YieldMatrix,
};
use phenopt::dissim::{
    combine, cosine_normalize, model_dissim, variable_dissim, DissimWeights,
    DissimilarityMatrix, DtwConfig,
};
use phenopt::error::{Error, Result};
use phenopt::experiment::{
    example_config, read_archive_csv, run_experiment, write_archive_csv, ExperimentConfig,
};
use phenopt::indicators::{
    default_weight_vectors, epsilon_indicator, hypervolume, r2_indicator, Front,
};
use phenopt::moo::{
    naive_mopso, random_search, two_step, BudgetPreset, OptimizerConfig, ParetoArchive,
    Strategy, TwoStepConfig,
};

#[derive(Parser)]
#[command(
    name = "phenopt",
    about = "Robust phenotype optimization under climatic uncertainty",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic climate set from a generator config.
    GenClimate {
        /// Generator config JSON (sites, years_per_site, season_length).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output climate CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate phenotypes over a climate set into a yield matrix CSV.
    Simulate {
        /// Climate CSV (series_id,day,tmin,tmax,rad,etp,rain).
        #[arg(long)]
        climate: PathBuf,
        /// Phenotype CSV (tdf1,tdm3,tln,k,llh,lls,le,tr).
        #[arg(long)]
        phenotypes: PathBuf,
        #[arg(long, default_value_t = 180)]
        season_length: usize,
        /// Output yield matrix CSV (series ids as header).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the combined dissimilarity matrix of a climate set.
    Dissim {
        #[arg(long)]
        climate: PathBuf,
        /// Yield matrix CSV of the phenotype basis over the same series.
        #[arg(long)]
        basis_yields: PathBuf,
        /// Optional weights JSON; defaults to model 1/2, variables 1/10.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        default_window: usize,
        #[arg(long, default_value_t = 3)]
        rain_window: usize,
        #[arg(long, default_value_t = 180)]
        season_length: usize,
        /// Output CSV for the combined matrix.
        #[arg(long)]
        out: PathBuf,
        /// Also write the six normalized intermediate matrices here.
        #[arg(long)]
        intermediates: Option<PathBuf>,
    },
    /// Relational k-means on a dissimilarity matrix CSV.
    Cluster {
        #[arg(long)]
        dissim: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long)]
        seed: u64,
        /// Output JSON (assignment, class sizes, representative ids, energy).
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a yield distribution and print E, Q_alpha and CVaR_alpha.
    Reconstruct {
        /// Representative yields CSV: header `yield`, one value per class.
        #[arg(long)]
        rep_yields: PathBuf,
        /// Residual table JSON as produced by the library.
        #[arg(long)]
        residuals: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// naive or rescaled; must match the residual table.
        #[arg(long, default_value = "rescaled")]
        method: String,
    },
    /// Run one optimization strategy at a budget preset.
    Optimize {
        /// random, naive or two-step.
        #[arg(long)]
        strategy: String,
        /// very-small, small, medium or large.
        #[arg(long)]
        budget_preset: String,
        #[arg(long)]
        climate: PathBuf,
        #[arg(long, default_value_t = 180)]
        season_length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// Output directory (archive.csv + budget.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score approximation fronts against a reference front.
    Evaluate {
        /// Front archive CSVs to score.
        #[arg(long, num_args = 1.., required = true)]
        fronts: Vec<PathBuf>,
        /// Reference front archive CSV.
        #[arg(long)]
        reference: PathBuf,
        /// Output indicator CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full comparison experiment grid from a config file.
    Run {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory for archives and reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default experiment config with every constant explicit.
    ExampleConfig {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_weights(path: &Option<PathBuf>) -> Result<DissimWeights> {
    match path {
        None => Ok(DissimWeights::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let w: DissimWeights = serde_json::from_str(&text)?;
            w.validate()?;
            Ok(w)
        }
    }
}

fn front_from_archive(path: &PathBuf) -> Result<Front> {
    let points = read_archive_csv(path)?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.e, p.cvar)).collect();
    Front::new(&pairs)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenClimate { config, seed, out } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: GeneratorConfig = serde_json::from_str(&text)?;
            let set = generate_climate(&cfg, seed)?;
            write_climate_file(&set, &out)?;
            println!(
                "wrote {} series x {} days to {}",
                set.len(),
                set.season_length(),
                out.display()
            );
        }
        Command::Simulate {
            climate,
            phenotypes,
            season_length,
            out,
        } => {
            let set = load_climate(&climate, season_length)?;
            let xs = load_phenotypes(&phenotypes)?;
            let sim = ToyCropModel::default();
            let ym = yield_matrix(&sim, &xs, &set)?;
            let mut buf = Vec::new();
            ym.write_csv(&mut buf)?;
            std::fs::write(&out, buf)?;
            println!(
                "wrote {} x {} yield matrix to {} ({} simulator calls)",
                ym.n_rows(),
                ym.n_cols(),
                out.display(),
                sim.counter().get()
            );
        }
        Command::Dissim {
            climate,
            basis_yields,
            weights,
            default_window,
            rain_window,
            season_length,
            out,
            intermediates,
        } => {
            let set = load_climate(&climate, season_length)?;
            let yields = YieldMatrix::read_csv(&basis_yields)?;
            if yields.col_ids() != set.ids() {
                return Err(Error::Config(
                    "basis yield columns do not match the climate series ids".into(),
                ));
            }
            let w = load_weights(&weights)?;
            let dtw_cfg = DtwConfig {
                default_window,
                rain_window,
            };
            let per_var = variable_dissim(&set, &dtw_cfg)?;
            let model = model_dissim(&yields)?;
            let normalized: Vec<(String, DissimilarityMatrix)> = per_var
                .iter()
                .map(|(var, m)| Ok((var.name().to_string(), cosine_normalize(m)?)))
                .chain(std::iter::once(
                    cosine_normalize(&model).map(|m| ("model".to_string(), m)),
                ))
                .collect::<Result<_>>()?;
            if let Some(dir) = &intermediates {
                std::fs::create_dir_all(dir)?;
                for (name, m) in &normalized {
                    let mut buf = Vec::new();
                    m.write_csv(&mut buf)?;
                    std::fs::write(dir.join(format!("{name}.csv")), buf)?;
                }
            }
            let refs: [&DissimilarityMatrix; 6] = [
                &normalized[0].1,
                &normalized[1].1,
                &normalized[2].1,
                &normalized[3].1,
                &normalized[4].1,
                &normalized[5].1,
            ];
            let combined = combine(&refs, &w)?;
            let mut buf = Vec::new();
            combined.write_csv(&mut buf)?;
            std::fs::write(&out, buf)?;
            println!("wrote {}x{} combined matrix to {}", combined.n(), combined.n(), out.display());
        }
        Command::Cluster {
            dissim,
            k,
            iters,
            restarts,
            seed,
            out,
        } => {
            let delta = DissimilarityMatrix::read_csv(&dissim)?;
            let cfg = ClusteringConfig {
                k,
                iterations: iters,
                restarts,
                seed,
                ..ClusteringConfig::default()
            };
            let model = relational_kmeans(&delta, &cfg)?;
            let representative_ids: Vec<&String> = model
                .representatives
                .iter()
                .map(|&r| &delta.labels()[r])
                .collect();
            let output = serde_json::json!({
                "k": model.k(),
                "assignment": &model.assignment,
                "class_sizes": &model.class_sizes,
                "representatives": &model.representatives,
                "representative_ids": representative_ids,
                "energy": model.energy,
                "model": &model,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&output)?)?;
            println!(
                "clustered {} elements into {} classes (energy {}), wrote {}",
                model.n(),
                model.k(),
                model.energy,
                out.display()
            );
        }
        Command::Reconstruct {
            rep_yields,
            residuals,
            alpha,
            method,
        } => {
            use phenopt::reconstruct::{
                cvar_eq, expectation_eq, quantile, reconstruct_sample, ResidualMethod,
                ResidualTable,
            };
            let method = match method.as_str() {
                "naive" => ResidualMethod::Naive,
                "rescaled" => ResidualMethod::Rescaled,
                other => {
                    return Err(Error::Config(format!(
                        "unknown method {other:?}, expected naive or rescaled"
                    )))
                }
            };
            let table: ResidualTable =
                serde_json::from_str(&std::fs::read_to_string(&residuals)?)?;
            if table.method != method {
                return Err(Error::Config(format!(
                    "residual table was built with method {:?}",
                    table.method
                )));
            }
            let mut reader = csv::Reader::from_path(&rep_yields)?;
            let mut values = Vec::new();
            for record in reader.records() {
                let record = record?;
                values.push(record.get(0).unwrap_or("").trim().parse::<f64>().map_err(
                    |_| Error::Config("non-numeric representative yield".into()),
                )?);
            }
            let rec = reconstruct_sample(&values, &table)?;
            let atoms = rec.values();
            let weights = vec![1.0; atoms.len()];
            println!("E = {}", expectation_eq(&atoms)?);
            println!("Q_{alpha} = {}", quantile(&atoms, &weights, alpha)?);
            println!("CVaR_{alpha} = {}", cvar_eq(&atoms, alpha)?);
            if rec.clamped > 0 {
                println!("({} atoms clamped to zero)", rec.clamped);
            }
            if rec.fell_back_to_naive {
                println!("(degenerate query spread: fell back to naive residuals)");
            }
        }
        Command::Optimize {
            strategy,
            budget_preset,
            climate,
            season_length,
            seed,
            alpha,
            out,
        } => {
            let strategy = Strategy::parse(&strategy)?;
            let preset = BudgetPreset::parse(&budget_preset)?;
            let set = load_climate(&climate, season_length)?;
            let bounds = PhenotypeBounds::default();
            let sim = ToyCropModel::default();
            let (archive, report): (ParetoArchive, _) = match strategy {
                Strategy::Random => random_search(
                    &sim,
                    &set,
                    &bounds,
                    preset.random_sample_size(),
                    alpha,
                    seed,
                )?,
                Strategy::Naive => {
                    let (t, q) = preset.naive_params();
                    naive_mopso(
                        &sim,
                        &set,
                        &bounds,
                        &OptimizerConfig::with_budget(t, q, seed, alpha),
                    )?
                }
                Strategy::TwoStep => {
                    let (t, q) = preset.two_step_params();
                    two_step(
                        &sim,
                        &set,
                        &bounds,
                        &TwoStepConfig::default(),
                        &OptimizerConfig::with_budget(t, q, seed, alpha),
                    )?
                }
            };
            std::fs::create_dir_all(&out)?;
            let mut buf = Vec::new();
            write_archive_csv(&archive, &mut buf)?;
            std::fs::write(out.join("archive.csv"), buf)?;
            std::fs::write(
                out.join("budget.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            println!(
                "{} / {}: {} front points, {} simulator calls (audited {}), wrote {}",
                strategy.name(),
                preset.name(),
                archive.len(),
                report.total,
                sim.counter().get(),
                out.display()
            );
        }
        Command::Evaluate {
            fronts,
            reference,
            out,
        } => {
            let reference_front = front_from_archive(&reference)?;
            let approx: Vec<(String, Front)> = fronts
                .iter()
                .map(|p| Ok((p.display().to_string(), front_from_archive(p)?)))
                .collect::<Result<_>>()?;
            // shared reference point and ideal over everything compared
            let mut worst = (f64::INFINITY, f64::INFINITY);
            let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for f in approx
                .iter()
                .map(|(_, f)| f)
                .chain(std::iter::once(&reference_front))
            {
                for &(e, c) in f.points() {
                    worst = (worst.0.min(e), worst.1.min(c));
                    best = (best.0.max(e), best.1.max(c));
                }
            }
            let margin = |w: f64, b: f64| w - (0.01 * (b - w)).max(1e-9);
            let hv_ref = (margin(worst.0, best.0), margin(worst.1, best.1));
            let vectors = default_weight_vectors();
            let mut buf = String::from("front,hypervolume,epsilon,r2\n");
            for (name, f) in &approx {
                buf.push_str(&format!(
                    "{},{},{},{}\n",
                    name,
                    hypervolume(f, hv_ref)?,
                    epsilon_indicator(f, &reference_front),
                    r2_indicator(f, &vectors, best)?,
                ));
            }
            std::fs::write(&out, buf)?;
            println!(
                "scored {} fronts against {} (reference point {:?}), wrote {}",
                approx.len(),
                reference.display(),
                hv_ref,
                out.display()
            );
        }
        Command::Run { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, seed, &out)?;
            println!(
                "ran {} cells ({} failed), reports in {}",
                report.cells.len() + report.failures.len(),
                report.failures.len(),
                out.display()
            );
        }
        Command::ExampleConfig { out } => {
            let text = serde_json::to_string_pretty(&example_config())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text)?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

//! Simulator interface, a deterministic toy crop model, yield-matrix
//! evaluation and Latin Hypercube phenotype sampling.
//!
//! The toy model maps (8 phenotypic traits, one climate series) to an
//! annual yield in t/ha through thermal time, a daily water balance,
//! logistic water-stress responses, a triangular leaf-area profile,
//! radiation-driven biomass accumulation and a stress-dependent harvest
//! index. Its constants are fixed plumbing chosen so yields land in a
//! plausible 0-6 t/ha range and rainfall timing matters; any simulator
//! with the same (parameters, series) -> scalar signature can be
//! substituted behind [`YieldSimulator`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::climate::{ClimateSeries, ClimateSet};
use crate::error::{Error, Result};
use crate::derive_seed;

pub const TRAIT_COUNT: usize = 8;

pub const TRAIT_NAMES: [&str; TRAIT_COUNT] =
    ["tdf1", "tdm3", "tln", "k", "llh", "lls", "le", "tr"];

/// A sunflower cultivar: eight phenotypic trait values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phenotype {
    /// Temperature sum from emergence to flowering, °C·day.
    pub tdf1: f64,
    /// Temperature sum from emergence to maturity, °C·day.
    pub tdm3: f64,
    /// Number of leaves at flowering.
    pub tln: f64,
    /// Light extinction coefficient.
    pub k: f64,
    /// Rank of the largest leaf.
    pub llh: f64,
    /// Area of the largest leaf, cm².
    pub lls: f64,
    /// Water-stress threshold for leaf expansion (negative).
    pub le: f64,
    /// Water-stress threshold for stomatal conductance (negative).
    pub tr: f64,
}

impl Phenotype {
    pub fn from_array(v: [f64; TRAIT_COUNT]) -> Self {
        Phenotype {
            tdf1: v[0],
            tdm3: v[1],
            tln: v[2],
            k: v[3],
            llh: v[4],
            lls: v[5],
            le: v[6],
            tr: v[7],
        }
    }

    pub fn to_array(self) -> [f64; TRAIT_COUNT] {
        [
            self.tdf1, self.tdm3, self.tln, self.k, self.llh, self.lls, self.le,
            self.tr,
        ]
    }
}

/// Per-trait [min, max] intervals; defaults are the reference optimization
/// bounds for the eight traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeBounds {
    pub lower: [f64; TRAIT_COUNT],
    pub upper: [f64; TRAIT_COUNT],
}

impl Default for PhenotypeBounds {
    fn default() -> Self {
        PhenotypeBounds {
            lower: [765.0, 1540.0, 22.2, 0.780, 13.5, 334.0, -15.6, -14.2],
            upper: [907.0, 1830.0, 36.7, 0.950, 20.6, 670.0, -2.31, -5.81],
        }
    }
}

impl PhenotypeBounds {
    pub fn new(lower: [f64; TRAIT_COUNT], upper: [f64; TRAIT_COUNT]) -> Result<Self> {
        for i in 0..TRAIT_COUNT {
            if !(lower[i] < upper[i]) {
                return Err(Error::Config(format!(
                    "trait {}: min {} not below max {}",
                    TRAIT_NAMES[i], lower[i], upper[i]
                )));
            }
        }
        Ok(PhenotypeBounds { lower, upper })
    }

    pub fn validate(&self, x: &Phenotype) -> Result<()> {
        let v = x.to_array();
        for i in 0..TRAIT_COUNT {
            if !v[i].is_finite() || v[i] < self.lower[i] || v[i] > self.upper[i] {
                return Err(Error::PhenotypeOutOfBounds {
                    trait_name: TRAIT_NAMES[i],
                    value: v[i],
                    min: self.lower[i],
                    max: self.upper[i],
                });
            }
        }
        Ok(())
    }

    pub fn clip(&self, v: &mut [f64; TRAIT_COUNT]) {
        for i in 0..TRAIT_COUNT {
            v[i] = v[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn midpoint(&self) -> Phenotype {
        let mut v = [0.0; TRAIT_COUNT];
        for i in 0..TRAIT_COUNT {
            v[i] = 0.5 * (self.lower[i] + self.upper[i]);
        }
        Phenotype::from_array(v)
    }
}

/// Anything that maps (phenotype, climate series) to a yield.
pub trait YieldSimulator: Sync {
    fn simulate(&self, x: &Phenotype, c: &ClimateSeries) -> Result<f64>;

    /// Total simulator calls so far.
    fn calls(&self) -> u64;
}

/// Shared atomic simulator-call counter; the final value is independent of
/// evaluation order.
#[derive(Debug, Clone, Default)]
pub struct SimulationCounter(Arc<AtomicU64>);

impl SimulationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

// Toy model constants. Fixed; see module docs.
const BASE_TEMP: f64 = 4.8;
const W_INIT: f64 = 100.0;
const W_MAX: f64 = 150.0;
const PSI_MIN: f64 = -15.0;
const LOGISTIC_SLOPE: f64 = 1.2;
const RUE: f64 = 2.2;
const PAR_FRACTION: f64 = 0.48;
const HI_CAP: f64 = 0.4;
const DENSITY_FACTOR: f64 = 0.5 * 7e-4;
const G_PER_M2_TO_T_PER_HA: f64 = 0.01;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The toy crop model, with bounds validation and call counting.
#[derive(Debug, Clone)]
pub struct ToyCropModel {
    bounds: PhenotypeBounds,
    counter: SimulationCounter,
}

impl Default for ToyCropModel {
    fn default() -> Self {
        ToyCropModel {
            bounds: PhenotypeBounds::default(),
            counter: SimulationCounter::new(),
        }
    }
}

impl ToyCropModel {
    pub fn new(bounds: PhenotypeBounds) -> Self {
        ToyCropModel {
            bounds,
            counter: SimulationCounter::new(),
        }
    }

    pub fn bounds(&self) -> &PhenotypeBounds {
        &self.bounds
    }

    pub fn counter(&self) -> &SimulationCounter {
        &self.counter
    }
}

impl YieldSimulator for ToyCropModel {
    fn simulate(&self, x: &Phenotype, c: &ClimateSeries) -> Result<f64> {
        self.bounds.validate(x)?;
        self.counter.increment();
        Ok(toy_yield(x, c))
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}

/// Raw toy yield function, deterministic and pure. See module docs for the
/// stage-by-stage contract.
pub fn toy_yield(x: &Phenotype, c: &ClimateSeries) -> f64 {
    let days = &c.days;
    let season_len = days.len();

    // thermal time and phenological stages
    let mut thermal = vec![0.0; season_len];
    let mut acc = 0.0;
    for (t, d) in days.iter().enumerate() {
        acc += (0.5 * (d.tmin + d.tmax) - BASE_TEMP).max(0.0);
        thermal[t] = acc;
    }
    let flowering = match thermal.iter().position(|&tt| tt >= x.tdf1) {
        Some(t) => t + 1, // 1-based day index
        None => return 0.0,
    };
    let maturity = thermal
        .iter()
        .position(|&tt| tt >= x.tdm3)
        .map(|t| t + 1)
        .unwrap_or(season_len)
        .min(season_len);

    // potential leaf area: triangular, 0 at day 1, peak at flowering, 0 at maturity
    let lai_max =
        DENSITY_FACTOR * x.tln * x.lls * (1.0 - (x.llh / x.tln - 0.55).abs());
    let potential_lai = |day: usize| -> f64 {
        if day <= flowering {
            if flowering == 1 {
                lai_max
            } else {
                lai_max * (day - 1) as f64 / (flowering - 1) as f64
            }
        } else if day <= maturity {
            if maturity == flowering {
                0.0
            } else {
                lai_max * (maturity - day) as f64 / (maturity - flowering) as f64
            }
        } else {
            0.0
        }
    };

    // daily water balance with stress feedback
    let mut water = W_INIT;
    let mut sum_s_le = 0.0;
    let mut s_tr_by_day = vec![0.0; season_len];
    let mut biomass = 0.0;
    for (t, d) in days.iter().enumerate() {
        let day = t + 1;
        let ftsw = water / W_MAX;
        let psi = PSI_MIN * (1.0 - ftsw);
        let s_le = logistic(LOGISTIC_SLOPE * (psi - x.le));
        let s_tr = logistic(LOGISTIC_SLOPE * (psi - x.tr));
        s_tr_by_day[t] = s_tr;
        sum_s_le += s_le;
        let lai = potential_lai(day) * (sum_s_le / day as f64);
        if day <= maturity {
            biomass += RUE * s_tr * (1.0 - (-x.k * lai).exp()) * PAR_FRACTION * d.rad;
        }
        let demand = d.etp * (lai / 3.0).min(1.0) * s_tr;
        water = (water + d.rain - demand).clamp(0.0, W_MAX);
    }

    // harvest index from stress around flowering
    let lo = flowering.saturating_sub(10).max(1);
    let hi = (flowering + 10).min(season_len);
    let window: f64 = s_tr_by_day[lo - 1..hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    let harvest_index = HI_CAP * window.sqrt();

    G_PER_M2_TO_T_PER_HA * harvest_index * biomass
}

/// Matrix of yields for a set of phenotypes over a climate set.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    col_ids: Vec<String>,
}

impl YieldMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, col_ids: Vec<String>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = col_ids.len();
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in &rows {
            if r.len() != n_cols {
                return Err(Error::Config("ragged yield matrix".into()));
            }
            values.extend_from_slice(r);
        }
        Ok(YieldMatrix {
            values,
            n_rows,
            n_cols,
            col_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn write_csv(&self, writer: &mut impl std::io::Write) -> Result<()> {
        writeln!(writer, "{}", self.col_ids.join(","))?;
        for i in 0..self.n_rows {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(writer, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV format `write_csv` emits (series ids as header).
    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let col_ids: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: Vec<f64> = record
                .iter()
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("non-numeric yield cell {:?}", cell))
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        YieldMatrix::from_rows(rows, col_ids)
    }
}

/// Evaluates every (phenotype, series) pair. Entry (i, j) is the yield of
/// phenotype i under series j; errors carry the failing (i, j).
pub fn yield_matrix(
    sim: &dyn YieldSimulator,
    phenotypes: &[Phenotype],
    climate: &ClimateSet,
) -> Result<YieldMatrix> {
    if phenotypes.is_empty() {
        return Err(Error::Config("empty phenotype set".into()));
    }
    let mut rows = Vec::with_capacity(phenotypes.len());
    for (i, x) in phenotypes.iter().enumerate() {
        let mut row = Vec::with_capacity(climate.len());
        for (j, c) in climate.series().iter().enumerate() {
            let y = sim.simulate(x, c).map_err(|e| {
                Error::Config(format!("yield matrix entry ({i}, {j}): {e}"))
            })?;
            row.push(y);
        }
        rows.push(row);
    }
    YieldMatrix::from_rows(rows, climate.ids())
}

/// Latin Hypercube sample of `n` phenotypes: for every trait the n values
/// occupy n distinct equal-width strata, one point per stratum.
pub fn lhs_sample(bounds: &PhenotypeBounds, n: usize, seed: u64) -> Result<Vec<Phenotype>> {
    if n == 0 {
        return Err(Error::Config("LHS sample size must be positive".into()));
    }
    let mut points = vec![[0.0; TRAIT_COUNT]; n];
    for trait_idx in 0..TRAIT_COUNT {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[trait_idx as u64]));
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let width = (bounds.upper[trait_idx] - bounds.lower[trait_idx]) / n as f64;
        for (point, &stratum) in points.iter_mut().zip(strata.iter()) {
            let u: f64 = rng.gen(); // in [0, 1)
            point[trait_idx] = bounds.lower[trait_idx] + (stratum as f64 + u) * width;
        }
    }
    Ok(points.into_iter().map(Phenotype::from_array).collect())
}

/// Reads a phenotype CSV with header `tdf1,tdm3,tln,k,llh,lls,le,tr`.
pub fn load_phenotypes(path: impl AsRef<std::path::Path>) -> Result<Vec<Phenotype>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    {
        let got: Vec<&str> = reader.headers()?.iter().collect();
        if got != TRAIT_NAMES {
            return Err(Error::Config(format!(
                "bad phenotype CSV header {:?}, expected {:?}",
                got, TRAIT_NAMES
            )));
        }
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut v = [0.0; TRAIT_COUNT];
        for i in 0..TRAIT_COUNT {
            v[i] = record
                .get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("non-numeric {} value", TRAIT_NAMES[i])))?;
        }
        out.push(Phenotype::from_array(v));
    }
    Ok(out)
}

pub fn write_phenotypes(phenotypes: &[Phenotype], writer: &mut impl std::io::Write) -> Result<()> {
    writeln!(writer, "{}", TRAIT_NAMES.join(","))?;
    for x in phenotypes {
        let row: Vec<String> = x.to_array().iter().map(|v| v.to_string()).collect();
        writeln!(writer, "{}", row.join(","))?;
    }
    Ok(())
}

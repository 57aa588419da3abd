//! Pairwise dissimilarities between climate series: banded DTW per weather
//! variable, a model-based yield distance, cosine-preprocessing
//! normalization and the weighted convex combination of the six.

use serde::{Deserialize, Serialize};

use crate::climate::{ClimateSet, WeatherVar};
use crate::cropmodel::YieldMatrix;
use crate::error::{Error, Result};
use crate::EPS_NUM;

/// Which pipeline stage a matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissimKind {
    Tmin,
    Tmax,
    Rad,
    Etp,
    Rain,
    Model,
    Normalized,
    Combined,
}

/// Symmetric N x N dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
    kind: DissimKind,
}

impl DissimilarityMatrix {
    /// Builds from the strict upper triangle via `f(i, j)` for i < j.
    pub fn from_fn(
        labels: Vec<String>,
        kind: DissimKind,
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j)?;
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Dissim(format!(
                        "entry ({i}, {j}) = {d} is negative or non-finite"
                    )));
                }
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(DissimilarityMatrix {
            labels,
            values,
            kind,
        })
    }

    pub fn from_values(labels: Vec<String>, kind: DissimKind, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(Error::Dissim("matrix size mismatch".into()));
        }
        let m = DissimilarityMatrix {
            labels,
            values,
            kind,
        };
        m.check_valid()?;
        Ok(m)
    }

    fn check_valid(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::Dissim(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Dissim(format!(
                        "entry ({i}, {j}) = {v} is negative or non-finite"
                    )));
                }
                if v != self.get(j, i) {
                    return Err(Error::Dissim(format!("asymmetry at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kind(&self) -> DissimKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n()..(i + 1) * self.n()]
    }

    /// Sum of row i restricted to the given column indices.
    pub fn row_sum_over(&self, i: usize, cols: &[usize]) -> f64 {
        cols.iter().map(|&j| self.get(i, j)).sum()
    }

    /// Relabels/reorders elements by `perm`, where output element p holds
    /// what input element `perm[p]` held.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::Dissim("permutation length mismatch".into()));
        }
        let labels = perm.iter().map(|&i| self.labels[i].clone()).collect();
        DissimilarityMatrix::from_fn(labels, self.kind, |i, j| {
            Ok(self.get(perm[i], perm[j]))
        })
    }

    pub fn write_csv(&self, writer: &mut impl std::io::Write) -> Result<()> {
        writeln!(writer, "id,{}", self.labels.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(writer, "{},{}", self.labels[i], row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let labels: Vec<String> = reader
            .headers()?
            .iter()
            .skip(1)
            .map(|s| s.to_string())
            .collect();
        let n = labels.len();
        let mut values = Vec::with_capacity(n * n);
        for record in reader.records() {
            let record = record?;
            for cell in record.iter().skip(1) {
                values.push(cell.trim().parse::<f64>().map_err(|_| {
                    Error::Dissim(format!("non-numeric matrix cell {:?}", cell))
                })?);
            }
        }
        DissimilarityMatrix::from_values(labels, DissimKind::Combined, values)
    }
}

/// Sakoe-Chiba warping windows per variable, in days.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Window for tmin, tmax, rad and etp.
    pub default_window: usize,
    /// Window for rain, usually tighter.
    pub rain_window: usize,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            default_window: 7,
            rain_window: 3,
        }
    }
}

impl DtwConfig {
    pub fn window_for(&self, var: WeatherVar) -> usize {
        match var {
            WeatherVar::Rain => self.rain_window,
            _ => self.default_window,
        }
    }
}

/// Dynamic time warping distance between two equal-length sequences.
///
/// Local cost |a_i - b_j|, unit-weight steps (i-1,j), (i,j-1), (i-1,j-1),
/// band constraint |i - j| <= window. With equal lengths the diagonal is
/// always inside the band, so the problem is always feasible.
pub fn dtw_distance(a: &[f64], b: &[f64], window: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dissim("empty sequence".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Dissim(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    // two-row DP over the banded cost matrix
    let mut prev = vec![f64::INFINITY; n];
    let mut curr = vec![f64::INFINITY; n];
    for i in 0..n {
        let j_lo = i.saturating_sub(window);
        let j_hi = (i + window).min(n - 1);
        for slot in curr.iter_mut() {
            *slot = f64::INFINITY;
        }
        for j in j_lo..=j_hi {
            let cost = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { curr[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    prev[j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            curr[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[n - 1])
}

/// One DTW dissimilarity matrix per weather variable, using the variable's
/// configured window.
pub fn variable_dissim(
    climate: &ClimateSet,
    cfg: &DtwConfig,
) -> Result<Vec<(WeatherVar, DissimilarityMatrix)>> {
    if climate.len() < 2 {
        return Err(Error::Dissim("need at least 2 series".into()));
    }
    let mut out = Vec::with_capacity(WeatherVar::ALL.len());
    for var in WeatherVar::ALL {
        let sequences: Vec<Vec<f64>> = climate
            .series()
            .iter()
            .map(|s| s.variable(var))
            .collect();
        let window = cfg.window_for(var);
        let kind = match var {
            WeatherVar::Tmin => DissimKind::Tmin,
            WeatherVar::Tmax => DissimKind::Tmax,
            WeatherVar::Rad => DissimKind::Rad,
            WeatherVar::Etp => DissimKind::Etp,
            WeatherVar::Rain => DissimKind::Rain,
        };
        let m = DissimilarityMatrix::from_fn(climate.ids(), kind, |i, j| {
            dtw_distance(&sequences[i], &sequences[j], window)
        })?;
        out.push((var, m));
    }
    Ok(out)
}

/// Model-based distance: RMS difference of the two series' yield columns
/// over the phenotype basis.
pub fn model_dissim(yields: &YieldMatrix) -> Result<DissimilarityMatrix> {
    let basis_size = yields.n_rows();
    if basis_size == 0 {
        return Err(Error::Dissim("empty phenotype basis".into()));
    }
    if yields.n_cols() < 2 {
        return Err(Error::Dissim("need at least 2 series".into()));
    }
    DissimilarityMatrix::from_fn(yields.col_ids().to_vec(), DissimKind::Model, |i, j| {
        let mut acc = 0.0;
        for row in 0..basis_size {
            let diff = yields.get(row, i) - yields.get(row, j);
            acc += diff * diff;
        }
        Ok((acc / basis_size as f64).sqrt())
    })
}

/// Cosine preprocessing: double-center the dissimilarities into
/// similarities, normalize so self-similarity is 1, and map back to
/// dissimilarities in [0, 4].
///
/// Degenerate elements (self-similarity below the numeric tolerance, e.g.
/// an all-zero input) get zero dissimilarity to every other element.
pub fn cosine_normalize(input: &DissimilarityMatrix) -> Result<DissimilarityMatrix> {
    let n = input.n();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n)
        .map(|i| input.row(i).iter().sum::<f64>() / nf)
        .collect();
    let grand_mean = row_means.iter().sum::<f64>() / nf;

    // s_ii = -1/2 (0 - 2 rm_i + gm) = rm_i - gm/2
    let self_sim: Vec<f64> = row_means.iter().map(|rm| rm - grand_mean / 2.0).collect();

    DissimilarityMatrix::from_fn(input.labels().to_vec(), DissimKind::Normalized, |i, j| {
        if self_sim[i] <= EPS_NUM || self_sim[j] <= EPS_NUM {
            return Ok(0.0);
        }
        let s =
            -0.5 * (input.get(i, j) - row_means[i] - row_means[j] + grand_mean);
        let normalized = (s / (self_sim[i] * self_sim[j]).sqrt()).clamp(-1.0, 1.0);
        Ok(2.0 - 2.0 * normalized)
    })
}

/// Convex-combination weights over the five variable dissimilarities and
/// the model-based one. Defaults: model 1/2, each variable 1/10.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DissimWeights {
    pub w_tmin: f64,
    pub w_tmax: f64,
    pub w_rad: f64,
    pub w_etp: f64,
    pub w_rain: f64,
    pub w_model: f64,
}

impl Default for DissimWeights {
    fn default() -> Self {
        DissimWeights {
            w_tmin: 0.1,
            w_tmax: 0.1,
            w_rad: 0.1,
            w_etp: 0.1,
            w_rain: 0.1,
            w_model: 0.5,
        }
    }
}

impl DissimWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.w_tmin, self.w_tmax, self.w_rad, self.w_etp, self.w_rain,
            self.w_model,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Config("dissimilarity weights must be nonnegative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > EPS_NUM {
            return Err(Error::Config(format!(
                "dissimilarity weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Weighted sum of the six normalized matrices, ordered
/// (tmin, tmax, rad, etp, rain, model).
pub fn combine(
    matrices: &[&DissimilarityMatrix; 6],
    weights: &DissimWeights,
) -> Result<DissimilarityMatrix> {
    weights.validate()?;
    let n = matrices[0].n();
    for m in matrices.iter() {
        if m.n() != n {
            return Err(Error::Dissim("matrix dimension mismatch".into()));
        }
        if m.kind() != DissimKind::Normalized {
            return Err(Error::Dissim(format!(
                "combine expects normalized matrices, got {:?}",
                m.kind()
            )));
        }
    }
    let w = weights.as_array();
    DissimilarityMatrix::from_fn(
        matrices[0].labels().to_vec(),
        DissimKind::Combined,
        |i, j| {
            Ok(matrices
                .iter()
                .zip(w.iter())
                .map(|(m, &wk)| wk * m.get(i, j))
                .sum())
        },
    )
}

/// Full dissimilarity pipeline: five DTW matrices plus the model-based one,
/// each cosine-normalized, then combined.
pub fn combined_dissim(
    climate: &ClimateSet,
    basis_yields: &YieldMatrix,
    dtw_cfg: &DtwConfig,
    weights: &DissimWeights,
) -> Result<DissimilarityMatrix> {
    let per_var = variable_dissim(climate, dtw_cfg)?;
    let model = model_dissim(basis_yields)?;
    let normalized: Vec<DissimilarityMatrix> = per_var
        .iter()
        .map(|(_, m)| cosine_normalize(m))
        .chain(std::iter::once(cosine_normalize(&model)))
        .collect::<Result<_>>()?;
    let refs: [&DissimilarityMatrix; 6] = [
        &normalized[0],
        &normalized[1],
        &normalized[2],
        &normalized[3],
        &normalized[4],
        &normalized[5],
    ];
    combine(&refs, weights)
}

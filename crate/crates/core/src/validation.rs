//! Comparison of inferred layouts with the configuration that generated the
//! network: cluster distances, likelihood gap and the Mantel test.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::degree_residuals;
use crate::model::{loglik, LatentState, Network};

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("distance matrix must be square".into()));
        }
        Ok(Self { n, data: rows.into_iter().flatten().collect() })
    }

    /// Euclidean distances between all latent positions.
    pub fn from_state(state: &LatentState) -> Self {
        let n = state.n_nodes();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = state.dist(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn scaled(&self, factor: f64, offset: f64) -> Self {
        let data = (0..self.n * self.n)
            .map(|k| if k / self.n == k % self.n { 0.0 } else { self.data[k] * factor + offset })
            .collect();
        Self { n: self.n, data }
    }

    /// Same matrix with rows and columns relabelled: entry `(i, j)` becomes
    /// the old entry `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { n, data }
    }

    fn check(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is not zero")));
            }
            for j in i + 1..self.n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if a != b || !a.is_finite() {
                    return Err(Error::Validation(format!("entries ({i}, {j}) are not symmetric and finite")));
                }
            }
        }
        Ok(())
    }

    fn upper_triangle(&self) -> Vec<f64> {
        (0..self.n).flat_map(|i| (i + 1..self.n).map(move |j| self.get(i, j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MantelResult {
    /// Pearson correlation of the upper triangles.
    pub r: f64,
    /// `(r - mean(r_perm)) / sd(r_perm)` with the sample standard deviation.
    pub z: f64,
    pub permutations: usize,
    pub seed: u64,
}

pub const MIN_PERMUTATIONS: usize = 99;

/// Mantel test: correlation of two distance matrices with a permutation null
/// built by relabelling the nodes of `d2`.
pub fn mantel_test(d1: &DistanceMatrix, d2: &DistanceMatrix, permutations: usize, seed: u64) -> Result<MantelResult> {
    if d1.n != d2.n {
        return Err(Error::Shape(format!("matrices have {} and {} rows", d1.n, d2.n)));
    }
    if d1.n < 3 {
        return Err(Error::Validation("the Mantel test needs at least 3 nodes".into()));
    }
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::Config(format!("need at least {MIN_PERMUTATIONS} permutations")));
    }
    d1.check()?;
    d2.check()?;
    let n = d1.n;
    let centre = |v: Vec<f64>| -> Result<(Vec<f64>, f64, f64)> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let centred: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let norm = centred.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Validation("distance matrix has zero variance".into()));
        }
        Ok((centred, mean, norm))
    };
    let (z1, _, norm1) = centre(d1.upper_triangle())?;
    let (_, mean2, norm2) = centre(d2.upper_triangle())?;
    // Relabelling only reorders the upper triangle of d2, so its mean and
    // norm are permutation invariant and r reduces to a weighted sum.
    let corr = |perm: &[usize]| {
        let mut acc = 0.0;
        let mut k = 0;
        for i in 0..n {
            let row = perm[i] * n;
            for &pj in &perm[i + 1..] {
                acc += z1[k] * (d2.data[row + pj] - mean2);
                k += 1;
            }
        }
        (acc / (norm1 * norm2)).clamp(-1.0, 1.0)
    };
    let identity: Vec<usize> = (0..n).collect();
    let r = corr(&identity);
    let null: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut perm = identity.clone();
            perm.shuffle(&mut rng);
            corr(&perm)
        })
        .collect();
    let mean = null.iter().sum::<f64>() / permutations as f64;
    let var = null.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (permutations - 1) as f64;
    let z = if var > 0.0 { (r - mean) / var.sqrt() } else { f64::INFINITY };
    Ok(MantelResult { r, z, permutations, seed })
}

/// Distance between the position means of the nodes labelled 0 and 1.
pub fn center_of_mass_distance(state: &LatentState, labels: &[usize]) -> Result<f64> {
    if labels.len() != state.n_nodes() {
        return Err(Error::Shape(format!("{} labels for {} nodes", labels.len(), state.n_nodes())));
    }
    let mut groups: Vec<usize> = labels.to_vec();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() != 2 {
        return Err(Error::Validation(format!("expected exactly two labels, found {}", groups.len())));
    }
    let dim = state.dim;
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (i, label) in labels.iter().enumerate() {
        let g = usize::from(*label == groups[1]);
        counts[g] += 1;
        for (s, x) in sums[g].iter_mut().zip(state.position(i)) {
            *s += x;
        }
    }
    Ok(sums[0]
        .iter()
        .zip(&sums[1])
        .map(|(a, b)| (a / counts[0] as f64 - b / counts[1] as f64).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Inferred-versus-truth comparison for one synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub com_distance_truth: f64,
    pub com_distance_inferred: f64,
    /// Analytic block distance, when the generator defines one.
    pub expected_distance: Option<f64>,
    /// `com_distance_inferred - com_distance_truth`.
    pub distance_gap: f64,
    pub loglik_truth: f64,
    pub loglik_inferred: f64,
    /// `loglik_inferred - loglik_truth`; non-negative for a successful fit.
    pub loglik_gap: f64,
    pub mantel_r: f64,
    pub mantel_z: f64,
    /// Largest |observed - expected| out-degree (unweighted networks only).
    pub max_out_residual: Option<f64>,
    pub max_in_residual: Option<f64>,
}

impl RecoveryReport {
    /// `key=value` lines; absent values are written as `na`.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_owned(), |x| x.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "com_distance_truth={}", self.com_distance_truth);
        let _ = writeln!(out, "com_distance_inferred={}", self.com_distance_inferred);
        let _ = writeln!(out, "expected_distance={}", opt(self.expected_distance));
        let _ = writeln!(out, "distance_gap={}", self.distance_gap);
        let _ = writeln!(out, "loglik_truth={}", self.loglik_truth);
        let _ = writeln!(out, "loglik_inferred={}", self.loglik_inferred);
        let _ = writeln!(out, "loglik_gap={}", self.loglik_gap);
        let _ = writeln!(out, "mantel_r={}", self.mantel_r);
        let _ = writeln!(out, "mantel_z={}", self.mantel_z);
        let _ = writeln!(out, "max_out_residual={}", opt(self.max_out_residual));
        let _ = writeln!(out, "max_in_residual={}", opt(self.max_in_residual));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub permutations: usize,
    pub seed: u64,
    pub expected_distance: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { permutations: 999, seed: 0, expected_distance: None }
    }
}

pub fn recovery_report(
    truth: &LatentState,
    inferred: &LatentState,
    network: &Network,
    labels: &[usize],
    options: &ReportOptions,
) -> Result<RecoveryReport> {
    if truth.n_nodes() != inferred.n_nodes() {
        return Err(Error::Shape("truth and inferred states differ in size".into()));
    }
    let com_truth = center_of_mass_distance(truth, labels)?;
    let com_inferred = center_of_mass_distance(inferred, labels)?;
    let ll_truth = loglik(network, truth)?;
    let ll_inferred = loglik(network, inferred)?;
    let mantel = mantel_test(
        &DistanceMatrix::from_state(truth),
        &DistanceMatrix::from_state(inferred),
        options.permutations,
        options.seed,
    )?;
    let (max_out, max_in) = match network {
        Network::Unweighted(g) => {
            let (out, inn) = degree_residuals(g, inferred)?;
            let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (Some(max(&out)), Some(max(&inn)))
        }
        _ => (None, None),
    };
    Ok(RecoveryReport {
        com_distance_truth: com_truth,
        com_distance_inferred: com_inferred,
        expected_distance: options.expected_distance,
        distance_gap: com_inferred - com_truth,
        loglik_truth: ll_truth,
        loglik_inferred: ll_inferred,
        loglik_gap: ll_inferred - ll_truth,
        mantel_r: mantel.r,
        mantel_z: mantel.z,
        max_out_residual: max_out,
        max_in_residual: max_in,
    })
}

//! Ridge regression on signature features, closed-form leave-one-out
//! cross-validation, and the Monte Carlo estimate of the generalization-error
//! gap between the full and the suffix feature sets.
//!
//! Conventions:
//! * features are standardized with the biased (1/n) variance; constant
//!   features are dropped and absorbed by an unpenalized intercept;
//! * `β̂(λ) = ((1/n) ZᵀZ + λI)⁻¹ (1/n) Zᵀ(y − ȳ)` on the standardized design `Z`;
//! * test rows are standardized with the training statistics.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::is_basis_of_words;
use crate::error::{Error, Result};
use crate::signature::{cost_closed_form, dense_signature, sig_forward, with_workers, Direction, PiecewisePath, SigVector};
use crate::stochastic::{features, simulate_range, SdeSpec};
use crate::words::{enumerate, Word, WordClass, WordSet};

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    Suffix,
    /// Must be a certified basis of words.
    Custom(WordSet),
}

impl Selection {
    pub fn word_set(&self, order: usize, d: u8) -> Result<WordSet> {
        match self {
            Selection::All => enumerate(&WordClass::AllUpTo, order, d),
            Selection::Suffix => enumerate(&WordClass::SuffixesUpTo, order, d),
            Selection::Custom(set) => {
                if set.dim() != d {
                    return Err(Error::AlphabetMismatch { left: set.dim(), right: d });
                }
                if !is_basis_of_words(set, set.order())?.is_basis() {
                    return Err(Error::invalid("custom selection is not a basis of words"));
                }
                Ok(set.clone())
            }
        }
    }
}

/// Raw and standardized features of `n` samples.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    word_set: WordSet,
    raw: Vec<Vec<f64>>,
    kept: Vec<usize>,
    excluded: Vec<Word>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    z: DMatrix<f64>,
}

fn is_constant(mean: f64, std: f64) -> bool {
    std == 0.0 || std <= 1e-10 * mean.abs()
}

impl DesignMatrix {
    pub fn from_features(word_set: WordSet, raw: Vec<Vec<f64>>) -> Result<Self> {
        let p = word_set.len();
        let n = raw.len();
        if n == 0 {
            return Err(Error::invalid("design needs at least one sample"));
        }
        for (i, row) in raw.iter().enumerate() {
            if row.len() != p {
                return Err(Error::invalid(format!("sample {i} has {} features, expected {p}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite feature for path {i}, word {}", word_set.words()[j])));
            }
        }
        let nf = n as f64;
        let mut kept = Vec::new();
        let mut excluded = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for j in 0..p {
            let m = raw.iter().map(|r| r[j]).sum::<f64>() / nf;
            let var = raw.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / nf;
            let s = var.sqrt();
            if is_constant(m, s) {
                excluded.push(word_set.words()[j].clone());
            } else {
                kept.push(j);
                mean.push(m);
                scale.push(s);
            }
        }
        let z = DMatrix::from_fn(n, kept.len(), |i, k| (raw[i][kept[k]] - mean[k]) / scale[k]);
        Ok(DesignMatrix { word_set, raw, kept, excluded, mean, scale, z })
    }

    pub fn word_set(&self) -> &WordSet {
        &self.word_set
    }

    pub fn n(&self) -> usize {
        self.raw.len()
    }

    /// Number of words, constants included.
    pub fn p(&self) -> usize {
        self.word_set.len()
    }

    /// Number of standardized (penalized) columns.
    pub fn q(&self) -> usize {
        self.kept.len()
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn excluded(&self) -> &[Word] {
        &self.excluded
    }

    pub fn kept_words(&self) -> Vec<Word> {
        self.kept.iter().map(|&j| self.word_set.words()[j].clone()).collect()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn standardized(&self) -> &DMatrix<f64> {
        &self.z
    }
}

/// Features of `paths` over the selected words, computed by forward Chen
/// recursion.
pub fn build_design(paths: &[PiecewisePath], order: usize, selection: &Selection, workers: usize) -> Result<DesignMatrix> {
    let d = paths
        .first()
        .ok_or_else(|| Error::invalid("no paths"))
        .and_then(|p| u8::try_from(p.dim()).map_err(|_| Error::invalid("dimension too large")))?;
    let set = selection.word_set(order, d)?;
    let raw = features(paths, &set, workers)?;
    DesignMatrix::from_features(set, raw)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPoint {
    pub lambda: f64,
    /// `None` when the system is singular at this λ (only possible at 0).
    pub loo_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeFit {
    /// On the standardized scale, one per kept column.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub cv_curve: Vec<CvPoint>,
    kept: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl RidgeFit {
    /// Prediction for a raw feature row over the design's full word set.
    pub fn predict(&self, raw_row: &[f64]) -> f64 {
        self.intercept
            + self
                .kept
                .iter()
                .zip(&self.coefficients)
                .enumerate()
                .map(|(k, (&j, b))| b * (raw_row[j] - self.mean[k]) / self.scale[k])
                .sum::<f64>()
    }

    /// Coefficients and intercept on the raw feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = self.coefficients.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = coef.iter().zip(&self.mean).map(|(c, m)| c * m).sum();
        (coef, self.intercept - shift)
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

/// Relative eigenvalue threshold below which `(1/n) ZᵀZ` counts as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Eigendecomposition `(1/n) ZᵀZ = Q E Qᵀ` with the rotated data reused
/// across every λ.
struct Spectral {
    n: usize,
    q_mat: DMatrix<f64>,
    eig: Vec<f64>,
    /// `Z Q`
    rotated: DMatrix<f64>,
    /// `Qᵀ (1/n) Zᵀ (y − ȳ)`
    c: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
}

impl Spectral {
    fn new(x: &DesignMatrix, y: &[f64]) -> Result<Self> {
        let n = x.n();
        if y.len() != n {
            return Err(Error::invalid(format!("y has {} entries, design has {n} rows", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite response".into()));
        }
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let z = &x.z;
        let g = z.transpose() * z / nf;
        let se = SymmetricEigen::new(g);
        let rotated = z * &se.eigenvectors;
        let c = se.eigenvectors.transpose() * (z.transpose() * yc / nf);
        Ok(Spectral {
            n,
            q_mat: se.eigenvectors,
            eig: se.eigenvalues.iter().copied().collect(),
            rotated,
            c: c.iter().copied().collect(),
            y: y.to_vec(),
            y_mean,
        })
    }

    fn singular_at_zero(&self) -> bool {
        let max = self.eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.eig.iter().any(|&e| e <= SINGULAR_TOLERANCE * max)
    }

    fn coefficients(&self, lambda: f64) -> Vec<f64> {
        let w: Vec<f64> = self.c.iter().zip(&self.eig).map(|(c, e)| c / (e + lambda)).collect();
        let q = self.q_mat.ncols();
        (0..q).map(|a| (0..q).map(|j| self.q_mat[(a, j)] * w[j]).sum()).collect()
    }

    fn loo_mse(&self, lambda: f64) -> f64 {
        let nf = self.n as f64;
        let q = self.eig.len();
        let inv: Vec<f64> = self.eig.iter().map(|e| 1.0 / (e + lambda)).collect();
        let mut total = 0.0;
        for i in 0..self.n {
            let mut fit = self.y_mean;
            let mut h = 1.0 / nf;
            for j in 0..q {
                let pij = self.rotated[(i, j)];
                fit += pij * self.c[j] * inv[j];
                h += pij * pij * inv[j] / nf;
            }
            let r = (self.y[i] - fit) / (1.0 - h);
            total += r * r;
        }
        total / nf
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be a finite non-negative number, got {lambda}")));
    }
    Ok(())
}

fn make_fit(x: &DesignMatrix, sp: &Spectral, lambda: f64, cv_curve: Vec<CvPoint>) -> RidgeFit {
    RidgeFit {
        coefficients: sp.coefficients(lambda),
        intercept: sp.y_mean,
        lambda,
        cv_curve,
        kept: x.kept.clone(),
        mean: x.mean.clone(),
        scale: x.scale.clone(),
    }
}

/// Ridge solution at a fixed λ.
pub fn ridge_fit(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    check_lambda(lambda)?;
    let sp = Spectral::new(x, y)?;
    if lambda == 0.0 && sp.singular_at_zero() {
        return Err(Error::SingularFit(format!(
            "(1/n)XXᵀ is singular for {} standardized features at n = {}; λ = 0 is not defined",
            x.q(),
            x.n()
        )));
    }
    Ok(make_fit(x, &sp, lambda, Vec::new()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub lambda: f64,
    pub curve: Vec<CvPoint>,
}

/// LOO mean squared error for each grid λ from the hat-matrix identity
/// `e_i / (1 − h_ii)`. Ties go to the larger λ.
pub fn loo_cv(x: &DesignMatrix, y: &[f64], grid: &[f64]) -> Result<CvResult> {
    if x.n() < 3 {
        return Err(Error::invalid("leave-one-out needs at least 3 samples"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty λ grid"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let sp = Spectral::new(x, y)?;
    cv_from_spectral(&sp, grid)
}

fn cv_from_spectral(sp: &Spectral, grid: &[f64]) -> Result<CvResult> {
    let singular = sp.singular_at_zero();
    let curve: Vec<CvPoint> = grid
        .iter()
        .map(|&lambda| CvPoint {
            lambda,
            loo_mse: if lambda == 0.0 && singular { None } else { Some(sp.loo_mse(lambda)) },
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for pt in &curve {
        let Some(mse) = pt.loo_mse else { continue };
        if !mse.is_finite() {
            continue;
        }
        best = match best {
            None => Some((pt.lambda, mse)),
            Some((bl, bm)) => {
                if mse < bm || (mse == bm && pt.lambda > bl) {
                    Some((pt.lambda, mse))
                } else {
                    Some((bl, bm))
                }
            }
        };
    }
    let (lambda, _) = best.ok_or_else(|| Error::SingularFit("no admissible λ on the grid".into()))?;
    Ok(CvResult { lambda, curve })
}

/// Cross-validated fit: [`loo_cv`] then the ridge solution at the chosen λ.
pub fn fit_with_cv(x: &DesignMatrix, y: &[f64], grid: &[f64]) -> Result<RidgeFit> {
    if x.n() < 3 {
        return Err(Error::invalid("leave-one-out needs at least 3 samples"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let sp = Spectral::new(x, y)?;
    let cv = cv_from_spectral(&sp, grid)?;
    Ok(make_fit(x, &sp, cv.lambda, cv.curve))
}

/// `{0} ∪ {10^{−2 + 6i/99} : i = 0..99}`.
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0).chain((0..100).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 99.0))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaPreset {
    /// `(1, …, 1)`
    Ones,
    /// `(1, 2, …, L)`: more weight on the higher-order words.
    GeomUp,
    /// `(L, …, 2, 1)`
    GeomDown,
}

impl BetaPreset {
    pub fn name(self) -> &'static str {
        match self {
            BetaPreset::Ones => "ones",
            BetaPreset::GeomUp => "geom-up",
            BetaPreset::GeomDown => "geom-down",
        }
    }
}

impl std::str::FromStr for BetaPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(BetaPreset::Ones),
            "geom-up" => Ok(BetaPreset::GeomUp),
            "geom-down" => Ok(BetaPreset::GeomDown),
            _ => Err(Error::invalid(format!("unknown beta preset '{s}'"))),
        }
    }
}

/// `|W_{≤N}| = ((d+1)^{N+1} − 1)/d`.
pub fn full_length(d: u8, order: usize) -> usize {
    let b = d as usize + 1;
    (b.pow(order as u32 + 1) - 1) / d as usize
}

/// Coefficients over `W_{≤N_true}` in canonical order.
pub fn beta_true(preset: BetaPreset, d: u8, n_true: usize) -> Vec<f64> {
    let len = full_length(d, n_true);
    match preset {
        BetaPreset::Ones => vec![1.0; len],
        BetaPreset::GeomUp => (1..=len).map(|k| k as f64).collect(),
        BetaPreset::GeomDown => (1..=len).rev().map(|k| k as f64).collect(),
    }
}

/// `⟨β, S⟩` with `β` indexed by the canonical order of `W_{≤N}`.
pub fn target_functional(sig: &SigVector, beta: &[f64]) -> Result<f64> {
    let full = full_length(sig.dim(), sig.order());
    if sig.word_set().len() != full {
        return Err(Error::IncompleteSignature("target needs every word up to the order".into()));
    }
    if beta.len() != full {
        return Err(Error::invalid(format!("beta has length {}, expected {full}", beta.len())));
    }
    Ok(sig.values().iter().zip(beta).map(|(s, b)| s * b).sum())
}

/// Same as [`target_functional`] on the output of [`dense_signature`].
pub fn target_from_dense(dense: &[f64], beta: &[f64]) -> Result<f64> {
    if dense.len() != beta.len() {
        return Err(Error::invalid(format!("beta has length {}, expected {}", beta.len(), dense.len())));
    }
    Ok(dense.iter().zip(beta).map(|(s, b)| s * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Bm,
    Ou,
}

impl ProcessKind {
    pub fn spec(self, d: usize) -> SdeSpec {
        match self {
            ProcessKind::Bm => SdeSpec::brownian(d, 1.0),
            ProcessKind::Ou => SdeSpec::ornstein_uhlenbeck(d, 1.0),
        }
    }
}

impl std::str::FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm" => Ok(ProcessKind::Bm),
            "ou" => Ok(ProcessKind::Ou),
            _ => Err(Error::invalid(format!("unknown process '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: ProcessKind,
    pub dim: u8,
    #[serde(rename = "N")]
    pub order: usize,
    pub n_true: usize,
    pub steps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub batches: usize,
    pub beta: BetaPreset,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            process: ProcessKind::Bm,
            dim: 1,
            order: 2,
            n_true: 10,
            steps: 100,
            n_train: 500,
            n_test: 10_000,
            batches: 20,
            beta: BetaPreset::Ones,
            seed: 0,
        }
    }
}

/// Stream index of the first test path; training batch `i` starts at
/// `TRAIN_STREAM_BASE + i·2^32`.
const TRAIN_STREAM_BASE: u64 = 1 << 40;

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > self.n_true {
            return Err(Error::invalid("need 1 <= N <= N_true"));
        }
        if self.batches < 2 {
            return Err(Error::invalid("need at least 2 training batches"));
        }
        let p_all = full_length(self.dim, self.order);
        if self.n_train < p_all || self.n_test < p_all || self.n_train < 3 {
            return Err(Error::invalid(format!(
                "n_train and n_test must be at least the feature count {p_all}"
            )));
        }
        if self.n_train as u64 > u32::MAX as u64 {
            return Err(Error::invalid("training batch too large"));
        }
        Ok(())
    }
}

/// Paths and noiseless responses `Y = ⟨β_true, S^{≤N_true}⟩`.
struct Sample {
    paths: Vec<PiecewisePath>,
    y: Vec<f64>,
}

fn sample(cfg: &ExperimentConfig, first: u64, n: usize, beta: &[f64]) -> Result<Sample> {
    let spec = cfg.process.spec(cfg.dim as usize);
    let paths = simulate_range(&spec, cfg.steps, first, n, cfg.seed, 0)?;
    let y = paths
        .par_iter()
        .map(|p| target_from_dense(&dense_signature(p, cfg.n_true), beta))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Sample { paths, y })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub index: usize,
    pub lambda_all: f64,
    pub lambda_suffix: f64,
    pub mse_all: f64,
    pub mse_suffix: f64,
    /// `mse_all − mse_suffix`
    pub delta: f64,
    pub r2_all: f64,
    pub r2_suffix: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    /// Normal-approximation 95% interval.
    pub ci95: [f64; 2],
    /// Standard deviation of the per-batch differences.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timing {
    pub signature_seconds: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub p_all: usize,
    pub p_suffix: usize,
    pub delta_egen: DeltaEstimate,
    pub r2_all: f64,
    pub r2_suffix: f64,
    pub lambda_all_mean: f64,
    pub lambda_suffix_mean: f64,
    pub test_variance: f64,
    pub batches: Vec<BatchRecord>,
    pub timing: Timing,
}

impl ExperimentReport {
    /// The report with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        ExperimentReport { timing: Timing::default(), ..self.clone() }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn r2_percent(mse: f64, variance: f64) -> f64 {
    100.0 * (1.0 - mse / variance)
}

/// Chosen λ of both strategies on one training batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaPair {
    pub all: f64,
    pub suffix: f64,
}

struct BatchFit {
    all: RidgeFit,
    suffix: RidgeFit,
    sig_seconds: f64,
    fit_seconds: f64,
}

fn fit_batch(cfg: &ExperimentConfig, index: usize, beta: &[f64], grid: &[f64]) -> Result<BatchFit> {
    let first = TRAIN_STREAM_BASE + ((index as u64) << 32);
    let t0 = Instant::now();
    let train = sample(cfg, first, cfg.n_train, beta)?;
    let x_all = build_design(&train.paths, cfg.order, &Selection::All, 0)?;
    let x_suf = build_design(&train.paths, cfg.order, &Selection::Suffix, 0)?;
    let t1 = Instant::now();
    let all = fit_with_cv(&x_all, &train.y, grid)?;
    let suffix = fit_with_cv(&x_suf, &train.y, grid)?;
    let t2 = Instant::now();
    Ok(BatchFit {
        all,
        suffix,
        sig_seconds: (t1 - t0).as_secs_f64(),
        fit_seconds: (t2 - t1).as_secs_f64(),
    })
}

/// Cross-validated λ of each training batch, without the test set.
pub fn training_lambdas(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<LambdaPair>> {
    cfg.validate()?;
    let beta = beta_true(cfg.beta, cfg.dim, cfg.n_true);
    let grid = default_lambda_grid();
    with_workers(workers, || {
        (0..cfg.batches)
            .into_par_iter()
            .map(|i| fit_batch(cfg, i, &beta, &grid).map(|f| LambdaPair { all: f.all.lambda, suffix: f.suffix.lambda }))
            .collect()
    })
}

/// Monte Carlo estimate of `E_gen,all − E_gen,suffix`: one shared test set,
/// `B_N` independent training batches, LOO-tuned ridge for both feature sets.
pub fn algorithm1(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let beta = beta_true(cfg.beta, cfg.dim, cfg.n_true);
    let grid = default_lambda_grid();
    let all_set = Selection::All.word_set(cfg.order, cfg.dim)?;
    let suf_set = Selection::Suffix.word_set(cfg.order, cfg.dim)?;

    with_workers(workers, || {
        let t0 = Instant::now();
        let test = sample(cfg, 0, cfg.n_test, &beta)?;
        let test_all = features(&test.paths, &all_set, 0)?;
        let test_suf = features(&test.paths, &suf_set, 0)?;
        let test_seconds = t0.elapsed().as_secs_f64();
        let y_mean = mean(&test.y);
        let test_variance = test.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / test.y.len() as f64;

        let fits: Vec<BatchFit> = (0..cfg.batches)
            .into_par_iter()
            .map(|i| fit_batch(cfg, i, &beta, &grid))
            .collect::<Result<_>>()?;

        let test_mse = |fit: &RidgeFit, rows: &[Vec<f64>]| -> f64 {
            rows.iter().zip(&test.y).map(|(r, y)| (y - fit.predict(r)).powi(2)).sum::<f64>() / rows.len() as f64
        };
        let records: Vec<BatchRecord> = fits
            .par_iter()
            .enumerate()
            .map(|(index, f)| {
                let mse_all = test_mse(&f.all, &test_all);
                let mse_suffix = test_mse(&f.suffix, &test_suf);
                BatchRecord {
                    index,
                    lambda_all: f.all.lambda,
                    lambda_suffix: f.suffix.lambda,
                    mse_all,
                    mse_suffix,
                    delta: mse_all - mse_suffix,
                    r2_all: r2_percent(mse_all, test_variance),
                    r2_suffix: r2_percent(mse_suffix, test_variance),
                }
            })
            .collect();

        let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
        let b = deltas.len() as f64;
        let est = mean(&deltas);
        let sigma = (deltas.iter().map(|d| (d - est).powi(2)).sum::<f64>() / (b - 1.0)).sqrt();
        let se = sigma / b.sqrt();
        let mse_all = mean(&records.iter().map(|r| r.mse_all).collect::<Vec<_>>());
        let mse_suffix = mean(&records.iter().map(|r| r.mse_suffix).collect::<Vec<_>>());
        Ok(ExperimentReport {
            config: cfg.clone(),
            p_all: all_set.len(),
            p_suffix: suf_set.len(),
            delta_egen: DeltaEstimate { estimate: est, standard_error: se, ci95: [est - 1.96 * se, est + 1.96 * se], sigma },
            r2_all: r2_percent(mse_all, test_variance),
            r2_suffix: r2_percent(mse_suffix, test_variance),
            lambda_all_mean: mean(&records.iter().map(|r| r.lambda_all).collect::<Vec<_>>()),
            lambda_suffix_mean: mean(&records.iter().map(|r| r.lambda_suffix).collect::<Vec<_>>()),
            test_variance,
            batches: records,
            timing: Timing {
                signature_seconds: test_seconds + fits.iter().map(|f| f.sig_seconds).sum::<f64>(),
                fit_seconds: fits.iter().map(|f| f.fit_seconds).sum(),
            },
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub process: ProcessKind,
    pub dim: u8,
    pub orders: Vec<usize>,
    pub steps: usize,
    pub n: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { process: ProcessKind::Bm, dim: 1, orders: vec![2, 3, 4, 5, 6], steps: 100, n: 500, repeats: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    #[serde(rename = "N")]
    pub order: usize,
    pub p_all: usize,
    pub p_suffix: usize,
    pub sig_all_seconds: f64,
    pub sig_suffix_seconds: f64,
    pub sig_ratio: f64,
    pub counter_all: u64,
    pub counter_suffix: u64,
    pub counter_ratio: f64,
    pub fit_all_seconds: f64,
    pub fit_suffix_seconds: f64,
    pub fit_ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time_features(paths: &[PiecewisePath], set: &WordSet) -> Result<(f64, Vec<Vec<f64>>)> {
    let t = Instant::now();
    let rows = paths.iter().map(|p| sig_forward(p, set).map(|(s, _)| s.into_values())).collect::<Result<Vec<_>>>()?;
    Ok((t.elapsed().as_secs_f64(), rows))
}

/// Median wall-clock times, single-threaded, of feature computation and of
/// the cross-validated fit for both feature sets, next to the counter ratio.
pub fn timing_harness(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    if cfg.repeats == 0 || cfg.n < 3 {
        return Err(Error::invalid("timing needs repeats >= 1 and n >= 3"));
    }
    let spec = cfg.process.spec(cfg.dim as usize);
    let grid = default_lambda_grid();
    let mut rows = Vec::new();
    for &order in &cfg.orders {
        let all_set = Selection::All.word_set(order, cfg.dim)?;
        let suf_set = Selection::Suffix.word_set(order, cfg.dim)?;
        let beta = beta_true(BetaPreset::Ones, cfg.dim, order + 1);
        let (mut sa, mut ss, mut fa, mut fs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for r in 0..cfg.repeats {
            let paths = simulate_range(&spec, cfg.steps, (r as u64) << 32, cfg.n, cfg.seed, 0)?;
            let y = paths
                .iter()
                .map(|p| target_from_dense(&dense_signature(p, order + 1), &beta))
                .collect::<Result<Vec<f64>>>()?;
            let (t_all, raw_all) = time_features(&paths, &all_set)?;
            let (t_suf, raw_suf) = time_features(&paths, &suf_set)?;
            let x_all = DesignMatrix::from_features(all_set.clone(), raw_all)?;
            let x_suf = DesignMatrix::from_features(suf_set.clone(), raw_suf)?;
            let t = Instant::now();
            fit_with_cv(&x_all, &y, &grid)?;
            let t_fit_all = t.elapsed().as_secs_f64();
            let t = Instant::now();
            fit_with_cv(&x_suf, &y, &grid)?;
            let t_fit_suf = t.elapsed().as_secs_f64();
            sa.push(t_all);
            ss.push(t_suf);
            fa.push(t_fit_all);
            fs.push(t_fit_suf);
        }
        let counter_all = cost_closed_form(Direction::Forward, &all_set, cfg.steps.max(2))?;
        let counter_suffix = cost_closed_form(Direction::Forward, &suf_set, cfg.steps.max(2))?;
        let (sa, ss, fa, fs) = (median(sa), median(ss), median(fa), median(fs));
        rows.push(TimingRow {
            order,
            p_all: all_set.len(),
            p_suffix: suf_set.len(),
            sig_all_seconds: sa,
            sig_suffix_seconds: ss,
            sig_ratio: ss / sa,
            counter_all,
            counter_suffix,
            counter_ratio: counter_suffix as f64 / counter_all as f64,
            fit_all_seconds: fa,
            fit_suffix_seconds: fs,
            fit_ratio: fs / fa,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::sig_forward;
    use crate::stochastic::simulate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design_from(cols: &[Vec<f64>]) -> DesignMatrix {
        let n = cols[0].len();
        let p = cols.len();
        let words: Vec<Word> = (0..p).map(|j| Word::from_key(2, j as u64 + 1)).collect();
        let set = WordSet::new(2, 8, words).unwrap();
        let rows = (0..n).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect();
        DesignMatrix::from_features(set, rows).unwrap()
    }

    fn random_instance(rng: &mut impl Rng, n: usize, p: usize) -> (DesignMatrix, Vec<f64>) {
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y = (0..n).map(|i| cols.iter().map(|c| c[i]).sum::<f64>() + rng.gen_range(-1.0..1.0)).collect();
        (design_from(&cols), y)
    }

    /// Oracle: refit on `n − 1` rows with the same standardization and the
    /// sum-form penalty `nλ‖β‖²`, intercept free.
    fn brute_force_loo(x: &DesignMatrix, y: &[f64], lambda: f64) -> f64 {
        let z = x.standardized();
        let (n, q) = (z.nrows(), z.ncols());
        let mut total = 0.0;
        for out in 0..n {
            let mut a = DMatrix::<f64>::zeros(q + 1, q + 1);
            let mut b = DVector::<f64>::zeros(q + 1);
            for i in (0..n).filter(|&i| i != out) {
                let row: Vec<f64> = std::iter::once(1.0).chain(z.row(i).iter().copied()).collect();
                for r in 0..=q {
                    b[r] += row[r] * y[i];
                    for c in 0..=q {
                        a[(r, c)] += row[r] * row[c];
                    }
                }
            }
            for k in 1..=q {
                a[(k, k)] += n as f64 * lambda;
            }
            let theta = a.lu().solve(&b).unwrap();
            let pred = theta[0] + (0..q).map(|k| theta[k + 1] * z[(out, k)]).sum::<f64>();
            total += (y[out] - pred).powi(2);
        }
        total / n as f64
    }

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.01).abs() < 1e-15);
        assert!((g[100] - 1e4).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ridge_examples() {
        let x = design_from(&[vec![-1.0, 1.0]]);
        let fit = ridge_fit(&x, &[-1.0, 1.0], 0.0).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
        assert!(fit.intercept.abs() < 1e-14);
        let (raw, icpt) = fit.raw_coefficients();
        assert!((raw[0] - 1.0).abs() < 1e-14 && icpt.abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, _) = random_instance(&mut rng, 20, 3);
        let fit = ridge_fit(&x, &[0.0; 20], 0.5).unwrap();
        assert!(fit.coefficients.iter().all(|b| *b == 0.0));
        assert_eq!(fit.intercept, 0.0);
        assert!(ridge_fit(&x, &[0.0; 20], -1.0).is_err());
    }

    #[test]
    fn full_set_is_singular_at_zero() {
        let paths = simulate(&SdeSpec::brownian(1, 1.0), 20, 200, 4).unwrap();
        for n in 2..=3 {
            let all = build_design(&paths, n, &Selection::All, 0).unwrap();
            let suf = build_design(&paths, n, &Selection::Suffix, 0).unwrap();
            let y: Vec<f64> = all.raw().iter().map(|r| r.iter().sum()).collect();
            assert!(matches!(ridge_fit(&all, &y, 0.0), Err(Error::SingularFit(_))));
            assert!(ridge_fit(&suf, &y, 0.0).is_ok());
            let cv = loo_cv(&all, &y, &default_lambda_grid()).unwrap();
            assert_eq!(cv.curve[0].loo_mse, None);
            assert!(cv.lambda > 0.0);
        }
    }

    #[test]
    fn design_sizes_and_constants() {
        let paths = simulate(&SdeSpec::brownian(1, 1.0), 10, 50, 0).unwrap();
        let all = build_design(&paths, 2, &Selection::All, 0).unwrap();
        assert_eq!(all.p(), 7);
        let excluded: Vec<String> = all.excluded().iter().map(|w| w.to_string()).collect();
        assert_eq!(excluded, ["e", "0", "00"]);
        let suf = build_design(&paths, 2, &Selection::Suffix, 0).unwrap();
        assert_eq!(suf.p(), 4);
        assert_eq!(suf.q(), 3);
        let z = all.standardized();
        for c in 0..z.ncols() {
            let m = z.column(c).sum() / 50.0;
            let v = z.column(c).map(|x| x * x).sum() / 50.0 - m * m;
            assert!(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-10);
        }
        let p6 = Selection::Suffix.word_set(6, 1).unwrap().len();
        assert_eq!((p6, full_length(1, 6)), (64, 127));
        assert!((p6 as f64 / 127.0 - 0.504).abs() < 1e-3);
        let custom = WordSet::parse(1, 2, &["e", "1", "01", "11"]).unwrap();
        assert!(build_design(&paths, 2, &Selection::Custom(custom), 0).is_ok());
        let bad = WordSet::parse(1, 2, &["1", "11"]).unwrap();
        assert!(build_design(&paths, 2, &Selection::Custom(bad), 0).is_err());
    }

    #[test]
    fn non_finite_feature_names_path_and_word() {
        let set = WordSet::parse(1, 1, &["0", "1"]).unwrap();
        let err = DesignMatrix::from_features(set, vec![vec![1.0, 2.0], vec![1.0, f64::NAN]]).unwrap_err();
        assert_eq!(err, Error::Data("non-finite feature for path 1, word 1".into()));
    }

    #[test]
    fn closed_form_loo_matches_refits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = default_lambda_grid();
        for _ in 0..5 {
            let n = rng.gen_range(5..=30);
            let p = rng.gen_range(1..=6.min(n - 2));
            let (x, y) = random_instance(&mut rng, n, p);
            let cv = loo_cv(&x, &y, &grid).unwrap();
            for pt in cv.curve.iter().step_by(7) {
                let bf = brute_force_loo(&x, &y, pt.lambda);
                assert!((pt.loo_mse.unwrap() - bf).abs() <= 1e-8 * (1.0 + bf));
            }
        }
    }

    #[test]
    fn exact_linear_truth_picks_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let d = design_from(&[x]);
        let grid = default_lambda_grid();
        let cv = loo_cv(&d, &y, &grid).unwrap();
        assert_eq!(cv.lambda, 0.0);
        let mses: Vec<f64> = cv.curve.iter().map(|p| p.loo_mse.unwrap()).collect();
        assert!(mses.windows(2).all(|w| w[0] < w[1]));
        assert!(brute_force_loo(&d, &y, 0.0) < 1e-20);
    }

    #[test]
    fn ties_go_to_larger_lambda() {
        let d = design_from(&[vec![1.0, 2.0, 3.0, 4.0]]);
        // y constant: every λ gives LOO MSE 0
        let cv = loo_cv(&d, &[5.0; 4], &[0.0, 0.1, 1.0]).unwrap();
        assert_eq!(cv.lambda, 1.0);
        assert!(loo_cv(&design_from(&[vec![1.0, 2.0]]), &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn target_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let times: Vec<f64> = (0..6).map(|k| 0.3 * k as f64).collect();
        let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let path = PiecewisePath::new(times, pts).unwrap();
        let all = enumerate(&WordClass::AllUpTo, 3, 1).unwrap();
        let (sig, _) = sig_forward(&path, &all).unwrap();
        let mut e = vec![0.0; 15];
        e[0] = 1.0;
        assert_eq!(target_functional(&sig, &e).unwrap(), 1.0);
        let mut zero = vec![0.0; 15];
        zero[1] = 1.0;
        assert!((target_functional(&sig, &zero).unwrap() - 1.5).abs() < 1e-14);
        assert!(target_functional(&sig, &[1.0; 7]).is_err());
        assert_eq!(beta_true(BetaPreset::Ones, 1, 10).len(), 2047);
        assert_eq!(beta_true(BetaPreset::GeomUp, 1, 10)[2046], 2047.0);
        assert_eq!(beta_true(BetaPreset::GeomDown, 1, 10)[0], 2047.0);
        let dense = dense_signature(&path, 3);
        let ones = beta_true(BetaPreset::GeomUp, 1, 3);
        assert!((target_from_dense(&dense, &ones).unwrap() - target_functional(&sig, &ones).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let cfg = ExperimentConfig { order: 2, n_true: 4, steps: 20, n_train: 40, n_test: 200, batches: 3, seed: 5, ..Default::default() };
        let a = algorithm1(&cfg, 1).unwrap();
        let b = algorithm1(&cfg, 2).unwrap();
        assert_eq!(
            serde_json::to_string(&a.without_timing()).unwrap(),
            serde_json::to_string(&b.without_timing()).unwrap()
        );
        assert_eq!(a.batches.len(), 3);
        assert!(a.delta_egen.standard_error >= 0.0);
        assert!(a.delta_egen.ci95[0] <= a.delta_egen.estimate && a.delta_egen.estimate <= a.delta_egen.ci95[1]);
        let lambdas = training_lambdas(&cfg, 1).unwrap();
        assert_eq!(lambdas[1].all, a.batches[1].lambda_all);
        assert_eq!(lambdas[2].suffix, a.batches[2].lambda_suffix);
        assert!(algorithm1(&ExperimentConfig { batches: 1, ..cfg.clone() }, 1).is_err());
        assert!(algorithm1(&ExperimentConfig { n_train: 5, ..cfg }, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn normal_equation_residual(seed in 0u64..1000, lambda_idx in 0usize..101) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(8..40);
            let p = rng.gen_range(1..6);
            let (x, y) = random_instance(&mut rng, n, p);
            let lambda = default_lambda_grid()[lambda_idx];
            let fit = ridge_fit(&x, &y, lambda).unwrap();
            let z = x.standardized();
            let nf = n as f64;
            let ybar = y.iter().sum::<f64>() / nf;
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
            let b = DVector::from_vec(fit.coefficients.clone());
            let lhs = (z.transpose() * z / nf + DMatrix::identity(p, p) * lambda) * &b;
            let rhs = z.transpose() * &yc / nf;
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((lhs - rhs).norm() <= 1e-8 * (1.0 + ynorm));
            if lambda == 0.0 {
                let resid = &yc - z * &b;
                prop_assert!((z.transpose() * resid).norm() <= 1e-8 * (1.0 + ynorm) * nf);
            }
        }

        #[test]
        fn coefficient_norm_shrinks(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_instance(&mut rng, 25, 4);
            let norms: Vec<f64> = default_lambda_grid()
                .iter()
                .map(|&l| ridge_fit(&x, &y, l).unwrap().coefficient_norm())
                .collect();
            prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }

        #[test]
        fn predictions_invariant_under_affine_rescaling(seed in 0u64..1000, a in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20;
            let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let y: Vec<f64> = (0..n).map(|i| cols[0][i] - 2.0 * cols[2][i] + rng.gen_range(-0.5..0.5)).collect();
            let scaled: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| a * v + shift).collect()).collect();
            let x1 = design_from(&cols);
            let x2 = design_from(&scaled);
            let f1 = ridge_fit(&x1, &y, 0.3).unwrap();
            let f2 = ridge_fit(&x2, &y, 0.3).unwrap();
            for i in 0..n {
                let p1 = f1.predict(&x1.raw()[i]);
                let p2 = f2.predict(&x2.raw()[i]);
                prop_assert!((p1 - p2).abs() <= 1e-9 * (1.0 + p1.abs()));
            }
        }
    }
}

//! Euler–Maruyama sampling of additive-noise SDEs and empirical Gram
//! diagnostics for signature features.
//!
//! Each path `i` draws from its own ChaCha stream (`seed`, stream `i`), so a
//! batch is identical whatever the number of workers.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::is_basis_of_words;
use crate::error::{Error, Result};
use crate::freealg::{rational_to_f64, zero_pad_shuffle};
use crate::signature::{sig_forward, with_workers, PiecewisePath};
use crate::words::{Word, WordSet};

pub type DriftFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Process {
    Brownian,
    /// `dX = −(X + 1) dt + dW`.
    OrnsteinUhlenbeck,
    /// `dX = b(t, X) dt + dW`; `b` must have linear growth.
    CustomDrift(DriftFn),
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::Brownian => f.write_str("Brownian"),
            Process::OrnsteinUhlenbeck => f.write_str("OrnsteinUhlenbeck"),
            Process::CustomDrift(_) => f.write_str("CustomDrift(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Fixed(Vec<f64>),
    /// Independent `N(mean_i, std_i²)` coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub process: Process,
    pub dim: usize,
    pub horizon: f64,
    pub initial: Initial,
}

impl SdeSpec {
    pub fn brownian(dim: usize, horizon: f64) -> Self {
        SdeSpec { process: Process::Brownian, dim, horizon, initial: Initial::Fixed(vec![0.0; dim]) }
    }

    pub fn ornstein_uhlenbeck(dim: usize, horizon: f64) -> Self {
        SdeSpec { process: Process::OrnsteinUhlenbeck, dim, horizon, initial: Initial::Fixed(vec![0.0; dim]) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > crate::words::MAX_DIM as usize {
            return Err(Error::invalid(format!("dimension must be in 1..={}", crate::words::MAX_DIM)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        let ok = match &self.initial {
            Initial::Fixed(x) => x.len() == self.dim,
            Initial::Gaussian { mean, std } => {
                mean.len() == self.dim && std.len() == self.dim && std.iter().all(|s| *s >= 0.0)
            }
        };
        if !ok {
            return Err(Error::invalid("initial condition does not match the dimension"));
        }
        Ok(())
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.process {
            Process::Brownian => out.fill(0.0),
            Process::OrnsteinUhlenbeck => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -(v + 1.0);
                }
            }
            Process::CustomDrift(b) => out.copy_from_slice(&b(t, x)),
        }
    }
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One path on the uniform grid `t_k = kT/K`.
pub fn simulate_one(spec: &SdeSpec, steps: usize, seed: u64, index: u64) -> Result<PiecewisePath> {
    spec.validate()?;
    if steps == 0 {
        return Err(Error::invalid("need at least one grid step"));
    }
    let d = spec.dim;
    let mut rng = path_rng(seed, index);
    let h = spec.horizon / steps as f64;
    let sq = h.sqrt();
    let mut x: Vec<f64> = match &spec.initial {
        Initial::Fixed(x0) => x0.clone(),
        Initial::Gaussian { mean, std } => mean
            .iter()
            .zip(std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + s * z
            })
            .collect(),
    };
    let mut values = Vec::with_capacity((steps + 1) * d);
    values.extend_from_slice(&x);
    let mut b = vec![0.0; d];
    for k in 0..steps {
        let t = k as f64 * h;
        spec.drift(t, &x, &mut b);
        for (xi, bi) in x.iter_mut().zip(&b) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *xi += bi * h + sq * z;
        }
        values.extend_from_slice(&x);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("path {index} diverged")));
    }
    let times = (0..=steps).map(|k| k as f64 * h).collect();
    PiecewisePath::from_flat(d, times, values)
}

/// `n` independent paths, indices `0..n`.
pub fn simulate(spec: &SdeSpec, steps: usize, n: usize, seed: u64) -> Result<Vec<PiecewisePath>> {
    simulate_range(spec, steps, 0, n, seed, 0)
}

/// Paths with indices `first..first + n` of the stream family `seed`.
pub fn simulate_range(
    spec: &SdeSpec,
    steps: usize,
    first: u64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<PiecewisePath>> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample path"));
    }
    spec.validate()?;
    with_workers(workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| simulate_one(spec, steps, seed, first + i))
            .collect()
    })
}

/// Empirical second-moment matrix of signature features.
#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub word_set: WordSet,
    pub sample_size: usize,
    pub gram: Vec<Vec<f64>>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub trace: f64,
    /// −1, 0 or 1; eigenvalues below `1e−12·max|λ|` count as zero.
    pub determinant_sign: i8,
    /// `max λ / min λ`, `None` when numerically singular.
    pub condition_estimate: Option<f64>,
    /// Unit eigenvector of the smallest eigenvalue, in word-set order.
    pub null_direction: Vec<f64>,
    /// Set when `n < |B|`: the Gram is singular by construction.
    pub sample_deficient: bool,
}

impl GramReport {
    pub fn is_numerically_singular(&self) -> bool {
        self.determinant_sign == 0
    }
}

pub const EIGEN_TOLERANCE: f64 = 1e-12;

const GRAM_CHUNK: usize = 128;

/// Feature vectors `(S^w)_{w∈B}` of each path.
pub fn features(paths: &[PiecewisePath], words: &WordSet, workers: usize) -> Result<Vec<Vec<f64>>> {
    with_workers(workers, || {
        paths
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                sig_forward(p, words)
                    .map(|(s, _)| s.into_values())
                    .map_err(|e| match e {
                        Error::Data(msg) => Error::Data(format!("path {i}: {msg}")),
                        other => other,
                    })
            })
            .collect()
    })
}

/// `(1/n) Σ f fᵀ`, summed per fixed-size chunk and combined in index order.
pub fn gram_matrix(rows: &[Vec<f64>], p: usize, workers: usize) -> DMatrix<f64> {
    let partials: Vec<DMatrix<f64>> = with_workers(workers, || {
        rows.par_chunks(GRAM_CHUNK)
            .map(|chunk| {
                let mut g = DMatrix::<f64>::zeros(p, p);
                for f in chunk {
                    for a in 0..p {
                        let fa = f[a];
                        for b in a..p {
                            g[(a, b)] += fa * f[b];
                        }
                    }
                }
                g
            })
            .collect()
    });
    let mut g = DMatrix::<f64>::zeros(p, p);
    for part in partials {
        g += part;
    }
    let n = rows.len().max(1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = g[(a, b)] / n;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

pub fn gram_report_from_features(rows: &[Vec<f64>], words: &WordSet, workers: usize) -> Result<GramReport> {
    let p = words.len();
    if p == 0 {
        return Err(Error::invalid("empty word set"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::invalid(format!("feature row {i} has the wrong length")));
    }
    let g = gram_matrix(rows, p, workers);
    let trace = g.trace();
    let eig = SymmetricEigen::new(g.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let min = eigenvalues[0];
    let max = eigenvalues[p - 1];
    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = EIGEN_TOLERANCE * scale;
    let mut sign = 1i8;
    for v in &eigenvalues {
        if v.abs() <= tol {
            sign = 0;
            break;
        }
        if *v < 0.0 {
            sign = -sign;
        }
    }
    let null_direction = eig.eigenvectors.column(order[0]).iter().copied().collect();
    Ok(GramReport {
        word_set: words.clone(),
        sample_size: rows.len(),
        gram: (0..p).map(|a| (0..p).map(|b| g[(a, b)]).collect()).collect(),
        eigenvalues,
        min_eigenvalue: min,
        max_eigenvalue: max,
        trace,
        determinant_sign: sign,
        condition_estimate: (sign != 0 && min > 0.0).then(|| max / min),
        null_direction,
        sample_deficient: rows.len() < p,
    })
}

/// Gram diagnostics over `B`. With `n < |B|` the report is still produced and
/// flagged as sample-deficient.
pub fn gram_report(paths: &[PiecewisePath], words: &WordSet, workers: usize) -> Result<GramReport> {
    let rows = features(paths, words, workers)?;
    gram_report_from_features(&rows, words, workers)
}

/// Maps a coefficient vector `v` on a word set through
/// `w ↦ ((N−|w|)!/T^{N−|w|}) · w ⧢ 0_{N−|w|}` and returns
/// `max |coefficient| / ‖scaled v‖_1`. A vector annihilating the features of
/// every path with horizon `T` is a relation of this map, so a near-null
/// Gram direction must give a small value.
pub fn phi_relation_residual(words: &WordSet, v: &[f64], horizon: f64) -> Result<f64> {
    if v.len() != words.len() {
        return Err(Error::invalid("coefficient vector does not match the word set"));
    }
    let order = words.order();
    let mut image: std::collections::BTreeMap<Word, f64> = Default::default();
    let mut mass = 0.0;
    for (w, &c) in words.iter().zip(v) {
        let k = order - w.len();
        let mut scale = 1.0;
        for j in 1..=k {
            scale *= j as f64 / horizon;
        }
        let poly = zero_pad_shuffle(w, k);
        for (u, q) in poly.terms() {
            let term = c * scale * rational_to_f64(q);
            mass += term.abs();
            *image.entry(u.clone()).or_insert(0.0) += term;
        }
    }
    if mass == 0.0 {
        return Ok(0.0);
    }
    Ok(image.values().fold(0.0f64, |m, x| m.max(x.abs())) / mass)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub steps: usize,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub determinant_sign: i8,
}

/// Min Gram eigenvalue of a certified basis for each grid size.
pub fn independence_sweep(
    spec: &SdeSpec,
    words: &WordSet,
    grid_sizes: &[usize],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    let cert = is_basis_of_words(words, words.order())?;
    if !cert.is_basis() {
        return Err(Error::invalid("independence sweep needs a certified basis of words"));
    }
    grid_sizes
        .iter()
        .map(|&k| {
            let paths = simulate_range(spec, k, 0, n, seed, workers)?;
            let r = gram_report(&paths, words, workers)?;
            Ok(SweepRow { steps: k, min_eigenvalue: r.min_eigenvalue, trace: r.trace, determinant_sign: r.determinant_sign })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::{enumerate, WordClass};

    #[test]
    fn brownian_increments_have_variance_one_over_k() {
        let paths = simulate(&SdeSpec::brownian(1, 1.0), 100, 200, 7).unwrap();
        let incs: Vec<f64> = paths
            .iter()
            .flat_map(|p| (0..100).map(move |k| p.point(k + 1)[0] - p.point(k)[0]))
            .collect();
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * (0.01f64 / n).sqrt());
        assert!((var - 0.01).abs() < 0.0005, "{var}");
        assert_eq!(paths[0].times()[100], 1.0);
        assert_eq!(paths[0].num_segments(), 100);
    }

    #[test]
    fn ou_mean_at_horizon() {
        let n = 100_000;
        let paths = simulate(&SdeSpec::ornstein_uhlenbeck(1, 1.0), 100, n, 1).unwrap();
        let end: Vec<f64> = paths.iter().map(|p| p.point(100)[0]).collect();
        let mean = end.iter().sum::<f64>() / n as f64;
        let var = end.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        // Euler mean: (1 − h)^K − 1 differs from e^{−1} − 1 by about 2e−3.
        let exact = (-1.0f64).exp() - 1.0;
        let euler = 0.99f64.powi(100) - 1.0;
        assert!((mean - euler).abs() < 3.0 * se, "{mean} vs {euler} (se {se})");
        assert!((mean - exact).abs() < 3.0 * se + (euler - exact).abs());
    }

    #[test]
    fn simulation_is_deterministic_and_worker_independent() {
        let spec = SdeSpec::ornstein_uhlenbeck(2, 1.0);
        let a = simulate_range(&spec, 20, 0, 9, 42, 1).unwrap();
        let b = simulate_range(&spec, 20, 0, 9, 42, 4).unwrap();
        assert_eq!(a, b);
        let tail = simulate_range(&spec, 20, 5, 4, 42, 2).unwrap();
        assert_eq!(&a[5..], &tail[..]);
        assert_ne!(a, simulate_range(&spec, 20, 0, 9, 43, 1).unwrap());
    }

    #[test]
    fn custom_drift_and_random_start() {
        let spec = SdeSpec {
            process: Process::CustomDrift(Arc::new(|_, x: &[f64]| vec![-2.0 * x[0]])),
            dim: 1,
            horizon: 0.5,
            initial: Initial::Gaussian { mean: vec![1.0], std: vec![0.0] },
        };
        let p = simulate_one(&spec, 10, 3, 0).unwrap();
        assert_eq!(p.point(0)[0], 1.0);
        assert!((p.horizon() - 0.5).abs() < 1e-15);
        assert!(simulate(&spec, 0, 1, 0).is_err());
        let bad = SdeSpec { initial: Initial::Fixed(vec![0.0, 0.0]), ..spec };
        assert!(simulate(&bad, 10, 1, 0).is_err());
    }

    #[test]
    fn brownian_gram_first_order() {
        let paths = simulate(&SdeSpec::brownian(1, 1.0), 100, 10_000, 5).unwrap();
        let b = WordSet::parse(1, 1, &["e", "1"]).unwrap();
        let r = gram_report(&paths, &b, 0).unwrap();
        assert!((r.min_eigenvalue - 1.0).abs() < 0.1, "{}", r.min_eigenvalue);
        assert_eq!(r.determinant_sign, 1);
        assert!((r.gram[0][0] - 1.0).abs() < 1e-15);
        assert!(r.gram[0][1].abs() < 0.05);
    }

    #[test]
    fn full_set_is_degenerate_and_suffixes_are_not() {
        for spec in [SdeSpec::brownian(1, 1.0), SdeSpec::ornstein_uhlenbeck(1, 1.0)] {
            let paths = simulate(&spec, 50, 400, 11).unwrap();
            for n in 1..=3 {
                let all = enumerate(&WordClass::AllUpTo, n, 1).unwrap();
                let full = gram_report(&paths, &all, 0).unwrap();
                assert!(full.min_eigenvalue < 1e-6 * full.trace);
                assert!(full.min_eigenvalue >= -1e-10 * full.trace);
                assert!(phi_relation_residual(&all, &full.null_direction, 1.0).unwrap() < 1e-6);
                let suf = enumerate(&WordClass::SuffixesUpTo, n, 1).unwrap();
                let s = gram_report(&paths, &suf, 0).unwrap();
                assert!(s.min_eigenvalue > 1e3 * full.min_eigenvalue.abs());
                assert!(s.min_eigenvalue > 0.0);
                // a generic direction is not a relation
                let ones = vec![1.0; suf.len()];
                assert!(phi_relation_residual(&suf, &ones, 1.0).unwrap() > 1e-3);
            }
        }
    }

    #[test]
    fn deficient_and_single_segment_grams() {
        let b = enumerate(&WordClass::SuffixesUpTo, 2, 1).unwrap();
        let few = simulate(&SdeSpec::brownian(1, 1.0), 10, 3, 0).unwrap();
        let r = gram_report(&few, &b, 0).unwrap();
        assert!(r.sample_deficient);
        assert_eq!(r.determinant_sign, 0);

        let rows = independence_sweep(&SdeSpec::brownian(1, 1.0), &b, &[1, 16], 500, 2, 0).unwrap();
        assert!(rows[0].min_eigenvalue.abs() < 1e-10 * rows[0].trace);
        assert!(rows[1].min_eigenvalue > 1e-6);
        let not_basis = WordSet::parse(1, 2, &["1", "11"]).unwrap();
        assert!(independence_sweep(&SdeSpec::brownian(1, 1.0), &not_basis, &[4], 10, 0, 0).is_err());
    }

    #[test]
    fn gram_is_worker_independent() {
        let paths = simulate(&SdeSpec::brownian(2, 1.0), 10, 300, 9).unwrap();
        let b = enumerate(&WordClass::SuffixesUpTo, 2, 2).unwrap();
        let a = gram_report(&paths, &b, 1).unwrap();
        let c = gram_report(&paths, &b, 3).unwrap();
        assert_eq!(a.gram, c.gram);
        assert_eq!(a.eigenvalues, c.eigenvalues);
    }
}

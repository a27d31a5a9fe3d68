//! Truncated signatures of time-augmented piecewise-linear paths.
//!
//! Components are computed only for a requested word set, by folding Chen's
//! relation over the segments either left to right (working set = prefix
//! closure) or right to left (working set = suffix closure). Every run carries
//! an [`OpCounter`] that follows the unit-cost accounting of the closed-form
//! cost model:
//!
//! * each component of the first factor's segment signature costs 1;
//! * each Chen update of a word of length `m` costs `2m`;
//! * segment components used inside Chen updates are not counted separately.
//!
//! With this convention the counter equals
//! `Card(Φ(B)) + 2(K−2)ℓ(Φ(B)) + 2ℓ(B)` for `K ≥ 2` segments.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::words::{closure_backward, closure_forward, enumerate, same_dim, Word, WordClass, WordSet};

/// One affine piece: how long it lasts and how far it moves in space.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSegment {
    pub duration: f64,
    pub increment: Vec<f64>,
}

impl AffineSegment {
    pub fn new(duration: f64, increment: Vec<f64>) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!("segment duration must be positive, got {duration}")));
        }
        if increment.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite segment increment"));
        }
        Ok(AffineSegment { duration, increment })
    }

    pub fn dim(&self) -> usize {
        self.increment.len()
    }

    /// Increment of letter `l` of the time-augmented path.
    #[inline]
    pub fn letter_increment(&self, l: u8) -> f64 {
        if l == 0 {
            self.duration
        } else {
            self.increment[l as usize - 1]
        }
    }

    fn augmented(&self) -> Vec<f64> {
        std::iter::once(self.duration).chain(self.increment.iter().copied()).collect()
    }
}

/// Timestamped piecewise-linear path in `R^d`; time is the implicit extra
/// coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePath {
    dim: usize,
    times: Vec<f64>,
    /// Row-major `(n+1) × dim`.
    values: Vec<f64>,
}

impl PiecewisePath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("points have inconsistent dimensions"));
        }
        Self::from_flat(dim, times, points.into_iter().flatten().collect())
    }

    pub fn from_flat(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be at least 1"));
        }
        if times.len() < 2 {
            return Err(Error::invalid(format!(
                "a path needs at least 2 timestamps, got {}",
                times.len()
            )));
        }
        if values.len() != times.len() * dim {
            return Err(Error::invalid("values do not match timestamps × dimension"));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite path data"));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps must be strictly increasing (t[{}]={} >= t[{}]={})",
                k,
                times[k],
                k + 1,
                times[k + 1]
            )));
        }
        Ok(PiecewisePath { dim, times, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn num_points(&self) -> usize {
        self.times.len()
    }

    pub fn num_segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn segment(&self, k: usize) -> AffineSegment {
        let a = self.point(k);
        let b = self.point(k + 1);
        AffineSegment {
            duration: self.times[k + 1] - self.times[k],
            increment: a.iter().zip(b).map(|(x, y)| y - x).collect(),
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = AffineSegment> + '_ {
        (0..self.num_segments()).map(move |k| self.segment(k))
    }
}

/// Signature values over a word set, aligned with its canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SigVector {
    words: Arc<WordSet>,
    values: Vec<f64>,
}

impl SigVector {
    pub fn new(words: Arc<WordSet>, values: Vec<f64>) -> Result<Self> {
        if words.len() != values.len() {
            return Err(Error::invalid("signature values do not match the word set"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite signature component".into()));
        }
        Ok(SigVector { words, values })
    }

    pub fn word_set(&self) -> &WordSet {
        &self.words
    }

    pub fn shared_word_set(&self) -> Arc<WordSet> {
        self.words.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> u8 {
        self.words.dim()
    }

    pub fn order(&self) -> usize {
        self.words.order()
    }

    pub fn get(&self, w: &Word) -> Option<f64> {
        self.words.index_of(w).map(|i| self.values[i])
    }

    pub fn value(&self, w: &Word) -> Result<f64> {
        self.get(w).ok_or_else(|| Error::IncompleteSignature(w.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.words.iter().zip(self.values.iter().copied())
    }

    /// Restricts to a subset of the words.
    pub fn restrict(&self, subset: &WordSet) -> Result<SigVector> {
        let values = subset.iter().map(|w| self.value(w)).collect::<Result<Vec<_>>>()?;
        Ok(SigVector { words: Arc::new(subset.clone()), values })
    }
}

/// Elementary-operation counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub elementary_ops: u64,
}

impl OpCounter {
    #[inline]
    pub fn add(&mut self, n: u64) {
        self.elementary_ops += n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

fn inverse_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![1.0; n + 1];
    let mut f = 1.0;
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        f *= k as f64;
        *slot = 1.0 / f;
    }
    out
}

fn check_path_dim(path_dim: usize, words: &WordSet) -> Result<()> {
    if path_dim != words.dim() as usize {
        return Err(Error::AlphabetMismatch { left: path_dim.min(255) as u8, right: words.dim() });
    }
    Ok(())
}

#[inline]
fn affine_component(seg: &AffineSegment, letters: &[u8], inv_fact: &[f64]) -> f64 {
    letters.iter().fold(inv_fact[letters.len()], |acc, &l| acc * seg.letter_increment(l))
}

/// `S^{i_1…i_m} = (1/m!) ∏ Δ̂^{i_k}` for a single affine piece.
pub fn sig_affine(seg: &AffineSegment, words: &WordSet) -> Result<SigVector> {
    check_path_dim(seg.dim(), words)?;
    let inv_fact = inverse_factorials(words.order());
    let values = words.iter().map(|w| affine_component(seg, w.letters(), &inv_fact)).collect();
    SigVector::new(Arc::new(words.clone()), values)
}

/// `S^w(X*Y) = Σ_k S^{w_1…w_k}(X) S^{w_{k+1}…w_m}(Y)`; adds `2‖w‖` to the counter.
pub fn chen_combine(left: &SigVector, right: &SigVector, w: &Word, counter: &mut OpCounter) -> Result<f64> {
    same_dim(left.dim(), w.dim())?;
    same_dim(right.dim(), w.dim())?;
    let mut acc = 0.0;
    for k in 0..=w.len() {
        acc += left.value(&w.prefix(k))? * right.value(&w.suffix_from(k))?;
    }
    counter.add(2 * w.len() as u64);
    Ok(acc)
}

/// Precomputed layout of a closure set: for each word, the indices of its
/// prefixes (forward) or suffixes (backward) in the same set.
struct Plan {
    letters: Vec<Vec<u8>>,
    /// `links[i][j]`: index of the length-`j` prefix (forward) or of the
    /// suffix starting at `j` (backward).
    links: Vec<Vec<usize>>,
    /// Indices of the requested words inside the closure.
    targets: Vec<usize>,
    closure_length: u64,
    target_length: u64,
}

impl Plan {
    fn new(closure: &WordSet, requested: &WordSet, direction: Direction) -> Self {
        let letters: Vec<Vec<u8>> = closure.iter().map(|w| w.letters().to_vec()).collect();
        let links = closure
            .iter()
            .map(|w| {
                (0..=w.len())
                    .map(|j| {
                        let part = match direction {
                            Direction::Forward => w.prefix(j),
                            Direction::Backward => w.suffix_from(j),
                        };
                        closure.index_of(&part).expect("closure contains all parts")
                    })
                    .collect()
            })
            .collect();
        let targets = requested
            .iter()
            .map(|w| closure.index_of(w).expect("closure contains the requested words"))
            .collect();
        Plan {
            letters,
            links,
            targets,
            closure_length: closure.total_length() as u64,
            target_length: requested.total_length() as u64,
        }
    }

    /// In-place Chen update of word `i`. Words are visited from longest to
    /// shortest so every part read still holds the previous value.
    #[inline]
    fn update(&self, i: usize, values: &mut [f64], seg: &AffineSegment, inv_fact: &[f64], direction: Direction) {
        let letters = &self.letters[i];
        let links = &self.links[i];
        let m = letters.len();
        let mut acc = 0.0;
        match direction {
            Direction::Forward => {
                // S^w(X * Δ) = Σ_j S^{w[..j]}(X) · S^{w[j..]}(Δ), with the
                // segment factor built right to left.
                let mut prod = 1.0;
                for j in (0..=m).rev() {
                    acc += values[links[j]] * prod * inv_fact[m - j];
                    if j > 0 {
                        prod *= seg.letter_increment(letters[j - 1]);
                    }
                }
            }
            Direction::Backward => {
                // S^w(Δ * Y) = Σ_j S^{w[..j]}(Δ) · S^{w[j..]}(Y)
                let mut prod = 1.0;
                for j in 0..=m {
                    acc += prod * inv_fact[j] * values[links[j]];
                    if j < m {
                        prod *= seg.letter_increment(letters[j]);
                    }
                }
            }
        }
        values[i] = acc;
    }
}

fn sig_chen(path: &PiecewisePath, words: &WordSet, direction: Direction) -> Result<(SigVector, OpCounter)> {
    check_path_dim(path.dim(), words)?;
    let closure = match direction {
        Direction::Forward => closure_forward(words),
        Direction::Backward => closure_backward(words),
    };
    let plan = Plan::new(&closure, words, direction);
    let inv_fact = inverse_factorials(words.order());
    let k_total = path.num_segments();
    let mut counter = OpCounter::default();

    let segment_at = |step: usize| match direction {
        Direction::Forward => path.segment(step),
        Direction::Backward => path.segment(k_total - 1 - step),
    };

    let first = segment_at(0);
    let mut values: Vec<f64> = plan
        .letters
        .iter()
        .map(|l| affine_component(&first, l, &inv_fact))
        .collect();
    counter.add(values.len() as u64);

    for step in 1..k_total {
        let seg = segment_at(step);
        if step + 1 < k_total {
            for i in (0..values.len()).rev() {
                plan.update(i, &mut values, &seg, &inv_fact, direction);
            }
            counter.add(2 * plan.closure_length);
        } else {
            // The last factor only needs the requested words. Targets are in
            // canonical order, so reverse iteration is longest first.
            for &i in plan.targets.iter().rev() {
                plan.update(i, &mut values, &seg, &inv_fact, direction);
            }
            counter.add(2 * plan.target_length);
        }
    }

    let out: Vec<f64> = plan.targets.iter().map(|&i| values[i]).collect();
    Ok((SigVector::new(Arc::new(words.clone()), out)?, counter))
}

/// Signature over `words` by left-to-right Chen recursion.
pub fn sig_forward(path: &PiecewisePath, words: &WordSet) -> Result<(SigVector, OpCounter)> {
    sig_chen(path, words, Direction::Forward)
}

/// Signature over `words` by right-to-left Chen recursion.
pub fn sig_backward(path: &PiecewisePath, words: &WordSet) -> Result<(SigVector, OpCounter)> {
    sig_chen(path, words, Direction::Backward)
}

pub fn sig_directed(path: &PiecewisePath, words: &WordSet, direction: Direction) -> Result<(SigVector, OpCounter)> {
    sig_chen(path, words, direction)
}

/// Signatures of many paths, on at most `workers` threads (0 = all cores).
/// The output order and values do not depend on `workers`.
pub fn sig_batch(
    paths: &[PiecewisePath],
    words: &WordSet,
    direction: Direction,
    workers: usize,
) -> Result<Vec<(SigVector, OpCounter)>> {
    with_workers(workers, || {
        paths.par_iter().map(|p| sig_chen(p, words, direction)).collect()
    })
}

/// Runs `f` on a rayon pool of the given size; 0 uses the global pool.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Closed-form operation count of the forward/backward recursion.
pub fn cost_closed_form(direction: Direction, words: &WordSet, segments: usize) -> Result<u64> {
    if segments < 2 {
        return Err(Error::invalid(format!("closed-form cost needs K >= 2 segments, got {segments}")));
    }
    let closure = match direction {
        Direction::Forward => closure_forward(words),
        Direction::Backward => closure_backward(words),
    };
    Ok(closure.len() as u64
        + 2 * (segments as u64 - 2) * closure.total_length() as u64
        + 2 * words.total_length() as u64)
}

/// Largest order and segment count accepted by [`brute_force_sig`].
pub const BRUTE_FORCE_MAX_ORDER: usize = 5;
pub const BRUTE_FORCE_MAX_SEGMENTS: usize = 50;

/// Independent reference: integrates `S^{wi}(t) = ∫ S^w dX^i` exactly on
/// each segment, carrying every component as a polynomial in local time.
/// No Chen relation and no factorial formula are used.
pub fn brute_force_sig(path: &PiecewisePath, order: usize) -> Result<SigVector> {
    if order > BRUTE_FORCE_MAX_ORDER || path.num_segments() > BRUTE_FORCE_MAX_SEGMENTS {
        return Err(Error::Guard(format!(
            "brute force limited to N <= {BRUTE_FORCE_MAX_ORDER} and <= {BRUTE_FORCE_MAX_SEGMENTS} segments"
        )));
    }
    let d = u8::try_from(path.dim()).map_err(|_| Error::invalid("dimension too large"))?;
    let words = enumerate(&WordClass::AllUpTo, order, d)?;
    let parent: Vec<usize> = words
        .iter()
        .map(|w| if w.is_empty() { 0 } else { words.index_of(&w.prefix(w.len() - 1)).unwrap() })
        .collect();
    let mut start = vec![0.0; words.len()];
    start[0] = 1.0;
    let mut polys: Vec<Vec<f64>> = vec![Vec::new(); words.len()];
    for seg in path.segments() {
        let h = seg.duration;
        let rates = seg.augmented().iter().map(|v| v / h).collect::<Vec<f64>>();
        polys[0] = vec![1.0];
        for (i, w) in words.iter().enumerate().skip(1) {
            let rate = rates[w.last().unwrap() as usize];
            let p = &polys[parent[i]];
            // start + rate · ∫_0^τ p
            let mut q = Vec::with_capacity(p.len() + 1);
            q.push(start[i]);
            for (k, c) in p.iter().enumerate() {
                q.push(rate * c / (k as f64 + 1.0));
            }
            polys[i] = q;
        }
        for (i, p) in polys.iter().enumerate() {
            start[i] = p.iter().rev().fold(0.0, |acc, c| acc * h + c);
        }
    }
    SigVector::new(Arc::new(words), start)
}

/// Dense truncated signature over all of `W_{≤N}`, in canonical word order
/// (index = [`Word::key`]). Uses the Horner form of `S ⊗ exp(Δ)` per level,
/// `((Δ/m + S_1) ⊗ Δ/(m−1) + S_2) ⊗ … ⊗ Δ + S_m`.
pub fn dense_signature(path: &PiecewisePath, order: usize) -> Vec<f64> {
    let base = path.dim() + 1;
    let mut offsets = Vec::with_capacity(order + 2);
    let mut size = 1usize;
    let mut off = 0usize;
    for _ in 0..=order {
        offsets.push(off);
        off += size;
        size *= base;
    }
    offsets.push(off);
    let mut sig = vec![0.0; off];
    sig[0] = 1.0;
    let top = base.pow(order as u32);
    let mut acc = vec![0.0; top];
    let mut next = vec![0.0; top];
    let mut delta = vec![0.0; base];
    for seg in path.segments() {
        delta[0] = seg.duration;
        delta[1..].copy_from_slice(&seg.increment);
        for m in (1..=order).rev() {
            // acc holds a level-j tensor while j runs from 0 up to m.
            acc[0] = 1.0;
            let mut len = 1usize;
            for j in 1..=m {
                let scale = 1.0 / (m - j + 1) as f64;
                let lower = &sig[offsets[j]..offsets[j + 1]];
                for (a, &x) in acc[..len].iter().enumerate() {
                    let xs = x * scale;
                    let out = &mut next[a * base..(a + 1) * base];
                    for (o, &dl) in out.iter_mut().zip(delta.iter()) {
                        *o = xs * dl;
                    }
                }
                len *= base;
                for (o, &s) in next[..len].iter_mut().zip(lower) {
                    *o += s;
                }
                std::mem::swap(&mut acc, &mut next);
            }
            sig[offsets[m]..offsets[m + 1]].copy_from_slice(&acc[..len]);
        }
    }
    sig
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn w(d: u8, s: &str) -> Word {
        Word::parse(d, s).unwrap()
    }

    fn unit_path(points: &[f64]) -> PiecewisePath {
        let times = (0..points.len()).map(|k| k as f64).collect();
        PiecewisePath::new(times, points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    fn random_path(rng: &mut impl Rng, d: usize, k: usize) -> PiecewisePath {
        let mut t = rng.gen_range(0.0..1.0);
        let mut times = vec![t];
        let mut pts = vec![(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()];
        for _ in 0..k {
            t += rng.gen_range(0.05..0.5);
            times.push(t);
            pts.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        PiecewisePath::new(times, pts).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn affine_examples() {
        let all = enumerate(&WordClass::AllUpTo, 3, 1).unwrap();
        let seg = AffineSegment::new(2.0, vec![0.0]).unwrap();
        let s = sig_affine(&seg, &all).unwrap();
        assert_eq!(s.value(&w(1, "000")).unwrap(), 8.0 / 6.0);
        assert_eq!(s.value(&Word::empty(1)).unwrap(), 1.0);
        let s = sig_affine(&AffineSegment::new(1.0, vec![2.0]).unwrap(), &all).unwrap();
        assert_eq!(s.value(&w(1, "01")).unwrap(), 1.0);
        let s = sig_affine(&AffineSegment::new(1.0, vec![3.0]).unwrap(), &all).unwrap();
        assert_eq!(s.value(&w(1, "11")).unwrap(), 4.5);
    }

    #[test]
    fn affine_matches_riemann_sum() {
        // S^11 over x(t) = 3t on [0,1]: ∫∫_{s<t} dx_s dx_t by left Riemann sums.
        let n = 10_000;
        let dx = 3.0 / n as f64;
        let mut inner = 0.0;
        let mut outer = 0.0;
        for _ in 0..n {
            outer += inner * dx;
            inner += dx;
        }
        assert!((outer - 4.5).abs() < 1e-3);
    }

    #[test]
    fn affine_rejects_dimension_mismatch() {
        let set = enumerate(&WordClass::AllUpTo, 2, 2).unwrap();
        assert!(sig_affine(&AffineSegment::new(1.0, vec![1.0]).unwrap(), &set).is_err());
        assert!(AffineSegment::new(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn chen_examples() {
        let all = Arc::new(enumerate(&WordClass::AllUpTo, 2, 1).unwrap());
        let a = 1.7;
        let seg = sig_affine(&AffineSegment::new(1.0, vec![a]).unwrap(), &all).unwrap();
        let mut c = OpCounter::default();
        let v = chen_combine(&seg, &seg, &w(1, "11"), &mut c).unwrap();
        assert!(close(v, 2.0 * a * a, 1e-15));
        assert_eq!(c.elementary_ops, 4);
        let doubled = sig_affine(&AffineSegment::new(2.0, vec![2.0 * a]).unwrap(), &all).unwrap();
        assert!(close(v, doubled.value(&w(1, "11")).unwrap(), 1e-15));
        assert_eq!(chen_combine(&seg, &seg, &Word::empty(1), &mut c).unwrap(), 1.0);
        assert_eq!(c.elementary_ops, 4);

        let l = sig_affine(&AffineSegment::new(1.0, vec![1.0]).unwrap(), &all).unwrap();
        let r = sig_affine(&AffineSegment::new(1.0, vec![0.0]).unwrap(), &all).unwrap();
        assert!(close(chen_combine(&l, &r, &w(1, "01"), &mut c).unwrap(), 0.5, 1e-15));
        // brute-force reference for the same two-segment path
        let bf = brute_force_sig(&unit_path(&[0.0, 1.0, 1.0]), 2).unwrap();
        assert!(close(bf.value(&w(1, "01")).unwrap(), 0.5, 1e-14));
    }

    #[test]
    fn chen_reports_missing_parts() {
        let only = Arc::new(WordSet::parse(1, 2, &["11"]).unwrap());
        let s = SigVector::new(only, vec![1.0]).unwrap();
        let mut c = OpCounter::default();
        assert!(matches!(chen_combine(&s, &s, &w(1, "11"), &mut c), Err(Error::IncompleteSignature(_))));
    }

    #[test]
    fn counter_examples() {
        let path = unit_path(&[0.0, 0.3, -0.2]);
        let all = enumerate(&WordClass::AllUpTo, 2, 1).unwrap();
        assert_eq!(sig_forward(&path, &all).unwrap().1.elementary_ops, 27);
        let suf = enumerate(&WordClass::SuffixesUpTo, 2, 1).unwrap();
        assert_eq!(sig_forward(&path, &suf).unwrap().1.elementary_ops, 14);
        let pre = enumerate(&WordClass::PrefixesUpTo, 2, 1).unwrap();
        assert_eq!(sig_backward(&path, &pre).unwrap().1.elementary_ops, 14);
        let three = unit_path(&[0.0, 0.3, -0.2, 0.5]);
        let b = WordSet::parse(1, 2, &["11"]).unwrap();
        assert_eq!(sig_backward(&three, &b).unwrap().1.elementary_ops, 13);
        assert_eq!(cost_closed_form(Direction::Backward, &b, 3).unwrap(), 13);
        // single segment: one unit per closure component
        let one = unit_path(&[0.0, 0.7]);
        assert_eq!(sig_forward(&one, &b).unwrap().1.elementary_ops, 3);
    }

    #[test]
    fn closed_form_examples() {
        for d in 1..=2u8 {
            for n in 1..=4 {
                let suf = enumerate(&WordClass::SuffixesUpTo, n, d).unwrap();
                for k in [2, 5, 17] {
                    let expected = (d as u64 + 1).pow(n as u32) + 2 * (k as u64 - 1) * suf.total_length() as u64;
                    assert_eq!(cost_closed_form(Direction::Forward, &suf, k).unwrap(), expected);
                }
            }
        }
        let empty = WordSet::parse(1, 3, &["e"]).unwrap();
        assert_eq!(cost_closed_form(Direction::Forward, &empty, 5).unwrap(), 1);
        assert!(cost_closed_form(Direction::Forward, &empty, 1).is_err());
    }

    #[test]
    fn engines_agree_with_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let d = 1 + trial % 2;
            let k = 1 + trial % 7;
            let path = random_path(&mut rng, d, k);
            let n = 1 + trial % 4;
            let all = enumerate(&WordClass::AllUpTo, n, d as u8).unwrap();
            let (f, cf) = sig_forward(&path, &all).unwrap();
            let (b, cb) = sig_backward(&path, &all).unwrap();
            let bf = brute_force_sig(&path, n).unwrap();
            let dense = dense_signature(&path, n);
            for (i, word) in all.iter().enumerate() {
                let r = bf.value(word).unwrap();
                assert!(close(f.values()[i], r, 1e-12), "{word}: {} vs {r}", f.values()[i]);
                assert!(close(b.values()[i], r, 1e-12));
                assert!(close(dense[word.key() as usize], r, 1e-12));
            }
            if k >= 2 {
                assert_eq!(cf.elementary_ops, cost_closed_form(Direction::Forward, &all, k).unwrap());
                assert_eq!(cb.elementary_ops, cost_closed_form(Direction::Backward, &all, k).unwrap());
            }
        }
    }

    #[test]
    fn sparse_word_sets_match_full() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let path = random_path(&mut rng, 2, 6);
        let set = WordSet::parse(2, 4, &["1201", "0", "22", "1000"]).unwrap();
        let full = brute_force_sig(&path, 4).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let (s, c) = sig_directed(&path, &set, dir).unwrap();
            for (word, v) in s.iter() {
                assert!(close(v, full.value(word).unwrap(), 1e-12));
            }
            assert_eq!(c.elementary_ops, cost_closed_form(dir, &set, 6).unwrap());
        }
    }

    #[test]
    fn time_component_is_factorial() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let path = random_path(&mut rng, 1, 9);
        let t = path.horizon();
        let all = enumerate(&WordClass::AllUpTo, 4, 1).unwrap();
        let (s, _) = sig_forward(&path, &all).unwrap();
        let mut fact = 1.0;
        for k in 0..=4 {
            if k > 0 {
                fact *= k as f64;
            }
            let v = s.value(&Word::zeros(1, k)).unwrap();
            assert!((v - t.powi(k as i32) / fact).abs() <= 1e-12 * v.abs());
        }
    }

    #[test]
    fn path_validation() {
        assert!(PiecewisePath::new(vec![0.0], vec![vec![1.0]]).is_err());
        assert!(PiecewisePath::new(vec![0.0, 0.0], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(PiecewisePath::new(vec![0.0, 1.0], vec![vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(brute_force_sig(&unit_path(&[0.0, 1.0]), 6).is_err());
    }

    #[test]
    fn batch_is_independent_of_workers() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let paths: Vec<PiecewisePath> = (0..12).map(|_| random_path(&mut rng, 1, 5)).collect();
        let set = enumerate(&WordClass::SuffixesUpTo, 3, 1).unwrap();
        let a = sig_batch(&paths, &set, Direction::Forward, 1).unwrap();
        let b = sig_batch(&paths, &set, Direction::Forward, 3).unwrap();
        assert_eq!(a, b);
    }
}

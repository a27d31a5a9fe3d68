//! Bases of words: the completion map `w ↦ w ⧢ 0_{N−‖w‖}`, exact rank
//! certification per pure-word block, the cardinality filter and the padded
//! prefix/suffix families.
//!
//! The completion map sends `W_{≤N}(γ)` into `Span(W_N(γ))`, so a set is a
//! basis of words for `W_N` exactly when each pure-word block is one for
//! `W_N(γ)`. Certification therefore never builds the full `(d+1)^N`-wide
//! matrix; [`is_basis_full_matrix`] does, and exists to cross-check.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::freealg::{rational_string, Rational, ShuffleMemo, WordPoly};
use crate::words::{
    binom, check_dim, enumerate, pure_words_up_to, same_dim, Word, WordClass, WordSet,
};

/// Rows are candidate words, columns target words of length `N`, both in
/// canonical order. Entries are the (non-negative integer) coefficients of the
/// zero-padded shuffles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionMatrix {
    pub d: u8,
    #[serde(rename = "N")]
    pub order: usize,
    pub gamma: Option<Word>,
    pub rows: Vec<Word>,
    pub cols: Vec<Word>,
    #[serde(serialize_with = "ser_int_matrix")]
    pub entries: Vec<Vec<BigInt>>,
}

fn ser_int_matrix<S: serde::Serializer>(m: &[Vec<BigInt>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let as_strings: Vec<Vec<String>> = m.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    as_strings.serialize(s)
}

impl CompletionMatrix {
    pub fn entry(&self, row: &Word, col: &Word) -> Option<&BigInt> {
        let i = self.rows.binary_search(row).ok()?;
        let j = self.cols.binary_search(col).ok()?;
        Some(&self.entries[i][j])
    }

    pub fn entry_rational(&self, row: &Word, col: &Word) -> Option<Rational> {
        self.entry(row, col).map(|v| Rational::from_integer(v.clone()))
    }

    pub fn rank(&self) -> Result<usize> {
        exact::rank(self.entries.clone())
    }

    /// Entries as `i64`, for display.
    pub fn to_i64(&self) -> Vec<Vec<i64>> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|v| v.to_i64().unwrap_or(i64::MAX)).collect())
            .collect()
    }
}

fn check_within(set: &WordSet, order: usize) -> Result<()> {
    if let Some(w) = set.iter().find(|w| w.len() > order) {
        return Err(Error::invalid(format!("word {w} is longer than the order {order}")));
    }
    Ok(())
}

fn build_matrix(rows: &[Word], cols: &[Word], order: usize, memo: &mut ShuffleMemo) -> Vec<Vec<BigInt>> {
    rows.iter()
        .map(|w| {
            let counts = memo.zero_pad(w, order - w.len());
            let mut row = vec![BigInt::zero(); cols.len()];
            for (u, c) in counts.iter() {
                if let Ok(j) = cols.binary_search(u) {
                    row[j] = c.clone();
                }
            }
            row
        })
        .collect()
}

/// Completion matrix of `set` against all of `W_N`.
pub fn completion_matrix(set: &WordSet, order: usize) -> Result<CompletionMatrix> {
    check_within(set, order)?;
    let cols = enumerate(&WordClass::AllExact, order, set.dim())?.words().to_vec();
    let rows = set.canonical_order();
    let mut memo = ShuffleMemo::new();
    let entries = build_matrix(&rows, &cols, order, &mut memo);
    Ok(CompletionMatrix { d: set.dim(), order, gamma: None, rows, cols, entries })
}

/// Completion matrix of `set` against `W_N(γ)`; every word must have pure word `γ`.
pub fn completion_matrix_for_class(set: &WordSet, order: usize, gamma: &Word) -> Result<CompletionMatrix> {
    check_within(set, order)?;
    same_dim(set.dim(), gamma.dim())?;
    if let Some(w) = set.iter().find(|w| &w.pure() != gamma) {
        return Err(Error::invalid(format!("word {w} does not have pure word {gamma}")));
    }
    let cols = enumerate(&WordClass::ClassExact(gamma.clone()), order, set.dim())?.words().to_vec();
    let rows = set.canonical_order();
    let mut memo = ShuffleMemo::new();
    let entries = build_matrix(&rows, &cols, order, &mut memo);
    Ok(CompletionMatrix { d: set.dim(), order, gamma: Some(gamma.clone()), rows, cols, entries })
}

/// `φ(Σ c_w w) = Σ c_w (w ⧢ 0_{N−‖w‖})`.
pub fn completion_map(coeffs: &[(Word, Rational)], order: usize) -> Result<WordPoly> {
    let d = coeffs.first().map(|(w, _)| w.dim()).unwrap_or(1);
    let mut out = WordPoly::zero(d);
    let mut memo = ShuffleMemo::new();
    for (w, c) in coeffs {
        same_dim(d, w.dim())?;
        if w.len() > order {
            return Err(Error::invalid(format!("word {w} is longer than the order {order}")));
        }
        for (u, k) in memo.zero_pad(w, order - w.len()).iter() {
            out.add_term(u.clone(), c * Rational::from_integer(k.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Basis,
    NotBasis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockReport {
    pub gamma: Word,
    pub cardinality: usize,
    pub required: u64,
    pub rank: usize,
}

impl BlockReport {
    pub fn is_basis(&self) -> bool {
        self.cardinality as u64 == self.required && self.rank as u64 == self.required
    }
}

/// A nonzero combination of candidate words whose completion vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub gamma: Word,
    pub coefficients: Vec<(Word, Rational)>,
}

impl Serialize for Witness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            gamma: String,
            coefficients: BTreeMap<String, String>,
        }
        Repr {
            gamma: self.gamma.to_string(),
            coefficients: self
                .coefficients
                .iter()
                .map(|(w, c)| (w.to_string(), rational_string(c)))
                .collect(),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisCertificate {
    pub verdict: Verdict,
    pub rank: usize,
    pub d: u8,
    #[serde(rename = "N")]
    pub order: usize,
    pub blocks: Vec<BlockReport>,
    pub witness: Option<Witness>,
}

impl BasisCertificate {
    pub fn is_basis(&self) -> bool {
        self.verdict == Verdict::Basis
    }

    pub fn block(&self, gamma: &Word) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| &b.gamma == gamma)
    }
}

fn certify_block(
    words: &[Word],
    gamma: &Word,
    order: usize,
    memo: &mut ShuffleMemo,
) -> Result<(BlockReport, Option<Witness>)> {
    let cols = enumerate(&WordClass::ClassExact(gamma.clone()), order, gamma.dim())?.words().to_vec();
    let required = binom(order, gamma.len());
    if words.is_empty() {
        let report = BlockReport { gamma: gamma.clone(), cardinality: 0, required, rank: 0 };
        return Ok((report, None));
    }
    let m = build_matrix(words, &cols, order, memo);
    let rank = exact::rank(m.clone())?;
    let witness = if rank < words.len() {
        let y = exact::left_kernel_vector(&m)?
            .ok_or_else(|| Error::Invariant("rank-deficient rows without a dependency".into()))?;
        Some(Witness {
            gamma: gamma.clone(),
            coefficients: words.iter().cloned().zip(y).filter(|(_, c)| !c.is_zero()).collect(),
        })
    } else {
        None
    };
    let report = BlockReport { gamma: gamma.clone(), cardinality: words.len(), required, rank };
    Ok((report, witness))
}

/// Exact certificate for "`set` is a basis of words for `W_N`", computed
/// independently for each pure word `γ ∈ PW_{≤N}`.
pub fn is_basis_of_words(set: &WordSet, order: usize) -> Result<BasisCertificate> {
    check_within(set, order)?;
    let d = set.dim();
    let groups = set.by_pure_word();
    let gammas = pure_words_up_to(order, d);
    let results: Vec<(BlockReport, Option<Witness>)> = gammas
        .par_iter()
        .map(|gamma| {
            let mut memo = ShuffleMemo::new();
            let words = groups.get(gamma).map(Vec::as_slice).unwrap_or(&[]);
            certify_block(words, gamma, order, &mut memo)
        })
        .collect::<Result<Vec<_>>>()?;

    let rank = results.iter().map(|(b, _)| b.rank).sum();
    let verdict = if results.iter().all(|(b, _)| b.is_basis()) { Verdict::Basis } else { Verdict::NotBasis };
    let mut blocks = Vec::with_capacity(results.len());
    let mut witness = None;
    for (b, w) in results {
        if witness.is_none() {
            witness = w;
        }
        blocks.push(b);
    }
    if let Some(w) = &witness {
        debug_assert!(completion_map(&w.coefficients, order).map(|p| p.is_zero()).unwrap_or(false));
    }
    Ok(BasisCertificate { verdict, rank, d, order, blocks, witness })
}

/// Certificate for a single class: is `set ⊆ W_{≤N}(γ)` a basis of words for `W_N(γ)`?
pub fn is_basis_for_class(set: &WordSet, order: usize, gamma: &Word) -> Result<BlockReport> {
    check_within(set, order)?;
    same_dim(set.dim(), gamma.dim())?;
    if let Some(w) = set.iter().find(|w| &w.pure() != gamma) {
        return Err(Error::invalid(format!("word {w} does not have pure word {gamma}")));
    }
    let mut memo = ShuffleMemo::new();
    Ok(certify_block(set.words(), gamma, order, &mut memo)?.0)
}

/// Verdict from the full `|B| × (d+1)^N` completion matrix, without the
/// pure-word decomposition.
pub fn is_basis_full_matrix(set: &WordSet, order: usize) -> Result<(Verdict, usize)> {
    let m = completion_matrix(set, order)?;
    let rank = m.rank()?;
    let full = (set.dim() as usize + 1).pow(order as u32);
    let verdict = if set.len() == full && rank == full { Verdict::Basis } else { Verdict::NotBasis };
    Ok((verdict, rank))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "reason", rename_all = "snake_case")]
pub enum FilterOutcome {
    Pass,
    Fail(String),
}

impl FilterOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, FilterOutcome::Pass)
    }
}

/// Cardinality conditions every basis satisfies: `|B_γ| = C(N, ‖γ‖)` and
/// `|B_γ ∩ W_{≤m}| ≤ C(m, ‖γ‖)` for `m < N`. Passing does not imply a basis.
pub fn necessary_filter(set: &WordSet, order: usize) -> Result<FilterOutcome> {
    check_within(set, order)?;
    let groups = set.by_pure_word();
    for gamma in pure_words_up_to(order, set.dim()) {
        let words = groups.get(&gamma).map(Vec::as_slice).unwrap_or(&[]);
        let k = gamma.len();
        let required = binom(order, k);
        if words.len() as u64 != required {
            return Ok(FilterOutcome::Fail(format!(
                "class {gamma}: {} words, expected {required}",
                words.len()
            )));
        }
        for m in k..order {
            let upto = words.iter().filter(|w| w.len() <= m).count() as u64;
            if upto > binom(m, k) {
                return Ok(FilterOutcome::Fail(format!(
                    "class {gamma}: {upto} words of length <= {m}, at most {} allowed",
                    binom(m, k)
                )));
            }
        }
    }
    Ok(FilterOutcome::Pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `{ w 0_{m_w} : w does not end with 0 }`
    PrefixPadded,
    /// `{ 0_{m_w} w : w does not start with 0 }`
    SuffixPadded,
}

/// Builds a padded prefix or suffix family. `pad` maps base words to their
/// zero padding; missing entries mean no padding.
pub fn construct_family(kind: FamilyKind, order: usize, d: u8, pad: &BTreeMap<Word, usize>) -> Result<WordSet> {
    check_dim(d)?;
    let base = match kind {
        FamilyKind::PrefixPadded => enumerate(&WordClass::PrefixesUpTo, order, d)?,
        FamilyKind::SuffixPadded => enumerate(&WordClass::SuffixesUpTo, order, d)?,
    };
    for (w, &m) in pad {
        same_dim(d, w.dim())?;
        if !base.contains(w) {
            return Err(Error::invalid(format!("padding given for {w}, which is not a base word of the family")));
        }
        if w.len() + m > order {
            return Err(Error::invalid(format!("padding {m} for {w} exceeds the order {order}")));
        }
    }
    let words: Vec<Word> = base
        .iter()
        .map(|w| {
            let m = pad.get(w).copied().unwrap_or(0);
            let zeros = Word::zeros(d, m);
            match kind {
                FamilyKind::PrefixPadded => w.concat(&zeros),
                FamilyKind::SuffixPadded => zeros.concat(w),
            }
        })
        .collect::<Result<_>>()?;
    let set = WordSet::new(d, order, words)?;
    #[cfg(debug_assertions)]
    if order <= 4 {
        let cert = is_basis_of_words(&set, order)?;
        if !cert.is_basis() {
            return Err(Error::Invariant(format!("padded {kind:?} family is not a basis")));
        }
    }
    Ok(set)
}

/// Largest candidate pool [`enumerate_bases`] accepts.
pub const ENUMERATE_LIMIT: usize = 20;

/// Every subset of `W_{≤N}(γ)` that is a basis of words for `W_N(γ)`.
///
/// Only subsets of size `C(N, ‖γ‖)` are examined, since a basis of a space
/// has exactly its dimension.
pub fn enumerate_bases(order: usize, d: u8, gamma: &Word) -> Result<impl Iterator<Item = WordSet>> {
    let candidates = enumerate(&WordClass::ClassUpTo(gamma.clone()), order, d)?;
    if candidates.len() > ENUMERATE_LIMIT {
        return Err(Error::Guard(format!(
            "{} candidate words for class {gamma}, limit is {ENUMERATE_LIMIT}",
            candidates.len()
        )));
    }
    let size = binom(order, gamma.len()) as usize;
    let gamma = gamma.clone();
    let pool = candidates.words().to_vec();
    let mut memo = ShuffleMemo::new();
    Ok(itertools::Itertools::combinations(pool.into_iter(), size).filter_map(move |subset| {
        let (report, _) = certify_block(&subset, &gamma, order, &mut memo).ok()?;
        report
            .is_basis()
            .then(|| WordSet::from_sorted(d, order, subset))
    }))
}

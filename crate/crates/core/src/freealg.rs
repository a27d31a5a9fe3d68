//! Exact linear combinations of words and the shuffle product.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::ser::SerializeMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signature::SigVector;
use crate::words::{check_dim, same_dim, Word};

pub type Rational = BigRational;

/// Integer-coefficient shuffle result.
pub type ShuffleCounts = BTreeMap<Word, BigInt>;

/// A finite exact-rational linear combination of words. Zero coefficients are
/// never stored.
#[derive(Clone, PartialEq, Eq)]
pub struct WordPoly {
    d: u8,
    terms: BTreeMap<Word, Rational>,
}

impl WordPoly {
    pub fn zero(d: u8) -> Self {
        WordPoly { d, terms: BTreeMap::new() }
    }

    pub fn from_word(w: &Word) -> Self {
        Self::term(w.clone(), Rational::one())
    }

    pub fn term(w: Word, coeff: Rational) -> Self {
        let mut p = WordPoly::zero(w.dim());
        p.add_term(w, coeff);
        p
    }

    pub fn from_counts(d: u8, counts: &ShuffleCounts) -> Self {
        let mut p = WordPoly::zero(d);
        for (w, c) in counts {
            p.add_term(w.clone(), Rational::from_integer(c.clone()));
        }
        p
    }

    pub fn dim(&self) -> u8 {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, w: &Word) -> Rational {
        self.terms.get(w).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Rational)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, w: Word, coeff: Rational) {
        debug_assert_eq!(w.dim(), self.d);
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(w);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &WordPoly) -> Result<WordPoly> {
        same_dim(self.d, other.d)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn scale(&self, factor: &Rational) -> WordPoly {
        if factor.is_zero() {
            return WordPoly::zero(self.d);
        }
        WordPoly {
            d: self.d,
            terms: self.terms.iter().map(|(w, c)| (w.clone(), c * factor)).collect(),
        }
    }

    /// Parses the JSON object form `{"word": "p/q"}`.
    pub fn from_json(d: u8, value: &serde_json::Value) -> Result<WordPoly> {
        check_dim(d)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::invalid("word polynomial must be a JSON object"))?;
        let mut p = WordPoly::zero(d);
        for (k, v) in obj {
            let w = Word::parse(d, k)?;
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                _ => return Err(Error::invalid(format!("bad coefficient for {k}"))),
            };
            p.add_term(w, parse_rational(&s)?);
        }
        Ok(p)
    }
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::invalid(format!("bad rational \"{s}\""));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn rational_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl fmt::Display for WordPoly {
    /// Human form, e.g. `121 + 2*211`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else if c.is_negative() {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            if !mag.is_one() {
                write!(f, "{mag}*")?;
            }
            write!(f, "{w}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for WordPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WordPoly({self})")
    }
}

impl Serialize for WordPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.terms.len()))?;
        for (w, c) in &self.terms {
            map.serialize_entry(&w.to_string(), &rational_string(c))?;
        }
        map.end()
    }
}

/// Integer shuffle of two letter sequences, by dynamic programming over the
/// prefix lengths: `S[a][b] = S[a-1][b]·w_a + S[a][b-1]·v_b`.
fn shuffle_letters(d: u8, w: &[u8], v: &[u8]) -> ShuffleCounts {
    let (n, m) = (w.len(), v.len());
    // row[b] holds S[a][b] for the current a.
    let mut prev: Vec<BTreeMap<Vec<u8>, BigInt>> = Vec::with_capacity(m + 1);
    for b in 0..=m {
        let mut cell = BTreeMap::new();
        cell.insert(v[..b].to_vec(), BigInt::one());
        prev.push(cell);
    }
    for a in 1..=n {
        let mut row: Vec<BTreeMap<Vec<u8>, BigInt>> = Vec::with_capacity(m + 1);
        let mut first = BTreeMap::new();
        first.insert(w[..a].to_vec(), BigInt::one());
        row.push(first);
        for b in 1..=m {
            let mut cell: BTreeMap<Vec<u8>, BigInt> = BTreeMap::new();
            for (word, c) in &prev[b] {
                let mut x = word.clone();
                x.push(w[a - 1]);
                *cell.entry(x).or_insert_with(BigInt::zero) += c;
            }
            for (word, c) in &row[b - 1] {
                let mut x = word.clone();
                x.push(v[b - 1]);
                *cell.entry(x).or_insert_with(BigInt::zero) += c;
            }
            row.push(cell);
        }
        prev = row;
    }
    prev.pop()
        .unwrap_or_default()
        .into_iter()
        .map(|(letters, c)| (Word::from_raw(d, letters), c))
        .collect()
}

/// Integer-coefficient shuffle `w ⧢ v`.
pub fn shuffle_counts(w: &Word, v: &Word) -> Result<ShuffleCounts> {
    same_dim(w.dim(), v.dim())?;
    Ok(shuffle_letters(w.dim(), w.letters(), v.letters()))
}

/// `w ⧢ v`.
pub fn shuffle(w: &Word, v: &Word) -> Result<WordPoly> {
    Ok(WordPoly::from_counts(w.dim(), &shuffle_counts(w, v)?))
}

/// Bilinear extension of the shuffle product.
pub fn shuffle_poly(p: &WordPoly, q: &WordPoly) -> Result<WordPoly> {
    same_dim(p.d, q.d)?;
    let mut out = WordPoly::zero(p.d);
    for (w, a) in &p.terms {
        for (v, b) in &q.terms {
            let ab = a * b;
            for (u, c) in shuffle_letters(p.d, w.letters(), v.letters()) {
                out.add_term(u, &ab * Rational::from_integer(c));
            }
        }
    }
    Ok(out)
}

/// `w ⧢ 0_k`.
pub fn zero_pad_shuffle(w: &Word, k: usize) -> WordPoly {
    WordPoly::from_counts(w.dim(), &shuffle_letters(w.dim(), w.letters(), &vec![0; k]))
}

/// Memo table for shuffles of word pairs. Results are identical with or
/// without it.
#[derive(Default)]
pub struct ShuffleMemo {
    table: HashMap<(Word, Word), Arc<ShuffleCounts>>,
    hits: usize,
}

impl ShuffleMemo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shuffle(&mut self, w: &Word, v: &Word) -> Result<Arc<ShuffleCounts>> {
        same_dim(w.dim(), v.dim())?;
        let key = if w <= v { (w.clone(), v.clone()) } else { (v.clone(), w.clone()) };
        if let Some(hit) = self.table.get(&key) {
            self.hits += 1;
            return Ok(hit.clone());
        }
        let counts = Arc::new(shuffle_letters(w.dim(), key.0.letters(), key.1.letters()));
        self.table.insert(key, counts.clone());
        Ok(counts)
    }

    pub fn zero_pad(&mut self, w: &Word, k: usize) -> Arc<ShuffleCounts> {
        self.shuffle(w, &Word::zeros(w.dim(), k)).expect("same alphabet by construction")
    }

    pub fn hits(&self) -> usize {
        self.hits
    }
}

/// `⟨p, s⟩ = Σ c_w s[w]`.
pub fn dual_bracket(p: &WordPoly, s: &SigVector) -> Result<f64> {
    same_dim(p.d, s.dim())?;
    let mut acc = 0.0;
    for (w, c) in &p.terms {
        let v = s
            .get(w)
            .ok_or_else(|| Error::IncompleteSignature(w.to_string()))?;
        acc += rational_to_f64(c) * v;
    }
    Ok(acc)
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

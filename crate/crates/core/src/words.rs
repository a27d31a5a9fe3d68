//! Words over the time-augmented alphabet `{0, 1, ..., d}`.
//!
//! Letter `0` is the running time; letters `1..=d` are the space coordinates.
//! A [`Word`] carries its alphabet dimension so mixed-dimension operations can
//! be rejected instead of silently coerced.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest alphabet dimension supported by the digit string format.
pub const MAX_DIM: u8 = 9;

/// A single letter of the alphabet `{0, ..., d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(u8);

impl Letter {
    pub fn new(value: u8, d: u8) -> Result<Self> {
        if d == 0 || value > d {
            return Err(Error::invalid(format!("letter {value} outside alphabet {{0..{d}}}")));
        }
        Ok(Letter(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_time(self) -> bool {
        self.0 == 0
    }
}

/// A finite sequence of letters, possibly empty.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Word {
    d: u8,
    letters: Vec<u8>,
}

impl Word {
    pub fn new(d: u8, letters: Vec<u8>) -> Result<Self> {
        check_dim(d)?;
        if let Some(&bad) = letters.iter().find(|&&l| l > d) {
            return Err(Error::invalid(format!("letter {bad} outside alphabet {{0..{d}}}")));
        }
        Ok(Word { d, letters })
    }

    /// Builds a word without validating letters. Callers guarantee `letters <= d`.
    pub(crate) fn from_raw(d: u8, letters: Vec<u8>) -> Self {
        debug_assert!(letters.iter().all(|&l| l <= d));
        Word { d, letters }
    }

    pub fn empty(d: u8) -> Self {
        Word { d, letters: Vec::new() }
    }

    /// The word `0_k`.
    pub fn zeros(d: u8, k: usize) -> Self {
        Word { d, letters: vec![0; k] }
    }

    /// Parses `"021"`; the empty word is `"e"` (an empty string is accepted too).
    pub fn parse(d: u8, s: &str) -> Result<Self> {
        check_dim(d)?;
        let s = s.trim();
        if s == "e" || s.is_empty() || s == "∅" {
            return Ok(Word::empty(d));
        }
        let letters = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|v| v as u8)
                    .ok_or_else(|| Error::invalid(format!("bad letter '{c}' in word \"{s}\"")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Word::new(d, letters)
    }

    pub fn dim(&self) -> u8 {
        self.d
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn first(&self) -> Option<u8> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<u8> {
        self.letters.last().copied()
    }

    pub fn concat(&self, other: &Word) -> Result<Word> {
        same_dim(self.d, other.d)?;
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.letters);
        letters.extend_from_slice(&other.letters);
        Ok(Word { d: self.d, letters })
    }

    /// Appends a letter; panics in debug builds if it is outside the alphabet.
    pub fn push(&self, letter: u8) -> Word {
        debug_assert!(letter <= self.d);
        let mut letters = self.letters.clone();
        letters.push(letter);
        Word { d: self.d, letters }
    }

    /// Removes every `0`, keeping the order of the other letters.
    pub fn pure(&self) -> Word {
        Word {
            d: self.d,
            letters: self.letters.iter().copied().filter(|&l| l != 0).collect(),
        }
    }

    pub fn is_pure(&self) -> bool {
        self.letters.iter().all(|&l| l != 0)
    }

    /// The first `j` letters.
    pub fn prefix(&self, j: usize) -> Word {
        Word { d: self.d, letters: self.letters[..j].to_vec() }
    }

    /// Letters from position `j` to the end.
    pub fn suffix_from(&self, j: usize) -> Word {
        Word { d: self.d, letters: self.letters[j..].to_vec() }
    }

    /// Position of this word in the canonical (length, lexicographic) order of
    /// all words over the alphabet. Doubles as a hash/sort key.
    pub fn key(&self) -> u64 {
        let base = self.d as u64 + 1;
        let mut offset = 0u64;
        let mut block = 1u64;
        for _ in 0..self.len() {
            offset += block;
            block *= base;
        }
        let value = self.letters.iter().fold(0u64, |acc, &l| acc * base + l as u64);
        offset + value
    }

    /// Inverse of [`Word::key`].
    pub fn from_key(d: u8, key: u64) -> Word {
        let base = d as u64 + 1;
        let mut len = 0usize;
        let mut rest = key;
        let mut block = 1u64;
        while rest >= block {
            rest -= block;
            block *= base;
            len += 1;
        }
        let mut letters = vec![0u8; len];
        for slot in letters.iter_mut().rev() {
            *slot = (rest % base) as u8;
            rest /= base;
        }
        Word { d, letters }
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.letters.cmp(&other.letters))
            .then_with(|| self.d.cmp(&other.d))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("e");
        }
        for l in &self.letters {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub(crate) fn check_dim(d: u8) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::invalid(format!("alphabet dimension must be in 1..={MAX_DIM}, got {d}")));
    }
    Ok(())
}

pub(crate) fn same_dim(a: u8, b: u8) -> Result<()> {
    if a != b {
        return Err(Error::AlphabetMismatch { left: a, right: b });
    }
    Ok(())
}

/// A finite set of words of length at most `order`, kept in canonical order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct WordSet {
    d: u8,
    order: usize,
    words: Vec<Word>,
}

impl WordSet {
    pub fn new(d: u8, order: usize, words: impl IntoIterator<Item = Word>) -> Result<Self> {
        check_dim(d)?;
        let mut words: Vec<Word> = words.into_iter().collect();
        for w in &words {
            same_dim(d, w.d)?;
            if w.len() > order {
                return Err(Error::invalid(format!(
                    "word {w} has length {} > truncation order {order}",
                    w.len()
                )));
            }
        }
        words.sort();
        words.dedup();
        Ok(WordSet { d, order, words })
    }

    pub fn parse(d: u8, order: usize, words: &[&str]) -> Result<Self> {
        let parsed = words.iter().map(|s| Word::parse(d, s)).collect::<Result<Vec<_>>>()?;
        WordSet::new(d, order, parsed)
    }

    /// Builds from words already known to be sorted, unique and within bounds.
    pub(crate) fn from_sorted(d: u8, order: usize, words: Vec<Word>) -> Self {
        debug_assert!(words.windows(2).all(|p| p[0] < p[1]));
        debug_assert!(words.iter().all(|w| w.len() <= order && w.d == d));
        WordSet { d, order, words }
    }

    pub fn dim(&self) -> u8 {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Word> {
        self.words.iter()
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.index_of(w).is_some()
    }

    pub fn index_of(&self, w: &Word) -> Option<usize> {
        self.words.binary_search(w).ok()
    }

    /// `ℓ(B)`: the sum of the word lengths.
    pub fn total_length(&self) -> usize {
        self.words.iter().map(Word::len).sum()
    }

    /// Same words viewed at another truncation order.
    pub fn with_order(&self, order: usize) -> Result<Self> {
        WordSet::new(self.d, order, self.words.iter().cloned())
    }

    pub fn union(&self, other: &WordSet) -> Result<Self> {
        same_dim(self.d, other.d)?;
        WordSet::new(
            self.d,
            self.order.max(other.order),
            self.words.iter().chain(other.words.iter()).cloned(),
        )
    }

    /// Words in canonical order: by length, then lexicographically.
    pub fn canonical_order(&self) -> Vec<Word> {
        self.words.clone()
    }

    /// Groups the words by their pure word `P(w)`.
    pub fn by_pure_word(&self) -> BTreeMap<Word, Vec<Word>> {
        let mut out: BTreeMap<Word, Vec<Word>> = BTreeMap::new();
        for w in &self.words {
            out.entry(w.pure()).or_default().push(w.clone());
        }
        out
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.words.iter().map(|w| w.to_string()).collect()
    }
}

impl fmt::Debug for WordSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WordSet(d={}, N={}, {{", self.d, self.order)?;
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{w}")?;
        }
        f.write_str("})")
    }
}

#[derive(Serialize, Deserialize)]
struct WordSetRepr {
    d: u8,
    #[serde(rename = "N")]
    order: usize,
    words: Vec<String>,
}

impl Serialize for WordSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WordSetRepr { d: self.d, order: self.order, words: self.to_strings() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WordSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = WordSetRepr::deserialize(de)?;
        let words = repr
            .words
            .iter()
            .map(|s| Word::parse(repr.d, s))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        WordSet::new(repr.d, repr.order, words).map_err(serde::de::Error::custom)
    }
}

/// Which canonical word set to enumerate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordClass {
    /// `W_N`
    AllExact,
    /// `W_{<=N}`
    AllUpTo,
    /// Words of length `<= N` not ending with `0`.
    PrefixesUpTo,
    /// Words of length `<= N` not starting with `0`.
    SuffixesUpTo,
    /// `W_N(γ)`
    ClassExact(Word),
    /// `W_{<=N}(γ)`
    ClassUpTo(Word),
}

/// All words of exactly `len` letters, in lexicographic order.
pub fn words_of_length(d: u8, len: usize) -> Vec<Word> {
    let base = d as usize + 1;
    let count = base.pow(len as u32);
    let mut out = Vec::with_capacity(count);
    let mut letters = vec![0u8; len];
    for _ in 0..count {
        out.push(Word { d, letters: letters.clone() });
        for slot in letters.iter_mut().rev() {
            if *slot < d {
                *slot += 1;
                break;
            }
            *slot = 0;
        }
    }
    out
}

/// Words of length `len` whose pure word is `gamma`: every placement of the
/// letters of `gamma` among `len` slots, zeros elsewhere.
fn class_of_length(gamma: &Word, len: usize) -> Vec<Word> {
    let k = gamma.len();
    if k > len {
        return Vec::new();
    }
    let mut out = Vec::new();
    for positions in itertools::Itertools::combinations(0..len, k) {
        let mut letters = vec![0u8; len];
        for (slot, &l) in positions.iter().zip(gamma.letters()) {
            letters[*slot] = l;
        }
        out.push(Word { d: gamma.d, letters });
    }
    out.sort();
    out
}

/// Enumerates one of the canonical word sets at truncation order `order`.
pub fn enumerate(class: &WordClass, order: usize, d: u8) -> Result<WordSet> {
    check_dim(d)?;
    let words: Vec<Word> = match class {
        WordClass::AllExact => words_of_length(d, order),
        WordClass::AllUpTo => (0..=order).flat_map(|k| words_of_length(d, k)).collect(),
        WordClass::PrefixesUpTo => (0..=order)
            .flat_map(|k| words_of_length(d, k))
            .filter(|w| w.last() != Some(0))
            .collect(),
        WordClass::SuffixesUpTo => (0..=order)
            .flat_map(|k| words_of_length(d, k))
            .filter(|w| w.first() != Some(0))
            .collect(),
        WordClass::ClassExact(gamma) | WordClass::ClassUpTo(gamma) => {
            same_dim(d, gamma.d)?;
            if !gamma.is_pure() {
                return Err(Error::invalid(format!("{gamma} is not a pure word")));
            }
            if gamma.len() > order {
                return Err(Error::invalid(format!(
                    "pure word {gamma} is longer than the order {order}"
                )));
            }
            if matches!(class, WordClass::ClassExact(_)) {
                class_of_length(gamma, order)
            } else {
                (gamma.len()..=order).flat_map(|k| class_of_length(gamma, k)).collect()
            }
        }
    };
    Ok(WordSet::from_sorted(d, order, words))
}

/// All pure words of length `<= order` over letters `1..=d`.
pub fn pure_words_up_to(order: usize, d: u8) -> Vec<Word> {
    let mut out = Vec::new();
    let mut layer = vec![Word::empty(d)];
    for _ in 0..=order {
        let next: Vec<Word> = layer
            .iter()
            .flat_map(|w| (1..=d).map(move |l| w.push(l)))
            .collect();
        out.append(&mut layer);
        layer = next;
    }
    out.sort();
    out
}

/// `Φ_f(B)`: every prefix (including `∅`) of every word in `B`.
pub fn closure_forward(set: &WordSet) -> WordSet {
    let mut words: Vec<Word> = set
        .words
        .iter()
        .flat_map(|w| (0..=w.len()).map(move |j| w.prefix(j)))
        .collect();
    words.sort();
    words.dedup();
    WordSet::from_sorted(set.d, set.order, words)
}

/// `Φ_b(B)`: every suffix (including `∅`) of every word in `B`.
pub fn closure_backward(set: &WordSet) -> WordSet {
    let mut words: Vec<Word> = set
        .words
        .iter()
        .flat_map(|w| (0..=w.len()).map(move |j| w.suffix_from(j)))
        .collect();
    words.sort();
    words.dedup();
    WordSet::from_sorted(set.d, set.order, words)
}

/// Binomial coefficient; saturates instead of overflowing.
pub fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

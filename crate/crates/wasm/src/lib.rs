//! Browser bindings. Each export returns a JSON string; errors come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use serde_json::{json, Value};
use sigbasis::basis::{is_basis_of_words, necessary_filter};
use sigbasis::freealg::shuffle;
use sigbasis::signature::{cost_closed_form, Direction};
use sigbasis::words::{enumerate, WordClass};
use sigbasis::{Result, Word, WordSet};
use wasm_bindgen::prelude::*;

/// Largest segment count the cost curve accepts.
pub const MAX_SEGMENTS: usize = 10_000;
/// Largest `(d+1)^N` the cost curve will enumerate.
pub const MAX_WORDS: usize = 1 << 18;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

pub fn shuffle_json(d: u8, left: &str, right: &str) -> Result<Value> {
    let p = shuffle(&Word::parse(d, left)?, &Word::parse(d, right)?)?;
    Ok(json!({ "text": p.to_string(), "terms": p }))
}

/// Words may be separated by whitespace or commas. `order` 0 means the
/// longest word length.
pub fn certify_json(d: u8, order: usize, words: &str) -> Result<Value> {
    let tokens: Vec<&str> = words.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
    let parsed = tokens.iter().map(|s| Word::parse(d, s)).collect::<Result<Vec<_>>>()?;
    let order = if order == 0 { parsed.iter().map(Word::len).max().unwrap_or(0) } else { order };
    let set = WordSet::new(d, order, parsed)?;
    let cert = is_basis_of_words(&set, order)?;
    let filter = necessary_filter(&set, order)?;
    Ok(json!({ "certificate": cert, "filter": filter }))
}

/// Forward-recursion cost on `W_{<=N}` against `*W_{<=N}` for `K = 2..=max_k`.
pub fn cost_curve_json(d: u8, order: usize, max_k: usize) -> Result<Value> {
    if !(2..=MAX_SEGMENTS).contains(&max_k) {
        return Err(sigbasis::Error::invalid(format!("segments must be in 2..={MAX_SEGMENTS}")));
    }
    if (d as usize + 1).checked_pow(order as u32).is_none_or(|n| n > MAX_WORDS) {
        return Err(sigbasis::Error::invalid(format!("(d+1)^N must be at most {MAX_WORDS}")));
    }
    let all = enumerate(&WordClass::AllUpTo, order, d)?;
    let suffix = enumerate(&WordClass::SuffixesUpTo, order, d)?;
    // the cost is affine in K
    let line = |set: &WordSet| -> Result<(u64, u64)> {
        let c2 = cost_closed_form(Direction::Forward, set, 2)?;
        Ok((c2, cost_closed_form(Direction::Forward, set, 3)? - c2))
    };
    let ((a0, a1), (b0, b1)) = (line(&all)?, line(&suffix)?);
    let ks: Vec<usize> = (2..=max_k).collect();
    let full: Vec<u64> = ks.iter().map(|&k| a0 + (k as u64 - 2) * a1).collect();
    let reduced: Vec<u64> = ks.iter().map(|&k| b0 + (k as u64 - 2) * b1).collect();
    let ratio: Vec<f64> = full.iter().zip(&reduced).map(|(a, b)| *b as f64 / *a as f64).collect();
    Ok(json!({
        "segments": ks,
        "all": full,
        "suffix": reduced,
        "ratio": ratio,
        "size_all": all.len(),
        "size_suffix": suffix.len(),
    }))
}

#[wasm_bindgen(js_name = shuffle)]
pub fn shuffle_js(d: u8, left: &str, right: &str) -> String {
    respond(shuffle_json(d, left, right))
}

#[wasm_bindgen(js_name = certify)]
pub fn certify_js(d: u8, order: usize, words: &str) -> String {
    respond(certify_json(d, order, words))
}

#[wasm_bindgen(js_name = costCurve)]
pub fn cost_curve_js(d: u8, order: usize, max_k: usize) -> String {
    respond(cost_curve_json(d, order, max_k))
}

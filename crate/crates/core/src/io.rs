//! Path files.
//!
//! CSV: header `t,x1,…,xd`, one row per timestamp. A leading `path` column
//! holding an integer id allows several paths in one file; rows of a path
//! must be contiguous.
//!
//! Binary (all little-endian): `u64` path count, then per path `u64` point
//! count, `u64` dimension and `points × (1 + d)` `f64` values, each row being
//! `t, x1, …, xd`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::signature::PiecewisePath;

fn parse_header(headers: &csv::StringRecord) -> Result<(bool, usize)> {
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    let with_id = cols.first() == Some(&"path");
    let rest = if with_id { &cols[1..] } else { &cols[..] };
    if rest.first() != Some(&"t") {
        return Err(Error::invalid("CSV header must start with 't' (optionally after 'path')"));
    }
    let d = rest.len() - 1;
    if d == 0 {
        return Err(Error::invalid("CSV has no space columns"));
    }
    for (k, name) in rest[1..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::invalid(format!("unexpected CSV column '{name}', expected 'x{}'", k + 1)));
        }
    }
    Ok((with_id, d))
}

/// Reads one or more paths from CSV text.
pub fn read_csv(reader: impl Read) -> Result<Vec<PiecewisePath>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::invalid(format!("CSV: {e}")))?.clone();
    let (with_id, d) = parse_header(&headers)?;
    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("CSV: {e}")))?;
        let (id, fields) = if with_id {
            (rec.get(0).unwrap_or("").to_string(), rec.iter().skip(1).collect::<Vec<_>>())
        } else {
            (String::new(), rec.iter().collect())
        };
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::invalid(format!("CSV row {}: bad number '{f}'", line + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != d + 1 {
            return Err(Error::invalid(format!("CSV row {} has {} values, expected {}", line + 1, nums.len(), d + 1)));
        }
        match groups.last_mut() {
            Some((last, t, x)) if *last == id => {
                t.push(nums[0]);
                x.extend_from_slice(&nums[1..]);
            }
            _ => {
                if groups.iter().any(|(g, _, _)| *g == id) {
                    return Err(Error::invalid(format!("rows of path '{id}' are not contiguous")));
                }
                groups.push((id, vec![nums[0]], nums[1..].to_vec()));
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("CSV contains no rows"));
    }
    groups
        .into_iter()
        .map(|(id, t, x)| {
            PiecewisePath::from_flat(d, t, x).map_err(|e| match e {
                Error::InvalidInput(m) if with_id => Error::InvalidInput(format!("path {id}: {m}")),
                other => other,
            })
        })
        .collect()
}

/// Writes paths as CSV; the `path` column is added when there is more than
/// one path.
pub fn write_csv(paths: &[PiecewisePath], writer: impl Write) -> Result<()> {
    let d = paths.first().map_or(1, PiecewisePath::dim);
    if paths.iter().any(|p| p.dim() != d) {
        return Err(Error::invalid("paths have different dimensions"));
    }
    let multi = paths.len() > 1;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    if multi {
        header.push("path".into());
    }
    header.push("t".into());
    header.extend((1..=d).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (i, p) in paths.iter().enumerate() {
        for k in 0..p.num_points() {
            let mut row: Vec<String> = Vec::with_capacity(d + 2);
            if multi {
                row.push(i.to_string());
            }
            row.push(p.times()[k].to_string());
            row.extend(p.point(k).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const BINARY_LIMIT: u64 = 1 << 32;

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::invalid(format!("truncated binary path file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary(mut reader: impl Read) -> Result<Vec<PiecewisePath>> {
    let count = read_u64(&mut reader)?;
    if count == 0 || count > BINARY_LIMIT {
        return Err(Error::invalid(format!("implausible path count {count}")));
    }
    let mut out = Vec::new();
    for i in 0..count {
        let points = read_u64(&mut reader)?;
        let d = read_u64(&mut reader)?;
        if points > BINARY_LIMIT || d == 0 || d > 64 {
            return Err(Error::invalid(format!("path {i}: implausible header ({points} points, d = {d})")));
        }
        let (points, d) = (points as usize, d as usize);
        let mut buf = vec![0u8; points * (d + 1) * 8];
        reader
            .read_exact(&mut buf)
            .map_err(|e| Error::invalid(format!("path {i}: truncated data: {e}")))?;
        let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut t = Vec::with_capacity(points);
        let mut x = Vec::with_capacity(points * d);
        for row in vals.chunks_exact(d + 1) {
            t.push(row[0]);
            x.extend_from_slice(&row[1..]);
        }
        out.push(PiecewisePath::from_flat(d, t, x).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("path {i}: {m}")),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_binary(paths: &[PiecewisePath], mut writer: impl Write) -> Result<()> {
    writer.write_all(&(paths.len() as u64).to_le_bytes())?;
    for p in paths {
        writer.write_all(&(p.num_points() as u64).to_le_bytes())?;
        writer.write_all(&(p.dim() as u64).to_le_bytes())?;
        for k in 0..p.num_points() {
            writer.write_all(&p.times()[k].to_le_bytes())?;
            for v in p.point(k) {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Picks the format from the leading bytes: CSV files start with a header
/// letter.
pub fn read_paths(bytes: &[u8]) -> Result<Vec<PiecewisePath>> {
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'p') | Some(b't') => read_csv(bytes),
        Some(_) => read_binary(bytes),
        None => Err(Error::invalid("empty path file")),
    }
}

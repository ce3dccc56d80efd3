//! Plain-text formats for dense tensors and CP factors.
//!
//! Dense: first line `K M_1 ... M_K`, then the values in canonical order.
//! Factors: first line `K d M_1 ... M_K`, then K blocks of `d * M_k`
//! values, each block row-major with one row per component.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{CpFactors, DenseTensor, Shape};

fn parse_header(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad integer {t:?} in header")))
        })
        .collect()
}

fn parse_values<'a>(tokens: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    tokens
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("bad real {t:?}")))
        })
        .collect()
}

fn split_header(text: &str) -> Result<(&str, &str)> {
    let text = text.trim_start();
    match text.split_once('\n') {
        Some((head, rest)) => Ok((head, rest)),
        None if !text.is_empty() => Ok((text, "")),
        None => Err(Error::Parse("empty tensor file".into())),
    }
}

fn push_row(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub fn dense_to_string(a: &DenseTensor) -> String {
    let dims = a.shape().dims();
    let mut out = String::new();
    let header: Vec<String> = std::iter::once(dims.len())
        .chain(dims.iter().copied())
        .map(|v| v.to_string())
        .collect();
    out.push_str(&header.join(" "));
    out.push('\n');
    // one line per last-mode fiber
    let last = *dims.last().unwrap_or(&1);
    for fiber in a.values().chunks(last) {
        push_row(&mut out, fiber);
    }
    out
}

pub fn dense_from_str(text: &str) -> Result<DenseTensor> {
    let (head, body) = split_header(text)?;
    let header = parse_header(head)?;
    let (&k, dims) = header
        .split_first()
        .ok_or_else(|| Error::Parse("missing order in header".into()))?;
    if dims.len() != k {
        return Err(Error::Parse(format!(
            "header declares order {k} but lists {} sizes",
            dims.len()
        )));
    }
    let shape = Shape::new(dims.to_vec())?;
    let values = parse_values(body.split_whitespace())?;
    DenseTensor::new(shape, values)
}

pub fn factors_to_string(f: &CpFactors) -> String {
    let dims = f.shape().dims();
    let mut out = String::new();
    let header: Vec<String> = [dims.len(), f.rank()]
        .into_iter()
        .chain(dims.iter().copied())
        .map(|v| v.to_string())
        .collect();
    out.push_str(&header.join(" "));
    out.push('\n');
    for k in 0..dims.len() {
        for r in 0..f.rank() {
            push_row(&mut out, f.row(k, r));
        }
    }
    out
}

pub fn factors_from_str(text: &str) -> Result<CpFactors> {
    let (head, body) = split_header(text)?;
    let header = parse_header(head)?;
    if header.len() < 2 || header.len() != header[0] + 2 {
        return Err(Error::Parse(format!(
            "factor header {header:?} is not `K d M_1 ... M_K`"
        )));
    }
    let rank = header[1];
    let shape = Shape::new(header[2..].to_vec())?;
    let values = parse_values(body.split_whitespace())?;
    let expected = rank * shape.dim_sum();
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "factor file holds {} values, expected {expected}",
            values.len()
        )));
    }
    let mut rest = values.as_slice();
    let mut factors = Vec::with_capacity(shape.order());
    for &m in shape.dims() {
        let (block, tail) = rest.split_at(rank * m);
        factors.push(block.to_vec());
        rest = tail;
    }
    CpFactors::new(shape, rank, factors)
}

pub fn read_dense(path: &Path) -> Result<DenseTensor> {
    dense_from_str(&fs::read_to_string(path)?)
}

pub fn write_dense(path: &Path, a: &DenseTensor) -> Result<()> {
    Ok(fs::write(path, dense_to_string(a))?)
}

pub fn read_factors(path: &Path) -> Result<CpFactors> {
    factors_from_str(&fs::read_to_string(path)?)
}

pub fn write_factors(path: &Path, f: &CpFactors) -> Result<()> {
    Ok(fs::write(path, factors_to_string(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dense_layout() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let a = DenseTensor::new(shape, vec![0.0, 1.0, 2.5, -3.0, 4.0, 1e-300]).unwrap();
        let text = dense_to_string(&a);
        assert_eq!(text, "2 2 3\n0.0 1.0 2.5\n-3.0 4.0 1e-300\n");
        assert_eq!(dense_from_str(&text).unwrap(), a);
    }

    #[test]
    fn factor_layout() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let f = CpFactors::new(shape, 2, vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]])
            .unwrap();
        let text = factors_to_string(&f);
        assert_eq!(text, "2 2 2 3\n1.0 2.0\n3.0 4.0\n5.0 6.0 7.0\n8.0 9.0 10.0\n");
        assert_eq!(factors_from_str(&text).unwrap(), f);
    }

    #[test]
    fn malformed_inputs() {
        assert!(dense_from_str("").is_err());
        assert!(dense_from_str("3 2 2\n1 2 3 4").is_err());
        assert!(dense_from_str("2 2 2\n1 2 3").is_err());
        assert!(dense_from_str("2 2 2\n1 2 x 4").is_err());
        assert!(factors_from_str("2 1 2 2\n1 2 3").is_err());
        assert!(factors_from_str("2 1 2\n1 2").is_err());
    }

    proptest! {
        #[test]
        fn factors_round_trip(
            dims in prop::collection::vec(1usize..4, 2..4),
            rank in 0usize..3,
            seed in any::<u64>(),
        ) {
            let shape = Shape::new(dims).unwrap();
            let mut state = seed;
            let f = CpFactors::from_fn(shape, rank, |_, _, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            }).unwrap();
            prop_assert_eq!(factors_from_str(&factors_to_string(&f)).unwrap(), f.clone());
            let dense = f.compose();
            prop_assert_eq!(dense_from_str(&dense_to_string(&dense)).unwrap(), dense);
        }
    }
}

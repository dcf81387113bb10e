use std::collections::HashMap;

use crate::error::{contract, Result};

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings (pair-counting form).
///
/// When both partitions are trivial in the same way (all singletons or one
/// block) the index is undefined; 1.0 is returned since they coincide.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(contract(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(contract("adjusted rand index needs at least two items"));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *cells.entry((*x, *y)).or_default() += 1;
        *rows.entry(*x).or_default() += 1;
        *cols.entry(*y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|n| choose2(*n)).sum();
    let sum_a: f64 = rows.values().map(|n| choose2(*n)).sum();
    let sum_b: f64 = cols.values().map(|n| choose2(*n)).sum();
    let expected = sum_a * sum_b / choose2(a.len() as u64);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Cohen's kappa between two raters over labels `0..n_labels`.
pub fn cohens_kappa(a: &[usize], b: &[usize], n_labels: usize) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(contract("kappa needs two non-empty label vectors of equal length"));
    }
    if a.iter().chain(b).any(|l| *l >= n_labels) {
        return Err(contract("label out of range"));
    }
    let n = a.len() as f64;
    let mut pa = vec![0.0; n_labels];
    let mut pb = vec![0.0; n_labels];
    let mut agree = 0.0;
    for (x, y) in a.iter().zip(b) {
        pa[*x] += 1.0 / n;
        pb[*y] += 1.0 / n;
        if x == y {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
    if pe >= 1.0 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Fraction of positions where the labels coincide.
pub fn agreement_rate(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(contract("agreement needs two non-empty label vectors of equal length"));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

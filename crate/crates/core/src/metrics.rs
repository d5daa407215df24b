//! External clustering indices: normalized mutual information (arithmetic
//! mean normalization) and the adjusted Rand index.
//!
//! Noise (`-1`) is scored as one more label value.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Counts of co-occurring (predicted, true) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    /// Dense counts, rows = predicted label, columns = true label.
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[i64], truth: &[i64]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                predicted: pred.len(),
                truth: truth.len(),
            });
        }
        let rows = dense_ids(pred);
        let cols = dense_ids(truth);
        let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[rows[p]][cols[t]] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: pred.len() as u64,
        })
    }
}

fn dense_ids(labels: &[i64]) -> BTreeMap<i64, usize> {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    ids
}

fn entropy(marginal: &[u64], total: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(pred: &[i64], truth: &[i64]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total == 0 {
        return Err(Error::InvalidArgument("nmi needs at least one point".into()));
    }
    let n = table.total as f64;
    let h_pred = entropy(&table.row_sums, n);
    let h_true = entropy(&table.col_sums, n);
    if table.row_sums.len() == 1 && table.col_sums.len() == 1 {
        return Ok(1.0);
    }
    if h_pred <= 0.0 || h_true <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let outer = table.row_sums[i] as f64 * table.col_sums[j] as f64;
            mi += c / n * (c * n / outer).ln();
        }
    }
    let score = mi / (0.5 * (h_pred + h_true));
    Ok(score.clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

pub fn ari(pred: &[i64], truth: &[i64]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total < 2 {
        return Err(Error::InvalidArgument("ari needs at least two points".into()));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = table.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = table.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(table.total);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_labelings() {
        let a = [0, 0, 1, 1, 2, 2, -1];
        assert_abs_diff_eq!(nmi(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ari(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn permuted_labels() {
        assert_abs_diff_eq!(nmi(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ari(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn worked_nmi_value() {
        // Table [[2,1],[0,1]]; I = 1.5 ln 2 - 0.75 ln 3, H_p = 2 ln 2 - 0.75 ln 3, H_t = ln 2.
        let (l2, l3) = (2f64.ln(), 3f64.ln());
        let mi = 1.5 * l2 - 0.75 * l3;
        let hp = 2.0 * l2 - 0.75 * l3;
        let expected = mi / (0.5 * (hp + l2));
        let got = nmi(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.3437110184854508, epsilon = 1e-12);
    }

    #[test]
    fn worked_ari_value() {
        // All six pairs: 0 same/same, 2 same/diff, 2 diff/same, 2 diff/diff.
        assert_abs_diff_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_single_clusters() {
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[-1, -1, -1, -1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 2, 3], &[5, 5, 5, 5]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(nmi(&[0, 1], &[0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(ari(&[0, 1], &[0]), Err(Error::LengthMismatch { .. })));
        assert!(ari(&[0], &[0]).is_err());
        assert!(nmi(&[], &[]).is_err());
    }
}

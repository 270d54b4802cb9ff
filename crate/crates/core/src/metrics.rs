//! Partition agreement and selection-frequency summaries.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Co-occurrence counts of two labelings.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    /// `counts[i][j]`: items with label `i` in the first labeling and `j` in
    /// the second (labels compacted to `0..`).
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::param(format!(
                "labelings have different lengths ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let ca = compact(a);
        let cb = compact(b);
        let ra = ca.iter().max().map_or(0, |&m| m + 1);
        let rb = cb.iter().max().map_or(0, |&m| m + 1);
        let mut counts = vec![vec![0u64; rb]; ra];
        for (&x, &y) in ca.iter().zip(&cb) {
            counts[x][y] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..rb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    labels.iter().map(|l| map[l]).collect()
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
///
/// When the chance-corrected denominator vanishes (both partitions trivial
/// in the same way) the result is 1 for equal partitions and 0 otherwise.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.total < 2 {
        return Err(Error::param("ARI needs at least two items"));
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(t.total);
    let max = 0.5 * (sa + sb);
    if max == expected {
        let same = compact(a) == compact(b);
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Frequencies of selected `(d, K)` pairs over a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable {
    pub counts: BTreeMap<(usize, usize), usize>,
    pub total: usize,
    pub correct_k_rate: f64,
    pub correct_d_rate: f64,
    pub correct_both_rate: f64,
}

impl SelectionTable {
    /// CSV with header `d_hat,K_hat,count`, rows in `(d, K)` order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("d_hat,K_hat,count\n");
        for ((d, k), c) in &self.counts {
            s.push_str(&format!("{d},{k},{c}\n"));
        }
        s
    }
}

/// Tabulates `(d_hat, K_hat)` pairs against the true `(d0, K0)`.
pub fn selection_table(
    selected: impl IntoIterator<Item = (usize, usize)>,
    truth: (usize, usize),
) -> Result<SelectionTable> {
    let mut counts = BTreeMap::new();
    let (mut total, mut ck, mut cd, mut cb) = (0usize, 0usize, 0usize, 0usize);
    for (d, k) in selected {
        *counts.entry((d, k)).or_insert(0) += 1;
        total += 1;
        ck += usize::from(k == truth.1);
        cd += usize::from(d == truth.0);
        cb += usize::from((d, k) == truth);
    }
    if total == 0 {
        return Err(Error::param("selection table needs at least one result"));
    }
    let rate = |c: usize| c as f64 / total as f64;
    Ok(SelectionTable {
        counts,
        total,
        correct_k_rate: rate(ck),
        correct_d_rate: rate(cd),
        correct_both_rate: rate(cb),
    })
}

/// Outcome of a one-sided paired sign test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P[Bin(wins + losses, 1/2) >= wins]`.
    pub p_value: f64,
}

/// One-sided sign test that the first method beats the second. Zero
/// differences are dropped.
pub fn sign_test(differences: &[f64]) -> SignTest {
    let wins = differences.iter().filter(|&&d| d > 0.0).count();
    let losses = differences.iter().filter(|&&d| d < 0.0).count();
    let ties = differences.len() - wins - losses;
    SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    }
}

/// `P[Bin(m, 1/2) >= w]`, summed in log space.
fn binomial_upper_tail(m: usize, w: usize) -> f64 {
    if w == 0 {
        return 1.0;
    }
    if w > m {
        return 0.0;
    }
    let ln_half_m = m as f64 * 0.5f64.ln();
    let mut ln_c = 0.0; // ln C(m, 0)
    let mut terms = Vec::new();
    for j in 0..=m {
        if j > 0 {
            ln_c += ((m - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= w {
            terms.push(ln_c + ln_half_m);
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
        .exp()
        .min(1.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median (average of the two middle values for even lengths). NaN for an
/// empty slice.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_permuted() {
        assert_eq!(ari(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]).unwrap(), 1.0);
    }

    #[test]
    fn crossed_pairs() {
        let v = ari(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominator() {
        assert_eq!(ari(&[0, 0, 0], &[4, 4, 4]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[2, 1, 0]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(ari(&[0, 1], &[0]).is_err());
        assert!(ari(&[0], &[0]).is_err());
        assert!(selection_table(std::iter::empty(), (2, 2)).is_err());
    }

    #[test]
    fn table_rates() {
        let mut sel = vec![(3, 2); 97];
        sel.extend([(2, 3), (4, 1), (2, 3)]);
        let t = selection_table(sel, (2, 2)).unwrap();
        assert_eq!(t.total, 100);
        assert!((t.correct_k_rate - 0.97).abs() < 1e-15);
        assert_eq!(t.counts[&(3, 2)], 97);
        assert_eq!(t.counts[&(2, 3)], 2);
        assert!((t.correct_d_rate - 0.02).abs() < 1e-15);
        assert!(t.to_csv().starts_with("d_hat,K_hat,count\n2,3,2\n"));

        let t = selection_table(vec![(2, 2); 5], (2, 2)).unwrap();
        assert_eq!(t.counts.len(), 1);
        assert_eq!(t.counts[&(2, 2)], 5);
    }

    #[test]
    fn sign_test_values() {
        // P[Bin(10, .5) >= 9] = 11/1024
        let t = sign_test(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 0.0]);
        assert_eq!((t.wins, t.losses, t.ties), (9, 1, 1));
        assert!((t.p_value - 11.0 / 1024.0).abs() < 1e-14);
        assert_eq!(sign_test(&[0.0, -1.0]).p_value, 1.0);
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }
}

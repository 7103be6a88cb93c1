//! Wilcoxon signed-rank test with the exact null distribution.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    /// Two-sided exact p-value.
    pub p_value: f64,
}

/// Paired test of `x - y`. Zero differences are dropped; tied magnitudes
/// receive average ranks and the exact distribution is enumerated over the
/// realized (doubled, hence integer) ranks.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> WilcoxonResult {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return WilcoxonResult { w_plus: 0.0, n: 0, p_value: 1.0 };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    // Doubled ranks: tie group spanning positions i..j (1-based i+1..j) gets i+1+j.
    let mut rank2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && d[order[j]].abs() == d[order[i]].abs() {
            j += 1;
        }
        for &o in &order[i..j] {
            rank2[o] = i + 1 + j;
        }
        i = j;
    }
    let total: usize = rank2.iter().sum();
    let w2: usize = (0..n).filter(|&k| d[k] > 0.0).map(|k| rank2[k]).sum();
    // counts[s] = number of sign assignments with doubled W+ equal to s.
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &r in &rank2 {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(n as i32);
    let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
    WilcoxonResult { w_plus: w2 as f64 / 2.0, n, p_value: (2.0 * lower.min(upper)).min(1.0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_small_sample() {
        // n = 5, all differences positive: P(W+ = 15) = 1/32, two-sided 1/16.
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]);
        assert_eq!(r.w_plus, 15.0);
        assert!((r.p_value - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn hand_enumerated_case() {
        // d = (1, -2, 3): W+ = 4. Subset sums of {1,2,3} are 0,1,2,3,3,4,5,6,
        // so P(W+ <= 4) = 6/8 and P(W+ >= 4) = 3/8.
        let r = wilcoxon_signed_rank(&[1.0, -2.0, 3.0], &[0.0; 3]);
        assert_eq!(r.w_plus, 4.0);
        assert!((r.p_value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn symmetric_data_is_not_significant() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0], &[0.0; 4]);
        assert_eq!(r.p_value, 1.0);
    }
}

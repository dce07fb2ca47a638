//! Small-sample paired tests used by the benchmark comparisons.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

/// One-sided paired sign test: probability of seeing at least `favorable`
/// wins out of `discordant` decisive pairs under a fair coin. No decisive
/// pairs means no evidence (p = 1).
pub fn sign_test_p(favorable: usize, discordant: usize) -> f64 {
    assert!(favorable <= discordant, "favorable pairs cannot exceed discordant pairs");
    if discordant == 0 {
        return 1.0;
    }
    if favorable == 0 {
        return 1.0;
    }
    let binomial = Binomial::new(0.5, discordant as u64).expect("valid binomial");
    1.0 - binomial.cdf(favorable as u64 - 1)
}

/// One-sided Wilcoxon signed-rank test for paired differences with the
/// alternative "differences are positive". Uses the normal approximation
/// with average ranks for ties, the tie variance correction, and a
/// continuity correction; zeros are dropped.
pub fn wilcoxon_signed_rank_p(diffs: &[f64]) -> f64 {
    let mut nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return 1.0;
    }
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    // Average ranks over tied |d| groups, accumulating the tie correction.
    let mut ranks = vec![0.0; n];
    let mut tie_correction = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nonzero[j].abs() == nonzero[i].abs() {
            j += 1;
        }
        let count = (j - i) as f64;
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = avg_rank;
        }
        tie_correction += count * count * count - count;
        i = j;
    }

    let w_plus: f64 =
        nonzero.iter().zip(ranks.iter()).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction / 48.0;
    if variance <= 0.0 {
        return if w_plus > mean { 0.0 } else { 1.0 };
    }
    let z = (w_plus - mean - 0.5) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    1.0 - normal.cdf(z)
}

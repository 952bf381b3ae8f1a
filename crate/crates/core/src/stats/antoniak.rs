use crate::math::{lgamma, ln, log_add_exp};
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// `ln |s(n, k)|` for `k = 0..=n`, the unsigned Stirling numbers of the first
/// kind, built row by row with `|s(m+1,k)| = m |s(m,k)| + |s(m,k-1)|` in log
/// space.
pub fn log_stirling_first_row(n: usize) -> Vec<f64> {
    let mut row = vec![f64::NEG_INFINITY; n + 1];
    row[0] = 0.0;
    for m in 0..n {
        let ln_m = if m == 0 { f64::NEG_INFINITY } else { ln(m as f64) };
        for k in (0..=m + 1).rev() {
            let stay = if k <= m { ln_m + row[k] } else { f64::NEG_INFINITY };
            let open = if k >= 1 { row[k - 1] } else { f64::NEG_INFINITY };
            row[k] = log_add_exp(stay, open);
        }
    }
    row
}

fn check(nu: f64, n: usize) -> Result<()> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain("concentration must be positive"));
    }
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1"));
    }
    Ok(())
}

/// Log probability of `k` distinct clusters among `n` draws from a Dirichlet
/// process with concentration `nu`:
/// `|s(n,k)| ν^k Γ(ν) / Γ(ν + n)`.
pub fn antoniak_log_pmf(nu: f64, n: usize, k: usize) -> Result<f64> {
    check(nu, n)?;
    if k == 0 || k > n {
        return Err(Error::Domain("cluster count must lie in 1..=n"));
    }
    let row = log_stirling_first_row(n);
    Ok(row[k] + k as f64 * ln(nu) + lgamma(nu) - lgamma(nu + n as f64))
}

/// The whole PMF, index `k - 1` for `k = 1..=n`.
pub fn antoniak_log_pmf_all(nu: f64, n: usize) -> Result<Vec<f64>> {
    check(nu, n)?;
    let row = log_stirling_first_row(n);
    let base = lgamma(nu) - lgamma(nu + n as f64);
    let ln_nu = ln(nu);
    Ok((1..=n).map(|k| row[k] + k as f64 * ln_nu + base).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stirling_small_rows() {
        // |s(4,k)| = 0, 6, 11, 6, 1
        let row = log_stirling_first_row(4);
        let vals: Vec<f64> = row.iter().map(|v| v.exp()).collect();
        let want = [0.0, 6.0, 11.0, 6.0, 1.0];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn two_customers() {
        let p1 = antoniak_log_pmf(1.0, 2, 1).unwrap().exp();
        let p2 = antoniak_log_pmf(1.0, 2, 2).unwrap().exp();
        assert!((p1 - 0.5).abs() < 1e-14 && (p2 - 0.5).abs() < 1e-14);
        for &nu in &[0.01, 1.0, 37.0] {
            assert!(antoniak_log_pmf(nu, 1, 1).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn normalizes_on_grid() {
        for &nu in &[0.1, 1.0, 4.8] {
            for n in 1..=200 {
                let total: f64 = antoniak_log_pmf_all(nu, n).unwrap().iter().map(|l| l.exp()).sum();
                assert!((total - 1.0).abs() < 1e-10, "nu={nu} n={n} total={total}");
            }
        }
    }

    #[test]
    fn survives_large_n() {
        let lp = antoniak_log_pmf_all(4.8, 1000).unwrap();
        assert!(lp.iter().all(|v| !v.is_nan()));
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range() {
        assert!(antoniak_log_pmf(1.0, 5, 0).is_err());
        assert!(antoniak_log_pmf(1.0, 5, 6).is_err());
        assert!(antoniak_log_pmf(0.0, 5, 2).is_err());
    }
}

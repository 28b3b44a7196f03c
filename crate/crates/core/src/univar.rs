//! Univariate robust location, scale and rank correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Consistency factor making the MAD unbiased for sigma at the normal.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Consistency factor of the Qn estimator.
pub const QN_CONSISTENCY: f64 = 2.2219;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustScaleKind {
    #[default]
    Mad,
    Qn,
}

impl std::str::FromStr for RobustScaleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mad" => Ok(Self::Mad),
            "qn" => Ok(Self::Qn),
            other => Err(Error::InvalidInput(format!("unknown scale kind '{other}'"))),
        }
    }
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("median of an empty sequence".into()));
    }
    Ok(median_of_sorted(&sorted_copy(x)))
}

pub fn mad(x: &[f64]) -> Result<f64> {
    let med = median(x)?;
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    Ok(MAD_CONSISTENCY * median(&dev)?)
}

/// Qn by naive enumeration of the `n(n-1)/2` pairwise distances.
pub fn qn(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput("Qn needs at least 2 values".into()));
    }
    let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            diffs.push((x[i] - x[j]).abs());
        }
    }
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    let (_, kth, _) = diffs.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(QN_CONSISTENCY * *kth)
}

pub fn robust_scale(x: &[f64], kind: RobustScaleKind) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidInput("robust scale needs at least 2 values".into()));
    }
    match kind {
        RobustScaleKind::Mad => mad(x),
        RobustScaleKind::Qn => qn(x),
    }
}

/// Location and scale from the univariate MCD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnivariateMcd {
    pub location: f64,
    pub scale: f64,
}

/// Gaussian consistency factor for a raw MCD standard deviation at
/// coverage `alpha`: `1 / sqrt(var of N(0,1) truncated to its central alpha)`.
pub fn mcd_consistency(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let std = Normal::standard();
    let q = std.inverse_cdf((1.0 + alpha) / 2.0);
    let trunc_var = 1.0 - 2.0 * q * std.pdf(q) / alpha;
    1.0 / trunc_var.sqrt()
}

/// Univariate MCD with subset size `h`: the window of `h` consecutive order
/// statistics with the smallest variance.
pub fn univariate_mcd(x: &[f64], h: usize) -> Result<UnivariateMcd> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Empty("univariate MCD of an empty sequence".into()));
    }
    if h < n / 2 + 1 || h > n {
        return Err(Error::InvalidInput(format!(
            "subset size {h} outside {}..={n}",
            n / 2 + 1
        )));
    }
    let v = sorted_copy(x);
    // shift by the median to keep the running sums well conditioned
    let shift = median_of_sorted(&v);
    let w: Vec<f64> = v.iter().map(|a| a - shift).collect();
    let mut s1: f64 = w[..h].iter().sum();
    let mut s2: f64 = w[..h].iter().map(|a| a * a).sum();
    let hf = h as f64;
    let mut best = (s2 - s1 * s1 / hf, 0usize);
    for start in 1..=(n - h) {
        let out = w[start - 1];
        let inn = w[start + h - 1];
        s1 += inn - out;
        s2 += inn * inn - out * out;
        let ss = s2 - s1 * s1 / hf;
        if ss < best.0 {
            best = (ss, start);
        }
    }
    // recompute the winner exactly
    let win = &v[best.1..best.1 + h];
    let location = win.iter().sum::<f64>() / hf;
    let scale = if h < 2 {
        0.0
    } else {
        let ss: f64 = win.iter().map(|a| (a - location).powi(2)).sum();
        (ss / (hf - 1.0)).sqrt() * mcd_consistency(hf / n as f64)
    };
    Ok(UnivariateMcd { location, scale })
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation; `degenerate` is set (and `rho` is 0) when either
/// argument is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCorrelation {
    pub rho: f64,
    pub degenerate: bool,
}

pub fn spearman_corr(x: &[f64], y: &[f64]) -> Result<RankCorrelation> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput("Spearman correlation needs at least 3 pairs".into()));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> RankCorrelation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return RankCorrelation {
            rho: 0.0,
            degenerate: true,
        };
    }
    RankCorrelation {
        rho: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Gaussian-consistent correlation from a Spearman coefficient.
pub fn spearman_to_pearson(rho_s: f64) -> f64 {
    2.0 * (std::f64::consts::PI * rho_s / 6.0).sin()
}

/// `(x - median) / MAD`.
pub fn robust_zscores(x: &[f64]) -> Result<Vec<f64>> {
    let med = median(x)?;
    let s = robust_scale(x, RobustScaleKind::Mad)?;
    if s <= 0.0 {
        return Err(Error::ZeroScale {
            column: "<unnamed>".into(),
        });
    }
    Ok(x.iter().map(|v| (v - med) / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
        assert!(median(&normals(1, 1000)).unwrap().abs() < 0.1);
    }

    #[test]
    fn scale_examples() {
        assert_eq!(robust_scale(&[3.0; 6], RobustScaleKind::Mad).unwrap(), 0.0);
        assert_eq!(robust_scale(&[3.0; 6], RobustScaleKind::Qn).unwrap(), 0.0);
        let m = robust_scale(&[1.0, 2.0, 3.0, 4.0, 5.0], RobustScaleKind::Mad).unwrap();
        assert!((m - 1.4826).abs() < 1e-15);
        assert!(robust_scale(&[1.0], RobustScaleKind::Mad).is_err());
    }

    #[test]
    fn qn_order_statistic_by_hand() {
        // n = 4: h = 3, k = 3; distances sorted 1,1,1,2,2,3
        let q = qn(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((q - 2.2219).abs() < 1e-15);
    }

    #[test]
    fn scale_consistency_at_normal() {
        let x = normals(42, 5000);
        assert!((mad(&x).unwrap() - 1.0).abs() < 0.05);
        assert!((qn(&x).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn mcd_excludes_outlier() {
        let r = univariate_mcd(&[0.0, 0.0, 0.0, 0.0, 100.0], 4).unwrap();
        assert_eq!(r.location, 0.0);
        assert_eq!(r.scale, 0.0);
    }

    #[test]
    fn mcd_full_subset_is_mean_and_sd() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let r = univariate_mcd(&x, 5).unwrap();
        assert_eq!(r.location, 0.0);
        assert!((r.scale - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mcd_rejects_bad_h() {
        assert!(univariate_mcd(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
        assert!(univariate_mcd(&[1.0, 2.0, 3.0, 4.0], 5).is_err());
    }

    #[test]
    fn mcd_consistency_matches_truncated_normal_quadrature() {
        // numeric variance of N(0,1) restricted to its central 75%
        let alpha = 0.75;
        let std = Normal::standard();
        let q = std.inverse_cdf(0.875);
        let m = 200_000;
        let step = 2.0 * q / m as f64;
        let var: f64 = (0..m)
            .map(|i| {
                let z = -q + (i as f64 + 0.5) * step;
                z * z * std.pdf(z) * step
            })
            .sum::<f64>()
            / alpha;
        assert!((mcd_consistency(alpha) - 1.0 / var.sqrt()).abs() < 1e-8);
        assert_eq!(mcd_consistency(1.0), 1.0);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman_corr(&x, &x).unwrap().rho, 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman_corr(&x, &neg).unwrap().rho, -1.0);
        assert_eq!(spearman_corr(&x, &[1.0, 4.0, 9.0, 20.0]).unwrap().rho, 1.0);
        let c = spearman_corr(&x, &[2.0; 4]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.rho, 0.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn zscores_degenerate_scale_is_error() {
        assert!(matches!(
            robust_zscores(&[0.0, 0.0, 0.0, 10.0]),
            Err(Error::ZeroScale { .. })
        ));
    }

    #[test]
    fn zscores_tail_rate_at_normal() {
        let z = robust_zscores(&normals(9, 20_000)).unwrap();
        let rate = z.iter().filter(|v| v.abs() > 2.576).count() as f64 / z.len() as f64;
        assert!((rate - 0.01).abs() < 0.004, "rate {rate}");
    }

    fn all_subsets_min_variance(x: &[f64], h: usize) -> f64 {
        // exhaustive search over every h-subset, returns the optimal mean
        let n = x.len();
        let mut best = (f64::INFINITY, 0.0);
        let mut idx: Vec<usize> = (0..h).collect();
        loop {
            let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / h as f64;
            let ss: f64 = idx.iter().map(|&i| (x[i] - mean).powi(2)).sum();
            if ss < best.0 {
                best = (ss, mean);
            }
            let mut k = h;
            while k > 0 && idx[k - 1] == n - h + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for m in k..h {
                idx[m] = idx[m - 1] + 1;
            }
        }
        best.1
    }

    #[test]
    fn mcd_matches_exhaustive_subset_search() {
        for seed in 0..5 {
            let x = normals(100 + seed, 20);
            let brute = all_subsets_min_variance(&x, 12);
            let fast = univariate_mcd(&x, 12).unwrap().location;
            assert!((brute - fast).abs() < 1e-12, "{brute} vs {fast}");
        }
    }

    proptest! {
        #[test]
        fn equivariance(
            x in proptest::collection::vec(-100.0f64..100.0, 5..40),
            a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
            b in -50.0f64..50.0,
        ) {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let tol = 1e-9 * (1.0 + a.abs() * 100.0 + b.abs());
            prop_assert!((median(&y).unwrap() - (a * median(&x).unwrap() + b)).abs() < tol);
            prop_assert!((mad(&y).unwrap() - a.abs() * mad(&x).unwrap()).abs() < tol);
            prop_assert!((qn(&y).unwrap() - a.abs() * qn(&x).unwrap()).abs() < tol);
            let h = x.len() / 2 + 1;
            let mx = univariate_mcd(&x, h).unwrap();
            let my = univariate_mcd(&y, h).unwrap();
            prop_assert!((my.scale - a.abs() * mx.scale).abs() < 1e-6 * (1.0 + my.scale));
            // the optimal window may be ambiguous only on exact ties
            prop_assert!((my.location - (a * mx.location + b)).abs() < 1e-6 * (1.0 + my.location.abs()));
        }

        #[test]
        fn spearman_monotone_invariance(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..50),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            let ty: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            let a = spearman_corr(&x, &y).unwrap();
            let b = spearman_corr(&tx, &ty).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
        }

        #[test]
        fn zscores_translation_invariant(
            x in proptest::collection::vec(-10.0f64..10.0, 5..30),
            c in -100.0f64..100.0,
        ) {
            prop_assume!(mad(&x).unwrap() > 1e-6);
            let z1 = robust_zscores(&x).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let z2 = robust_zscores(&shifted).unwrap();
            for (a, b) in z1.iter().zip(&z2) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

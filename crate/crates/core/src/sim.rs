//! Seeded data generators for the simulation experiments.
//!
//! Every stochastic routine in this crate draws from [`rng`], a ChaCha8
//! stream cipher generator seeded from a 64-bit integer. The same seed gives
//! the same stream on every platform.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(rng: &mut Rng, n: usize, d: usize) -> DMatrix<f64> {
    // fill row by row so the stream order matches the row-major layout
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = standard_normal(rng);
        }
    }
    m
}

/// `Sigma_jk = rho^|j-k|`.
pub fn toeplitz_cov(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |j, k| rho.powi(j.abs_diff(k) as i32))
}

/// `n` draws from `N(0, sigma)`, as rows.
pub fn mvn_sample(rng: &mut Rng, n: usize, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let l = sigma.clone().cholesky().expect("covariance must be positive definite").l();
    gaussian_matrix(rng, n, sigma.nrows()) * l.transpose()
}

/// Clean data and contamination mask for the detection benchmark:
/// `N(0, Sigma)` with `Sigma_jk = (-0.9)^|j-k|`, then a random `eps`
/// fraction of the cells (exactly `round(eps * n * d)`) set to `value`.
pub fn contaminated_toeplitz(rng: &mut Rng, n: usize, d: usize, eps: f64, value: f64) -> (DMatrix<f64>, DMatrix<bool>) {
    use rand::seq::SliceRandom;
    let mut x = mvn_sample(rng, n, &toeplitz_cov(d, -0.9));
    let mut cells: Vec<usize> = (0..n * d).collect();
    cells.shuffle(rng);
    let m = (eps * (n * d) as f64).round() as usize;
    let mut mask = DMatrix::from_element(n, d, false);
    for &c in &cells[..m] {
        let (i, j) = (c / d, c % d);
        x[(i, j)] = value;
        mask[(i, j)] = true;
    }
    (x, mask)
}

/// Stationary AR(p) series `y_t = sum_k beta_k y_{t-k} + sigma e_t`
/// after a burn-in of 500 steps.
pub fn ar_series(rng: &mut Rng, n: usize, beta: &[f64], sigma: f64) -> Vec<f64> {
    let p = beta.len();
    let burn = 500;
    let mut y = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = sigma * standard_normal(rng);
        for k in 1..=p.min(t) {
            v += beta[k - 1] * y[t - k];
        }
        y[t] = v;
    }
    y.split_off(burn)
}

/// Replace `y[t]` by `value` for `t = 0, period, 2 period, ...` and return
/// the mask of replaced positions.
pub fn periodic_outliers(y: &mut [f64], period: usize, value: f64) -> Vec<bool> {
    let mut mask = vec![false; y.len()];
    for t in (0..y.len()).step_by(period) {
        y[t] = value;
        mask[t] = true;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = gaussian_matrix(&mut rng(5), 3, 3);
        let b = gaussian_matrix(&mut rng(5), 3, 3);
        assert_eq!(a, b);
        assert_ne!(a, gaussian_matrix(&mut rng(6), 3, 3));
    }

    #[test]
    fn toeplitz_contaminates_requested_fraction() {
        let (x, mask) = contaminated_toeplitz(&mut rng(1), 100, 10, 0.1, 5.0);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 100);
        assert!(mask.iter().zip(x.iter()).all(|(&m, &v)| !m || v == 5.0));
    }

    #[test]
    fn periodic_outlier_positions() {
        let mut y = vec![0.0; 1000];
        let mask = periodic_outliers(&mut y, 7, 10.0);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 143);
        assert!(mask[0] && mask[7] && mask[994] && !mask[999]);
    }
}

//! Dense decompositions: one-sided Jacobi SVD, cyclic Jacobi symmetric
//! eigendecomposition, PSD repair and Mahalanobis distances.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::CovModel;

const MAX_SWEEPS: usize = 100;

/// Requested rank of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Full,
    Truncated(usize),
}

/// Thin SVD `M = U diag(s) V^T`.
#[derive(Debug, Clone, Serialize)]
pub struct SvdResult {
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub v: DMatrix<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let g = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.u * g * self.v.transpose()
    }
}

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
///
/// Singular values come out nonincreasing. Each right-singular vector is
/// signed so that its largest-magnitude entry is positive, with the matching
/// left vector flipped along. Left vectors belonging to zero singular values
/// are completed to an orthonormal set.
pub fn svd(m: &DMatrix<f64>, rank: Rank) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("svd of an empty matrix".into()));
    }
    check_finite(m)?;
    let kmax = rows.min(cols);
    let k = match rank {
        Rank::Full => kmax,
        Rank::Truncated(k) if k >= 1 && k <= kmax => k,
        Rank::Truncated(k) => {
            return Err(Error::InvalidInput(format!(
                "rank {k} outside 1..={kmax} for a {rows}x{cols} matrix"
            )))
        }
    };

    let (mut u, s, mut v) = if rows >= cols {
        jacobi_tall(m.clone())
    } else {
        let (v, s, u) = jacobi_tall(m.transpose());
        (u, s, v)
    };

    for j in 0..kmax {
        let col = v.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            v.column_mut(j).neg_mut();
            u.column_mut(j).neg_mut();
        }
    }

    Ok(SvdResult {
        u: u.columns(0, k).into_owned(),
        singular_values: s[..k].to_vec(),
        v: v.columns(0, k).into_owned(),
    })
}

/// Jacobi SVD of a matrix with at least as many rows as columns.
fn jacobi_tall(mut a: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = a.column(p);
                    let cq = a.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<(f64, usize)> = (0..n).map(|j| (a.column(j).norm(), j)).collect();
    sv.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let smax = sv[0].0;
    let tol = smax * (m.max(n) as f64) * eps;
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut null_cols = Vec::new();
    for (out, &(sigma, j)) in sv.iter().enumerate() {
        vs.set_column(out, &v.column(j));
        if sigma > tol && sigma > 0.0 {
            u.set_column(out, &(a.column(j) / sigma));
            s.push(sigma);
        } else {
            s.push(0.0);
            null_cols.push(out);
        }
    }
    complete_orthonormal(&mut u, &null_cols);
    (u, s, vs)
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Fill the listed columns of `u` with unit vectors orthogonal to all other
/// columns, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(u: &mut DMatrix<f64>, cols: &[usize]) {
    let m = u.nrows();
    let mut basis = 0;
    for &c in cols {
        loop {
            assert!(basis < m, "cannot complete orthonormal basis");
            let mut e = DVector::<f64>::zeros(m);
            e[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for j in 0..u.ncols() {
                    if j == c {
                        continue;
                    }
                    let proj = u.column(j).dot(&e);
                    e -= u.column(j) * proj;
                }
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u.set_column(c, &(e / norm));
                break;
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn lambda_min(&self) -> f64 {
        *self.values.last().expect("nonempty")
    }

    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }
}

/// Cyclic Jacobi eigendecomposition. The input must be symmetric.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymEigen> {
    check_square(s)?;
    check_finite(s)?;
    check_symmetric(s, 1e-10)?;
    let n = s.nrows();
    let mut a = s.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- J^T A J with J the (p, q) rotation
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Return `S + cI` with the smallest `c >= 0` that lifts the smallest
/// eigenvalue to at least `floor`. `S` is returned unchanged when it already
/// satisfies the floor.
pub fn psd_repair(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::InvalidInput(format!("floor must be >= 0, got {floor}")));
    }
    let eig = sym_eigen(s)?;
    let lmin = eig.lambda_min();
    if lmin >= floor {
        return Ok(s.clone());
    }
    let c = floor - lmin;
    let mut out = symmetrize(s);
    for i in 0..out.nrows() {
        out[(i, i)] += c;
    }
    Ok(out)
}

/// Squared Mahalanobis distance `(x - mu)^T Sigma^{-1} (x - mu)`.
pub fn mahalanobis_sq(x: &[f64], model: &CovModel) -> Result<f64> {
    let d = model.mu.len();
    if x.len() != d {
        return Err(Error::Dimension(format!("x has {} entries, model {d}", x.len())));
    }
    let eig = sym_eigen(&model.sigma)?;
    let lmin = eig.lambda_min();
    if lmin <= 1e-12 {
        return Err(Error::Singular { lambda_min: lmin });
    }
    let diff = DVector::from_iterator(d, x.iter().zip(&model.mu).map(|(a, b)| a - b));
    Ok(eig
        .values
        .iter()
        .enumerate()
        .map(|(k, lam)| {
            let proj = eig.vectors.column(k).dot(&diff);
            proj * proj / lam
        })
        .sum())
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Singular {
        lambda_min: sym_eigen(a).map(|e| e.lambda_min()).unwrap_or(f64::NAN),
    })?;
    Ok(chol.solve(b))
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

pub(crate) fn check_square(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a nonempty square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_symmetric(s: &DMatrix<f64>, tol: f64) -> Result<()> {
    let scale = s.amax().max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..s.nrows() {
        for j in (i + 1)..s.ncols() {
            max_asym = max_asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if max_asym > tol * scale {
        return Err(Error::NotSymmetric { max_asym });
    }
    Ok(())
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    match m.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p % n,
            col: p / n,
        }),
        None => Ok(()),
    }
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let m = a.transpose() * b;
    let s = svd(&m, Rank::Full)?;
    let smin = s.singular_values.last().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(smin.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    fn orthonormality_err(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).amax()
    }

    #[test]
    fn svd_identity() {
        let s = svd(&DMatrix::identity(3, 3), Rank::Full).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn svd_diagonal_has_identity_factors() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let s = svd(&m, Rank::Full).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0, 1.0]);
        assert!((&s.u - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
        assert!((&s.v - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random_5x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 5, 3);
        let s = svd(&m, Rank::Full).unwrap();
        assert!((s.reconstruct() - &m).norm() < 1e-10);
    }

    #[test]
    fn svd_matches_nalgebra_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, d) in [(8, 5), (5, 8), (30, 30), (1, 4)] {
            let m = random_matrix(&mut rng, n, d);
            let ours = svd(&m, Rank::Full).unwrap();
            let mut theirs: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ours.singular_values.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn svd_rank_deficient_completes_u() {
        // columns sum to zero in every row, rank 2
        let m = DMatrix::from_row_slice(4, 3, &[1., -1., 0., 2., 0., -2., 0., 3., -3., 1., 1., -2.]);
        let s = svd(&m, Rank::Full).unwrap();
        assert!(s.singular_values[2] < 1e-12);
        assert!(orthonormality_err(&s.u) < 1e-10);
        assert!(orthonormality_err(&s.v) < 1e-10);
        assert!(rel_err(&s.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn svd_zero_matrix() {
        let s = svd(&DMatrix::zeros(3, 2), Rank::Full).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        assert!(orthonormality_err(&s.u) < 1e-12);
    }

    #[test]
    fn svd_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 6, 4);
        let s = svd(&m, Rank::Full).unwrap();
        for j in 0..4 {
            let col = s.v.column(j);
            let big = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::INFINITY, 0.0, 1.0]);
        assert!(matches!(svd(&m, Rank::Full), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn svd_truncation_bounds() {
        let m = DMatrix::<f64>::identity(3, 2);
        assert!(svd(&m, Rank::Truncated(3)).is_err());
        assert_eq!(svd(&m, Rank::Truncated(1)).unwrap().rank(), 1);
    }

    #[test]
    fn svd_reconstruction_on_100_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let n = rng.random_range(1..=50);
            let d = rng.random_range(1..=20);
            let m = random_matrix(&mut rng, n, d);
            let s = svd(&m, Rank::Full).unwrap();
            assert!(rel_err(&s.reconstruct(), &m) < 1e-8);
            assert!(orthonormality_err(&s.u) < 1e-10);
            assert!(orthonormality_err(&s.v) < 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eigen_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 7, 7);
        let s = &a + a.transpose();
        let ours = sym_eigen(&s).unwrap();
        let mut theirs: Vec<f64> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-12);
        }
        let recon = &ours.vectors
            * DMatrix::from_diagonal(&DVector::from_vec(ours.values.clone()))
            * ours.vectors.transpose();
        assert!((recon - &s).amax() < 1e-12);
    }

    #[test]
    fn psd_repair_leaves_psd_unchanged() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]); // eigenvalues 1.5, 0.5
        assert_eq!(psd_repair(&s, 0.1).unwrap(), s);
    }

    #[test]
    fn psd_repair_shifts_negative_eigenvalue() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.2]));
        let r = psd_repair(&s, 0.01).unwrap();
        assert!((r[(0, 0)] - 1.21).abs() < 1e-12);
        assert!((r[(1, 1)] - 0.01).abs() < 1e-12);
        assert_eq!(r[(0, 1)], 0.0);
    }

    #[test]
    fn psd_repair_zero_matrix() {
        let r = psd_repair(&DMatrix::zeros(2, 2), 1e-4).unwrap();
        assert!((r - DMatrix::identity(2, 2) * 1e-4).amax() < 1e-18);
    }

    #[test]
    fn psd_repair_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(psd_repair(&s, 0.1), Err(Error::NotSymmetric { .. })));
    }

    fn model(mu: Vec<f64>, sigma: DMatrix<f64>) -> CovModel {
        CovModel::new(mu, sigma, "test")
    }

    #[test]
    fn mahalanobis_examples() {
        let m = model(vec![0.0, 0.0], DMatrix::identity(2, 2));
        assert_eq!(mahalanobis_sq(&[0.0, 0.0], &m).unwrap(), 0.0);
        assert!((mahalanobis_sq(&[3.0, 4.0], &m).unwrap() - 25.0).abs() < 1e-12);
        let m = model(vec![0.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])));
        assert!((mahalanobis_sq(&[2.0, 1.0], &m).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_singular_is_an_error() {
        let m = model(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(mahalanobis_sq(&[1.0, 0.0], &m), Err(Error::Singular { .. })));
    }

    proptest! {
        #[test]
        fn psd_repair_respects_floor(
            entries in proptest::collection::vec(-5.0f64..5.0, 16),
            floor in 1e-6f64..1.0,
        ) {
            let a = DMatrix::from_row_slice(4, 4, &entries);
            let s = &a + a.transpose();
            let r = psd_repair(&s, floor).unwrap();
            prop_assert!(sym_eigen(&r).unwrap().lambda_min() >= floor - 1e-12);
        }

        #[test]
        fn mahalanobis_equals_whitened_norm(
            entries in proptest::collection::vec(-2.0f64..2.0, 9),
            x in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let a = DMatrix::from_row_slice(3, 3, &entries);
            let sigma = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
            let m = model(vec![0.5, -0.5, 1.0], sigma.clone());
            let got = mahalanobis_sq(&x, &m).unwrap();
            // independent route: Cholesky L, whitened vector L^{-1}(x - mu)
            let l = sigma.cholesky().unwrap().l();
            let diff = DVector::from_vec(vec![x[0] - 0.5, x[1] + 0.5, x[2] - 1.0]);
            let w = l.solve_lower_triangular(&diff).unwrap();
            prop_assert!(got >= 0.0);
            prop_assert!((got - w.norm_squared()).abs() < 1e-8 * (1.0 + got));
        }
    }
}

//! Correspondence analysis of contingency tables, classical and cellwise
//! robust.

mod biplot;

pub use biplot::{biplot_points, biplot_svg, write_biplot, BiplotPoints};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::DataMatrix;
use crate::detect::{ddc, CellFlags, DdcOptions, DEFAULT_CUTOFF, ROW_FLAG_FRACTION};
use crate::error::{Error, Result};
use crate::linalg::{principal_angle, svd, Rank};
use crate::univar;

/// Share of total inertia the automatic rank choice must reach.
pub const AUTO_SHARE: f64 = 0.80;

const INNER_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    counts: DMatrix<f64>,
    row_names: Vec<String>,
    col_names: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: DMatrix<f64>) -> Result<Self> {
        let row_names = (1..=counts.nrows()).map(|i| i.to_string()).collect();
        let col_names = (1..=counts.ncols()).map(|j| format!("V{j}")).collect();
        Self::with_names(counts, row_names, col_names)
    }

    pub fn with_names(counts: DMatrix<f64>, row_names: Vec<String>, col_names: Vec<String>) -> Result<Self> {
        let (n, d) = counts.shape();
        if n == 0 || d == 0 {
            return Err(Error::Empty("contingency table has no cells".into()));
        }
        if row_names.len() != n || col_names.len() != d {
            return Err(Error::Dimension(format!(
                "{n}x{d} table with {} row and {} column names",
                row_names.len(),
                col_names.len()
            )));
        }
        for j in 0..d {
            for i in 0..n {
                let v = counts[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "negative count {v} in row '{}', column '{}'",
                        row_names[i], col_names[j]
                    )));
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| counts.row(i).sum() == 0.0) {
            return Err(Error::InvalidInput(format!("row '{}' has no counts", row_names[i])));
        }
        if let Some(j) = (0..d).find(|&j| counts.column(j).sum() == 0.0) {
            return Err(Error::InvalidInput(format!("column '{}' has no counts", col_names[j])));
        }
        Ok(Self {
            counts,
            row_names,
            col_names,
        })
    }

    /// Table from a complete data matrix, keeping its names.
    pub fn from_data(x: &DataMatrix) -> Result<Self> {
        Self::with_names(x.complete()?.clone(), x.row_names().to_vec(), x.col_names().to_vec())
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    /// Pearson chi-square statistic for independence.
    pub fn chi_square(&self) -> f64 {
        let total = self.total();
        let rs: Vec<f64> = (0..self.counts.nrows()).map(|i| self.counts.row(i).sum()).collect();
        let cs: Vec<f64> = (0..self.counts.ncols()).map(|j| self.counts.column(j).sum()).collect();
        let mut chi2 = 0.0;
        for (i, ri) in rs.iter().enumerate() {
            for (j, cj) in cs.iter().enumerate() {
                let e = ri * cj / total;
                chi2 += (self.counts[(i, j)] - e).powi(2) / e;
            }
        }
        chi2
    }
}

/// Weighted centred row profiles with the row and column masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub s: DMatrix<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
}

/// `S = D_r^{1/2} (R - 1 c^T) D_c^{-1/2}` with `P = counts / N`, masses
/// `r`, `c` and row profiles `R = D_r^{-1} P`.
pub fn profile_matrix(t: &ContingencyTable) -> Profile {
    let p = &t.counts / t.total();
    let (n, d) = p.shape();
    let r: Vec<f64> = (0..n).map(|i| p.row(i).sum()).collect();
    let c: Vec<f64> = (0..d).map(|j| p.column(j).sum()).collect();
    let s = DMatrix::from_fn(n, d, |i, j| r[i].sqrt() * (p[(i, j)] / r[i] - c[j]) / c[j].sqrt());
    Profile { s, r, c }
}

/// Number of components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KChoice {
    Fixed(usize),
    /// Smallest `k` whose components explain at least 80% of the total.
    Auto,
}

impl std::str::FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(KChoice::Fixed)
            .ok_or_else(|| Error::InvalidInput(format!("k must be a positive integer or 'auto', got '{s}'")))
    }
}

/// Smallest `k` whose squared singular values reach [`AUTO_SHARE`] of their
/// sum; `1` when everything is zero.
pub fn auto_k(gamma: &[f64]) -> usize {
    let total: f64 = gamma.iter().map(|g| g * g).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, g) in gamma.iter().enumerate() {
        acc += g * g;
        if acc / total >= AUTO_SHARE - 1e-12 {
            return i + 1;
        }
    }
    gamma.len()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CASolution {
    pub method: String,
    pub k: usize,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub s: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub u: DMatrix<f64>,
    pub gamma: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub v: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub row_pc: DMatrix<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub col_pc: DMatrix<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub flags: Option<CellFlags>,
}

impl CASolution {
    fn assemble(
        method: &str,
        t: &ContingencyTable,
        profile: Profile,
        u: DMatrix<f64>,
        gamma: Vec<f64>,
        v: DMatrix<f64>,
        flags: Option<CellFlags>,
    ) -> Self {
        let (row_pc, col_pc) = principal_coordinates(&u, &gamma, &v, &profile.r, &profile.c);
        Self {
            method: method.into(),
            k: gamma.len(),
            s: profile.s,
            u,
            gamma,
            v,
            row_pc,
            col_pc,
            r: profile.r,
            c: profile.c,
            row_names: t.row_names.clone(),
            col_names: t.col_names.clone(),
            flags,
        }
    }

    /// Sum of the squared retained singular values.
    pub fn inertia(&self) -> f64 {
        self.gamma.iter().map(|g| g * g).sum()
    }

    /// Flip the sign of component `j` in every stored part.
    pub fn flip(&mut self, j: usize) {
        self.u.column_mut(j).neg_mut();
        self.v.column_mut(j).neg_mut();
        self.row_pc.column_mut(j).neg_mut();
        self.col_pc.column_mut(j).neg_mut();
    }
}

/// `D_r^{-1/2} U Gamma` and `D_c^{-1/2} V Gamma`.
pub fn principal_coordinates(
    u: &DMatrix<f64>,
    gamma: &[f64],
    v: &DMatrix<f64>,
    r: &[f64],
    c: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let row_pc = DMatrix::from_fn(u.nrows(), gamma.len(), |i, j| u[(i, j)] * gamma[j] / r[i].sqrt());
    let col_pc = DMatrix::from_fn(v.nrows(), gamma.len(), |i, j| v[(i, j)] * gamma[j] / c[i].sqrt());
    (row_pc, col_pc)
}

fn max_rank(n: usize, d: usize) -> usize {
    n.min(d).saturating_sub(1)
}

fn check_k(k: usize, n: usize, d: usize) -> Result<()> {
    let kmax = max_rank(n, d);
    if k == 0 || k > kmax {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside 1..={kmax} for a {n}x{d} table"
        )));
    }
    Ok(())
}

/// Classical correspondence analysis: truncated SVD of the profile matrix.
///
/// `k` may not exceed `min(n, d) - 1`, the largest rank the centred profile
/// matrix can have.
pub fn classical_ca(t: &ContingencyTable, k: KChoice) -> Result<CASolution> {
    let profile = profile_matrix(t);
    let (n, d) = profile.s.shape();
    let full = svd(&profile.s, Rank::Full)?;
    let k = match k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => auto_k(&full.singular_values[..max_rank(n, d).max(1)]),
    };
    check_k(k, n, d)?;
    let u = full.u.columns(0, k).into_owned();
    let v = full.v.columns(0, k).into_owned();
    let gamma = full.singular_values[..k].to_vec();
    Ok(CASolution::assemble("classical", t, profile, u, gamma, v, None))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustPcaOptions {
    pub k: KChoice,
    pub cutoff: f64,
    pub max_iter: usize,
}

impl Default for RobustPcaOptions {
    fn default() -> Self {
        Self {
            k: KChoice::Auto,
            cutoff: DEFAULT_CUTOFF,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustPca {
    /// Scores of the cleaned matrix, `n x k`.
    pub scores: DMatrix<f64>,
    /// Loadings, `d x k`, orthonormal.
    pub loadings: DMatrix<f64>,
    /// Squared singular values of the fitted rows of the cleaned matrix,
    /// divided by their number.
    pub eigenvalues: Vec<f64>,
    pub flags: CellFlags,
    /// The input with flagged cells replaced by fitted values.
    pub cleaned: DMatrix<f64>,
    pub iterations: usize,
}

/// Residual scale per column: MAD, floored relative to the data so that
/// exact low-rank fits do not standardize rounding noise.
fn residual_scales(res: &DMatrix<f64>, reference: f64) -> Result<Vec<f64>> {
    let floor = 1e-8 * reference.max(f64::MIN_POSITIVE);
    (0..res.ncols())
        .map(|j| Ok(univar::mad(res.column(j).as_slice())?.max(floor)))
        .collect()
}

/// Rank-`k` zero-centre fit: loadings from the SVD of the rows that are not
/// casewise outlying, scores for every row by projection. A `trivial` unit
/// direction is removed from every row first.
struct Subspace {
    v: DMatrix<f64>,
    /// Singular values of the fitted rows.
    gamma: Vec<f64>,
    n_fit: usize,
    scores: DMatrix<f64>,
}

impl Subspace {
    fn fit(cleaned: &DMatrix<f64>, rows: &[usize], k: usize, trivial: Option<&DVector<f64>>) -> Result<Self> {
        let projected;
        let cleaned = match trivial {
            Some(w) => {
                projected = cleaned - (cleaned * w) * w.transpose();
                &projected
            }
            None => cleaned,
        };
        let m = if rows.len() == cleaned.nrows() {
            cleaned.clone()
        } else {
            cleaned.select_rows(rows)
        };
        let svd = svd(&m, Rank::Truncated(k))?;
        Ok(Self {
            scores: cleaned * &svd.v,
            v: svd.v,
            gamma: svd.singular_values,
            n_fit: rows.len(),
        })
    }

    fn reconstruct(&self) -> DMatrix<f64> {
        &self.scores * self.v.transpose()
    }
}

/// Rows with more than half of their cells flagged are casewise outlying
/// and do not enter the loadings.
fn fitted_rows(flags: &DMatrix<bool>, k: usize) -> Vec<usize> {
    let d = flags.ncols();
    let rows: Vec<usize> = (0..flags.nrows())
        .filter(|&i| (flags.row(i).iter().filter(|&&f| f).count() as f64) <= ROW_FLAG_FRACTION * d as f64)
        .collect();
    if rows.len() > k {
        rows
    } else {
        (0..flags.nrows()).collect()
    }
}

/// With the flagged set fixed, alternate the rank-`k` fit and re-imputation
/// of the flagged cells until the imputed values stop moving.
fn impute_to_convergence(
    s: &DMatrix<f64>,
    flags: &DMatrix<bool>,
    mut cleaned: DMatrix<f64>,
    k: usize,
    reference: f64,
    trivial: Option<&DVector<f64>>,
) -> Result<(Subspace, DMatrix<f64>)> {
    let rows = fitted_rows(flags, k);
    let mut current = Subspace::fit(&cleaned, &rows, k, trivial)?;
    if !flags.iter().any(|&f| f) {
        return Ok((current, cleaned));
    }
    let tol = 1e-10 * reference.max(f64::MIN_POSITIVE);
    for _ in 0..INNER_MAX_ITER {
        let fit = current.reconstruct();
        let mut change = 0.0f64;
        for j in 0..s.ncols() {
            for i in 0..s.nrows() {
                if flags[(i, j)] {
                    change = change.max((fit[(i, j)] - cleaned[(i, j)]).abs());
                    cleaned[(i, j)] = fit[(i, j)];
                }
            }
        }
        current = Subspace::fit(&cleaned, &rows, k, trivial)?;
        if change <= tol {
            break;
        }
    }
    Ok((current, cleaned))
}

/// Zero-centre robust PCA by alternating cell cleaning and SVD.
///
/// Starts from `ddc` on `s` with flagged cells replaced by their
/// predictions. Each round fits the rank-`k` approximation of the cleaned
/// matrix, standardizes the residuals of the original cells per column by
/// their MAD, re-flags above `cutoff` and re-imputes flagged cells with the
/// fit, repeating SVD and imputation until the imputed values settle. Rows
/// with more than half of their cells flagged are left out of the loadings
/// and only projected. Stops when the flagged set repeats, the subspace
/// moves by less than `1e-8` rad, or after `max_iter` rounds.
pub fn robust_pca_zero_center(s: &DMatrix<f64>, opts: &RobustPcaOptions) -> Result<RobustPca> {
    robust_pca_fit(s, opts, None)
}

fn robust_pca_fit(s: &DMatrix<f64>, opts: &RobustPcaOptions, trivial: Option<&DVector<f64>>) -> Result<RobustPca> {
    let (n, d) = s.shape();
    let data = DataMatrix::new(s.clone())?;
    let init = ddc(
        &data,
        &DdcOptions {
            cutoff: opts.cutoff,
            ..DdcOptions::default()
        },
    )?;
    let cleaned = DMatrix::from_fn(n, d, |i, j| if init.flags[(i, j)] { init.predicted[(i, j)] } else { s[(i, j)] });

    let full = svd(&cleaned, Rank::Full)?;
    let k = match opts.k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => auto_k(&full.singular_values),
    };
    if k == 0 || k >= n || k > d {
        return Err(Error::InvalidInput(format!("k = {k} requires 1 <= k < n = {n} and k <= d = {d}")));
    }
    let reference = (s.norm_squared() / (n * d) as f64).sqrt();
    let residual_flags = |fit: &DMatrix<f64>| -> Result<CellFlags> {
        let res = s - fit;
        let scales = residual_scales(&res, reference)?;
        let stdres = DMatrix::from_fn(n, d, |i, j| res[(i, j)] / scales[j]);
        Ok(CellFlags::from_residuals(stdres, fit.clone(), DMatrix::from_element(n, d, false), opts.cutoff))
    };

    let mut flags = init.flags.clone();
    let (mut current, mut cleaned) = impute_to_convergence(s, &flags, cleaned, k, reference, trivial)?;
    let mut iterations = 0;
    let mut last_flags;
    loop {
        let fit = current.reconstruct();
        last_flags = residual_flags(&fit)?;
        iterations += 1;
        let repeated = last_flags.flags == flags;
        flags = last_flags.flags.clone();
        if repeated || iterations >= opts.max_iter {
            break;
        }
        let start = DMatrix::from_fn(n, d, |i, j| if flags[(i, j)] { fit[(i, j)] } else { s[(i, j)] });
        let (next, next_cleaned) = impute_to_convergence(s, &flags, start, k, reference, trivial)?;
        let angle = principal_angle(&current.v, &next.v)?;
        current = next;
        cleaned = next_cleaned;
        if angle < 1e-8 {
            last_flags = residual_flags(&current.reconstruct())?;
            break;
        }
    }

    let gmax = current.gamma[0];
    if gmax == 0.0 || !(current.gamma[k - 1] > 1e-12 * gmax) {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the rank of the cleaned matrix"
        )));
    }
    Ok(RobustPca {
        scores: current.scores,
        loadings: current.v,
        eigenvalues: current.gamma.iter().map(|g| g * g / current.n_fit as f64).collect(),
        flags: last_flags,
        cleaned,
        iterations,
    })
}

/// Cellwise robust correspondence analysis: robust zero-centre PCA of the
/// profile matrix, with `Gamma = diag(sqrt(n * eigenvalues))` and
/// `U = T Gamma^{-1}`.
///
/// Rows of a profile matrix are orthogonal to `sqrt(c)`. Imputed cells need
/// not be, so the loadings are fitted in the complement of `sqrt(c)`.
pub fn robust_ca(t: &ContingencyTable, opts: &RobustPcaOptions) -> Result<CASolution> {
    let profile = profile_matrix(t);
    let (n, d) = profile.s.shape();
    if let KChoice::Fixed(k) = opts.k {
        check_k(k, n, d)?;
    }
    let sqrt_c = DVector::from_iterator(d, profile.c.iter().map(|c| c.sqrt()));
    let pca = robust_pca_fit(&profile.s, opts, Some(&sqrt_c))?;
    let gamma: Vec<f64> = pca.eigenvalues.iter().map(|l| (n as f64 * l).sqrt()).collect();
    if let Some(j) = gamma.iter().position(|&g| g <= 0.0) {
        return Err(Error::Singular { lambda_min: pca.eigenvalues[j] });
    }
    let u = DMatrix::from_fn(n, gamma.len(), |i, j| pca.scores[(i, j)] / gamma[j]);
    Ok(CASolution::assemble("robust", t, profile, u, gamma, pca.loadings, Some(pca.flags)))
}

//! Location and covariance estimators, classical and cellwise robust.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::DataMatrix;
use crate::detect::{self, Detector};
use crate::error::{Error, Result};
use crate::linalg::{psd_repair, sym_eigen, symmetrize};
use crate::univar::{self, RobustScaleKind};

/// A location vector and scatter matrix together with fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovModel {
    pub mu: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub sigma: DMatrix<f64>,
    pub method: String,
    /// Observed cells used per column.
    pub n_used: Vec<usize>,
    pub loglik: Option<f64>,
}

impl CovModel {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, method: impl Into<String>) -> Self {
        Self {
            mu,
            sigma,
            method: method.into(),
            n_used: Vec::new(),
            loglik: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Covariance estimators that can feed a plug-in regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovMethod {
    Classical,
    TwoStep(Detector),
    Pairwise(RobustScaleKind),
}

impl CovMethod {
    pub fn fit(&self, x: &DataMatrix) -> Result<CovModel> {
        match self {
            CovMethod::Classical => classical(x),
            CovMethod::TwoStep(det) => two_step_cov(x, det, &EmOptions::default()),
            CovMethod::Pairwise(kind) => pairwise_cov(x, *kind, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationKind {
    Median,
    /// Univariate MCD per column with coverage `alpha`; the subset size is
    /// `max(floor(n/2) + 1, ceil(alpha * n))` for `n` observed cells.
    UnivMcd { alpha: f64 },
}

fn mcd_subset_size(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).ceil() as usize).clamp(n / 2 + 1, n)
}

/// Per-column location, skipping missing cells.
pub fn coordwise_location(x: &DataMatrix, kind: LocationKind) -> Result<Vec<f64>> {
    (0..x.ncols())
        .map(|j| {
            let col = x.column_observed(j);
            if col.is_empty() {
                return Err(Error::Empty(format!("column '{}' has no observed cells", x.col_names()[j])));
            }
            column_location(&col, kind)
        })
        .collect()
}

pub(crate) fn column_location(col: &[f64], kind: LocationKind) -> Result<f64> {
    match kind {
        LocationKind::Median => univar::median(col),
        LocationKind::UnivMcd { alpha } => {
            Ok(univar::univariate_mcd(col, mcd_subset_size(col.len(), alpha))?.location)
        }
    }
}

/// Spatial (geometric) median by Weiszfeld iteration with the Vardi-Zhang
/// modification at data points.
pub fn spatial_median(x: &DataMatrix, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    spatial_median_matrix(x.complete()?, tol, max_iter)
}

/// Same as [`spatial_median`] on a dense matrix whose rows are points.
///
/// Convergence is declared when the step is shorter than
/// `tol * max(1, |m|)`.
pub fn spatial_median_matrix(x: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::Empty("spatial median of no points".into()));
    }
    let mut m = DVector::from_iterator(
        d,
        (0..d).map(|j| {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            univar::median(&col).expect("nonempty")
        }),
    );
    let mut num = DVector::<f64>::zeros(d);
    for _ in 0..max_iter {
        let scale = 1.0f64.max(m.norm());
        let coincide_eps = 1e-12 * scale;
        num.fill(0.0);
        let mut den = 0.0;
        let mut eta = 0usize;
        for i in 0..n {
            let row = x.row(i);
            let mut dist2 = 0.0;
            for j in 0..d {
                let t = row[j] - m[j];
                dist2 += t * t;
            }
            let dist = dist2.sqrt();
            if dist <= coincide_eps {
                eta += 1;
                continue;
            }
            let w = 1.0 / dist;
            den += w;
            for j in 0..d {
                num[j] += w * row[j];
            }
        }
        if den == 0.0 {
            // every point coincides with m
            return Ok(m.iter().copied().collect());
        }
        let t = &num / den;
        let next = if eta == 0 {
            t
        } else {
            let r = ((&t - &m) * den).norm();
            let eta = eta as f64;
            if r <= eta {
                return Ok(m.iter().copied().collect());
            }
            let beta = eta / r;
            t * (1.0 - beta) + &m * beta
        };
        let step = (&next - &m).norm();
        m = next;
        if step < tol * scale {
            return Ok(m.iter().copied().collect());
        }
    }
    Err(Error::NoConvergence {
        what: "spatial median",
        iterations: max_iter,
        trace: m.iter().copied().collect(),
    })
}

pub(crate) fn mean_matrix(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols()).map(|j| x.column(j).sum() / n).collect()
}

/// Sample mean and covariance (denominator `n - 1`).
pub fn classical(x: &DataMatrix) -> Result<CovModel> {
    let m = x.complete()?;
    let (n, d) = m.shape();
    if n < 2 {
        return Err(Error::InvalidInput("classical covariance needs n >= 2".into()));
    }
    let mu = mean_matrix(m);
    let mut centered = m.clone();
    for j in 0..d {
        centered.column_mut(j).add_scalar_mut(-mu[j]);
    }
    let sigma = symmetrize(&(centered.transpose() * &centered / (n as f64 - 1.0)));
    Ok(CovModel {
        mu,
        sigma,
        method: "classical".into(),
        n_used: vec![n; d],
        loglik: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: CovModel,
    /// The data with missing cells replaced by their conditional means.
    pub imputed: DMatrix<f64>,
    /// Observed-data log-likelihood at the start of every iteration.
    pub loglik_trace: Vec<f64>,
}

struct Pattern {
    obs: Vec<usize>,
    mis: Vec<usize>,
    rows: Vec<usize>,
}

fn group_patterns(x: &DataMatrix) -> Vec<Pattern> {
    let d = x.ncols();
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..x.nrows() {
        let key: Vec<bool> = (0..d).map(|j| x.is_missing(i, j)).collect();
        groups.entry(key).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(key, rows)| Pattern {
            obs: (0..d).filter(|&j| !key[j]).collect(),
            mis: (0..d).filter(|&j| key[j]).collect(),
            rows,
        })
        .collect()
}

fn submatrix(s: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| s[(rows[a], cols[b])])
}

struct EStep {
    loglik: f64,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
    imputed: DMatrix<f64>,
}

fn e_step(x: &DataMatrix, patterns: &[Pattern], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<EStep> {
    let (n, d) = (x.nrows(), x.ncols());
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut imputed = x.values().clone();
    let mut sum = DVector::<f64>::zeros(d);
    let mut cross = DMatrix::<f64>::zeros(d, d);
    let mut loglik = 0.0;

    for pat in patterns {
        let (o, m) = (&pat.obs, &pat.mis);
        let s_oo = submatrix(sigma, o, o);
        let chol = s_oo.clone().cholesky().ok_or_else(|| Error::Singular {
            lambda_min: sym_eigen(&s_oo).map(|e| e.lambda_min()).unwrap_or(f64::NAN),
        })?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let s_mo = submatrix(sigma, m, o);
        // B = S_mo S_oo^{-1}; C = S_mm - B S_om
        let b = chol.solve(&s_mo.transpose()).transpose();
        let c = submatrix(sigma, m, m) - &b * s_mo.transpose();

        let mut c_full = DMatrix::<f64>::zeros(d, d);
        for (a, &ia) in m.iter().enumerate() {
            for (bb, &ib) in m.iter().enumerate() {
                c_full[(ia, ib)] = c[(a, bb)];
            }
        }

        for &i in &pat.rows {
            let dev = DVector::from_iterator(o.len(), o.iter().map(|&j| x.values()[(i, j)] - mu[j]));
            let sol = chol.solve(&dev);
            loglik -= 0.5 * (o.len() as f64 * ln2pi + logdet + dev.dot(&sol));
            if !m.is_empty() {
                let pred = &b * &dev;
                for (a, &j) in m.iter().enumerate() {
                    imputed[(i, j)] = mu[j] + pred[a];
                }
            }
            let row = imputed.row(i).transpose();
            sum += &row;
            cross += &row * row.transpose();
        }
        cross += c_full * pat.rows.len() as f64;
    }
    debug_assert_eq!(patterns.iter().map(|p| p.rows.len()).sum::<usize>(), n);
    Ok(EStep {
        loglik,
        sum,
        cross,
        imputed,
    })
}

/// Gaussian maximum likelihood for incomplete data by EM.
pub fn em_mle(x: &DataMatrix, opts: &EmOptions) -> Result<EmFit> {
    let (n, d) = (x.nrows(), x.ncols());
    for j in 0..d {
        let obs = x.column_observed(j).len();
        if obs < 2 {
            return Err(Error::InvalidInput(format!(
                "column '{}' has {obs} observed cells, EM needs at least 2",
                x.col_names()[j]
            )));
        }
    }
    if let Some(i) = (0..n).find(|&i| (0..d).all(|j| x.is_missing(i, j))) {
        return Err(Error::InvalidInput(format!("row {i} has no observed cells")));
    }
    let patterns = group_patterns(x);

    let mut mu = DVector::<f64>::zeros(d);
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let col = x.column_observed(j);
        mu[j] = univar::median(&col)?;
        let mut s2 = univar::mad(&col)?.powi(2);
        if s2 <= 0.0 {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            s2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0);
        }
        sigma[(j, j)] = if s2 > 0.0 { s2 } else { 1.0 };
    }

    let nf = n as f64;
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..opts.max_iter {
        let step = e_step(x, &patterns, &mu, &sigma)?;
        let converged = trace.last().is_some_and(|prev| step.loglik - prev < opts.tol);
        trace.push(step.loglik);
        if converged {
            let n_used = (0..d).map(|j| x.column_observed(j).len()).collect();
            return Ok(EmFit {
                model: CovModel {
                    mu: mu.iter().copied().collect(),
                    sigma,
                    method: "em".into(),
                    n_used,
                    loglik: Some(step.loglik),
                },
                imputed: step.imputed,
                loglik_trace: trace,
            });
        }
        mu = &step.sum / nf;
        sigma = symmetrize(&(&step.cross / nf - &mu * mu.transpose()));
        let floor = opts.ridge * sigma.trace() / d as f64;
        sigma = psd_repair(&sigma, floor)?;
    }
    Err(Error::NoConvergence {
        what: "EM",
        iterations: opts.max_iter,
        trace,
    })
}

/// Flag cells, set them missing, and fit the Gaussian MLE by EM.
///
/// Rows left without any observed cell after flagging carry no likelihood
/// information and are dropped before EM.
pub fn two_step_cov(x: &DataMatrix, detector: &Detector, opts: &EmOptions) -> Result<CovModel> {
    let flags = detect::run(x, detector)?;
    let masked = x.masked(&flags.flags)?;
    let keep: Vec<usize> = (0..masked.nrows())
        .filter(|&i| (0..masked.ncols()).any(|j| !masked.is_missing(i, j)))
        .collect();
    let masked = if keep.len() < masked.nrows() {
        masked.select_rows(&keep)?
    } else {
        masked
    };
    let mut fit = em_mle(&masked, opts)?.model;
    fit.method = format!("twostep-{}", detector.name());
    Ok(fit)
}

/// Pairwise robust covariance: `s_j s_l r_jl` with Gaussian-consistent
/// Spearman correlations, repaired to be positive definite.
pub fn pairwise_cov(x: &DataMatrix, scale_kind: RobustScaleKind, floor: Option<f64>) -> Result<CovModel> {
    let d = x.ncols();
    if d < 2 {
        return Err(Error::InvalidInput("pairwise covariance needs d >= 2".into()));
    }
    let mut scales = Vec::with_capacity(d);
    for j in 0..d {
        let s = univar::robust_scale(&x.column_observed(j), scale_kind)?;
        if s <= 0.0 {
            return Err(Error::ZeroScale {
                column: x.col_names()[j].clone(),
            });
        }
        scales.push(s);
    }
    let mut r = DMatrix::<f64>::identity(d, d);
    for j in 0..d {
        for l in (j + 1)..d {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..x.nrows())
                .filter_map(|i| Some((x.get(i, j)?, x.get(i, l)?)))
                .unzip();
            let rho = if a.len() >= 3 {
                univar::spearman_to_pearson(univar::spearman_corr(&a, &b)?.rho)
            } else {
                0.0
            };
            r[(j, l)] = rho;
            r[(l, j)] = rho;
        }
    }
    let mu = coordwise_location(x, LocationKind::Median)?;
    let sigma = pairwise_from_parts(&scales, &r, floor)?;
    Ok(CovModel {
        mu,
        sigma,
        method: format!("pairwise-{}", match scale_kind {
            RobustScaleKind::Mad => "mad",
            RobustScaleKind::Qn => "qn",
        }),
        n_used: (0..d).map(|j| x.column_observed(j).len()).collect(),
        loglik: None,
    })
}

/// Assemble `diag(s) R diag(s)` and lift its spectrum to `floor`
/// (default `1e-4` times the median squared scale).
pub fn pairwise_from_parts(scales: &[f64], r: &DMatrix<f64>, floor: Option<f64>) -> Result<DMatrix<f64>> {
    let d = scales.len();
    let raw = DMatrix::from_fn(d, d, |j, l| scales[j] * scales[l] * r[(j, l)]);
    let floor = match floor {
        Some(f) => f,
        None => {
            let sq: Vec<f64> = scales.iter().map(|s| s * s).collect();
            1e-4 * univar::median(&sq)?
        }
    };
    psd_repair(&raw, floor)
}
